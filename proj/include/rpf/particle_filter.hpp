#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "rpf/random.hpp"

namespace rpf {

using StateVector = std::vector<double>;

// Weighted particle approximation of a state density.
//
// Weights are held in log space. weight() and weights() expose them in the
// linear domain; for an unnormalized ensemble those values may underflow even
// though the log weights remain meaningful.
class ParticleEnsemble {
 public:
  // Uniform weights 1/P, normalized.
  explicit ParticleEnsemble(std::vector<StateVector> particles);
  // Linear-domain weights. The ensemble is flagged normalized when the weights
  // sum to one within 1e-12.
  ParticleEnsemble(std::vector<StateVector> particles, std::span<const double> weights);

  static ParticleEnsemble from_log_weights(std::vector<StateVector> particles, std::vector<double> log_weights,
                                           bool normalized);

  std::size_t size() const { return particles_.size(); }
  std::size_t dimension() const { return particles_.front().size(); }
  bool is_normalized() const { return normalized_; }

  std::span<const double> state(std::size_t p) const { return particles_[p]; }
  const std::vector<StateVector>& states() const { return particles_; }

  double log_weight(std::size_t p) const { return log_weights_[p]; }
  const std::vector<double>& log_weights() const { return log_weights_; }
  double weight(std::size_t p) const;
  std::vector<double> weights() const;

 private:
  ParticleEnsemble() = default;
  void validate() const;

  std::vector<StateVector> particles_;
  std::vector<double> log_weights_;
  bool normalized_ = false;
};

// Stochastic state transition x_k ~ f(. | x_{k-1}).
class DynamicsModel {
 public:
  virtual ~DynamicsModel() = default;
  virtual std::size_t dimension() const = 0;
  virtual StateVector sample_transition(std::span<const double> state, RandomSource& rng) const = 0;
};

// Predicted measurement location and spread for a given state, used by
// statistic-based tests.
struct Prediction {
  double mean = 0.0;
  double scale = 1.0;
};

// Measurement likelihood g(y | x) for one scalar sensor.
class MeasurementDensity {
 public:
  virtual ~MeasurementDensity() = default;
  virtual double density(double y, std::span<const double> state) const = 0;
  // Defaults to log(density); closed-form densities override this so that
  // far-tail measurements do not underflow.
  virtual double log_density(double y, std::span<const double> state) const;
  // Throws ModelError unless the density supports statistic-based tests.
  virtual Prediction predict(std::span<const double> state) const;
};

using DensityPtr = std::shared_ptr<const MeasurementDensity>;

struct NormalizeResult {
  ParticleEnsemble ensemble;
  // Sum of the unnormalized weights, i.e. the estimate of p(y_k | y_{0:k-1}).
  double marginal_likelihood;
  double log_marginal_likelihood;
};

// Each particle is replaced by a draw from the dynamics. Particle p uses the
// stream rng.derive(p), so the result does not depend on evaluation order.
ParticleEnsemble predict(const ParticleEnsemble& ensemble, const DynamicsModel& model, const RandomSource& rng);

// Multiplies each weight by prod_j g_j(y_j | x_p). Clears the normalized flag.
ParticleEnsemble weight_update(const ParticleEnsemble& ensemble, std::span<const double> measurement,
                               std::span<const DensityPtr> sensors);

NormalizeResult normalize(const ParticleEnsemble& ensemble);

double effective_sample_size(const ParticleEnsemble& ensemble);

ParticleEnsemble resample_systematic(const ParticleEnsemble& ensemble, RandomSource& rng);

// Copy count of each input particle for a systematic pass with offset
// u0 in [0, 1). Exposed for testing the resampler's bounds.
std::vector<std::size_t> systematic_counts(std::span<const double> weights, double u0);

StateVector posterior_mean(const ParticleEnsemble& ensemble);

}  // namespace rpf

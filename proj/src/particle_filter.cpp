#include "rpf/particle_filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "rpf/errors.hpp"
#include "rpf/reduce.hpp"

namespace rpf {
namespace {

constexpr double kNormalizedTolerance = 1e-12;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_normalized(const ParticleEnsemble& ensemble, const char* op) {
  if (!ensemble.is_normalized()) {
    throw ContractViolation(std::string(op) + ": ensemble must be normalized");
  }
}

}  // namespace

ParticleEnsemble::ParticleEnsemble(std::vector<StateVector> particles)
    : particles_(std::move(particles)), normalized_(true) {
  if (particles_.empty()) throw ConfigError("particle ensemble needs at least one particle");
  log_weights_.assign(particles_.size(), -std::log(static_cast<double>(particles_.size())));
  validate();
}

ParticleEnsemble::ParticleEnsemble(std::vector<StateVector> particles, std::span<const double> weights)
    : particles_(std::move(particles)) {
  if (particles_.empty()) throw ConfigError("particle ensemble needs at least one particle");
  if (weights.size() != particles_.size()) {
    throw ConfigError("particle ensemble: " + std::to_string(weights.size()) + " weights for " +
                      std::to_string(particles_.size()) + " particles");
  }
  log_weights_.reserve(weights.size());
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("particle ensemble: weights must be finite and >= 0");
    log_weights_.push_back(w > 0.0 ? std::log(w) : kNegInf);
  }
  normalized_ = std::abs(tree_sum(weights) - 1.0) <= kNormalizedTolerance;
  validate();
}

ParticleEnsemble ParticleEnsemble::from_log_weights(std::vector<StateVector> particles,
                                                    std::vector<double> log_weights, bool normalized) {
  if (particles.empty()) throw ConfigError("particle ensemble needs at least one particle");
  if (log_weights.size() != particles.size()) throw ConfigError("particle ensemble: weight count mismatch");
  ParticleEnsemble e;
  e.particles_ = std::move(particles);
  e.log_weights_ = std::move(log_weights);
  e.normalized_ = normalized;
  e.validate();
  return e;
}

void ParticleEnsemble::validate() const {
  const std::size_t n = particles_.front().size();
  for (const auto& x : particles_) {
    if (x.size() != n) throw ConfigError("particle ensemble: particles have differing dimensions");
    for (double v : x) {
      if (!std::isfinite(v)) throw ConfigError("particle ensemble: non-finite state entry");
    }
  }
  bool any_positive = false;
  for (double lw : log_weights_) {
    if (std::isnan(lw) || lw == std::numeric_limits<double>::infinity()) {
      throw ConfigError("particle ensemble: invalid weight");
    }
    any_positive = any_positive || lw > kNegInf;
  }
  if (!any_positive) throw WeightCollapse("particle ensemble: every weight is zero");
}

double ParticleEnsemble::weight(std::size_t p) const { return std::exp(log_weights_[p]); }

std::vector<double> ParticleEnsemble::weights() const {
  std::vector<double> w(log_weights_.size());
  std::transform(log_weights_.begin(), log_weights_.end(), w.begin(), [](double lw) { return std::exp(lw); });
  return w;
}

double MeasurementDensity::log_density(double y, std::span<const double> state) const {
  const double d = density(y, state);
  return d > 0.0 ? std::log(d) : kNegInf;
}

Prediction MeasurementDensity::predict(std::span<const double>) const {
  throw ModelError("measurement density does not provide a predicted mean and scale");
}

ParticleEnsemble predict(const ParticleEnsemble& ensemble, const DynamicsModel& model, const RandomSource& rng) {
  require_normalized(ensemble, "predict");
  if (model.dimension() != ensemble.dimension()) {
    throw ConfigError("predict: model dimension " + std::to_string(model.dimension()) +
                      " does not match ensemble dimension " + std::to_string(ensemble.dimension()));
  }
  std::vector<StateVector> next(ensemble.size());
  for (std::size_t p = 0; p < ensemble.size(); ++p) {
    RandomSource particle_rng = rng.derive(p);
    next[p] = model.sample_transition(ensemble.state(p), particle_rng);
    if (next[p].size() != ensemble.dimension()) {
      throw ConfigError("predict: model returned a state of the wrong dimension");
    }
  }
  return ParticleEnsemble::from_log_weights(std::move(next), ensemble.log_weights(), true);
}

ParticleEnsemble weight_update(const ParticleEnsemble& ensemble, std::span<const double> measurement,
                               std::span<const DensityPtr> sensors) {
  if (measurement.size() != sensors.size()) {
    throw ConfigError("weight_update: " + std::to_string(measurement.size()) + " measurements for " +
                      std::to_string(sensors.size()) + " sensors");
  }
  std::vector<double> log_w = ensemble.log_weights();
  bool any_alive = false;
  for (std::size_t p = 0; p < ensemble.size(); ++p) {
    double lw = log_w[p];
    for (std::size_t j = 0; j < sensors.size() && lw > kNegInf; ++j) {
      lw += sensors[j]->log_density(measurement[j], ensemble.state(p));
    }
    if (std::isnan(lw)) throw ModelError("weight_update: likelihood evaluated to NaN");
    log_w[p] = lw;
    any_alive = any_alive || lw > kNegInf;
  }
  if (!any_alive) throw WeightCollapse("weight_update: all posterior weights are zero");
  return ParticleEnsemble::from_log_weights(ensemble.states(), std::move(log_w), false);
}

NormalizeResult normalize(const ParticleEnsemble& ensemble) {
  const auto& log_w = ensemble.log_weights();
  const double max_lw = *std::max_element(log_w.begin(), log_w.end());
  if (!(max_lw > kNegInf)) throw WeightCollapse("normalize: total weight is zero");
  std::vector<double> scaled(log_w.size());
  for (std::size_t p = 0; p < log_w.size(); ++p) scaled[p] = std::exp(log_w[p] - max_lw);
  const double log_total = max_lw + std::log(tree_sum(scaled));
  std::vector<double> out(log_w.size());
  for (std::size_t p = 0; p < log_w.size(); ++p) out[p] = log_w[p] - log_total;
  return NormalizeResult{ParticleEnsemble::from_log_weights(ensemble.states(), std::move(out), true),
                         std::exp(log_total), log_total};
}

double effective_sample_size(const ParticleEnsemble& ensemble) {
  require_normalized(ensemble, "effective_sample_size");
  std::vector<double> sq = ensemble.weights();
  for (double& w : sq) w *= w;
  return 1.0 / tree_sum(sq);
}

std::vector<std::size_t> systematic_counts(std::span<const double> weights, double u0) {
  const std::size_t n = weights.size();
  std::vector<double> cumulative(n);
  double running = 0.0;
  for (std::size_t p = 0; p < n; ++p) cumulative[p] = (running += weights[p]);
  // Dividing by the total makes the final boundary exactly 1.
  for (double& c : cumulative) c /= running;

  std::vector<std::size_t> counts(n, 0);
  const double step = 1.0 / static_cast<double>(n);
  std::size_t i = 0;
  for (std::size_t p = 0; p < n && i < n; ++p) {
    while (i < n && (u0 + static_cast<double>(i)) * step < cumulative[p]) {
      ++counts[p];
      ++i;
    }
  }
  return counts;
}

ParticleEnsemble resample_systematic(const ParticleEnsemble& ensemble, RandomSource& rng) {
  require_normalized(ensemble, "resample_systematic");
  const auto counts = systematic_counts(ensemble.weights(), rng.uniform());
  std::vector<StateVector> out;
  out.reserve(ensemble.size());
  for (std::size_t p = 0; p < counts.size(); ++p) {
    for (std::size_t c = 0; c < counts[p]; ++c) out.push_back(ensemble.states()[p]);
  }
  return ParticleEnsemble(std::move(out));
}

StateVector posterior_mean(const ParticleEnsemble& ensemble) {
  require_normalized(ensemble, "posterior_mean");
  const std::size_t n = ensemble.dimension();
  const auto w = ensemble.weights();
  StateVector mean(n, 0.0);
  std::vector<double> terms(ensemble.size());
  for (std::size_t d = 0; d < n; ++d) {
    for (std::size_t p = 0; p < ensemble.size(); ++p) terms[p] = w[p] * ensemble.states()[p][d];
    mean[d] = tree_sum(terms);
  }
  return mean;
}

}  // namespace rpf

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "rpf/ctm.hpp"
#include "rpf/fault_tests.hpp"
#include "rpf/random.hpp"

namespace rpf::sensing {

enum class MeasurementKind { loop_density, gnss_speed };

std::string_view to_string(MeasurementKind kind);
MeasurementKind parse_measurement_kind(std::string_view name);

struct LoopDetectorSpec {
  std::size_t link = 0;
  double noise_std = 0.10;  // fraction of the true density when relative, else veh/m
  bool relative = true;
  double min_std = 1e-3;    // veh/m floor on the noise std
};

struct GnssSpec {
  double penetration = 0.02;
  double noise_fraction = 0.20;  // std as a fraction of the true speed
  double min_std = 0.1;          // m/s floor used by the H0 model only
};

struct FaultConfig {
  double probability = 0.30;
  double zero_weight = 1.0 / 3.0;  // "stopped car" share of faults
  double random_mean = 30.0;       // m/s
  double random_std = 10.0;        // m/s
};

struct LabeledMeasurement {
  std::size_t k = 0;
  std::string sensor_id;
  MeasurementKind kind = MeasurementKind::loop_density;
  std::size_t link = 0;
  double value = 0.0;
  bool faulty = false;
};

// Which hypotheses the GNSS sensor models carry.
//   none:         no gating
//   fisher:       H0 only, Fisher test
//   np_correct:   H1 is the true fault mixture
//   np_incorrect: H1 only places mass near zero
enum class HypothesisMode { none, fisher, np_correct, np_incorrect };

std::string_view to_string(HypothesisMode mode);
HypothesisMode parse_hypothesis_mode(std::string_view name);

void validate(const LoopDetectorSpec& spec, std::size_t links);
void validate(const GnssSpec& spec);
void validate(const FaultConfig& config);

std::vector<LabeledMeasurement> sample_loop_detectors(std::size_t k, const ctm::LinkState& state,
                                                      std::span<const LoopDetectorSpec> specs, RandomSource& rng);

std::vector<LabeledMeasurement> sample_gnss_speeds(std::size_t k, std::span<const double> speeds,
                                                   std::span<const std::size_t> vehicle_counts, const GnssSpec& spec,
                                                   RandomSource& rng);

// Vehicles per link, density * length rounded to the nearest integer.
std::vector<std::size_t> vehicle_counts(const ctm::LinkState& state, const ctm::FreewayNetwork& network);

// GNSS rows are replaced with probability config.probability; loop rows pass
// through untouched.
std::vector<LabeledMeasurement> inject_faults(std::span<const LabeledMeasurement> measurements,
                                              const FaultConfig& config, RandomSource& rng);

// Gaussian on one link's density: mean rho_l, std max(noise * rho_l, min_std)
// (relative) or the absolute noise std.
class LoopDensityModel final : public MeasurementDensity {
 public:
  explicit LoopDensityModel(LoopDetectorSpec spec) : spec_(spec) {}
  double density(double y, std::span<const double> state) const override;
  double log_density(double y, std::span<const double> state) const override;
  Prediction predict(std::span<const double> state) const override;

 private:
  LoopDetectorSpec spec_;
};

// Gaussian on a link's speed as predicted from the particle's densities:
// mean v_l(x), std max(noise_fraction * v_l(x), min_std).
class GnssSpeedModel final : public MeasurementDensity {
 public:
  GnssSpeedModel(const ctm::FreewayNetwork& network, std::size_t link, double next_onramp_demand,
                 double onramp_priority, GnssSpec spec);
  double density(double y, std::span<const double> state) const override;
  double log_density(double y, std::span<const double> state) const override;
  Prediction predict(std::span<const double> state) const override;

 private:
  const ctm::FreewayNetwork& network_;
  std::size_t link_;
  double next_onramp_demand_;
  double onramp_priority_;
  GnssSpec spec_;
};

// Density of a Gaussian truncated below at zero. State independent.
class HalfLineGaussian final : public MeasurementDensity {
 public:
  HalfLineGaussian(double mean, double stddev);
  double density(double y, std::span<const double> state) const override;
  double log_density(double y, std::span<const double> state) const override;

 private:
  double mean_;
  double stddev_;
  double log_norm_;
};

// Fault mixture on [0, inf): zero_weight of a narrow Gaussian at zero standing
// in for the point mass, the rest the truncated random-speed Gaussian.
class FaultMixtureModel final : public MeasurementDensity {
 public:
  FaultMixtureModel(const FaultConfig& config, double zero_std);
  double density(double y, std::span<const double> state) const override;
  double log_density(double y, std::span<const double> state) const override;

 private:
  double zero_weight_;
  HalfLineGaussian zero_;
  HalfLineGaussian random_;
};

// Everything needed to turn measurements at one timestep into sensor models.
struct SensorContext {
  const ctm::FreewayNetwork* network = nullptr;
  ctm::BoundaryDemand mean_demand;  // expected demand at this timestep
  double onramp_priority = ctm::kDefaultOnrampPriority;
  GnssSpec gnss;
  FaultConfig faults;
  std::vector<LoopDetectorSpec> loops;
  HypothesisMode mode = HypothesisMode::none;
  double alpha = 0.01;
  double fault_zero_std = 0.5;  // m/s, zero component of the correct H1
  double near_zero_std = 1.0;   // m/s, the incorrect H1
};

SensorModel build_sensor_model(const LabeledMeasurement& m, const SensorContext& context);
std::vector<SensorModel> build_sensor_models(std::span<const LabeledMeasurement> measurements,
                                             const SensorContext& context);

}  // namespace rpf::sensing

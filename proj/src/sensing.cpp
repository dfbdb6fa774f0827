#include "rpf/sensing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "rpf/errors.hpp"

namespace rpf::sensing {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLogSqrt2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

double gaussian_log_pdf(double y, double mean, double stddev) {
  const double z = (y - mean) / stddev;
  return -0.5 * z * z - std::log(stddev) - kLogSqrt2Pi;
}

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

}  // namespace

std::string_view to_string(MeasurementKind kind) {
  return kind == MeasurementKind::loop_density ? "loop_density" : "gnss_speed";
}

MeasurementKind parse_measurement_kind(std::string_view name) {
  if (name == "loop_density") return MeasurementKind::loop_density;
  if (name == "gnss_speed") return MeasurementKind::gnss_speed;
  throw DataError("unknown measurement kind '" + std::string(name) + "'");
}

std::string_view to_string(HypothesisMode mode) {
  switch (mode) {
    case HypothesisMode::none: return "none";
    case HypothesisMode::fisher: return "fisher";
    case HypothesisMode::np_correct: return "np_correct";
    case HypothesisMode::np_incorrect: return "np_incorrect";
  }
  return "unknown";
}

HypothesisMode parse_hypothesis_mode(std::string_view name) {
  if (name == "none") return HypothesisMode::none;
  if (name == "fisher") return HypothesisMode::fisher;
  if (name == "np_correct") return HypothesisMode::np_correct;
  if (name == "np_incorrect") return HypothesisMode::np_incorrect;
  throw ConfigError("unknown variant '" + std::string(name) + "' (expected none, fisher, np_correct, np_incorrect)");
}

void validate(const LoopDetectorSpec& spec, std::size_t links) {
  if (spec.link >= links) throw ConfigError("sensors.loops: link " + std::to_string(spec.link) + " out of range");
  if (!(spec.noise_std > 0.0)) throw ConfigError("sensors.loops.noise_std: must be positive");
  if (!(spec.min_std >= 0.0)) throw ConfigError("sensors.loops.min_std: must be nonnegative");
}

void validate(const GnssSpec& spec) {
  if (!(spec.penetration >= 0.0 && spec.penetration <= 1.0)) {
    throw ConfigError("sensors.gnss.penetration: must lie in [0, 1]");
  }
  if (!(spec.noise_fraction > 0.0)) throw ConfigError("sensors.gnss.noise_fraction: must be positive");
  if (!(spec.min_std > 0.0)) throw ConfigError("sensors.gnss.min_std: must be positive");
}

void validate(const FaultConfig& config) {
  if (!(config.probability >= 0.0 && config.probability <= 1.0)) {
    throw ConfigError("sensors.faults.probability: must lie in [0, 1]");
  }
  if (!(config.zero_weight >= 0.0 && config.zero_weight <= 1.0)) {
    throw ConfigError("sensors.faults.zero_weight: must lie in [0, 1]");
  }
  if (!(config.random_std > 0.0)) throw ConfigError("sensors.faults.random_std: must be positive");
}

std::vector<LabeledMeasurement> sample_loop_detectors(std::size_t k, const ctm::LinkState& state,
                                                      std::span<const LoopDetectorSpec> specs, RandomSource& rng) {
  std::vector<LabeledMeasurement> out;
  out.reserve(specs.size());
  for (const auto& spec : specs) {
    const double truth = state.at(spec.link);
    const double sd = spec.relative ? std::max(spec.noise_std * truth, spec.min_std) : spec.noise_std;
    out.push_back({k, "loop-" + std::to_string(spec.link), MeasurementKind::loop_density, spec.link,
                   std::max(0.0, rng.normal(truth, sd)), false});
  }
  return out;
}

std::vector<LabeledMeasurement> sample_gnss_speeds(std::size_t k, std::span<const double> speeds,
                                                   std::span<const std::size_t> vehicle_counts, const GnssSpec& spec,
                                                   RandomSource& rng) {
  if (speeds.size() != vehicle_counts.size()) throw DataError("sample_gnss_speeds: speeds and counts differ in size");
  std::vector<LabeledMeasurement> out;
  for (std::size_t l = 0; l < speeds.size(); ++l) {
    const auto reporting = rng.binomial(vehicle_counts[l], spec.penetration);
    for (std::uint64_t i = 0; i < reporting; ++i) {
      const double v = std::max(0.0, rng.normal(speeds[l], spec.noise_fraction * speeds[l]));
      out.push_back({k, "gnss-" + std::to_string(l) + "-" + std::to_string(i), MeasurementKind::gnss_speed, l, v,
                     false});
    }
  }
  return out;
}

std::vector<std::size_t> vehicle_counts(const ctm::LinkState& state, const ctm::FreewayNetwork& network) {
  std::vector<std::size_t> counts(network.size());
  for (std::size_t l = 0; l < network.size(); ++l) {
    counts[l] = static_cast<std::size_t>(std::llround(std::max(0.0, state[l] * network.links[l].length)));
  }
  return counts;
}

std::vector<LabeledMeasurement> inject_faults(std::span<const LabeledMeasurement> measurements,
                                              const FaultConfig& config, RandomSource& rng) {
  std::vector<LabeledMeasurement> out(measurements.begin(), measurements.end());
  for (auto& m : out) {
    if (m.kind != MeasurementKind::gnss_speed) continue;
    if (!rng.bernoulli(config.probability)) continue;
    m.faulty = true;
    m.value = rng.bernoulli(config.zero_weight) ? 0.0
                                                : rng.truncated_normal(config.random_mean, config.random_std, 0.0);
  }
  return out;
}

double LoopDensityModel::density(double y, std::span<const double> state) const {
  return std::exp(log_density(y, state));
}

double LoopDensityModel::log_density(double y, std::span<const double> state) const {
  const Prediction p = predict(state);
  return gaussian_log_pdf(y, p.mean, p.scale);
}

Prediction LoopDensityModel::predict(std::span<const double> state) const {
  const double rho = state[spec_.link];
  const double sd = spec_.relative ? std::max(spec_.noise_std * rho, spec_.min_std) : spec_.noise_std;
  return {rho, sd};
}

GnssSpeedModel::GnssSpeedModel(const ctm::FreewayNetwork& network, std::size_t link, double next_onramp_demand,
                               double onramp_priority, GnssSpec spec)
    : network_(network),
      link_(link),
      next_onramp_demand_(next_onramp_demand),
      onramp_priority_(onramp_priority),
      spec_(spec) {}

Prediction GnssSpeedModel::predict(std::span<const double> state) const {
  const double v = ctm::link_speed_at(state, network_, link_, next_onramp_demand_, onramp_priority_);
  return {v, std::max(spec_.noise_fraction * v, spec_.min_std)};
}

double GnssSpeedModel::density(double y, std::span<const double> state) const {
  return std::exp(log_density(y, state));
}

double GnssSpeedModel::log_density(double y, std::span<const double> state) const {
  const Prediction p = predict(state);
  return gaussian_log_pdf(y, p.mean, p.scale);
}

HalfLineGaussian::HalfLineGaussian(double mean, double stddev) : mean_(mean), stddev_(stddev) {
  if (!(stddev > 0.0)) throw ConfigError("half-line Gaussian: std must be positive");
  // Mass of the untruncated Gaussian on [0, inf).
  const double mass = 0.5 * std::erfc(-mean / (stddev * std::numbers::sqrt2));
  log_norm_ = std::log(mass);
}

double HalfLineGaussian::density(double y, std::span<const double> state) const {
  return std::exp(log_density(y, state));
}

double HalfLineGaussian::log_density(double y, std::span<const double>) const {
  if (y < 0.0) return kNegInf;
  return gaussian_log_pdf(y, mean_, stddev_) - log_norm_;
}

FaultMixtureModel::FaultMixtureModel(const FaultConfig& config, double zero_std)
    : zero_weight_(config.zero_weight), zero_(0.0, zero_std), random_(config.random_mean, config.random_std) {}

double FaultMixtureModel::density(double y, std::span<const double> state) const {
  return std::exp(log_density(y, state));
}

double FaultMixtureModel::log_density(double y, std::span<const double> state) const {
  const double a = zero_weight_ > 0.0 ? std::log(zero_weight_) + zero_.log_density(y, state) : kNegInf;
  const double b = zero_weight_ < 1.0 ? std::log1p(-zero_weight_) + random_.log_density(y, state) : kNegInf;
  return log_add(a, b);
}

SensorModel build_sensor_model(const LabeledMeasurement& m, const SensorContext& context) {
  if (context.network == nullptr) throw ConfigError("sensor context has no network");
  SensorModel model;
  model.id = m.sensor_id;
  model.alpha = context.alpha;
  if (m.link >= context.network->size()) {
    throw DataError("measurement " + m.sensor_id + ": link " + std::to_string(m.link) + " out of range");
  }

  if (m.kind == MeasurementKind::loop_density) {
    auto spec = std::find_if(context.loops.begin(), context.loops.end(),
                             [&](const LoopDetectorSpec& s) { return s.link == m.link; });
    LoopDetectorSpec resolved = spec != context.loops.end() ? *spec : LoopDetectorSpec{m.link};
    model.h0 = std::make_shared<LoopDensityModel>(resolved);
    model.test_kind = TestKind::none;
    return model;
  }

  const std::size_t next = m.link + 1;
  const double next_ramp = next < context.mean_demand.onramp.size() ? context.mean_demand.onramp[next] : 0.0;
  model.h0 = std::make_shared<GnssSpeedModel>(*context.network, m.link, next_ramp, context.onramp_priority,
                                               context.gnss);
  switch (context.mode) {
    case HypothesisMode::none:
      model.test_kind = TestKind::none;
      break;
    case HypothesisMode::fisher:
      model.test_kind = TestKind::fisher;
      break;
    case HypothesisMode::np_correct:
      model.test_kind = TestKind::neyman_pearson;
      model.h1 = std::make_shared<FaultMixtureModel>(context.faults, context.fault_zero_std);
      break;
    case HypothesisMode::np_incorrect:
      model.test_kind = TestKind::neyman_pearson;
      model.h1 = std::make_shared<HalfLineGaussian>(0.0, context.near_zero_std);
      break;
  }
  return model;
}

std::vector<SensorModel> build_sensor_models(std::span<const LabeledMeasurement> measurements,
                                             const SensorContext& context) {
  std::vector<SensorModel> out;
  out.reserve(measurements.size());
  for (const auto& m : measurements) out.push_back(build_sensor_model(m, context));
  return out;
}

}  // namespace rpf::sensing

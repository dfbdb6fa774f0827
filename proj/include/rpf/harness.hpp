#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rpf/ctm.hpp"
#include "rpf/fault_tests.hpp"
#include "rpf/sensing.hpp"

namespace rpf::harness {

struct FilterSettings {
  std::size_t particles = 400;
  NpMassTerm np_mass = NpMassTerm::weighted_density;
  double fault_zero_std = 0.5;  // m/s
  double near_zero_std = 1.0;   // m/s
  // Initial particles are the initial density scaled by (1 + spread * N(0, 1)).
  double initial_spread = 0.10;
  // Resample when ESS < resample_threshold * P.
  double resample_threshold = 0.5;
};

struct ExperimentConfig {
  ctm::FreewayNetwork network;
  ctm::DemandProfiles demand;
  ctm::LinkState initial_density;
  std::size_t horizon = 2000;
  std::vector<sensing::LoopDetectorSpec> loops;
  sensing::GnssSpec gnss;
  sensing::FaultConfig faults;
  FilterSettings filter;
  std::vector<sensing::HypothesisMode> variants;
  std::vector<double> alphas;
  std::vector<std::uint64_t> seeds;
  // Also run the ungated fault-free and ungated faulted filters.
  bool baselines = true;
  // Worker threads for independent runs; 0 picks the hardware concurrency.
  std::size_t threads = 0;

  void validate() const;
};

// Measurements grouped by timestep; index k holds the readings of state k.
using MeasurementLog = std::vector<std::vector<sensing::LabeledMeasurement>>;

struct TruthRun {
  std::uint64_t seed = 0;
  ctm::Trajectory trajectory;
  MeasurementLog clean;
  MeasurementLog faulted;
};

TruthRun simulate_truth(const ExperimentConfig& config, std::uint64_t seed);

struct DecisionRecord {
  std::size_t k = 0;
  GateDecision decision;
  double value = 0.0;
  bool faulty = false;
};

struct FilterRun {
  std::vector<StateVector> estimates;  // posterior means, k = 0..K
  std::vector<DecisionRecord> decisions;
  // GNSS readings assimilated without any gate (variant none).
  std::size_t ungated_clean = 0;
  std::size_t ungated_faulty = 0;
  std::size_t resamples = 0;
  std::size_t steps_all_rejected = 0;
  bool collapsed = false;
  std::size_t collapse_step = 0;
  std::string collapse_message;
};

// Initial ensemble drawn around the configured initial density.
ParticleEnsemble initial_ensemble(const ExperimentConfig& config, const RandomSource& rng);

// Sensor context for timestep k.
sensing::SensorContext sensor_context(const ExperimentConfig& config, std::size_t k, sensing::HypothesisMode mode,
                                      double alpha);

// Predict, gate, update and resample over the whole log. The filter's random
// draws come from RandomSource(seed, streams::filter) so that variants
// filtered with the same seed share their randomness.
FilterRun run_filter(const ExperimentConfig& config, const MeasurementLog& log, sensing::HypothesisMode mode,
                     double alpha, std::uint64_t seed);

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  std::size_t positives() const { return tp + fp; }
  // Percent of decisions that mislabel the measurement.
  double labeling_error() const;
};

struct LabeledDecision {
  bool rejected = false;
  std::optional<bool> faulty;
};

Confusion confusion_metrics(std::span<const LabeledDecision> decisions);

struct TrajectoryPair {
  std::vector<StateVector> truth;
  std::vector<StateVector> estimate;
};

inline constexpr double kMapeFloor = 1e-4;  // veh/m

// 100 * mean |est - truth| / max(truth, floor) over every entry.
double mape(const TrajectoryPair& pair, double floor = kMapeFloor);

inline constexpr const char* kFaultFree = "fault_free";
inline constexpr const char* kUngated = "ungated";

struct RunMetrics {
  std::string variant;
  double alpha = 0.0;  // 0 for the ungated baselines
  std::uint64_t seed = 0;
  Confusion confusion;
  double labeling_error = 0.0;
  double mape = 0.0;
  std::size_t zero_faults = 0;
  std::size_t zero_faults_rejected = 0;
  std::size_t random_faults = 0;
  std::size_t random_faults_rejected = 0;
  bool collapsed = false;
};

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single seed
};

inline constexpr const char* kMetricNames[] = {"True Positives", "False Positives", "True Negatives",
                                               "False Negatives", "Labeling Error (%)", "Density MAPE (%)"};

struct SummaryRow {
  std::string variant;
  double alpha = 0.0;
  Summary metrics[6];
};

struct MetricsReport {
  std::vector<std::string> variants;  // gated variants, then baselines
  std::vector<double> alphas;
  std::vector<std::uint64_t> seeds;
  std::vector<RunMetrics> runs;
  std::vector<SummaryRow> summary;

  const RunMetrics& run(const std::string& variant, double alpha, std::uint64_t seed) const;
  std::vector<const RunMetrics*> runs_for(const std::string& variant, double alpha) const;
};

RunMetrics evaluate_run(const std::string& variant, double alpha, std::uint64_t seed, const TruthRun& truth,
                        const FilterRun& run);

Summary summarize(std::span<const double> values);

MetricsReport run_experiment(const ExperimentConfig& config);

// run_experiment over the given alpha values with paired seeds.
MetricsReport sweep_alpha(const ExperimentConfig& config, std::span<const double> alphas);

}  // namespace rpf::harness

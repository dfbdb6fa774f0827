#include "rpf/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <thread>

#include "rpf/errors.hpp"

namespace rpf::harness {
namespace {

constexpr std::uint64_t kInitialStream = 0xFFFF'FFFFULL;

void run_parallel(std::size_t tasks, std::size_t threads, const std::function<void(std::size_t)>& body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, tasks);
  if (threads <= 1) {
    for (std::size_t i = 0; i < tasks; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(tasks);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < tasks; i = next++) {
        try {
          body(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  network.validate();
  if (initial_density.size() != network.size()) {
    throw ConfigError("run.initial_density: expected " + std::to_string(network.size()) + " entries");
  }
  for (std::size_t l = 0; l < network.size(); ++l) {
    if (!(initial_density[l] >= 0.0 && initial_density[l] <= network.links[l].jam_density)) {
      throw ConfigError("run.initial_density[" + std::to_string(l) + "]: must lie in [0, jam density]");
    }
  }
  if (horizon < 1) throw ConfigError("run.horizon: must be at least 1");
  if (filter.particles < 2) throw ConfigError("filter.particles: must be at least 2");
  if (!(filter.fault_zero_std > 0.0)) throw ConfigError("filter.fault_zero_std: must be positive");
  if (!(filter.near_zero_std > 0.0)) throw ConfigError("filter.near_zero_std: must be positive");
  if (!(filter.initial_spread >= 0.0)) throw ConfigError("filter.initial_spread: must be nonnegative");
  if (!(filter.resample_threshold >= 0.0 && filter.resample_threshold <= 1.0)) {
    throw ConfigError("filter.resample_threshold: must lie in [0, 1]");
  }
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (!(alphas[i] > 0.0 && alphas[i] < 1.0)) {
      throw ConfigError("filter.alphas[" + std::to_string(i) + "]: must lie in (0, 1)");
    }
  }
  if (seeds.empty()) throw ConfigError("run.seeds: at least one seed is required");
  for (const auto& loop : loops) sensing::validate(loop, network.size());
  sensing::validate(gnss);
  sensing::validate(faults);
  for (const auto& [link, profile] : demand.onramps) {
    if (link >= network.size() || !network.links[link].onramp) {
      throw ConfigError("demand.onramps: link " + std::to_string(link) + " has no onramp");
    }
  }
  if (!(demand.relative_std >= 0.0)) throw ConfigError("demand.relative_std: must be nonnegative");
  if (!(demand.onramp_priority >= 0.0 && demand.onramp_priority <= 1.0)) {
    throw ConfigError("demand.onramp_priority: must lie in [0, 1]");
  }
}

TruthRun simulate_truth(const ExperimentConfig& config, std::uint64_t seed) {
  TruthRun truth;
  truth.seed = seed;
  truth.trajectory =
      ctm::simulate(config.network, config.demand, config.initial_density, config.horizon, RandomSource(seed, streams::truth));

  RandomSource loop_rng(seed, streams::loop_noise);
  RandomSource gnss_rng(seed, streams::gnss);
  RandomSource fault_rng(seed, streams::faults);
  truth.clean.resize(config.horizon + 1);
  truth.faulted.resize(config.horizon + 1);
  for (std::size_t k = 1; k <= config.horizon; ++k) {
    const auto& state = truth.trajectory.states[k];
    auto rows = sensing::sample_loop_detectors(k, state, config.loops, loop_rng);
    const auto counts = sensing::vehicle_counts(state, config.network);
    auto gnss = sensing::sample_gnss_speeds(k, truth.trajectory.speeds[k], counts, config.gnss, gnss_rng);
    rows.insert(rows.end(), gnss.begin(), gnss.end());
    truth.faulted[k] = sensing::inject_faults(rows, config.faults, fault_rng);
    truth.clean[k] = std::move(rows);
  }
  return truth;
}

ParticleEnsemble initial_ensemble(const ExperimentConfig& config, const RandomSource& rng) {
  std::vector<StateVector> particles(config.filter.particles);
  for (std::size_t p = 0; p < particles.size(); ++p) {
    RandomSource r = rng.derive(p);
    auto& x = particles[p];
    x.resize(config.network.size());
    for (std::size_t l = 0; l < x.size(); ++l) {
      const double scaled = config.initial_density[l] * (1.0 + config.filter.initial_spread * r.normal());
      x[l] = std::clamp(scaled, 0.0, config.network.links[l].jam_density);
    }
  }
  return ParticleEnsemble(std::move(particles));
}

sensing::SensorContext sensor_context(const ExperimentConfig& config, std::size_t k, sensing::HypothesisMode mode,
                                      double alpha) {
  sensing::SensorContext ctx;
  ctx.network = &config.network;
  ctx.mean_demand = config.demand.mean_at(k, config.network.size());
  ctx.onramp_priority = config.demand.onramp_priority;
  ctx.gnss = config.gnss;
  ctx.faults = config.faults;
  ctx.loops = config.loops;
  ctx.mode = mode;
  ctx.alpha = alpha;
  ctx.fault_zero_std = config.filter.fault_zero_std;
  ctx.near_zero_std = config.filter.near_zero_std;
  return ctx;
}

FilterRun run_filter(const ExperimentConfig& config, const MeasurementLog& log, sensing::HypothesisMode mode,
                     double alpha, std::uint64_t seed) {
  const RandomSource base(seed, streams::filter);
  const GateConfig gate_config{config.filter.np_mass};
  const double resample_below = config.filter.resample_threshold * static_cast<double>(config.filter.particles);

  FilterRun run;
  ParticleEnsemble ensemble = initial_ensemble(config, base.derive(kInitialStream));
  run.estimates.reserve(config.horizon + 1);
  run.estimates.push_back(posterior_mean(ensemble));

  for (std::size_t k = 1; k <= config.horizon; ++k) {
    const RandomSource step_rng = base.derive(k);
    const ctm::CtmDynamics dynamics(config.network, config.demand, k - 1);
    try {
      ensemble = predict(ensemble, dynamics, step_rng.derive(0));

      const auto ctx = sensor_context(config, k, mode, alpha);
      std::vector<SensorReading> readings;
      std::vector<const sensing::LabeledMeasurement*> tested;
      if (k < log.size()) {
        readings.reserve(log[k].size());
        for (const auto& m : log[k]) {
          readings.push_back({sensing::build_sensor_model(m, ctx), m.value});
          if (readings.back().sensor.test_kind != TestKind::none) {
            tested.push_back(&m);
          } else if (m.kind == sensing::MeasurementKind::gnss_speed) {
            ++(m.faulty ? run.ungated_faulty : run.ungated_clean);
          }
        }
      }

      auto result = gated_update(ensemble, readings, gate_config);
      for (std::size_t i = 0; i < result.decisions.size(); ++i) {
        run.decisions.push_back({k, std::move(result.decisions[i]), tested[i]->value, tested[i]->faulty});
      }
      if (result.all_rejected) ++run.steps_all_rejected;
      ensemble = std::move(result.posterior);
      run.estimates.push_back(posterior_mean(ensemble));

      if (effective_sample_size(ensemble) < resample_below) {
        RandomSource resample_rng = step_rng.derive(1);
        ensemble = resample_systematic(ensemble, resample_rng);
        ++run.resamples;
      }
    } catch (const WeightCollapse& e) {
      run.collapsed = true;
      run.collapse_step = k;
      run.collapse_message = e.what();
      // Hold the last estimate so trajectories keep their shape.
      while (run.estimates.size() <= config.horizon) run.estimates.push_back(run.estimates.back());
      break;
    }
  }
  return run;
}

double Confusion::labeling_error() const {
  const std::size_t n = total();
  return n == 0 ? 0.0 : 100.0 * static_cast<double>(fp + fn) / static_cast<double>(n);
}

Confusion confusion_metrics(std::span<const LabeledDecision> decisions) {
  Confusion c;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const auto& d = decisions[i];
    if (!d.faulty) throw DataError("confusion_metrics: decision " + std::to_string(i) + " has no label");
    if (d.rejected) {
      ++(*d.faulty ? c.tp : c.fp);
    } else {
      ++(*d.faulty ? c.fn : c.tn);
    }
  }
  return c;
}

double mape(const TrajectoryPair& pair, double floor) {
  if (pair.truth.size() != pair.estimate.size()) throw DataError("mape: trajectories differ in length");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < pair.truth.size(); ++k) {
    if (pair.truth[k].size() != pair.estimate[k].size()) {
      throw DataError("mape: state dimensions differ at step " + std::to_string(k));
    }
    for (std::size_t l = 0; l < pair.truth[k].size(); ++l) {
      total += std::abs(pair.estimate[k][l] - pair.truth[k][l]) / std::max(pair.truth[k][l], floor);
      ++count;
    }
  }
  return count == 0 ? 0.0 : 100.0 * total / static_cast<double>(count);
}

RunMetrics evaluate_run(const std::string& variant, double alpha, std::uint64_t seed, const TruthRun& truth,
                        const FilterRun& run) {
  RunMetrics m;
  m.variant = variant;
  m.alpha = alpha;
  m.seed = seed;
  m.collapsed = run.collapsed;

  std::vector<LabeledDecision> labeled;
  labeled.reserve(run.decisions.size());
  for (const auto& d : run.decisions) {
    labeled.push_back({d.decision.rejected_h0, d.faulty});
    if (!d.faulty) continue;
    if (d.value == 0.0) {
      ++m.zero_faults;
      if (d.decision.rejected_h0) ++m.zero_faults_rejected;
    } else {
      ++m.random_faults;
      if (d.decision.rejected_h0) ++m.random_faults_rejected;
    }
  }
  m.confusion = confusion_metrics(labeled);
  m.confusion.tn += run.ungated_clean;
  m.confusion.fn += run.ungated_faulty;
  m.labeling_error = m.confusion.labeling_error();

  TrajectoryPair pair;
  const auto& states = truth.trajectory.states;
  pair.truth.assign(states.begin() + 1, states.end());
  pair.estimate.assign(run.estimates.begin() + 1, run.estimates.end());
  m.mape = mape(pair);
  return m;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return s;
}

const RunMetrics& MetricsReport::run(const std::string& variant, double alpha, std::uint64_t seed) const {
  for (const auto& r : runs) {
    if (r.variant == variant && r.alpha == alpha && r.seed == seed) return r;
  }
  throw DataError("metrics report has no run for variant " + variant);
}

std::vector<const RunMetrics*> MetricsReport::runs_for(const std::string& variant, double alpha) const {
  std::vector<const RunMetrics*> out;
  for (const auto& r : runs) {
    if (r.variant == variant && r.alpha == alpha) out.push_back(&r);
  }
  return out;
}

MetricsReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  MetricsReport report;
  report.alphas = config.alphas;
  report.seeds = config.seeds;
  for (auto mode : config.variants) report.variants.emplace_back(sensing::to_string(mode));
  if (config.baselines) {
    report.variants.emplace_back(kFaultFree);
    report.variants.emplace_back(kUngated);
  }

  std::vector<TruthRun> truths(config.seeds.size());
  run_parallel(config.seeds.size(), config.threads,
               [&](std::size_t i) { truths[i] = simulate_truth(config, config.seeds[i]); });

  struct Task {
    std::size_t seed_index;
    std::string variant;
    sensing::HypothesisMode mode;
    double alpha;
    bool clean_log;
  };
  std::vector<Task> tasks;
  for (std::size_t s = 0; s < config.seeds.size(); ++s) {
    for (auto mode : config.variants) {
      for (double alpha : config.alphas) tasks.push_back({s, std::string(sensing::to_string(mode)), mode, alpha, false});
    }
    if (config.baselines) {
      tasks.push_back({s, kFaultFree, sensing::HypothesisMode::none, 0.0, true});
      tasks.push_back({s, kUngated, sensing::HypothesisMode::none, 0.0, false});
    }
  }

  report.runs.resize(tasks.size());
  run_parallel(tasks.size(), config.threads, [&](std::size_t i) {
    const auto& t = tasks[i];
    const auto& truth = truths[t.seed_index];
    const auto& log = t.clean_log ? truth.clean : truth.faulted;
    const auto run = run_filter(config, log, t.mode, t.alpha, truth.seed);
    report.runs[i] = evaluate_run(t.variant, t.alpha, truth.seed, truth, run);
  });

  auto add_row = [&](const std::string& variant, double alpha) {
    SummaryRow row;
    row.variant = variant;
    row.alpha = alpha;
    const auto runs = report.runs_for(variant, alpha);
    std::vector<double> values(runs.size());
    auto fill = [&](int metric, auto&& get) {
      for (std::size_t i = 0; i < runs.size(); ++i) values[i] = get(*runs[i]);
      row.metrics[metric] = summarize(values);
    };
    fill(0, [](const RunMetrics& r) { return static_cast<double>(r.confusion.tp); });
    fill(1, [](const RunMetrics& r) { return static_cast<double>(r.confusion.fp); });
    fill(2, [](const RunMetrics& r) { return static_cast<double>(r.confusion.tn); });
    fill(3, [](const RunMetrics& r) { return static_cast<double>(r.confusion.fn); });
    fill(4, [](const RunMetrics& r) { return r.labeling_error; });
    fill(5, [](const RunMetrics& r) { return r.mape; });
    report.summary.push_back(std::move(row));
  };
  for (auto mode : config.variants) {
    for (double alpha : config.alphas) add_row(std::string(sensing::to_string(mode)), alpha);
  }
  if (config.baselines) {
    add_row(kFaultFree, 0.0);
    add_row(kUngated, 0.0);
  }
  return report;
}

MetricsReport sweep_alpha(const ExperimentConfig& config, std::span<const double> alphas) {
  ExperimentConfig swept = config;
  swept.alphas.assign(alphas.begin(), alphas.end());
  return run_experiment(swept);
}

}  // namespace rpf::harness

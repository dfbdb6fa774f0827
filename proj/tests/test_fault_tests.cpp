#include <doctest.h>

#include <cmath>
#include <limits>

#include "rpf/errors.hpp"
#include "rpf/fault_tests.hpp"
#include "test_support.hpp"

using namespace rpf;
using rpf::test::GaussianOnState;
using rpf::test::indexed_states;
using rpf::test::PredictionTable;
using rpf::test::simpson_normal_cdf;
using rpf::test::TableDensity;

namespace {

DensityPtr table(std::vector<double> values) { return std::make_shared<TableDensity>(std::move(values)); }

SensorModel np_sensor(DensityPtr h0, DensityPtr h1, double alpha) {
  SensorModel s;
  s.id = "s";
  s.h0 = std::move(h0);
  s.h1 = std::move(h1);
  s.test_kind = TestKind::neyman_pearson;
  s.alpha = alpha;
  return s;
}

SensorModel fisher_sensor(DensityPtr h0, double alpha) {
  SensorModel s;
  s.id = "f";
  s.h0 = std::move(h0);
  s.test_kind = TestKind::fisher;
  s.alpha = alpha;
  return s;
}

// Brute-force posterior: prior weight times the product of accepted densities.
std::vector<double> brute_force_posterior(const ParticleEnsemble& prior, std::span<const SensorReading> readings,
                                          const std::vector<bool>& accepted) {
  std::vector<double> w(prior.size());
  double total = 0.0;
  for (std::size_t p = 0; p < prior.size(); ++p) {
    w[p] = prior.weight(p);
    for (std::size_t j = 0; j < readings.size(); ++j) {
      if (accepted[j]) w[p] *= readings[j].sensor.h0->density(readings[j].value, prior.state(p));
    }
    total += w[p];
  }
  for (auto& v : w) v /= total;
  return w;
}

}  // namespace

TEST_CASE("likelihood ratio of hand-picked densities") {
  const StateVector x = {0.0};
  CHECK(likelihood_ratio(0.0, x, TableDensity({0.2}), TableDensity({0.4})) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(likelihood_ratio(0.0, x, TableDensity({0.5}), TableDensity({0.0})) == 0.0);
  CHECK(likelihood_ratio(0.0, x, TableDensity({0.0}), TableDensity({0.3})) == std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(likelihood_ratio(0.0, x, TableDensity({0.0}), TableDensity({0.0})), UndefinedRatio);
  GaussianOnState g(1.5);
  for (double y : {-3.0, 0.0, 0.7, 12.0}) CHECK(likelihood_ratio(y, x, g, g) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("NP gate on the three-particle hand example") {
  ParticleEnsemble prior(indexed_states(3));
  const auto h0 = table({0.3, 0.2, 0.1});
  const auto h1 = table({0.4, 0.1, 0.05});
  // Ratios {1.33, 0.5, 0.5}: only particle 0 favors H1, S = (1/3)(0.3) = 0.1.
  const auto accept = np_gate(prior, 0.0, np_sensor(h0, h1, 0.05));
  CHECK(accept.statistic == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(accept.auxiliary == 1.0);
  CHECK_FALSE(accept.rejected_h0);
  const auto reject = np_gate(prior, 0.0, np_sensor(h0, h1, 0.2));
  CHECK(reject.statistic == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(reject.rejected_h0);
  CHECK(reject.threshold == 0.2);
}

TEST_CASE("NP gate short-circuits to accept when no particle favors H1") {
  ParticleEnsemble prior({{0.0}, {1.0}, {2.0}});
  const auto g = std::make_shared<GaussianOnState>(1.0);
  for (double alpha : {1e-6, 0.01, 0.5, 0.999}) {
    const auto d = np_gate(prior, 0.3, np_sensor(g, g, alpha));
    CHECK_FALSE(d.rejected_h0);
    CHECK(d.auxiliary == 0.0);
  }
}

TEST_CASE("NP gate rejects a far outlier under a broad H1") {
  std::vector<StateVector> xs;
  for (int p = 0; p < 20; ++p) xs.push_back({-1.0 + 0.1 * p});
  ParticleEnsemble prior(xs);
  auto h0 = std::make_shared<GaussianOnState>(1.0);
  // Broad H1: Gaussian of std 100 around zero, state independent.
  class Broad final : public MeasurementDensity {
   public:
    double density(double y, std::span<const double>) const override {
      return std::exp(-0.5 * (y / 100.0) * (y / 100.0)) / (100.0 * std::sqrt(2.0 * M_PI));
    }
  };
  const auto sensor = np_sensor(h0, std::make_shared<Broad>(), 0.001);
  const auto d = np_gate(prior, 50.0, sensor);
  // Every g0 is below phi(49) / 1, so S is numerically zero.
  CHECK(d.statistic < 1e-300);
  CHECK(d.auxiliary == 20.0);
  CHECK(d.rejected_h0);
}

TEST_CASE("NP gate skips particles where both densities vanish") {
  ParticleEnsemble prior(indexed_states(3));
  const auto d = np_gate(prior, 0.0, np_sensor(table({0.0, 0.2, 0.3}), table({0.0, 0.5, 0.1}), 0.05));
  CHECK(d.auxiliary == 1.0);
  CHECK(d.statistic == doctest::Approx(0.2 / 3.0).epsilon(1e-12));
}

TEST_CASE("NP gate excludes zero-weight particles") {
  ParticleEnsemble prior(indexed_states(2), std::vector<double>{1.0, 0.0});
  const auto d = np_gate(prior, 0.0, np_sensor(table({0.3, 0.001}), table({0.1, 0.5}), 0.05));
  CHECK_FALSE(d.rejected_h0);
  CHECK(d.auxiliary == 0.0);
}

TEST_CASE("NP gate normalized mass term") {
  ParticleEnsemble prior(indexed_states(3));
  GateConfig config;
  config.np_mass = NpMassTerm::normalized;
  const auto d = np_gate(prior, 0.0, np_sensor(table({0.3, 0.2, 0.1}), table({0.4, 0.1, 0.05}), 0.6), config);
  CHECK(d.statistic == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(d.rejected_h0);
}

TEST_CASE("NP gate requires a normalized prior") {
  auto prior = ParticleEnsemble::from_log_weights(indexed_states(2), {0.0, 0.0}, false);
  CHECK_THROWS_AS(np_gate(prior, 0.0, np_sensor(table({0.1, 0.1}), table({0.2, 0.2}), 0.05)), ContractViolation);
}

TEST_CASE("property: the NP indicator is invariant to a common per-particle scaling") {
  RandomSource rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t P = 1 + rng.uniform() * 40;
    std::vector<double> g0(P), g1(P), c(P), s0(P), s1(P);
    for (std::size_t p = 0; p < P; ++p) {
      g0[p] = rng.uniform();
      g1[p] = rng.uniform();
      c[p] = 0.01 + rng.uniform() * 100.0;
      s0[p] = g0[p] * c[p];
      s1[p] = g1[p] * c[p];
    }
    ParticleEnsemble prior(indexed_states(P));
    const auto a = np_gate(prior, 0.0, np_sensor(table(g0), table(g1), 0.5));
    const auto b = np_gate(prior, 0.0, np_sensor(table(s0), table(s1), 0.5));
    CHECK(a.auxiliary == b.auxiliary);
  }
}

TEST_CASE("property: both gates are monotone in alpha") {
  RandomSource rng(17);
  const double alphas[] = {1e-6, 1e-4, 0.001, 0.01, 0.05, 0.1, 0.3, 0.9};
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t P = 1 + rng.uniform() * 30;
    std::vector<double> g0(P), g1(P), mu(P), sd(P), w(P);
    for (std::size_t p = 0; p < P; ++p) {
      g0[p] = rng.uniform() * 0.5;
      g1[p] = rng.uniform() * 0.5;
      mu[p] = rng.normal(0.0, 3.0);
      sd[p] = 0.2 + rng.uniform() * 3.0;
      w[p] = rng.uniform() + 1e-3;
    }
    double total = 0.0;
    for (double v : w) total += v;
    for (auto& v : w) v /= total;
    ParticleEnsemble prior(indexed_states(P), w);
    const double y = rng.normal(0.0, 6.0);
    const auto pred = std::make_shared<PredictionTable>(mu, sd);
    bool np_prev = false;
    bool fisher_prev = false;
    for (double alpha : alphas) {
      const bool np = np_gate(prior, y, np_sensor(table(g0), table(g1), alpha)).rejected_h0;
      const bool fisher = fisher_gate(prior, y, fisher_sensor(pred, alpha)).rejected_h0;
      CHECK((!np_prev || np));
      CHECK((!fisher_prev || fisher));
      np_prev = np;
      fisher_prev = fisher;
    }
  }
}

TEST_CASE("Fisher statistic on the two-particle hand example") {
  ParticleEnsemble prior(indexed_states(2));
  const auto sensor = fisher_sensor(std::make_shared<PredictionTable>(std::vector<double>{10.0, 14.0},
                                                                      std::vector<double>{2.0, 2.8}),
                                    0.001);
  // T = {(20 - 10) / 2, (20 - 14) / 2.8} = {5, 2.142857...}; mean 3.571429.
  const double t = fisher_statistic(prior, 20.0, sensor);
  CHECK(t == doctest::Approx(0.5 * (5.0 + 6.0 / 2.8)).epsilon(1e-14));
  CHECK(t == doctest::Approx(3.571429).epsilon(1e-6));

  ParticleEnsemble first(indexed_states(2), std::vector<double>{1.0, 0.0});
  CHECK(fisher_statistic(first, 20.0, sensor) == doctest::Approx(5.0).epsilon(1e-15));

  ParticleEnsemble same({{3.0}, {3.0}});
  CHECK(fisher_statistic(same, 3.0, fisher_sensor(std::make_shared<GaussianOnState>(1.0), 0.05)) == 0.0);
}

TEST_CASE("Fisher p-values match a Simpson-integrated normal CDF") {
  const double t = 0.5 * (5.0 + 6.0 / 2.8);
  const double oracle = 2.0 * simpson_normal_cdf(-t);
  const double p = normal_tail_probability(t, TailMode::two_sided);
  CHECK(p == doctest::Approx(oracle).epsilon(1e-8));
  CHECK(p == doctest::Approx(3.55e-4).epsilon(0.01));
  CHECK(normal_tail_probability(1.959964, TailMode::two_sided) == doctest::Approx(0.05).epsilon(1e-6));
  CHECK(normal_tail_probability(1.959964, TailMode::two_sided) ==
        doctest::Approx(2.0 * simpson_normal_cdf(-1.959964)).epsilon(1e-10));
  CHECK(normal_tail_probability(0.0, TailMode::two_sided) == 1.0);
  CHECK(normal_tail_probability(-1.3, TailMode::left) == doctest::Approx(simpson_normal_cdf(-1.3)).epsilon(1e-10));
  CHECK(normal_tail_probability(1.3, TailMode::right) == doctest::Approx(simpson_normal_cdf(-1.3)).epsilon(1e-10));
  CHECK(normal_tail_probability(-1.3, TailMode::right) == doctest::Approx(simpson_normal_cdf(1.3)).epsilon(1e-10));
}

TEST_CASE("Fisher gate decisions at the hand example") {
  ParticleEnsemble prior(indexed_states(2));
  auto pred = std::make_shared<PredictionTable>(std::vector<double>{10.0, 14.0}, std::vector<double>{2.0, 2.8});
  const auto at_1e3 = fisher_gate(prior, 20.0, fisher_sensor(pred, 0.001));
  CHECK(at_1e3.rejected_h0);
  CHECK(at_1e3.auxiliary == doctest::Approx(3.571429).epsilon(1e-6));
  CHECK_FALSE(fisher_gate(prior, 20.0, fisher_sensor(pred, 1e-4)).rejected_h0);

  ParticleEnsemble fit(std::vector<StateVector>{{4.0}});
  const auto perfect = fisher_gate(fit, 4.0, fisher_sensor(std::make_shared<GaussianOnState>(2.0), 0.999));
  CHECK(perfect.statistic == 1.0);
  CHECK_FALSE(perfect.rejected_h0);
}

TEST_CASE("property: Fisher statistic is linear in the per-particle statistic") {
  RandomSource rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t P = 1 + rng.uniform() * 20;
    std::vector<StateVector> xs;
    for (std::size_t p = 0; p < P; ++p) xs.push_back({rng.normal(0.0, 5.0)});
    ParticleEnsemble prior(xs);
    auto sensor = fisher_sensor(std::make_shared<GaussianOnState>(1.7), 0.05);
    const double y = rng.normal(0.0, 5.0);
    const double base = fisher_statistic(prior, y, sensor);
    const double a = rng.normal(0.0, 3.0);
    sensor.statistic = [a](double v, const Prediction& pr) { return a * (v - pr.mean) / pr.scale; };
    CHECK(fisher_statistic(prior, y, sensor) == doctest::Approx(a * base).epsilon(1e-12));
  }
}

TEST_CASE("property: Fisher gate never rejects at the weighted predicted mean") {
  RandomSource rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t P = 1 + rng.uniform() * 20;
    std::vector<StateVector> xs;
    std::vector<double> w(P);
    double total = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
      xs.push_back({rng.normal(0.0, 5.0)});
      w[p] = rng.uniform() + 1e-3;
      total += w[p];
    }
    for (auto& v : w) v /= total;
    ParticleEnsemble prior(xs, w);
    double mean = 0.0;
    for (std::size_t p = 0; p < P; ++p) mean += prior.weight(p) * xs[p][0];
    const auto d = fisher_gate(prior, mean, fisher_sensor(std::make_shared<GaussianOnState>(2.0), 0.999));
    CHECK_FALSE(d.rejected_h0);
    CHECK(d.statistic >= 0.0);
    CHECK(d.statistic <= 1.0);
  }
}

TEST_CASE("Fisher gate calibration on a point-mass ensemble") {
  ParticleEnsemble prior(std::vector<StateVector>{{5.0}});
  const auto sensor = fisher_sensor(std::make_shared<GaussianOnState>(2.0), 0.05);
  RandomSource rng(2718);
  const int draws = 100000;
  int rejected = 0;
  for (int i = 0; i < draws; ++i) rejected += fisher_gate(prior, rng.normal(5.0, 2.0), sensor).rejected_h0 ? 1 : 0;
  const double rate = static_cast<double>(rejected) / draws;
  CHECK(rate >= 0.03);
  CHECK(rate <= 0.07);
}

TEST_CASE("Fisher statistic rejects a non-positive scale") {
  ParticleEnsemble prior(indexed_states(1));
  auto pred = std::make_shared<PredictionTable>(std::vector<double>{1.0}, std::vector<double>{0.0});
  CHECK_THROWS_AS(fisher_statistic(prior, 2.0, fisher_sensor(pred, 0.05)), ModelError);
}

TEST_CASE("gated update with every gate accepting equals the plain update") {
  ParticleEnsemble prior({{0.0}, {1.0}, {2.0}, {3.0}}, std::vector<double>{0.1, 0.2, 0.3, 0.4});
  auto g = std::make_shared<GaussianOnState>(2.0);
  std::vector<SensorReading> readings = {{fisher_sensor(g, 1e-6), 1.5}, {fisher_sensor(g, 1e-6), 2.2}};
  const auto result = gated_update(prior, readings);
  CHECK(result.decisions.size() == 2);
  CHECK_FALSE(result.all_rejected);
  const DensityPtr sensors[] = {g, g};
  const double ys[] = {1.5, 2.2};
  const auto plain = normalize(weight_update(prior, ys, sensors));
  for (std::size_t p = 0; p < 4; ++p) {
    CHECK(result.posterior.weight(p) == doctest::Approx(plain.ensemble.weight(p)).epsilon(1e-12));
  }
  CHECK(result.marginal_likelihood == doctest::Approx(plain.marginal_likelihood).epsilon(1e-12));
  CHECK(result.posterior.is_normalized());
}

TEST_CASE("gated update drops exactly the rejected sensor's factor") {
  std::vector<StateVector> xs = {{-1.0}, {0.0}, {0.5}, {1.0}, {2.0}};
  ParticleEnsemble prior(xs, std::vector<double>{0.1, 0.3, 0.2, 0.25, 0.15});
  auto g = std::make_shared<GaussianOnState>(1.0);
  // The third reading sits far outside every particle's prediction.
  std::vector<SensorReading> readings = {
      {fisher_sensor(g, 0.01), 0.4}, {fisher_sensor(g, 0.01), 0.9}, {fisher_sensor(g, 0.01), 9.0}};
  SensorModel loop;
  loop.id = "loop";
  loop.h0 = g;
  readings.push_back({loop, 0.2});
  const auto result = gated_update(prior, readings);
  REQUIRE(result.decisions.size() == 3);
  CHECK_FALSE(result.decisions[0].rejected_h0);
  CHECK_FALSE(result.decisions[1].rejected_h0);
  CHECK(result.decisions[2].rejected_h0);
  const auto oracle = brute_force_posterior(prior, readings, {true, true, false, true});
  for (std::size_t p = 0; p < xs.size(); ++p) {
    CHECK(result.posterior.weight(p) == doctest::Approx(oracle[p]).epsilon(1e-12));
  }
}

TEST_CASE("gated update with no readings or only rejections returns the prior") {
  ParticleEnsemble prior({{0.0}, {1.0}}, std::vector<double>{0.3, 0.7});
  const auto empty = gated_update(prior, {});
  CHECK(empty.decisions.empty());
  CHECK_FALSE(empty.all_rejected);
  CHECK(empty.posterior.weights() == prior.weights());

  auto g = std::make_shared<GaussianOnState>(0.5);
  std::vector<SensorReading> readings = {{fisher_sensor(g, 0.05), 40.0}};
  const auto rejected = gated_update(prior, readings);
  CHECK(rejected.all_rejected);
  CHECK(rejected.posterior.weight(0) == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(rejected.posterior.weight(1) == doctest::Approx(0.7).epsilon(1e-14));
}

TEST_CASE("sensor model validation") {
  SensorModel s;
  s.id = "x";
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.h0 = std::make_shared<GaussianOnState>(1.0);
  s.validate();
  s.test_kind = TestKind::neyman_pearson;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.h1 = s.h0;
  s.alpha = 1.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.alpha = 0.01;
  s.validate();
  CHECK(parse_test_kind("fisher") == TestKind::fisher);
  CHECK(parse_tail_mode(to_string(TailMode::left)) == TailMode::left);
  CHECK(parse_np_mass_term("normalized") == NpMassTerm::normalized);
  CHECK_THROWS_AS(parse_test_kind("bayes"), ConfigError);
}

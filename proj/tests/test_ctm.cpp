#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "rpf/ctm.hpp"
#include "rpf/errors.hpp"

using namespace rpf;
using namespace rpf::ctm;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

LinkParams link(double length, double vf, double w, double cap, double jam) {
  LinkParams p;
  p.length = length;
  p.freeflow_speed = vf;
  p.wave_speed = w;
  p.capacity = cap;
  p.jam_density = jam;
  return p;
}

FreewayNetwork ramp_network() {
  FreewayNetwork net;
  net.dt = 10.0;
  for (int i = 0; i < 8; ++i) net.links.push_back(link(500.0, 25.0, 6.0, 16.0, 0.33));
  net.links[2].onramp = true;
  net.links[3].offramp = true;
  net.links[3].offramp_split = 0.2;
  net.links[4].capacity = 9.0;
  net.links[6].onramp = true;
  net.links[6].offramp = true;
  net.links[6].offramp_split = 0.1;
  return net;
}

}  // namespace

TEST_CASE("link flow boundary cases and the hand example") {
  const auto up = link(500.0, 25.0, 5.0, 4.0, 0.125);
  const auto down = link(500.0, 25.0, 5.0, 4.0, 0.125);
  CHECK(link_flow(0.0, up, 0.05, down, 10.0) == 0.0);
  CHECK(link_flow(0.1, up, 0.125, down, 10.0) == 0.0);
  // Demand 0.5 * 0.02 * 500 = 5, capacity 4, supply 0.1 * 500 * 0.025 = 1.25.
  CHECK(up.demand(0.02, 10.0) == doctest::Approx(4.0));
  CHECK(down.supply(0.1, 10.0) == doctest::Approx(1.25).epsilon(1e-12));
  CHECK(link_flow(0.02, up, 0.1, down, 10.0) == doctest::Approx(1.25).epsilon(1e-12));
  auto wide = up;
  wide.capacity = 10.0;
  CHECK(wide.demand(0.02, 10.0) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("junction without ramps reduces to the link flow") {
  const auto up = link(500.0, 25.0, 5.0, 4.0, 0.125);
  const auto down = link(500.0, 25.0, 5.0, 4.0, 0.125);
  for (double ru : {0.0, 0.005, 0.01, 0.05, 0.1}) {
    for (double rd : {0.0, 0.05, 0.1, 0.12, 0.125}) {
      const auto f = junction_flows(up.demand(ru, 10.0), 0.0, 0.0, down.supply(rd, 10.0));
      CHECK(f.mainline == link_flow(ru, up, rd, down, 10.0));
      CHECK(f.onramp == 0.0);
      CHECK(f.offramp == 0.0);
    }
  }
}

TEST_CASE("junction offramp split and priority merge hand examples") {
  const auto split = junction_flows(4.0, 0.25, 0.0, kInf);
  CHECK(split.offramp == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(split.mainline == doctest::Approx(3.0).epsilon(1e-15));

  // Mainline demand after the split is 3; supply 2 shared at priority 0.5.
  const auto merge = junction_flows(3.0, 0.0, 2.0, 2.0, 0.5);
  CHECK(merge.onramp == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(merge.mainline == doctest::Approx(1.0).epsilon(1e-15));
  const auto both = junction_flows(4.0, 0.25, 2.0, 2.0, 0.5);
  CHECK(both.offramp == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(both.onramp == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(both.mainline == doctest::Approx(1.0).epsilon(1e-15));

  // Unused allocation moves to the other stream.
  const auto spare = junction_flows(0.5, 0.0, 3.0, 2.0, 0.5);
  CHECK(spare.mainline == doctest::Approx(0.5));
  CHECK(spare.onramp == doctest::Approx(1.5));
}

TEST_CASE("property: junction flows respect supply and demand") {
  RandomSource rng(12);
  for (int i = 0; i < 2000; ++i) {
    const double demand = rng.uniform() * 20.0;
    const double beta = rng.uniform() * 0.9;
    const double ramp = rng.uniform() < 0.3 ? 0.0 : rng.uniform() * 6.0;
    const double supply = rng.uniform() * 20.0;
    const double pr = rng.uniform();
    const auto f = junction_flows(demand, beta, ramp, supply, pr);
    CHECK(f.mainline >= 0.0);
    CHECK(f.onramp >= 0.0);
    CHECK(f.offramp == doctest::Approx(beta * demand));
    CHECK(f.mainline <= (1.0 - beta) * demand + 1e-12);
    CHECK(f.onramp <= ramp + 1e-12);
    CHECK(f.mainline + f.onramp <= supply + 1e-12);
    // Supply is either exhausted or every demand is served.
    const bool exhausted = f.mainline + f.onramp >= supply - 1e-9;
    const bool served = f.mainline >= (1.0 - beta) * demand - 1e-9 && f.onramp >= ramp - 1e-9;
    CHECK((exhausted || served));
  }
}

TEST_CASE("step with no flow leaves the state unchanged") {
  FreewayNetwork net;
  net.links = {link(500.0, 25.0, 6.0, 16.0, 0.3), link(500.0, 25.0, 6.0, 16.0, 0.3)};
  const LinkState empty = {0.0, 0.0};
  const auto [next, flows] = step(empty, net, BoundaryDemand{0.0, {0.0, 0.0}});
  CHECK(next == empty);
  for (double q : flows.mainline) CHECK(q == 0.0);
}

TEST_CASE("conservation update on a single link") {
  FreewayNetwork net;
  net.links = {link(100.0, 10.0, 5.0, 16.0, 0.3)};
  FlowRecord flows{{2.0, 1.0}, {0.0}, {0.0}};
  const auto next = apply_flows({0.05}, net, flows);
  CHECK(next[0] == doctest::Approx(0.06).epsilon(1e-14));
}

TEST_CASE("property: every step conserves vehicles and bounds flows") {
  const auto net = ramp_network();
  RandomSource rng(8);
  for (int trial = 0; trial < 500; ++trial) {
    LinkState x(net.size());
    for (std::size_t l = 0; l < net.size(); ++l) x[l] = rng.uniform() * net.links[l].jam_density;
    BoundaryDemand d{rng.uniform() * 20.0, std::vector<double>(net.size(), 0.0)};
    d.onramp[2] = rng.uniform() * 5.0;
    d.onramp[6] = rng.uniform() * 5.0;
    const auto [next, f] = step(x, net, d, rng.uniform());
    double ramps_in = 0.0;
    double ramps_out = 0.0;
    for (std::size_t l = 0; l < net.size(); ++l) {
      ramps_in += f.onramp[l];
      ramps_out += f.offramp[l];
      CHECK(next[l] >= 0.0);
      CHECK(next[l] <= net.links[l].jam_density + 1e-9);
      CHECK(f.mainline[l + 1] >= 0.0);
      CHECK(f.mainline[l + 1] <= net.links[l].capacity + 1e-12);
      CHECK(f.onramp[l] >= 0.0);
      CHECK(f.offramp[l] >= 0.0);
    }
    const double change = vehicle_count(next, net) - vehicle_count(x, net);
    const double net_flow = f.mainline.front() - f.mainline.back() + ramps_in - ramps_out;
    CHECK(std::fabs(change - net_flow) <= 1e-9);
  }
}

TEST_CASE("apply_flows rejects densities outside the physical range") {
  FreewayNetwork net;
  net.links = {link(100.0, 10.0, 5.0, 16.0, 0.3)};
  CHECK_THROWS_AS(apply_flows({0.01}, net, FlowRecord{{0.0, 5.0}, {0.0}, {0.0}}), ModelError);
  CHECK_THROWS_AS(apply_flows({0.29}, net, FlowRecord{{5.0, 0.0}, {0.0}, {0.0}}), ModelError);
}

TEST_CASE("link speed hand examples") {
  FreewayNetwork net;
  net.links = {link(500.0, 30.0, 6.0, 16.0, 0.3)};
  FlowRecord f{{0.0, 1.25}, {0.0}, {0.0}};
  CHECK(link_speed({0.1}, f, net)[0] == doctest::Approx(1.25).epsilon(1e-14));
  CHECK(link_speed({0.0}, FlowRecord{{0.0, 0.0}, {0.0}, {0.0}}, net)[0] == 30.0);
  CHECK(link_speed({5e-7}, FlowRecord{{0.0, 0.0}, {0.0}, {0.0}}, net)[0] == 30.0);

  // Uncongested link discharging its demand: v_bar * rho * L / (rho * dt) = v_f.
  for (double rho : {0.001, 0.01, 0.04}) {
    const double q = net.links[0].demand(rho, net.dt);
    CHECK(link_speed({rho}, FlowRecord{{0.0, q}, {0.0}, {0.0}}, net)[0] == doctest::Approx(30.0).epsilon(1e-12));
  }
}

TEST_CASE("link_speed_at agrees with link_speed on a stepped network") {
  const auto net = ramp_network();
  RandomSource rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    LinkState x(net.size());
    for (std::size_t l = 0; l < net.size(); ++l) x[l] = rng.uniform() * net.links[l].jam_density;
    BoundaryDemand d{rng.uniform() * 20.0, std::vector<double>(net.size(), 0.0)};
    d.onramp[2] = rng.uniform() * 5.0;
    d.onramp[6] = rng.uniform() * 5.0;
    const auto flows = compute_flows(x, net, d);
    const auto speeds = link_speed(x, flows, net);
    for (std::size_t l = 0; l < net.size(); ++l) {
      const double next_ramp = l + 1 < net.size() ? d.onramp[l + 1] : 0.0;
      CHECK(link_speed_at(x, net, l, next_ramp) == doctest::Approx(speeds[l]).epsilon(1e-12));
      CHECK(speeds[l] >= 0.0);
      CHECK(speeds[l] <= net.links[l].freeflow_speed);
    }
  }
}

TEST_CASE("simulate with horizon zero returns the initial state only") {
  const auto net = ramp_network();
  DemandProfiles demand;
  demand.upstream = Profile({{0.0, 5.0}});
  const LinkState x0(net.size(), 0.01);
  const auto traj = simulate(net, demand, x0, 0, RandomSource(1));
  REQUIRE(traj.states.size() == 1);
  CHECK(traj.states[0] == x0);
}

TEST_CASE("constant sub-capacity demand converges to the freeflow fixed point") {
  FreewayNetwork net;
  for (int i = 0; i < 5; ++i) net.links.push_back(link(500.0, 25.0, 6.0, 16.0, 0.33));
  DemandProfiles demand;
  demand.upstream = Profile({{0.0, 6.0}});
  demand.relative_std = 0.0;
  const auto traj = simulate(net, demand, LinkState(net.size(), 0.0), 200, RandomSource(3));
  // rho* = demand / (v_bar * L) = 6 / (25 * 10).
  const double fixed = 6.0 / (25.0 * 10.0);
  for (std::size_t k = 190; k <= 200; ++k) {
    for (std::size_t l = 0; l < net.size(); ++l) {
      CHECK(std::fabs(traj.states[k][l] - fixed) <= 1e-9);
      CHECK(std::fabs(traj.states[k][l] - traj.states[k - 1][l]) <= 1e-9);
    }
  }
}

TEST_CASE("demand above a mid-network capacity backs a queue up the freeway") {
  FreewayNetwork net;
  net.links = {link(500.0, 25.0, 5.0, 8.0, 0.2), link(500.0, 25.0, 5.0, 3.0, 0.2), link(500.0, 25.0, 5.0, 8.0, 0.2)};
  DemandProfiles demand;
  demand.upstream = Profile({{0.0, 6.0}});
  demand.relative_std = 0.0;
  const std::size_t K = 60;
  const auto traj = simulate(net, demand, LinkState(3, 0.0), K, RandomSource(4));

  // Oracle: step the three links by hand with the plain min() rule.
  std::vector<double> x(3, 0.0);
  const double vbar = 25.0 * 10.0 / 500.0;
  const double wbar = 5.0 * 10.0 / 500.0;
  const double cap[] = {8.0, 3.0, 8.0};
  for (std::size_t k = 0; k < K; ++k) {
    double q[4];
    auto dem = [&](int l) { return std::min(vbar * x[l] * 500.0, cap[l]); };
    auto sup = [&](int l) { return wbar * 500.0 * (0.2 - x[l]); };
    q[0] = std::min(6.0, sup(0));
    q[1] = std::min(dem(0), sup(1));
    q[2] = std::min(dem(1), sup(2));
    q[3] = dem(2);
    for (int l = 0; l < 3; ++l) x[l] += (q[l] - q[l + 1]) / 500.0;
    for (int l = 0; l < 3; ++l) CHECK(traj.states[k + 1][l] == doctest::Approx(x[l]).epsilon(1e-12));
  }
  for (std::size_t k = 1; k <= K; ++k) {
    CHECK(traj.states[k][1] >= traj.states[k - 1][1] - 1e-15);
    if (k >= 5) CHECK(traj.states[k][0] >= traj.states[k - 1][0] - 1e-15);
  }
  // The upstream link ends well above its freeflow density 6 / 250.
  CHECK(traj.states[K][0] > 2.0 * 6.0 / 250.0);
}

TEST_CASE("simulate is deterministic under a fixed seed") {
  const auto net = ramp_network();
  DemandProfiles demand;
  demand.upstream = Profile({{0.0, 6.0}, {50.0, 14.0}, {100.0, 4.0}});
  demand.onramps[2] = Profile({{0.0, 2.0}});
  demand.onramps[6] = Profile({{0.0, 1.0}});
  const LinkState x0(net.size(), 0.02);
  const auto a = simulate(net, demand, x0, 100, RandomSource(9, streams::truth));
  const auto b = simulate(net, demand, x0, 100, RandomSource(9, streams::truth));
  const auto c = simulate(net, demand, x0, 100, RandomSource(10, streams::truth));
  CHECK(a.states == b.states);
  CHECK(a.speeds == b.speeds);
  CHECK(a.states != c.states);
  CHECK(a.flows.size() == 101);
}

TEST_CASE("profiles interpolate linearly and hold their end values") {
  Profile p({{0.0, 2.0}, {10.0, 4.0}, {20.0, 0.0}});
  CHECK(p.at(-5.0) == 2.0);
  CHECK(p.at(5.0) == doctest::Approx(3.0));
  CHECK(p.at(15.0) == doctest::Approx(2.0));
  CHECK(p.at(100.0) == 0.0);

  DemandProfiles d;
  d.upstream = Profile({{0.0, 1.0}});
  d.relative_std = 2.0;
  RandomSource rng(1);
  for (int i = 0; i < 1000; ++i) CHECK(d.sample(0, 3, rng).upstream >= 0.0);
}

TEST_CASE("network validation names the offending link") {
  FreewayNetwork net;
  net.dt = 10.0;
  net.links = {link(500.0, 25.0, 6.0, 16.0, 0.3), link(200.0, 25.0, 6.0, 16.0, 0.3)};
  try {
    net.validate();
    FAIL("expected a CFL violation");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("network.links[1].freeflow_speed") != std::string::npos);
  }
  net.links[1].length = 500.0;
  net.links[1].offramp = true;
  net.links[1].offramp_split = 1.0;
  CHECK_THROWS_AS(net.validate(), ConfigError);
  net.links[1].offramp_split = 0.3;
  net.validate();
  net.links[0].capacity = 0.0;
  CHECK_THROWS_AS(net.validate(), ConfigError);
}

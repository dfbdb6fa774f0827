#include "rpf/ctm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "rpf/errors.hpp"

namespace rpf::ctm {
namespace {

constexpr double kDensityTolerance = 1e-9;
constexpr double kUnlimited = std::numeric_limits<double>::infinity();

std::string link_field(std::size_t l, const char* field) {
  return "network.links[" + std::to_string(l) + "]." + field;
}

}  // namespace

double LinkParams::demand(double density, double dt) const {
  const double vbar = freeflow_speed * dt / length;
  return std::min(vbar * density * length, capacity);
}

double LinkParams::supply(double density, double dt) const {
  const double wbar = wave_speed * dt / length;
  return std::max(0.0, wbar * length * (jam_density - density));
}

void FreewayNetwork::validate() const {
  if (links.empty()) throw ConfigError("network.links: at least one link is required");
  if (!(dt > 0.0)) throw ConfigError("run.dt: timestep must be positive");
  for (std::size_t l = 0; l < links.size(); ++l) {
    const auto& p = links[l];
    auto positive = [&](double v, const char* field) {
      if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(link_field(l, field) + ": must be positive");
    };
    positive(p.length, "length");
    positive(p.freeflow_speed, "freeflow_speed");
    positive(p.wave_speed, "wave_speed");
    positive(p.capacity, "capacity");
    positive(p.jam_density, "jam_density");
    if (!(p.offramp_split >= 0.0 && p.offramp_split < 1.0)) {
      throw ConfigError(link_field(l, "offramp_split") + ": must lie in [0, 1)");
    }
    if (!p.offramp && p.offramp_split != 0.0) {
      throw ConfigError(link_field(l, "offramp_split") + ": nonzero split on a link without an offramp");
    }
    if (p.freeflow_speed * dt > p.length) {
      throw ConfigError(link_field(l, "freeflow_speed") + ": CFL condition v_f * dt <= length violated");
    }
    if (p.wave_speed * dt > p.length) {
      throw ConfigError(link_field(l, "wave_speed") + ": CFL condition w * dt <= length violated");
    }
  }
}

double link_flow(double density_up, const LinkParams& up, double density_down, const LinkParams& down, double dt) {
  return std::min(up.demand(density_up, dt), down.supply(density_down, dt));
}

JunctionFlows junction_flows(double mainline_demand, double offramp_split, double onramp_demand,
                             double downstream_supply, double onramp_priority) {
  JunctionFlows out;
  out.offramp = offramp_split * mainline_demand;
  const double through = mainline_demand - out.offramp;
  const double ramp = std::max(0.0, onramp_demand);
  const double supply = std::max(0.0, downstream_supply);

  if (through + ramp <= supply) {
    out.mainline = through;
    out.onramp = ramp;
    return out;
  }
  const double ramp_share = onramp_priority * supply;
  const double main_share = supply - ramp_share;
  if (ramp <= ramp_share) {
    out.onramp = ramp;
    out.mainline = std::min(through, supply - ramp);
  } else if (through <= main_share) {
    out.mainline = through;
    out.onramp = std::min(ramp, supply - through);
  } else {
    out.onramp = ramp_share;
    out.mainline = main_share;
  }
  return out;
}

FlowRecord compute_flows(const LinkState& state, const FreewayNetwork& network, const BoundaryDemand& demand,
                         double onramp_priority) {
  const std::size_t n = network.size();
  if (state.size() != n) throw ConfigError("ctm: state dimension does not match the network");
  FlowRecord flows;
  flows.mainline.assign(n + 1, 0.0);
  flows.onramp.assign(n, 0.0);
  flows.offramp.assign(n, 0.0);

  // Junction j sits between link j - 1 and link j; j = 0 is the upstream
  // boundary, j = n the downstream exit.
  for (std::size_t j = 0; j <= n; ++j) {
    double upstream_demand = 0.0;
    double split = 0.0;
    if (j == 0) {
      upstream_demand = std::max(0.0, demand.upstream);
    } else {
      const auto& up = network.links[j - 1];
      upstream_demand = up.demand(state[j - 1], network.dt);
      split = up.offramp ? up.offramp_split : 0.0;
    }
    double ramp = 0.0;
    double supply = kUnlimited;
    if (j < n) {
      const auto& down = network.links[j];
      if (down.onramp && j < demand.onramp.size()) ramp = demand.onramp[j];
      supply = down.supply(state[j], network.dt);
    }
    const JunctionFlows f = junction_flows(upstream_demand, split, ramp, supply, onramp_priority);
    flows.mainline[j] = f.mainline;
    if (j > 0) flows.offramp[j - 1] = f.offramp;
    if (j < n) flows.onramp[j] = f.onramp;
  }
  return flows;
}

LinkState apply_flows(const LinkState& state, const FreewayNetwork& network, const FlowRecord& flows) {
  const std::size_t n = network.size();
  LinkState next(n);
  for (std::size_t l = 0; l < n; ++l) {
    const auto& p = network.links[l];
    double rho = state[l] + (flows.mainline[l] - flows.mainline[l + 1] + flows.onramp[l] - flows.offramp[l]) / p.length;
    if (rho < -kDensityTolerance || rho > p.jam_density + kDensityTolerance || !std::isfinite(rho)) {
      throw ModelError("ctm: density " + std::to_string(rho) + " on link " + std::to_string(l) +
                       " left [0, jam density]");
    }
    next[l] = std::clamp(rho, 0.0, p.jam_density);
  }
  return next;
}

std::pair<LinkState, FlowRecord> step(const LinkState& state, const FreewayNetwork& network,
                                      const BoundaryDemand& demand, double onramp_priority) {
  FlowRecord flows = compute_flows(state, network, demand, onramp_priority);
  LinkState next = apply_flows(state, network, flows);
  return {std::move(next), std::move(flows)};
}

namespace {

double speed_from_outflow(double density, double outflow, const LinkParams& p, double dt) {
  if (density <= kSpeedDensityFloor) return p.freeflow_speed;
  return std::clamp(outflow / (density * dt), 0.0, p.freeflow_speed);
}

}  // namespace

std::vector<double> link_speed(const LinkState& state, const FlowRecord& flows, const FreewayNetwork& network) {
  std::vector<double> speeds(network.size());
  for (std::size_t l = 0; l < network.size(); ++l) {
    speeds[l] = speed_from_outflow(state[l], flows.mainline[l + 1] + flows.offramp[l], network.links[l], network.dt);
  }
  return speeds;
}

double link_speed_at(std::span<const double> state, const FreewayNetwork& network, std::size_t link,
                     double next_onramp_demand, double onramp_priority) {
  const auto& up = network.links[link];
  const double demand = up.demand(state[link], network.dt);
  const double split = up.offramp ? up.offramp_split : 0.0;
  double ramp = 0.0;
  double supply = kUnlimited;
  if (link + 1 < network.size()) {
    const auto& down = network.links[link + 1];
    if (down.onramp) ramp = next_onramp_demand;
    supply = down.supply(state[link + 1], network.dt);
  }
  const JunctionFlows f = junction_flows(demand, split, ramp, supply, onramp_priority);
  return speed_from_outflow(state[link], f.mainline + f.offramp, up, network.dt);
}

double vehicle_count(const LinkState& state, const FreewayNetwork& network) {
  double total = 0.0;
  for (std::size_t l = 0; l < network.size(); ++l) total += state[l] * network.links[l].length;
  return total;
}

Profile::Profile(std::vector<std::pair<double, double>> knots) : knots_(std::move(knots)) {
  std::sort(knots_.begin(), knots_.end());
}

double Profile::at(double k) const {
  if (knots_.empty()) return 0.0;
  if (k <= knots_.front().first) return knots_.front().second;
  if (k >= knots_.back().first) return knots_.back().second;
  auto hi = std::upper_bound(knots_.begin(), knots_.end(), k,
                             [](double v, const std::pair<double, double>& knot) { return v < knot.first; });
  auto lo = hi - 1;
  const double t = (k - lo->first) / (hi->first - lo->first);
  return lo->second + t * (hi->second - lo->second);
}

BoundaryDemand DemandProfiles::mean_at(std::size_t k, std::size_t links) const {
  BoundaryDemand d;
  d.upstream = upstream.at(static_cast<double>(k));
  d.onramp.assign(links, 0.0);
  for (const auto& [link, profile] : onramps) {
    if (link < links) d.onramp[link] = profile.at(static_cast<double>(k));
  }
  return d;
}

BoundaryDemand DemandProfiles::sample(std::size_t k, std::size_t links, RandomSource& rng) const {
  BoundaryDemand d = mean_at(k, links);
  d.upstream = rng.truncated_normal(d.upstream, relative_std * d.upstream, 0.0);
  for (const auto& [link, profile] : onramps) {
    if (link < links) d.onramp[link] = rng.truncated_normal(d.onramp[link], relative_std * d.onramp[link], 0.0);
  }
  return d;
}

StateVector CtmDynamics::sample_transition(std::span<const double> state, RandomSource& rng) const {
  const LinkState current(state.begin(), state.end());
  const BoundaryDemand demand = demand_.sample(k_, network_.size(), rng);
  return step(current, network_, demand, demand_.onramp_priority).first;
}

Trajectory simulate(const FreewayNetwork& network, const DemandProfiles& demand, const LinkState& initial,
                    std::size_t horizon, RandomSource rng) {
  network.validate();
  if (initial.size() != network.size()) throw ConfigError("simulate: initial state dimension mismatch");
  Trajectory t;
  t.states.reserve(horizon + 1);
  t.states.push_back(initial);
  for (std::size_t k = 0; k <= horizon; ++k) {
    const BoundaryDemand d = demand.sample(k, network.size(), rng);
    FlowRecord flows = compute_flows(t.states.back(), network, d, demand.onramp_priority);
    t.speeds.push_back(link_speed(t.states.back(), flows, network));
    if (k < horizon) t.states.push_back(apply_flows(t.states.back(), network, flows));
    t.flows.push_back(std::move(flows));
  }
  return t;
}

}  // namespace rpf::ctm

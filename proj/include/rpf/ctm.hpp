#pragma once

#include <cstddef>
#include <map>
#include <utility>
#include <vector>

#include "rpf/particle_filter.hpp"
#include "rpf/random.hpp"

namespace rpf::ctm {

// Fundamental-diagram parameters for one link. Capacity is in vehicles per
// timestep; densities are in vehicles per meter.
struct LinkParams {
  double length = 500.0;          // m
  double freeflow_speed = 30.0;   // m/s
  double wave_speed = 6.0;        // m/s
  double capacity = 16.0;         // veh / step
  double jam_density = 0.3;       // veh / m
  bool onramp = false;            // onramp merging at the link's upstream end
  bool offramp = false;           // offramp diverging at the link's downstream end
  double offramp_split = 0.0;     // fraction of the link's outflow demand taking the offramp

  double demand(double density, double dt) const;
  double supply(double density, double dt) const;
};

struct FreewayNetwork {
  std::vector<LinkParams> links;
  double dt = 10.0;  // s

  std::size_t size() const { return links.size(); }
  // Throws ConfigError naming the offending link and field.
  void validate() const;
};

using LinkState = StateVector;

struct BoundaryDemand {
  double upstream = 0.0;            // veh / step offered at the upstream boundary
  std::vector<double> onramp;       // veh / step per link (ignored where no onramp)
};

// Flows applied during one step. mainline[0] is the boundary inflow into link
// 0, mainline[l + 1] the flow leaving link l downstream (the last entry exits
// the network).
struct FlowRecord {
  std::vector<double> mainline;
  std::vector<double> onramp;
  std::vector<double> offramp;
};

struct JunctionFlows {
  double mainline = 0.0;
  double onramp = 0.0;
  double offramp = 0.0;
};

inline constexpr double kDefaultOnrampPriority = 0.5;
inline constexpr double kSpeedDensityFloor = 1e-6;  // veh/m

// Two-link flow without ramps: min(demand_up, capacity_up, supply_down).
double link_flow(double density_up, const LinkParams& up, double density_down, const LinkParams& down, double dt);

// Diverge-then-merge junction: the offramp takes a fixed share of upstream
// demand, then mainline and onramp compete for downstream supply with the
// onramp guaranteed `onramp_priority` of it; unused allocation goes to the
// other stream.
JunctionFlows junction_flows(double mainline_demand, double offramp_split, double onramp_demand,
                             double downstream_supply, double onramp_priority = kDefaultOnrampPriority);

// Flows for every junction of the network given the densities and demand.
FlowRecord compute_flows(const LinkState& state, const FreewayNetwork& network, const BoundaryDemand& demand,
                         double onramp_priority = kDefaultOnrampPriority);

// Applies the conservation update for the given flows. Throws ModelError if a
// density leaves [0, jam density].
LinkState apply_flows(const LinkState& state, const FreewayNetwork& network, const FlowRecord& flows);

std::pair<LinkState, FlowRecord> step(const LinkState& state, const FreewayNetwork& network,
                                      const BoundaryDemand& demand, double onramp_priority = kDefaultOnrampPriority);

// Outflow (mainline plus offramp) divided by density, with a freeflow
// fallback on near-empty links, clamped to [0, v_f].
std::vector<double> link_speed(const LinkState& state, const FlowRecord& flows, const FreewayNetwork& network);

// Speed of one link from its own outflow junction, given the onramp demand
// entering the next link. Agrees with link_speed for that link.
double link_speed_at(std::span<const double> state, const FreewayNetwork& network, std::size_t link,
                     double next_onramp_demand, double onramp_priority = kDefaultOnrampPriority);

// Vehicles on the network: sum of density * length.
double vehicle_count(const LinkState& state, const FreewayNetwork& network);

// Piecewise-linear profile over timesteps, flat beyond the ends.
class Profile {
 public:
  Profile() = default;
  explicit Profile(std::vector<std::pair<double, double>> knots);
  double at(double k) const;
  const std::vector<std::pair<double, double>>& knots() const { return knots_; }

 private:
  std::vector<std::pair<double, double>> knots_;
};

struct DemandProfiles {
  Profile upstream;
  std::map<std::size_t, Profile> onramps;
  // Demands are Gaussian around the profile with std relative_std * mean,
  // truncated at zero.
  double relative_std = 0.15;
  double onramp_priority = kDefaultOnrampPriority;

  BoundaryDemand mean_at(std::size_t k, std::size_t links) const;
  BoundaryDemand sample(std::size_t k, std::size_t links, RandomSource& rng) const;
};

// CTM transition for one timestep with random boundary demand.
class CtmDynamics final : public DynamicsModel {
 public:
  CtmDynamics(const FreewayNetwork& network, const DemandProfiles& demand, std::size_t k)
      : network_(network), demand_(demand), k_(k) {}
  std::size_t dimension() const override { return network_.size(); }
  StateVector sample_transition(std::span<const double> state, RandomSource& rng) const override;

 private:
  const FreewayNetwork& network_;
  const DemandProfiles& demand_;
  std::size_t k_;
};

// Ground truth over a horizon K. flows[k] and speeds[k] describe the flow out
// of states[k]; the entries for k = K are evaluated with a fresh demand draw
// but never applied.
struct Trajectory {
  std::vector<LinkState> states;            // K + 1 entries
  std::vector<FlowRecord> flows;            // K + 1 entries
  std::vector<std::vector<double>> speeds;  // K + 1 entries
};

Trajectory simulate(const FreewayNetwork& network, const DemandProfiles& demand, const LinkState& initial,
                    std::size_t horizon, RandomSource rng);

}  // namespace rpf::ctm

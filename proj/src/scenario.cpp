#include "rpf/scenario.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "rpf/errors.hpp"

namespace rpf::scenario {
namespace {

using nlohmann::json;

// Typed access to one JSON object that reports errors by field path and
// rejects keys the schema does not know.
class Section {
 public:
  Section(const json& node, std::string path, std::set<std::string> allowed) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) fail(path_, "expected an object");
    for (const auto& [key, value] : node_.items()) {
      if (!allowed.count(key)) fail(field(key), "unknown field");
    }
  }

  [[noreturn]] static void fail(const std::string& path, const std::string& message) {
    throw ConfigError(path + ": " + message);
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return node_.contains(key); }
  const json& raw(const std::string& key) const { return node_.at(key); }

  double number(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const auto& v = node_.at(key);
    if (!v.is_number()) fail(field(key), "expected a number");
    return v.get<double>();
  }

  std::uint64_t integer(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const auto& v = node_.at(key);
    if (!v.is_number_unsigned()) fail(field(key), "expected a nonnegative integer");
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& v = node_.at(key);
    if (!v.is_boolean()) fail(field(key), "expected true or false");
    return v.get<bool>();
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    const auto& v = node_.at(key);
    if (!v.is_string()) fail(field(key), "expected a string");
    return v.get<std::string>();
  }

  std::optional<Section> child(const std::string& key, std::set<std::string> allowed) const {
    if (!has(key)) return std::nullopt;
    return Section(node_.at(key), field(key), std::move(allowed));
  }

 private:
  const json& node_;
  std::string path_;
};

const std::set<std::string> kLinkFields = {"length",  "freeflow_speed", "wave_speed",   "capacity",
                                           "jam_density", "onramp",     "offramp",      "offramp_split"};

ctm::LinkParams parse_link(const Section& s, ctm::LinkParams base) {
  base.length = s.number("length", base.length);
  base.freeflow_speed = s.number("freeflow_speed", base.freeflow_speed);
  base.wave_speed = s.number("wave_speed", base.wave_speed);
  base.capacity = s.number("capacity", base.capacity);
  base.jam_density = s.number("jam_density", base.jam_density);
  base.onramp = s.boolean("onramp", base.onramp);
  base.offramp = s.boolean("offramp", base.offramp);
  base.offramp_split = s.number("offramp_split", base.offramp_split);
  return base;
}

ctm::Profile parse_profile(const json& node, const std::string& path) {
  if (node.is_number()) return ctm::Profile({{0.0, node.get<double>()}});
  if (!node.is_array() || node.empty()) Section::fail(path, "expected a number or a non-empty array of [step, value]");
  std::vector<std::pair<double, double>> knots;
  for (std::size_t i = 0; i < node.size(); ++i) {
    const auto& knot = node[i];
    const std::string kp = path + "[" + std::to_string(i) + "]";
    if (!knot.is_array() || knot.size() != 2 || !knot[0].is_number() || !knot[1].is_number()) {
      Section::fail(kp, "expected [step, value]");
    }
    if (knot[1].get<double>() < 0.0) Section::fail(kp, "demand must be nonnegative");
    knots.emplace_back(knot[0].get<double>(), knot[1].get<double>());
  }
  return ctm::Profile(std::move(knots));
}

std::size_t parse_index(const std::string& key, const std::string& path) {
  std::size_t pos = 0;
  unsigned long value = 0;
  try {
    value = std::stoul(key, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != key.size()) Section::fail(path, "expected a link index");
  return value;
}

ctm::FreewayNetwork parse_network(const Section& s, double dt) {
  ctm::FreewayNetwork net;
  net.dt = dt;
  ctm::LinkParams defaults;
  if (auto d = s.child("link_defaults", kLinkFields)) defaults = parse_link(*d, defaults);

  if (s.has("links")) {
    const auto& links = s.raw("links");
    if (!links.is_array()) Section::fail(s.field("links"), "expected an array");
    for (std::size_t i = 0; i < links.size(); ++i) {
      net.links.push_back(parse_link(Section(links[i], s.field("links") + "[" + std::to_string(i) + "]", kLinkFields),
                                     defaults));
    }
    if (s.has("count") && s.integer("count", 0) != net.links.size()) {
      Section::fail(s.field("count"), "does not match the number of links");
    }
  } else {
    const auto count = s.integer("count", 0);
    if (count == 0) Section::fail(s.field("count"), "give a positive link count or a links array");
    net.links.assign(count, defaults);
  }

  if (s.has("overrides")) {
    const auto& overrides = s.raw("overrides");
    if (!overrides.is_object()) Section::fail(s.field("overrides"), "expected an object keyed by link index");
    for (const auto& [key, value] : overrides.items()) {
      const std::string path = s.field("overrides") + "." + key;
      const std::size_t l = parse_index(key, path);
      if (l >= net.links.size()) Section::fail(path, "link index out of range");
      net.links[l] = parse_link(Section(value, path, kLinkFields), net.links[l]);
    }
  }
  return net;
}

std::vector<double> number_list(const json& node, const std::string& path) {
  if (!node.is_array()) Section::fail(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < node.size(); ++i) {
    if (!node[i].is_number()) Section::fail(path + "[" + std::to_string(i) + "]", "expected a number");
    out.push_back(node[i].get<double>());
  }
  return out;
}

}  // namespace

Scenario parse_scenario(const json& document) {
  Section root(document, "", {"network", "demand", "sensors", "filter", "run"});
  for (const char* required : {"network", "demand", "run"}) {
    if (!root.has(required)) Section::fail(required, "missing section");
  }
  Scenario out;
  auto& cfg = out.experiment;

  const Section run(root.raw("run"), "run",
                    {"horizon", "dt", "seeds", "output_dir", "threads", "initial_density"});
  const double dt = run.number("dt", 10.0);
  cfg.horizon = run.integer("horizon", 2000);
  cfg.threads = run.integer("threads", 0);
  out.output_dir = run.text("output_dir", "out");
  if (run.has("seeds")) {
    const auto& seeds = run.raw("seeds");
    if (!seeds.is_array()) Section::fail("run.seeds", "expected an array of integers");
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      if (!seeds[i].is_number_unsigned()) {
        Section::fail("run.seeds[" + std::to_string(i) + "]", "expected a nonnegative integer");
      }
      cfg.seeds.push_back(seeds[i].get<std::uint64_t>());
    }
  } else {
    cfg.seeds = {1, 2, 3, 4, 5};
  }

  cfg.network = parse_network(Section(root.raw("network"), "network", {"link_defaults", "count", "links", "overrides"}),
                              dt);

  if (run.has("initial_density")) {
    const auto& init = run.raw("initial_density");
    if (init.is_number()) {
      cfg.initial_density.assign(cfg.network.size(), init.get<double>());
    } else {
      cfg.initial_density = number_list(init, "run.initial_density");
    }
  } else {
    cfg.initial_density.assign(cfg.network.size(), 0.0);
  }

  const Section demand(root.raw("demand"), "demand", {"upstream", "onramps", "relative_std", "onramp_priority"});
  if (!demand.has("upstream")) Section::fail("demand.upstream", "missing field");
  cfg.demand.upstream = parse_profile(demand.raw("upstream"), "demand.upstream");
  cfg.demand.relative_std = demand.number("relative_std", cfg.demand.relative_std);
  cfg.demand.onramp_priority = demand.number("onramp_priority", cfg.demand.onramp_priority);
  if (demand.has("onramps")) {
    const auto& ramps = demand.raw("onramps");
    if (!ramps.is_object()) Section::fail("demand.onramps", "expected an object keyed by link index");
    for (const auto& [key, value] : ramps.items()) {
      const std::string path = "demand.onramps." + key;
      cfg.demand.onramps[parse_index(key, path)] = parse_profile(value, path);
    }
  }

  if (root.has("sensors")) {
    const Section sensors(root.raw("sensors"), "sensors", {"loops", "gnss", "faults"});
    if (auto loops = sensors.child("loops", {"links", "noise_std", "relative", "min_std"})) {
      sensing::LoopDetectorSpec base;
      base.noise_std = loops->number("noise_std", base.noise_std);
      base.relative = loops->boolean("relative", base.relative);
      base.min_std = loops->number("min_std", base.min_std);
      if (loops->has("links")) {
        for (double l : number_list(loops->raw("links"), "sensors.loops.links")) {
          if (l < 0 || l != static_cast<double>(static_cast<std::size_t>(l))) {
            Section::fail("sensors.loops.links", "expected link indices");
          }
          auto spec = base;
          spec.link = static_cast<std::size_t>(l);
          cfg.loops.push_back(spec);
        }
      }
    }
    if (auto gnss = sensors.child("gnss", {"penetration", "noise_fraction", "min_std"})) {
      cfg.gnss.penetration = gnss->number("penetration", cfg.gnss.penetration);
      cfg.gnss.noise_fraction = gnss->number("noise_fraction", cfg.gnss.noise_fraction);
      cfg.gnss.min_std = gnss->number("min_std", cfg.gnss.min_std);
    }
    if (auto faults = sensors.child("faults", {"probability", "zero_weight", "random_mean", "random_std"})) {
      cfg.faults.probability = faults->number("probability", cfg.faults.probability);
      cfg.faults.zero_weight = faults->number("zero_weight", cfg.faults.zero_weight);
      cfg.faults.random_mean = faults->number("random_mean", cfg.faults.random_mean);
      cfg.faults.random_std = faults->number("random_std", cfg.faults.random_std);
    }
  }

  if (root.has("filter")) {
    const Section filter(root.raw("filter"), "filter",
                         {"particles", "variants", "alphas", "np_mass", "fault_zero_std", "near_zero_std",
                          "initial_spread", "resample_threshold", "baselines"});
    cfg.filter.particles = filter.integer("particles", cfg.filter.particles);
    try {
      cfg.filter.np_mass = parse_np_mass_term(filter.text("np_mass", "weighted_density"));
    } catch (const ConfigError& e) {
      Section::fail("filter.np_mass", e.what());
    }
    cfg.filter.fault_zero_std = filter.number("fault_zero_std", cfg.filter.fault_zero_std);
    cfg.filter.near_zero_std = filter.number("near_zero_std", cfg.filter.near_zero_std);
    cfg.filter.initial_spread = filter.number("initial_spread", cfg.filter.initial_spread);
    cfg.filter.resample_threshold = filter.number("resample_threshold", cfg.filter.resample_threshold);
    cfg.baselines = filter.boolean("baselines", cfg.baselines);
    if (filter.has("alphas")) cfg.alphas = number_list(filter.raw("alphas"), "filter.alphas");
    if (filter.has("variants")) {
      const auto& variants = filter.raw("variants");
      if (!variants.is_array()) Section::fail("filter.variants", "expected an array of names");
      for (std::size_t i = 0; i < variants.size(); ++i) {
        const std::string path = "filter.variants[" + std::to_string(i) + "]";
        if (!variants[i].is_string()) Section::fail(path, "expected a string");
        try {
          const auto mode = sensing::parse_hypothesis_mode(variants[i].get<std::string>());
          if (mode == sensing::HypothesisMode::none) Section::fail(path, "use filter.baselines for ungated runs");
          cfg.variants.push_back(mode);
        } catch (const ConfigError& e) {
          if (std::string(e.what()).rfind(path, 0) == 0) throw;
          Section::fail(path, e.what());
        }
      }
    }
  }
  if (cfg.alphas.empty()) cfg.alphas = {0.001, 0.01, 0.1};
  if (cfg.variants.empty()) {
    cfg.variants = {sensing::HypothesisMode::np_incorrect, sensing::HypothesisMode::np_correct,
                    sensing::HypothesisMode::fisher};
  }

  cfg.validate();
  return out;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file " + path.string());
  json document;
  try {
    document = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("scenario " + path.string() + ": " + e.what());
  }
  return parse_scenario(document);
}

json resolved_json(const harness::ExperimentConfig& cfg) {
  json links = json::array();
  for (const auto& l : cfg.network.links) {
    links.push_back({{"length", l.length},
                     {"freeflow_speed", l.freeflow_speed},
                     {"wave_speed", l.wave_speed},
                     {"capacity", l.capacity},
                     {"jam_density", l.jam_density},
                     {"onramp", l.onramp},
                     {"offramp", l.offramp},
                     {"offramp_split", l.offramp_split}});
  }
  json onramps = json::object();
  for (const auto& [link, profile] : cfg.demand.onramps) onramps[std::to_string(link)] = profile.knots();
  json loops = json::array();
  for (const auto& s : cfg.loops) {
    loops.push_back({{"link", s.link}, {"noise_std", s.noise_std}, {"relative", s.relative}, {"min_std", s.min_std}});
  }
  json variants = json::array();
  for (auto v : cfg.variants) variants.push_back(std::string(sensing::to_string(v)));

  return {{"network", {{"links", links}, {"dt", cfg.network.dt}}},
          {"demand",
           {{"upstream", cfg.demand.upstream.knots()},
            {"onramps", onramps},
            {"relative_std", cfg.demand.relative_std},
            {"onramp_priority", cfg.demand.onramp_priority}}},
          {"sensors",
           {{"loops", loops},
            {"gnss",
             {{"penetration", cfg.gnss.penetration},
              {"noise_fraction", cfg.gnss.noise_fraction},
              {"min_std", cfg.gnss.min_std}}},
            {"faults",
             {{"probability", cfg.faults.probability},
              {"zero_weight", cfg.faults.zero_weight},
              {"random_mean", cfg.faults.random_mean},
              {"random_std", cfg.faults.random_std}}}}},
          {"filter",
           {{"particles", cfg.filter.particles},
            {"np_mass", std::string(to_string(cfg.filter.np_mass))},
            {"fault_zero_std", cfg.filter.fault_zero_std},
            {"near_zero_std", cfg.filter.near_zero_std},
            {"initial_spread", cfg.filter.initial_spread},
            {"resample_threshold", cfg.filter.resample_threshold},
            {"variants", variants},
            {"alphas", cfg.alphas},
            {"baselines", cfg.baselines}}},
          {"run", {{"horizon", cfg.horizon}, {"seeds", cfg.seeds}, {"initial_density", cfg.initial_density}}}};
}

std::string hash_text(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const harness::ExperimentConfig& config) { return hash_text(resolved_json(config).dump()); }

}  // namespace rpf::scenario

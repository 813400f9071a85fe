#include "nfvscale/config.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace nfvscale {

namespace {

const char* const kDefaults = R"(// nfvscale experiment config. Every key is optional; omitted keys take the
// values below. Times carry their unit in the key name.
{
  "chain": {
    // Ordered stages, per-packet cost each.
    "stages": [
      {"name": "firewall", "cost_ns": 300},
      {"name": "nat", "cost_ns": 400},
      {"name": "monitor", "cost_ns": 300}
    ],
    // State setup the first time a core sees a flow; null means 3x the chain cost.
    "per_new_flow_cost_ns": null,
    "max_batch": 32
  },

  "workload": {
    "flow_rate": 60000,          // new flows per second (Poisson)
    "count_dist": "geometric",   // fixed | geometric | pareto
    "mean_packets": 20,
    "pareto_shape": 1.5,
    "flow_pps": 10000,           // per-flow packet rate
    "shape_flows": false,        // true: constant gaps, false: exponential gaps
    "duration_ms": 1000,
    "seed": 1,
    "address_pool": 65536,
    // [{"start_ms": 200, "duration_ms": 10, "rate_pps": 100000}]
    "whales": [],
    // [{"start_ms": 300, "window_ms": 10, "flows": 10000, "packets_per_flow": 0}]
    "storms": []
  },

  // CSV trace (arrival_ns,flow_id,dst_addr,size); overrides "workload" when set.
  "trace": null,

  // Sweep axes for "run"; training writes one predictor pair per SLO.
  "slo_us": [200],
  "modes": ["full"],

  "rack": {
    "servers": 1,
    "cores_per_server": 32,
    "aux_pool": 8,
    "nic_capacity": 4096,
    "sw_capacity": 1024,
    "unbounded_aux": false
  },

  "core_mapper": {
    "max_split": 3,
    "plan_overhead_ns": 3000
  },

  "server_mapper": {
    "buckets": 512,
    "interval_ms": 1000,
    "rss_delay_us": 2000,
    "boost_threshold": 256,
    "margin": 0.1,
    "warm_start": true,
    "warm_window_ms": 100,
    "on_demand_gap_us": 5000
  },

  "ingress": {
    "prefix_len": 16,
    "tau": 0                     // 0: cores_per_server - aux_pool
  },

  "sim": {
    "dispatch_cost_ns": 100,
    "sample_window_us": 100,
    "drain_ms": 50,
    "hash_cores": 0,             // hash_only core count; 0: all dedicated-capable cores
    "audit": true
  },

  "training": {
    "dir": "predictors",
    "frontier_source": "auto",   // auto | probe | trace
    "probe_backlog": 4096,
    "flow_grid": [1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048, 4096],
    "probe_duration_ms": 2000,
    // Packets per probe flow before it is replaced by a new one; null uses
    // the workload's mean_packets so probes see realistic setup churn.
    "flow_packets": null,
    "resolution": 0.01,
    "seed": 1
  },

  "output": {
    "dir": "out",
    "verbose": false             // also write per-packet and per-window streams
  },

  "seed": 1
}
)";

Nanos ms(const Json& j) { return static_cast<Nanos>(std::llround(j.get<double>() * 1e6)); }
Nanos us(const Json& j) { return static_cast<Nanos>(std::llround(j.get<double>() * 1e3)); }

void merge_into(Json& base, const Json& user, const std::string& path) {
  for (auto it = user.begin(); it != user.end(); ++it) {
    std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    Json& slot = base[it.key()];
    if (slot.is_object() && it.value().is_object()) {
      merge_into(slot, it.value(), key);
    } else {
      slot = it.value();
    }
  }
}

template <typename F>
auto field(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Json::exception& e) {
    throw ConfigError("config key '" + name + "': " + e.what());
  }
}

PacketCountDist parse_dist(const std::string& s) {
  if (s == "fixed") return PacketCountDist::Fixed;
  if (s == "geometric") return PacketCountDist::Geometric;
  if (s == "pareto") return PacketCountDist::Pareto;
  throw ConfigError("workload.count_dist must be fixed, geometric or pareto");
}

}  // namespace

const std::string& default_config_text() {
  static const std::string text = kDefaults;
  return text;
}

Json default_config() { return Json::parse(kDefaults, nullptr, true, true); }

void apply_override(Json& j, const std::string& assignment) {
  std::string a = assignment;
  while (!a.empty() && a.front() == '-') a.erase(a.begin());
  auto eq = a.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' is not key=value");
  std::string key = a.substr(0, eq);
  std::string raw = a.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const Json::exception&) {
    value = raw;
  }
  Json* cur = &j;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    Json& next = (*cur)[parts[i]];
    if (!next.is_object() && !next.is_null())
      throw ConfigError("override '" + key + "': '" + parts[i] + "' is not a section");
    cur = &next;
  }
  (*cur)[parts.back()] = value;
}

Json merge_config(const Json& user) {
  Json base = default_config();
  if (user.is_null()) return base;
  if (!user.is_object()) throw ConfigError("config root must be an object");
  merge_into(base, user, "");
  return base;
}

SimConfig ExperimentConfig::cell(Nanos slo, Mode mode) const {
  SimConfig c = sim;
  c.core.slo_ns = slo;
  c.mode = mode;
  return c;
}

ExperimentConfig resolve_config(const Json& j) {
  ExperimentConfig cfg;
  auto& s = cfg.sim;

  field("chain", [&] {
    const auto& c = j.at("chain");
    for (const auto& st : c.at("stages"))
      s.chain.stages.push_back({st.at("name").get<std::string>(), st.at("cost_ns").get<Nanos>()});
    s.chain.max_batch = c.at("max_batch").get<std::size_t>();
    s.chain.per_new_flow_cost_ns = c.at("per_new_flow_cost_ns").is_null()
                                       ? 3 * s.chain.total_cost()
                                       : c.at("per_new_flow_cost_ns").get<Nanos>();
    return 0;
  });

  field("workload", [&] {
    const auto& w = j.at("workload");
    auto& ws = cfg.workload;
    ws.flow_rate = w.at("flow_rate").get<double>();
    ws.count_dist = parse_dist(w.at("count_dist").get<std::string>());
    ws.mean_packets = w.at("mean_packets").get<double>();
    ws.pareto_shape = w.at("pareto_shape").get<double>();
    ws.flow_pps = w.at("flow_pps").get<double>();
    ws.shape_flows = w.at("shape_flows").get<bool>();
    ws.duration_ns = ms(w.at("duration_ms"));
    ws.seed = w.at("seed").get<std::uint64_t>();
    ws.address_pool = w.at("address_pool").get<std::uint32_t>();
    for (const auto& x : w.at("whales"))
      ws.whales.push_back({ms(x.at("start_ms")), ms(x.at("duration_ms")), x.at("rate_pps").get<double>()});
    for (const auto& x : w.at("storms"))
      ws.storms.push_back({ms(x.at("start_ms")), ms(x.at("window_ms")),
                           x.at("flows").get<std::uint64_t>(),
                           x.value("packets_per_flow", 0u)});
    return 0;
  });

  field("trace", [&] {
    if (!j.at("trace").is_null()) cfg.trace_path = j.at("trace").get<std::string>();
    return 0;
  });

  field("slo_us", [&] {
    for (const auto& v : j.at("slo_us")) cfg.slos.push_back(us(v));
    return 0;
  });
  field("modes", [&] {
    for (const auto& v : j.at("modes")) cfg.modes.push_back(parse_mode(v.get<std::string>()));
    return 0;
  });
  if (cfg.slos.empty()) throw ConfigError("slo_us must list at least one SLO");
  for (auto v : cfg.slos)
    if (v <= 0) throw ConfigError("slo_us values must be positive");
  if (cfg.modes.empty()) throw ConfigError("modes must list at least one mode");

  field("rack", [&] {
    const auto& r = j.at("rack");
    s.rack.servers = r.at("servers").get<std::size_t>();
    s.rack.cores_per_server = r.at("cores_per_server").get<std::size_t>();
    s.rack.aux_pool = r.at("aux_pool").get<std::size_t>();
    s.rack.nic_capacity = r.at("nic_capacity").get<std::size_t>();
    s.rack.sw_capacity = r.at("sw_capacity").get<std::size_t>();
    s.rack.unbounded_aux = r.at("unbounded_aux").get<bool>();
    return 0;
  });

  field("core_mapper", [&] {
    const auto& c = j.at("core_mapper");
    s.core.slo_ns = cfg.slos.front();
    s.core.max_split = c.at("max_split").get<std::size_t>();
    s.core.plan_overhead_ns = c.at("plan_overhead_ns").get<Nanos>();
    return 0;
  });

  field("server_mapper", [&] {
    const auto& m = j.at("server_mapper");
    s.server.buckets = m.at("buckets").get<std::size_t>();
    s.server.interval_ns = ms(m.at("interval_ms"));
    s.server.rss_delay_ns = us(m.at("rss_delay_us"));
    s.server.boost_threshold = m.at("boost_threshold").get<std::uint64_t>();
    s.server.margin = m.at("margin").get<double>();
    s.server.warm_start = m.at("warm_start").get<bool>();
    s.server.warm_window_ns = ms(m.at("warm_window_ms"));
    s.server.on_demand_gap_ns = us(m.at("on_demand_gap_us"));
    return 0;
  });

  field("ingress", [&] {
    const auto& i = j.at("ingress");
    s.ingress.prefix_len = i.at("prefix_len").get<unsigned>();
    s.ingress.tau = i.at("tau").get<std::size_t>();
    return 0;
  });

  field("sim", [&] {
    const auto& x = j.at("sim");
    s.dispatch_cost_ns = x.at("dispatch_cost_ns").get<Nanos>();
    s.sample_window_ns = us(x.at("sample_window_us"));
    s.drain_ns = ms(x.at("drain_ms"));
    s.hash_cores = x.at("hash_cores").get<std::size_t>();
    s.audit = x.at("audit").get<bool>();
    return 0;
  });

  field("training", [&] {
    const auto& t = j.at("training");
    cfg.training.dir = t.at("dir").get<std::string>();
    cfg.training.short_term.source = parse_frontier_source(t.at("frontier_source").get<std::string>());
    cfg.training.short_term.probe_backlog = t.at("probe_backlog").get<std::uint32_t>();
    cfg.training.long_term.flow_grid = t.at("flow_grid").get<std::vector<std::uint32_t>>();
    cfg.training.long_term.probe_duration_ns = ms(t.at("probe_duration_ms"));
    cfg.training.long_term.flow_packets =
        t.at("flow_packets").is_null()
            ? static_cast<std::uint32_t>(std::max(1.0, std::round(cfg.workload.mean_packets)))
            : t.at("flow_packets").get<std::uint32_t>();
    cfg.training.long_term.resolution = t.at("resolution").get<double>();
    cfg.training.long_term.seed = t.at("seed").get<std::uint64_t>();
    return 0;
  });

  field("output", [&] {
    const auto& o = j.at("output");
    cfg.output.dir = o.at("dir").get<std::string>();
    cfg.output.verbose = o.at("verbose").get<bool>();
    return 0;
  });

  s.seed = field("seed", [&] { return j.at("seed").get<std::uint64_t>(); });

  for (auto v : cfg.slos) {
    SimConfig probe = s;
    probe.core.slo_ns = v;
    probe.validate();
  }
  if (cfg.trace_path.empty()) cfg.workload.validate();
  else if (!std::filesystem::exists(cfg.trace_path))
    throw ConfigError("trace file '" + cfg.trace_path + "' does not exist");
  const auto& grid = cfg.training.long_term.flow_grid;
  if (grid.empty()) throw ConfigError("training.flow_grid must not be empty");
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (grid[i] == 0 || (i > 0 && grid[i] <= grid[i - 1]))
      throw ConfigError("training.flow_grid must be strictly increasing and positive");

  cfg.resolved = j;
  cfg.hash = fnv1a(j.dump());
  return cfg;
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  Json user = Json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      user = Json::parse(ss.str(), nullptr, true, true);
    } catch (const Json::exception& e) {
      throw ConfigError(path + ": " + e.what());
    }
  }
  for (const auto& o : overrides) apply_override(user, o);
  return resolve_config(merge_config(user));
}

Trace load_workload(const ExperimentConfig& cfg) {
  if (!cfg.trace_path.empty()) return parse_trace(cfg.trace_path);
  return generate(cfg.workload);
}

std::string frontier_path(const ExperimentConfig& cfg, Nanos slo) {
  return (std::filesystem::path(cfg.training.dir) /
          ("frontier_slo" + std::to_string(slo / kMicro) + ".txt"))
      .string();
}

std::string rate_table_path(const ExperimentConfig& cfg, Nanos slo) {
  return (std::filesystem::path(cfg.training.dir) /
          ("rates_slo" + std::to_string(slo / kMicro) + ".txt"))
      .string();
}

Predictors load_predictors(const ExperimentConfig& cfg, Nanos slo, Mode mode) {
  Predictors p;
  if (mode == Mode::PerFlowPerCore || mode == Mode::HashOnly) return p;
  auto chain_hash = cfg.sim.chain.hash();
  auto load = [&](const std::string& path) {
    if (!std::filesystem::exists(path))
      throw PredictorError("missing predictor file '" + path + "' (run `train` first)");
    return read_file(path);
  };
  PredictorHeader h;
  p.rates = parse_rate_table(load(rate_table_path(cfg, slo)), &h);
  check_header(h, chain_hash, slo, rate_table_path(cfg, slo));
  if (mode != Mode::NoCoreMapper) {
    p.frontiers = parse_frontiers(load(frontier_path(cfg, slo)), &h);
    check_header(h, chain_hash, slo, frontier_path(cfg, slo));
  }
  return p;
}

Json summary_record(const Metrics& m, Nanos slo, Mode mode, const ExperimentConfig& cfg) {
  Json alerts = Json::array();
  for (const auto& a : m.alerts)
    alerts.push_back({{"time_ns", a.time}, {"server", a.server}, {"core", a.core},
                      {"flow", a.flow}, {"reason", a.reason}});
  return {
      {"slo_us", slo / kMicro},
      {"mode", to_string(mode)},
      {"p50_ns", m.p50},
      {"p99_ns", m.p99},
      {"max_ns", m.max_latency},
      {"avg_cores", m.avg_cores},
      {"loss_rate", m.loss_rate},
      {"arrivals", m.arrivals},
      {"completions", m.completions},
      {"in_flight", m.in_flight},
      {"drops_by_cause", {{"nic", m.drops_nic}, {"sw", m.drops_sw}}},
      {"plans", m.plans},
      {"flow_migrations", m.flow_migrations},
      {"at_risk_epochs", m.at_risk_epochs},
      {"boost", {{"entries", m.boost_entries}, {"exits", m.boost_exits}, {"denied", m.boost_denied}}},
      {"remaps", m.remaps},
      {"on_demand_remaps", m.on_demand_remaps},
      {"servers_recruited", m.servers_recruited},
      {"ingress_saturations", m.ingress_saturations},
      {"peak_aux_in_use", m.peak_aux_in_use},
      {"best_effort_flows", m.best_effort_flows},
      {"alerts", alerts},
      {"audit",
       {{"order", m.order_violations},
        {"affinity", m.affinity_violations},
        {"conservation", m.conservation_violations},
        {"conserved", m.conserved()}}},
      {"event_digest", m.event_digest},
      {"config_hash", cfg.hash},
      {"sim_hash", m.config_hash},
      {"seed", m.seed},
  };
}

}  // namespace nfvscale

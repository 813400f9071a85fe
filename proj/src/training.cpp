#include "nfvscale/training.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <random>
#include <unordered_set>

namespace nfvscale {

FrontierSource parse_frontier_source(const std::string& s) {
  if (s == "auto") return FrontierSource::Auto;
  if (s == "probe") return FrontierSource::Probe;
  if (s == "trace") return FrontierSource::Trace;
  throw ConfigError("unknown frontier source '" + s + "' (auto, probe, trace)");
}

std::string to_string(FrontierSource s) {
  switch (s) {
    case FrontierSource::Auto: return "auto";
    case FrontierSource::Probe: return "probe";
    case FrontierSource::Trace: return "trace";
  }
  return "?";
}

namespace {

SimConfig isolated(const SimConfig& base) {
  SimConfig c = base;
  c.rack.servers = 1;
  c.record_samples = false;
  c.record_epochs = false;
  c.audit = false;
  return c;
}

}  // namespace

std::vector<EpochObservation> probe_saturation(const SimConfig& base, std::size_t level,
                                               std::uint32_t per_flow, std::uint32_t backlog) {
  SimConfig c = isolated(base);
  c.mode = Mode::NoCoreMapper;
  c.probe_level = level;
  c.record_epochs = true;
  c.rack.nic_capacity = backlog + 1;
  c.rack.sw_capacity = backlog + 1;
  c.rack.aux_pool = std::max<std::size_t>(c.rack.aux_pool, level);
  c.rack.cores_per_server = std::max(c.rack.cores_per_server, c.rack.aux_pool + 1);
  c.drain_ns = 0;

  Trace t;
  std::uint32_t flows = std::max<std::uint32_t>(1, backlog / per_flow);
  for (std::uint32_t f = 0; f < flows; ++f)
    for (std::uint32_t k = 0; k < per_flow; ++k) t.push_back({0, f + 1, 0, 64});
  // One trailing packet keeps the run alive until the backlog drains.
  Nanos per_pkt = c.chain.total_cost() + c.chain.per_new_flow_cost_ns + c.dispatch_cost_ns;
  t.push_back({per_pkt * static_cast<Nanos>(t.size()) + c.core.epoch(), flows + 1, 0, 64});

  auto m = run(c, Predictors{}, t);
  std::vector<EpochObservation> out;
  for (const auto& e : m.epochs)
    if (e.saturated && e.packets > 0 && e.level == level) out.push_back(e);
  return out;
}

ShortTermResult train_short_term(const SimConfig& base, const Trace& trace,
                                 const ShortTermOptions& opt) {
  base.validate();
  ShortTermResult res;
  Nanos epoch = base.core.epoch();
  std::size_t levels = std::min(base.core.max_split, base.chain.stages.size());

  for (std::size_t n = 1; n <= levels; ++n) {
    std::vector<FrontierPoint> obs;
    bool probed = false;
    if (n == 1 && opt.source != FrontierSource::Probe && !trace.empty()) {
      // The whole trace onto one core: whenever the offered load exceeds a
      // core, its epochs saturate on the trace's own mix of warm and new flows.
      SimConfig c = isolated(base);
      c.mode = Mode::HashOnly;
      c.hash_cores = 1;
      c.drain_ns = 0;
      c.record_epochs = true;
      auto m = run(c, Predictors{}, trace);
      for (const auto& e : m.epochs)
        if (e.saturated && e.level == 1 && e.packets > 0) obs.push_back({e.flows, e.packets});
      if (obs.empty() && opt.source == FrontierSource::Trace)
        throw PredictorError("training run produced no saturated epochs; frontier unconstrained");
    }
    if (obs.empty()) {
      probed = true;
      for (auto q : opt.probe_flow_sizes) {
        if (q > opt.probe_backlog) continue;
        for (const auto& e : probe_saturation(base, n, q, opt.probe_backlog))
          obs.push_back({e.flows, e.packets});
      }
    }
    // Cores drain in batches; count only whole batches so every frontier step
    // is a multiple of max_batch.
    auto batch = static_cast<std::uint32_t>(base.chain.max_batch);
    std::vector<FrontierPoint> whole;
    for (const auto& o : obs)
      if (o.packets >= batch) whole.push_back({o.flows, o.packets / batch * batch});
    obs = std::move(whole);
    if (obs.empty())
      throw PredictorError("no saturated epochs observed for split level " + std::to_string(n));
    res.family.schemes.push_back(n == 1 ? SplitScheme{} : best_split(base.chain, n));
    res.family.frontiers.push_back(CapacityFrontier::from_observations(epoch, obs));
    res.observations.push_back(obs.size());
    res.from_probe.push_back(probed);
  }
  return res;
}

Trace probe_traffic(std::uint32_t flows, double rate, Nanos duration, std::uint32_t flow_packets,
                    Nanos ramp, std::uint64_t seed) {
  Trace out;
  if (flows == 0 || rate <= 0) return out;
  std::mt19937_64 rng(seed);
  double gap = 1e9 * flows / rate;
  std::uniform_real_distribution<double> start(0.0, static_cast<double>(std::max<Nanos>(ramp, 1)));
  std::vector<std::uint64_t> sent(flows, 0);
  // Slots emit in time order; a min-heap over next emission times.
  using Item = std::pair<double, std::uint32_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  for (std::uint32_t i = 0; i < flows; ++i) heap.push({start(rng), i});
  out.reserve(static_cast<std::size_t>(rate * static_cast<double>(duration) / 1e9) + flows);
  while (!heap.empty()) {
    auto [t, i] = heap.top();
    heap.pop();
    if (t >= static_cast<double>(duration)) break;
    std::uint64_t gen = flow_packets ? sent[i] / flow_packets : 0;
    FlowId id = i + static_cast<FlowId>(flows) * gen + 1;
    out.push_back({static_cast<Nanos>(t), id, static_cast<std::uint32_t>(mix64(id)), 64});
    sent[i]++;
    heap.push({t + gap, i});
  }
  return out;
}

double mean_active_flows(const Trace& trace, Nanos window) {
  if (trace.empty() || window <= 0) return 0;
  std::int64_t first = trace.front().arrival_ns / window;
  std::int64_t last = trace.back().arrival_ns / window;
  std::uint64_t total = 0;
  std::int64_t cur = first;
  std::unordered_set<FlowId> seen;
  for (const auto& r : trace) {
    std::int64_t w = r.arrival_ns / window;
    if (w != cur) {
      total += seen.size();
      seen.clear();
      cur = w;
    }
    seen.insert(r.flow);
  }
  total += seen.size();
  return static_cast<double>(total) / static_cast<double>(last - first + 1);
}

namespace {

struct Ramp {
  Nanos stagger = 0;
  Nanos warmup = 0;
};

Ramp probe_ramp(const LongTermOptions& opt, std::uint32_t flows, double rate) {
  // Spread slot start-up over one flow lifetime, so renewals are already
  // staggered once it ends. When a slot's own gap is longer than that, every
  // packet is close to a first packet anyway: spread over one gap, measure all.
  double gap = 1e9 * flows / rate;
  double life = opt.flow_packets ? gap * opt.flow_packets : 0;
  double r = std::min(life, static_cast<double>(opt.probe_duration_ns) / 2);
  if (gap >= r) return {static_cast<Nanos>(gap), 0};
  return {static_cast<Nanos>(r), static_cast<Nanos>(r)};
}

}  // namespace

Nanos probe_warmup(const LongTermOptions& opt, std::uint32_t flows, double rate) {
  return probe_ramp(opt, flows, rate).warmup;
}

RateProbe probe_rate(const SimConfig& base, std::uint32_t flows, double rate,
                     const LongTermOptions& opt, std::uint64_t seed) {
  SimConfig c = isolated(base);
  c.mode = Mode::HashOnly;
  c.hash_cores = 1;
  c.drain_ns = 10 * kMilli;
  auto ramp = probe_ramp(opt, flows, rate);
  Nanos warmup = ramp.warmup;
  auto t = probe_traffic(flows, rate, opt.probe_duration_ns, opt.flow_packets, ramp.stagger, seed);
  RateProbe p;
  p.flows = flows;
  p.rate = rate;
  p.seed = seed;
  c.record_samples = true;
  auto steady = std::lower_bound(t.begin(), t.end(), warmup, [](const PacketRecord& r, Nanos w) {
    return r.arrival_ns < w;
  });
  p.active_flows = mean_active_flows(Trace(steady, t.end()), c.core.epoch());
  if (steady == t.end()) return p;
  auto m = run(c, Predictors{}, t);
  std::vector<Nanos> lat;
  lat.reserve(m.samples.size());
  for (const auto& x : m.samples)
    if (x.arrival >= warmup) lat.push_back(x.latency);
  p.p99 = percentile(std::move(lat), 99);
  p.pass = m.completions > 0 && m.drops() == 0 && p.p99 <= c.core.slo_ns;
  return p;
}

LongTermResult train_long_term(const SimConfig& base, const LongTermOptions& opt) {
  base.validate();
  LongTermResult res;
  double ceiling = 1e9 / static_cast<double>(base.chain.total_cost() + base.dispatch_cost_ns);
  double hi0 = ceiling * 1.02;
  double lo0 = hi0 * opt.min_rate_fraction;

  std::vector<RateThresholdTable::Entry> rows;
  for (std::size_t gi = 0; gi < opt.flow_grid.size(); ++gi) {
    auto f = opt.flow_grid[gi];
    std::uint64_t seed = opt.seed * 1000003ULL + gi * 7919ULL;
    auto probe = [&](double r, std::uint64_t s) {
      auto p = probe_rate(base, f, r, opt, s);
      res.probes.push_back(p);
      return p;
    };
    double accepted = 0;
    double active = 0;
    auto low = probe(lo0, seed);
    if (low.pass) {
      double lo = lo0, hi = hi0;
      active = low.active_flows;
      auto top = probe(hi0, seed);
      if (top.pass) {
        lo = hi0;
        active = top.active_flows;
      } else {
        while (hi - lo > opt.resolution * lo) {
          double mid = 0.5 * (lo + hi);
          auto p = probe(mid, seed);
          if (p.pass) {
            lo = mid;
            active = p.active_flows;
          } else {
            hi = mid;
          }
        }
      }
      // Accept only if an independent run agrees; otherwise step down.
      while (lo >= lo0) {
        auto again = probe(lo, seed + 1);
        if (again.pass) {
          accepted = lo;
          active = std::max(active, again.active_flows);
          break;
        }
        lo *= 1.0 - opt.resolution;
      }
    }
    if (accepted <= 0) {
      res.warnings.push_back("T[" + std::to_string(f) +
                             "] = 0: even the minimum probe rate violates the slo");
      active = std::max(active, low.active_flows);
    }
    auto key = static_cast<std::uint32_t>(std::max(1.0, std::ceil(active - 1e-9)));
    if (!rows.empty() && key <= rows.back().flows) {
      rows.back().rate = std::min(rows.back().rate, accepted);
    } else {
      rows.push_back({key, accepted});
    }
  }
  for (std::size_t i = 1; i < rows.size(); ++i) rows[i].rate = std::min(rows[i].rate, rows[i - 1].rate);
  res.table = RateThresholdTable(std::move(rows));
  return res;
}

}  // namespace nfvscale

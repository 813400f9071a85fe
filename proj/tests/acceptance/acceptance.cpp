// Acceptance gate: one pass/fail line per criterion.
//   acceptance            run 1..8
//   acceptance 3 7        run a subset; 8 then covers only the runs made

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdarg>
#include <cstdlib>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "nfvscale/simulator.hpp"
#include "nfvscale/training.hpp"

using namespace nfvscale;

namespace {

struct Audit {
  int runs = 0;
  std::vector<std::string> failures;
};
Audit g_audit;

// Every acceptance simulation goes through here: audited, then repeated to
// check the event digest and metrics are bit-identical.
Metrics checked_run(const std::string& tag, SimConfig cfg, const Predictors& pred,
                    const Trace& trace) {
  cfg.audit = true;
  auto a = run(cfg, pred, trace);
  auto b = run(cfg, pred, trace);
  g_audit.runs++;
  auto fail = [&](const std::string& why) { g_audit.failures.push_back(tag + ": " + why); };
  if (!a.conserved()) fail("arrivals != completions + drops + in-flight");
  if (a.conservation_violations) fail("instantaneous conservation violated");
  if (a.order_violations) fail("flow order violated");
  if (a.affinity_violations) fail("affinity violated");
  if (a.event_digest != b.event_digest || a.p99 != b.p99 || a.p50 != b.p50 ||
      a.completions != b.completions || a.drops() != b.drops() || a.avg_cores != b.avg_cores)
    fail("second run differs");
  return a;
}

double secs_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Line {
  bool pass = false;
  std::string detail;
};

double us(Nanos n) { return static_cast<double>(n) / 1e3; }

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

ChainSpec one_stage(Nanos cost, Nanos setup) {
  ChainSpec c;
  c.stages = {{"nf", cost}};
  c.per_new_flow_cost_ns = setup;
  return c;
}

// 1. A single 10^5 pps whale on its own core.
Line whale_inflation() {
  auto t0 = std::chrono::steady_clock::now();
  const Nanos cost = 20 * kMicro;
  WorkloadSpec w;
  w.flow_rate = 0;
  w.whales = {{0, 10 * kMilli, 1e5}};
  w.duration_ns = 10 * kMilli;
  auto trace = generate(w);

  SimConfig cfg;
  cfg.chain = one_stage(cost, 0);
  cfg.mode = Mode::PerFlowPerCore;
  auto m = checked_run("whale", cfg, {}, trace);

  // Independent D/D/1 recursion with the per-packet dispatch charge.
  std::vector<Nanos> lat;
  double done = 0;
  for (const auto& r : trace) {
    double start = std::max<double>(done, static_cast<double>(r.arrival_ns));
    done = start + static_cast<double>(cost + cfg.dispatch_cost_ns);
    lat.push_back(static_cast<Nanos>(done) - r.arrival_ns);
  }
  Nanos oracle = percentile(lat, 99);
  double took = secs_since(t0);
  bool ok = m.p99 >= 100 * cost && took < 10;
  return {ok, fmt("packets %zu, p99 %.0f us (queue oracle %.0f us) vs bound %.0f us, %.1f s",
                  trace.size(), us(m.p99), us(oracle), us(100 * cost), took)};
}

// 2. A shaped minnow storm against flow hashing sized for the background.
Line minnow_inflation() {
  auto t0 = std::chrono::steady_clock::now();
  const Nanos cost = 5 * kMicro;
  WorkloadSpec w;
  w.flow_rate = 2000;
  w.mean_packets = 50;
  w.flow_pps = 10000;
  w.shape_flows = true;
  w.duration_ns = 1 * kSecond;
  w.storms = {{500 * kMilli, 10 * kMilli, 10000, 4}};
  auto trace = generate(w);

  SimConfig cfg;
  cfg.chain = ChainSpec::with_default_setup({{"nf", cost}});
  cfg.mode = Mode::HashOnly;
  Metrics m;
  std::size_t cores = 0;
  for (std::size_t k = 1; k <= cfg.rack.dedicated_capable(); ++k) {
    cfg.hash_cores = k;
    m = checked_run("minnow k=" + std::to_string(k), cfg, {}, trace);
    if (m.p50 <= 10 * cost) {
      cores = k;
      break;
    }
  }
  double took = secs_since(t0);
  bool ok = cores > 0 && m.p99 >= 20 * m.p50 && took < 30;
  return {ok, fmt("%zu hash cores, p50 %.1f us (<= %.0f), p99 %.1f us = %.1fx p50 (>= 20x), %.1f s",
                  cores, us(m.p50), us(10 * cost), us(m.p99),
                  m.p50 ? static_cast<double>(m.p99) / static_cast<double>(m.p50) : 0.0, took)};
}

// Trained predictors for the 200 us SLO scenarios.
SimConfig default_rack() {
  SimConfig c;
  c.chain = ChainSpec::with_default_setup({{"firewall", 300}, {"nat", 400}, {"monitor", 300}});
  c.core.slo_ns = 200 * kMicro;
  c.server.margin = 0.1;
  return c;
}

LongTermOptions quick_long_term() {
  LongTermOptions lo;
  lo.probe_duration_ns = 400 * kMilli;
  lo.flow_grid = {1, 4, 16, 64, 256, 1024};
  return lo;
}

bool frontier_shape_ok(const CapacityFrontier& f, std::size_t batch) {
  const auto& pts = f.points();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].packets % batch) return false;
    if (i && (pts[i].flows <= pts[i - 1].flows || pts[i].packets > pts[i - 1].packets)) return false;
  }
  return !pts.empty();
}

std::string frontier_text(const CapacityFrontier& f) {
  std::string s;
  for (const auto& p : f.points()) s += fmt("<%u,%u>", p.flows, p.packets);
  return s;
}

// Capacity of one core for a backlog of f flows, all new to it: the epoch
// minus the planning charge, the setup of every flow, then whole batches of
// pull + processing.
CapacityFrontier budget_frontier(const SimConfig& c, std::uint32_t max_flows) {
  Nanos epoch = c.core.epoch();
  Nanos per = c.chain.total_cost() + c.dispatch_cost_ns;
  auto batch = static_cast<std::uint32_t>(c.chain.max_batch);
  std::vector<FrontierPoint> pts;
  for (std::uint32_t f = 1; f <= max_flows; ++f) {
    Nanos left = epoch - c.core.plan_overhead_ns - static_cast<Nanos>(f) * c.chain.per_new_flow_cost_ns;
    if (left <= 0) break;
    auto p = static_cast<std::uint32_t>(left / per) / batch * batch;
    if (p < f || p == 0) break;
    if (!pts.empty() && pts.back().packets == p) pts.back().flows = f;
    else pts.push_back({f, p});
  }
  return CapacityFrontier(epoch, pts);
}

// 3. Every completed packet within two epochs under the budget frontier.
Line two_epoch_bound() {
  auto t0 = std::chrono::steady_clock::now();
  SimConfig c = default_rack();
  c.rack.unbounded_aux = true;
  auto lt = train_long_term(c, quick_long_term());
  double cap = lt.table.threshold(1);

  WorkloadSpec w;
  w.flow_rate = 1.5 * cap / 20;
  w.mean_packets = 20;
  w.flow_pps = 10000;
  w.duration_ns = 600 * kMilli;
  w.storms = {{300 * kMilli, 2 * kMilli, 1000, 4}};
  auto trace = generate(w);
  WorkloadSpec tw = w;
  tw.seed = 1001;
  auto st = train_short_term(c, generate(tw), {});

  Predictors oracle;
  oracle.rates = lt.table;
  oracle.frontiers = st.family;
  oracle.frontiers.frontiers[0] = budget_frontier(c, 4096);
  // Split levels keep their trained frontiers; the trace has no whale to split.
  c.record_samples = true;
  auto mo = checked_run("two-epoch oracle", c, oracle, trace);
  std::size_t within = 0;
  for (const auto& s : mo.samples) within += s.latency <= 2 * c.core.epoch();
  double frac_oracle = mo.samples.empty() ? 0 : static_cast<double>(within) / mo.samples.size();

  Predictors trained{st.family, lt.table};
  auto mt = checked_run("two-epoch trained", c, trained, trace);
  std::size_t in_slo = 0;
  for (const auto& s : mt.samples) in_slo += s.latency <= c.core.slo_ns;
  double frac_trained = mt.samples.empty() ? 0 : static_cast<double>(in_slo) / mt.samples.size();

  double took = secs_since(t0);
  bool ok = !mo.samples.empty() && within == mo.samples.size() && frac_trained >= 0.99 && took < 60;
  return {ok, fmt("oracle %s: %.4f%% within 2 epochs (max %.1f us); trained %s: %.3f%% within slo; %.1f s",
                  frontier_text(oracle.frontiers.level(1)).substr(0, 60).c_str(), 100 * frac_oracle,
                  us(mo.max_latency), frontier_text(st.family.level(1)).c_str(), 100 * frac_trained,
                  took)};
}

struct Trained {
  SimConfig base;
  RateThresholdTable rates;
  double cap = 0;
};

const Trained& trained_rates() {
  static Trained t = [] {
    Trained r;
    r.base = default_rack();
    r.rates = train_long_term(r.base, quick_long_term()).table;
    r.cap = r.rates.threshold(1);
    return r;
  }();
  return t;
}

// 4. Ablations on a bursty mixed trace: storms, a whale, 50k pps flows.
Line ablation_ordering() {
  const auto& tr = trained_rates();
  WorkloadSpec w;
  w.flow_pps = 50000;
  w.mean_packets = 50;
  w.flow_rate = 1.5 * tr.cap / w.mean_packets;
  w.duration_ns = 1 * kSecond;
  w.storms = {{300 * kMilli, 2 * kMilli, 1500, 4}, {600 * kMilli, 2 * kMilli, 1500, 4}};
  w.whales = {{450 * kMilli, 5 * kMilli, 600000}};
  auto trace = generate(w);
  WorkloadSpec tw = w;
  tw.seed = 1001;
  auto st = train_short_term(tr.base, generate(tw), {});
  Predictors p{st.family, tr.rates};

  std::map<Mode, Metrics> m;
  for (Mode mode : {Mode::Full, Mode::StaticUnsafe, Mode::StaticSafe, Mode::NoCoreMapper}) {
    SimConfig c = tr.base;
    c.mode = mode;
    m[mode] = checked_run("ablation " + to_string(mode), c, p, trace);
  }
  bool ok = m[Mode::Full].p99 < m[Mode::StaticUnsafe].p99 &&
            m[Mode::StaticUnsafe].p99 < m[Mode::NoCoreMapper].p99 &&
            m[Mode::StaticSafe].avg_cores >= m[Mode::Full].avg_cores;
  return {ok, fmt("frontier %s; p99 full %.1f < static_unsafe %.1f < no_core_mapper %.1f us; "
                  "cores static_safe %.3f >= full %.3f",
                  frontier_text(st.family.level(1)).c_str(), us(m[Mode::Full].p99),
                  us(m[Mode::StaticUnsafe].p99), us(m[Mode::NoCoreMapper].p99),
                  m[Mode::StaticSafe].avg_cores, m[Mode::Full].avg_cores)};
}

// 5. Load doubles 200 ms after a server-mapper tick and stays there until the next.
Line boost_necessity() {
  const auto& tr = trained_rates();
  WorkloadSpec w;
  w.flow_pps = 10000;
  w.mean_packets = 20;
  w.flow_rate = 0.9 * tr.cap / w.mean_packets;
  w.duration_ns = 2 * kSecond;
  auto trace = generate(w);
  WorkloadSpec extra = w;
  extra.seed = 99;
  const Nanos tick = tr.base.server.interval_ns;
  for (auto r : generate(extra)) {
    if (r.arrival_ns < tick + 200 * kMilli) continue;
    r.flow += 1u << 28;
    trace.push_back(r);
  }
  std::stable_sort(trace.begin(), trace.end(),
                   [](const auto& a, const auto& b) { return a.arrival_ns < b.arrival_ns; });
  WorkloadSpec tw = w;
  tw.flow_rate *= 1.5 / 0.9;
  tw.duration_ns = 300 * kMilli;
  tw.seed = 1001;
  auto st = train_short_term(tr.base, generate(tw), {});
  Predictors p{st.family, tr.rates};

  std::map<Mode, Metrics> m;
  for (Mode mode : {Mode::Full, Mode::NoBoost, Mode::OnDemandRemap}) {
    SimConfig c = tr.base;
    c.mode = mode;
    c.server.rss_delay_ns = 2 * kMilli;
    m[mode] = checked_run("boost " + to_string(mode), c, p, trace);
  }
  bool ok = m[Mode::Full].p99 < m[Mode::NoBoost].p99 && m[Mode::Full].p99 < m[Mode::OnDemandRemap].p99;
  return {ok, fmt("p99 full %.1f us, no_boost %.1f us, on_demand_remap %.1f us (boost entries %llu)",
                  us(m[Mode::Full].p99), us(m[Mode::NoBoost].p99), us(m[Mode::OnDemandRemap].p99),
                  static_cast<unsigned long long>(m[Mode::Full].boost_entries))};
}

// Minimum active cores by trying every assignment.
std::size_t enumerate_min_cores(const BucketStats& s, const RateThresholdTable& t, std::size_t cores) {
  std::size_t n = s.size(), best = 0;
  std::vector<std::uint32_t> a(n, 0);
  for (;;) {
    CoreMapping m;
    m.bucket_core = a;
    m.cores = cores;
    if (mapping_feasible(m, s, t)) {
      auto k = m.active_count();
      if (!best || k < best) best = k;
    }
    std::size_t i = 0;
    while (i < n && ++a[i] == cores) a[i++] = 0;
    if (i == n) break;
  }
  return best;
}

// 6. Greedy packing against the exact search.
Line greedy_vs_exact() {
  auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> nb(1, 8), nc(1, 4);
  std::uniform_real_distribution<double> u(0, 1);
  int n = 0, worse = 0, violations = 0, enum_checked = 0, enum_mismatch = 0, max_gap = 0;
  for (; n < 500; ++n) {
    std::size_t F = nb(rng), C = nc(rng);
    std::vector<RateThresholdTable::Entry> rows;
    double rate = 800 + 400 * u(rng);
    std::uint32_t f = 1;
    for (int k = 0; k < 4; ++k) {
      rows.push_back({f, rate});
      f *= 2 + static_cast<std::uint32_t>(3 * u(rng));
      rate *= 0.6 + 0.4 * u(rng);
    }
    RateThresholdTable t(rows);
    BucketStats s(F);
    for (std::size_t j = 0; j < F; ++j) {
      s.rate[j] = 50 + 450 * u(rng);
      s.flows[j] = 1 + std::floor(8 * u(rng));
    }
    auto exact = milp_exact(s, t, C);
    std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(C - 1));
    CoreMapping start(F, C);
    for (auto& b : start.bucket_core) b = pick(rng);
    auto g = remap_greedy(s, start, t);
    if (g.feasible && !mapping_feasible(g.mapping, s, t)) violations++;
    if (exact.feasible) {
      int gap = g.feasible ? static_cast<int>(g.mapping.active_count()) - static_cast<int>(exact.cores)
                           : static_cast<int>(C) + 1 - static_cast<int>(exact.cores);
      max_gap = std::max(max_gap, gap);
      if (gap > 1) worse++;
      if (!mapping_feasible(exact.witness, s, t) || exact.witness.active_count() != exact.cores)
        violations++;
    } else if (g.feasible) {
      violations++;  // greedy found what the exact search says is impossible
    }
    if (F <= 6) {
      enum_checked++;
      auto best = enumerate_min_cores(s, t, C);
      if ((best != 0) != exact.feasible || (exact.feasible && best != exact.cores)) enum_mismatch++;
    }
  }
  double took = secs_since(t0);
  bool ok = worse == 0 && violations == 0 && enum_mismatch == 0 && took < 60;
  return {ok, fmt("%d instances: greedy > exact+1 on %d (max gap %d), capacity violations %d; "
                  "exact vs enumeration mismatches %d/%d; %.1f s",
                  n, worse, max_gap, violations, enum_mismatch, enum_checked, took)};
}

// 7. Shape of trained frontiers, and the single-stage calibration point.
Line frontier_properties() {
  SimConfig c;
  c.chain = ChainSpec::with_default_setup({{"nf", 1250}});
  c.core.slo_ns = 400 * kMicro;
  c.dispatch_cost_ns = 0;
  auto st = train_short_term(c, {}, {});
  const auto& f1 = st.family.level(1);
  auto batch = c.chain.max_batch;
  bool shape = true;
  for (const auto& f : st.family.frontiers) shape = shape && frontier_shape_ok(f, batch);
  // Closed form: one warm flow, epoch / per-packet cost.
  auto closed = static_cast<std::uint32_t>(c.core.epoch() / c.chain.total_cost());
  auto at1 = f1.capacity_at(1).value_or(0);
  bool point = at1 + batch >= closed && at1 <= closed;
  // Setup cost must bite as flows grow.
  bool setup_bites = f1.capacity_at(32).value_or(0) < at1;

  // Trace-trained frontiers of the default chain share the same shape rules.
  SimConfig d = default_rack();
  WorkloadSpec w;
  w.flow_pps = 50000;
  w.mean_packets = 50;
  w.flow_rate = 1.5 * 800000 / w.mean_packets;
  w.duration_ns = 300 * kMilli;
  w.storms = {{100 * kMilli, 2 * kMilli, 1500, 4}};
  auto sd = train_short_term(d, generate(w), {});
  for (const auto& f : sd.family.frontiers) shape = shape && frontier_shape_ok(f, batch);

  bool ok = shape && point && setup_bites;
  return {ok, fmt("calibration %s: p(1) = %u vs closed form %u; p(32) < p(1): %s; "
                  "monotone and multiples of %zu: %s",
                  frontier_text(f1).c_str(), at1, closed, setup_bites ? "yes" : "no", batch,
                  shape ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> want;
  for (int i = 1; i < argc; ++i) want.insert(std::atoi(argv[i]));
  if (want.empty()) want = {1, 2, 3, 4, 5, 6, 7, 8};

  const std::vector<std::pair<const char*, std::function<Line()>>> criteria = {
      {"whale inflation", whale_inflation},
      {"minnow inflation", minnow_inflation},
      {"two-epoch bound", two_epoch_bound},
      {"ablation ordering", ablation_ordering},
      {"boost necessity", boost_necessity},
      {"greedy vs exact packing", greedy_vs_exact},
      {"frontier properties", frontier_properties},
  };
  bool all = true;
  // Criterion 8 audits the runs of the others; alone it runs them silently.
  bool only8 = want == std::set<int>{8};
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    int id = static_cast<int>(i) + 1;
    if (!want.count(id) && !only8) continue;
    Line l;
    try {
      l = criteria[i].second();
    } catch (const std::exception& e) {
      l = {false, std::string("threw: ") + e.what()};
    }
    if (only8) continue;
    all = all && l.pass;
    std::printf("[%s] %d %s: %s\n", l.pass ? "PASS" : "FAIL", id, criteria[i].first, l.detail.c_str());
    std::fflush(stdout);
  }
  if (want.count(8)) {
    bool ok = g_audit.failures.empty() && g_audit.runs > 0;
    all = all && ok;
    std::string detail = fmt("%d runs audited and repeated, %zu failures", g_audit.runs,
                             g_audit.failures.size());
    for (const auto& f : g_audit.failures) detail += "; " + f;
    std::printf("[%s] 8 conservation and determinism: %s\n", ok ? "PASS" : "FAIL", detail.c_str());
  }
  return all ? 0 : 1;
}

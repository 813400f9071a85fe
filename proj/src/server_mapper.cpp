#include "nfvscale/server_mapper.hpp"

#include <algorithm>
#include <numeric>

namespace nfvscale {

void ServerMapperConfig::validate() const {
  if (buckets == 0) throw ConfigError("server_mapper.buckets must be > 0");
  if (interval_ns <= 0) throw ConfigError("server_mapper.interval must be > 0");
  if (rss_delay_ns < 0) throw ConfigError("server_mapper.rss_delay must be >= 0");
  if (boost_threshold == 0) throw ConfigError("server_mapper.boost_threshold must be > 0");
  if (margin < 0 || margin >= 1) throw ConfigError("server_mapper.margin must be in [0, 1)");
  if (warm_window_ns <= 0) throw ConfigError("server_mapper.warm_window must be > 0");
  if (on_demand_gap_ns < 0) throw ConfigError("server_mapper.on_demand_gap must be >= 0");
}

std::vector<double> CoreMapping::core_rate(const BucketStats& s) const {
  std::vector<double> out(cores, 0.0);
  for (std::size_t j = 0; j < bucket_core.size(); ++j) out[bucket_core[j]] += s.rate[j];
  return out;
}

std::vector<double> CoreMapping::core_flows(const BucketStats& s) const {
  std::vector<double> out(cores, 0.0);
  for (std::size_t j = 0; j < bucket_core.size(); ++j) out[bucket_core[j]] += s.flows[j];
  return out;
}

std::vector<bool> CoreMapping::active() const {
  std::vector<bool> out(cores, false);
  for (auto c : bucket_core) out[c] = true;
  return out;
}

std::size_t CoreMapping::active_count() const {
  auto a = active();
  return static_cast<std::size_t>(std::count(a.begin(), a.end(), true));
}

double core_capacity(const RateThresholdTable& t, double flows, double margin) {
  return t.threshold(flows) * (1.0 - margin);
}

bool mapping_feasible(const CoreMapping& m, const BucketStats& s,
                      const RateThresholdTable& t, double margin) {
  auto cr = m.core_rate(s);
  auto cf = m.core_flows(s);
  for (std::size_t i = 0; i < m.cores; ++i)
    if (cr[i] > 0 && cr[i] > core_capacity(t, cf[i], margin)) return false;
  return true;
}

namespace {

struct Packer {
  const BucketStats* s;
  const RateThresholdTable* t;
  double margin;
  CoreMapping m;
  std::vector<double> cr, cf;
  std::vector<std::size_t> count;

  Packer(const BucketStats& s_, const RateThresholdTable& t_, double margin_, CoreMapping m_)
      : s(&s_), t(&t_), margin(margin_), m(std::move(m_)) {
    cr = m.core_rate(*s);
    cf = m.core_flows(*s);
    count.assign(m.cores, 0);
    for (auto c : m.bucket_core) count[c]++;
  }

  bool ok_with(std::size_t core, double rate, double flows) const {
    double r = cr[core] + rate;
    return r <= 0 || r <= core_capacity(*t, cf[core] + flows, margin);
  }
  bool overloaded(std::size_t core) const { return !ok_with(core, 0, 0); }
  void move(std::size_t j, std::size_t to) {
    auto from = m.bucket_core[j];
    cr[from] -= s->rate[j];
    cf[from] -= s->flows[j];
    count[from]--;
    cr[to] += s->rate[j];
    cf[to] += s->flows[j];
    count[to]++;
    m.bucket_core[j] = static_cast<std::uint32_t>(to);
  }
  std::vector<std::size_t> buckets_of(std::size_t core) const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < m.bucket_core.size(); ++j)
      if (m.bucket_core[j] == core) out.push_back(j);
    std::stable_sort(out.begin(), out.end(),
                     [&](std::size_t a, std::size_t b) { return s->rate[a] > s->rate[b]; });
    return out;
  }
};

}  // namespace

RemapResult remap_greedy(const BucketStats& stats, const CoreMapping& current,
                         const RateThresholdTable& t, double margin) {
  if (stats.size() != current.bucket_core.size())
    throw Error("bucket stats and mapping disagree on bucket count");
  Packer pk(stats, t, margin, current);
  RemapResult res;

  // Phase 1: relieve overloaded cores.
  std::vector<std::size_t> evicted;
  std::vector<bool> was_overloaded(pk.m.cores, false);
  for (std::size_t c = 0; c < pk.m.cores; ++c) {
    if (!pk.overloaded(c)) continue;
    was_overloaded[c] = true;
    for (auto j : pk.buckets_of(c)) {
      if (!pk.overloaded(c)) break;
      // Park the bucket on its core's books as removed; it is re-homed below.
      pk.cr[c] -= stats.rate[j];
      pk.cf[c] -= stats.flows[j];
      pk.count[c]--;
      evicted.push_back(j);
    }
  }
  for (auto j : evicted) {
    auto src = pk.m.bucket_core[j];
    std::optional<std::size_t> dest;
    for (std::size_t c = 0; c < pk.m.cores && !dest; ++c)
      if (c != src && pk.count[c] > 0 && pk.ok_with(c, stats.rate[j], stats.flows[j])) dest = c;
    for (std::size_t c = 0; c < pk.m.cores && !dest; ++c)
      if (c != src && pk.count[c] == 0 && pk.ok_with(c, stats.rate[j], stats.flows[j])) dest = c;
    if (!dest) {
      // Nowhere legal: best effort on the core with the most headroom.
      res.feasible = false;
      double best = -1e300;
      for (std::size_t c = 0; c < pk.m.cores; ++c) {
        double room = core_capacity(t, pk.cf[c] + stats.flows[j], margin) - pk.cr[c];
        if (room > best) {
          best = room;
          dest = c;
        }
      }
    }
    pk.cr[*dest] += stats.rate[j];
    pk.cf[*dest] += stats.flows[j];
    pk.count[*dest]++;
    pk.m.bucket_core[j] = static_cast<std::uint32_t>(*dest);
  }

  // Phase 2: try to empty the least-loaded cores.
  for (;;) {
    std::vector<std::size_t> act;
    for (std::size_t c = 0; c < pk.m.cores; ++c)
      if (pk.count[c] > 0) act.push_back(c);
    if (act.size() <= 1) break;
    std::stable_sort(act.begin(), act.end(),
                     [&](std::size_t a, std::size_t b) { return pk.cr[a] < pk.cr[b]; });
    bool progress = false;
    for (auto victim : act) {
      Packer trial = pk;
      bool all = true;
      for (auto j : trial.buckets_of(victim)) {
        bool placed = false;
        for (auto c : act) {
          if (c == victim || trial.count[c] == 0) continue;
          if (trial.ok_with(c, stats.rate[j], stats.flows[j])) {
            trial.move(j, c);
            placed = true;
            break;
          }
        }
        if (!placed) {
          all = false;
          break;
        }
      }
      if (all) {
        pk = std::move(trial);
        progress = true;
        break;
      }
    }
    if (!progress) break;
  }

  for (std::size_t c = 0; c < pk.m.cores; ++c)
    if (pk.count[c] > 0 && pk.overloaded(c)) res.feasible = false;
  for (std::size_t j = 0; j < stats.size(); ++j)
    if (pk.m.bucket_core[j] != current.bucket_core[j]) res.migrated.push_back(j);
  res.mapping = std::move(pk.m);
  return res;
}

ExactResult milp_exact(const BucketStats& stats, const RateThresholdTable& t,
                       std::size_t max_cores, double margin) {
  const std::size_t F = stats.size();
  if (F > 12 || max_cores > 6)
    throw Error("milp_exact only handles up to 12 buckets and 6 cores");
  if (F == 0 || max_cores == 0) throw Error("milp_exact needs at least one bucket and core");

  std::vector<std::size_t> order(F);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return stats.rate[a] > stats.rate[b]; });

  ExactResult best;
  best.cores = max_cores + 1;
  std::vector<double> cr(max_cores, 0.0), cf(max_cores, 0.0);
  std::vector<std::uint32_t> assign(F, 0);

  auto fits = [&](std::size_t c, std::size_t j) {
    double r = cr[c] + stats.rate[j];
    return r <= 0 || r <= core_capacity(t, cf[c] + stats.flows[j], margin);
  };

  // Cores are opened in index order, which removes relabeling symmetry.
  auto rec = [&](auto&& self, std::size_t k, std::size_t used) -> void {
    if (used >= best.cores) return;
    if (k == F) {
      best.cores = used;
      best.feasible = true;
      best.witness = CoreMapping(F, max_cores);
      best.witness.bucket_core = assign;
      return;
    }
    auto j = order[k];
    for (std::size_t c = 0; c < std::min(used + 1, max_cores); ++c) {
      if (!fits(c, j)) continue;
      cr[c] += stats.rate[j];
      cf[c] += stats.flows[j];
      assign[j] = static_cast<std::uint32_t>(c);
      self(self, k + 1, std::max(used, c + 1));
      cr[c] -= stats.rate[j];
      cf[c] -= stats.flows[j];
    }
  };
  rec(rec, 0, 0);
  if (!best.feasible) best.cores = 0;
  return best;
}

std::uint32_t rss_bucket(FlowId flow, std::size_t buckets) {
  return static_cast<std::uint32_t>(mix64(flow) % buckets);
}

Nanos MappingInstaller::install(CoreMapping m, Nanos now) {
  Nanos base = queue_.empty() ? now : std::max(now, last_effective_);
  Nanos eff = base + delay_;
  last_effective_ = eff;
  queue_.emplace_back(eff, std::move(m));
  return eff;
}

std::optional<CoreMapping> MappingInstaller::take_due(Nanos now) {
  if (queue_.empty() || queue_.front().first > now) return std::nullopt;
  auto m = std::move(queue_.front().second);
  queue_.pop_front();
  return m;
}

std::optional<Nanos> MappingInstaller::next_due() const {
  if (queue_.empty()) return std::nullopt;
  return queue_.front().first;
}

BoostTransition boost_check(bool in_boost, std::uint64_t backlog, std::uint64_t threshold) {
  if (!in_boost && backlog > threshold) return BoostTransition::Enter;
  if (in_boost && backlog == 0) return BoostTransition::Exit;
  return BoostTransition::None;
}

}  // namespace nfvscale

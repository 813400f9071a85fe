#include "nfvscale/core_mapper.hpp"

#include <algorithm>
#include <numeric>

namespace nfvscale {

void CoreMapperConfig::validate() const {
  if (slo_ns <= 1) throw ConfigError("core_mapper.slo must be > 1 ns");
  if (max_split < 1) throw ConfigError("core_mapper.max_split must be >= 1");
  if (plan_overhead_ns < 0) throw ConfigError("core_mapper.plan_overhead must be >= 0");
}

Nanos epoch_length(Nanos slo_ns) {
  if (slo_ns <= 0) throw ConfigError("slo must be positive");
  return slo_ns / 2;
}

const QueueEpochStats* EpochStats::queue(int id) const {
  for (const auto& q : queues)
    if (q.queue == id) return &q;
  return nullptr;
}

CoreCounters::Q& CoreCounters::q(int id) {
  for (auto& [qid, c] : queues_)
    if (qid == id) return c;
  throw Error("unknown queue " + std::to_string(id));
}

void CoreCounters::add_queue(int id) {
  if (!has_queue(id)) queues_.push_back({id, Q{}});
}

void CoreCounters::remove_queue(int id, int heir) {
  if (!has_queue(id) || id == heir) return;
  Q gone = q(id);
  auto& h = q(heir);
  h.arrived += gone.arrived;
  h.processed += gone.processed;
  h.queued += gone.queued;
  for (auto& [flow, f] : flows_)
    if (f.queue == id) f.queue = heir;
  std::erase_if(queues_, [id](const auto& e) { return e.first == id; });
}

bool CoreCounters::has_queue(int id) const {
  for (const auto& e : queues_)
    if (e.first == id) return true;
  return false;
}

void CoreCounters::on_arrival(std::uint32_t flow, int queue) {
  q(queue).arrived++;
  auto& f = flows_[flow];
  f.arrived++;
  f.queue = queue;
}

void CoreCounters::on_processed(std::uint32_t flow) {
  auto it = flows_.find(flow);
  if (it == flows_.end()) throw Error("processed packet of an unbooked flow " + std::to_string(flow));
  it->second.processed++;
  q(it->second.queue).processed++;
}

void CoreCounters::on_move(std::uint32_t flow, int from, int to, std::uint64_t packets) {
  auto& a = q(from);
  auto& b = q(to);
  a.queued -= packets;
  b.queued += packets;
  auto& f = flows_[flow];
  f.queue = to;
}

EpochStats CoreCounters::update_stats() {
  EpochStats st;
  for (auto& [id, c] : queues_) {
    c.queued = c.queued + c.arrived - c.processed;
    st.queues.push_back({id, c.arrived, c.processed, c.queued, 0});
    c.arrived = c.processed = 0;
  }
  for (auto it = flows_.begin(); it != flows_.end();) {
    auto& f = it->second;
    f.queued = f.queued + f.arrived - f.processed;
    if (f.queued > 0 || f.arrived > 0)
      st.flows.push_back({it->first, f.queue, f.arrived, f.queued});
    if (f.queued > 0)
      for (auto& qs : st.queues)
        if (qs.queue == f.queue) qs.flows_queued++;
    f.arrived = f.processed = 0;
    if (f.queued == 0)
      it = flows_.erase(it);
    else
      ++it;
  }
  std::sort(st.flows.begin(), st.flows.end(),
            [](const auto& a, const auto& b) { return a.flow < b.flow; });
  return st;
}

std::optional<std::size_t> plan_whale_split(std::uint64_t p, const FrontierFamily& family,
                                            std::size_t max_split) {
  std::size_t top = std::min(max_split, family.max_level());
  for (std::size_t n = 2; n <= top; ++n)
    if (family.admits(n, 1, p)) return n;
  return std::nullopt;
}

MigrationPlan absorb_bursts(const PlanInput& in, const FrontierFamily& family,
                            const PlanOptions& opt) {
  MigrationPlan plan;
  plan.existing = in.queues.size();
  for (const auto& q : in.queues) plan.loads.push_back({q.level, 0, 0, false});
  plan.placement.resize(in.flows.size());
  for (std::size_t i = 0; i < in.flows.size(); ++i)
    plan.placement[i] = static_cast<int>(in.flows[i].slot);
  std::size_t pool = in.aux_available;
  std::size_t top = std::min(opt.max_split, family.max_level());

  auto fits = [&](std::size_t slot, std::size_t level, std::uint64_t task) {
    const auto& l = plan.loads[slot];
    return family.admits(level, l.f + 1, l.p + task);
  };
  auto put = [&](std::size_t i, std::size_t slot) {
    plan.loads[slot].f++;
    plan.loads[slot].p += in.flows[i].task;
    plan.placement[i] = static_cast<int>(slot);
  };
  auto open = [&](std::size_t level, bool best_effort) {
    plan.loads.push_back({level, 0, 0, best_effort});
    pool -= level;
    plan.cores_requested += level;
    return plan.loads.size() - 1;
  };

  // Ascending task size within each queue, ties by flow id.
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < in.flows.size(); ++i)
    if (in.flows[i].task > 0) order.push_back(i);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& fa = in.flows[a];
    const auto& fb = in.flows[b];
    if (fa.slot != fb.slot) return fa.slot < fb.slot;
    if (fa.task != fb.task) return fa.task < fb.task;
    return fa.flow < fb.flow;
  });

  std::vector<std::size_t> overflow;
  for (auto i : order) {
    const auto& f = in.flows[i];
    if (fits(f.slot, plan.loads[f.slot].level, f.task))
      put(i, f.slot);
    else
      overflow.push_back(i);
  }

  for (auto i : overflow) {
    const auto& f = in.flows[i];
    bool whale = !family.admits(1, 1, f.task);
    if (whale) {
      if (!opt.allow_split) {
        plan.placement[i] = -1;
        continue;
      }
      auto n = plan_whale_split(f.task, family, opt.max_split);
      std::size_t level = n ? *n : std::max<std::size_t>(top, 1);
      if (!n) plan.alerted.push_back(f.flow);
      if (pool >= level) {
        put(i, open(level, !n));
      } else {
        plan.at_risk = true;
        put(i, f.slot);
      }
      continue;
    }
    bool placed = false;
    for (std::size_t s = 0; s < plan.loads.size() && !placed; ++s) {
      if (s == f.slot || plan.loads[s].best_effort) continue;
      std::size_t cur = plan.loads[s].level;
      // Only queues opened by this plan may grow into a wider split.
      std::size_t hi = (s >= plan.existing && opt.allow_split) ? top : cur;
      for (std::size_t lvl = cur; lvl <= hi; ++lvl) {
        if (lvl - cur > pool) break;
        if (fits(s, lvl, f.task)) {
          pool -= lvl - cur;
          plan.cores_requested += lvl - cur;
          plan.loads[s].level = lvl;
          put(i, s);
          placed = true;
          break;
        }
      }
    }
    if (placed) continue;
    if (pool >= 1) {
      put(i, open(1, false));
    } else {
      plan.at_risk = true;
      put(i, f.slot);
    }
  }

  for (std::size_t i = 0; i < in.flows.size(); ++i) {
    const auto& f = in.flows[i];
    if (f.task == 0) continue;
    plan.placement_by_flow[f.flow] = plan.placement[i];
    if (plan.placement[i] >= 0 && static_cast<std::size_t>(plan.placement[i]) != f.slot)
      plan.moves.push_back(
          {f.flow, f.slot, static_cast<std::size_t>(plan.placement[i]), f.task});
  }
  return plan;
}

}  // namespace nfvscale

#pragma once

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "nfvscale/predictor.hpp"
#include "nfvscale/types.hpp"

namespace nfvscale {

struct CoreMapperConfig {
  Nanos slo_ns = 200 * kMicro;
  std::size_t max_split = 3;
  Nanos plan_overhead_ns = 3 * kMicro;

  Nanos epoch() const { return slo_ns / 2; }
  void validate() const;
};

Nanos epoch_length(Nanos slo_ns);

struct QueueEpochStats {
  int queue = 0;
  std::uint64_t arrived = 0;
  std::uint64_t processed = 0;
  std::uint64_t queued = 0;
  std::uint64_t flows_queued = 0;
};

struct FlowEpochStats {
  std::uint32_t flow = 0;
  int queue = 0;
  std::uint64_t arrived = 0;
  std::uint64_t task_size = 0;
};

struct EpochStats {
  std::vector<QueueEpochStats> queues;
  std::vector<FlowEpochStats> flows;  // flows with arrivals or a backlog

  const QueueEpochStats* queue(int id) const;
};

// Per-core arrival/processed bookkeeping. Arrival and processed counts
// accumulate during an epoch; update_stats folds them into the carried
// queued counts and starts the next epoch.
class CoreCounters {
 public:
  void add_queue(int id);
  // Flows still booked to `id`, and its counts, pass to `heir`.
  void remove_queue(int id, int heir);
  bool has_queue(int id) const;

  // Arrivals are counted when a packet lands in the core's NIC ring, against
  // the queue the flow currently targets.
  void on_arrival(std::uint32_t flow, int queue);
  // Completions and software-queue drops; both count against whichever queue
  // the flow is currently booked to, since a move carries its backlog along.
  void on_processed(std::uint32_t flow);
  void on_dropped(std::uint32_t flow) { on_processed(flow); }
  // Re-targets a flow and carries `packets` of queued work along with it.
  void on_move(std::uint32_t flow, int from, int to, std::uint64_t packets);

  EpochStats update_stats();

 private:
  struct Q {
    std::uint64_t arrived = 0, processed = 0, queued = 0;
  };
  struct F {
    std::uint64_t arrived = 0, processed = 0, queued = 0;
    int queue = 0;
  };
  std::vector<std::pair<int, Q>> queues_;
  std::unordered_map<std::uint32_t, F> flows_;
  Q& q(int id);
};

struct PlanQueue {
  int id = 0;
  std::size_t level = 1;
};

struct PlanFlow {
  std::uint32_t flow = 0;
  std::uint64_t task = 0;
  std::size_t slot = 0;  // index into PlanInput::queues
};

struct PlanInput {
  std::vector<PlanQueue> queues;  // queues[0] is the local queue
  std::vector<PlanFlow> flows;
  std::size_t aux_available = 0;
};

struct PlanOptions {
  std::size_t max_split = 3;
  // Off: whales are flagged instead of planned and new queues stay 1-core.
  bool allow_split = true;
};

struct QueueLoad {
  std::size_t level = 1;
  std::uint64_t f = 0;
  std::uint64_t p = 0;
  bool best_effort = false;
};

struct PlanMove {
  std::uint32_t flow = 0;
  std::size_t from = 0;
  std::size_t to = 0;
  std::uint64_t packets = 0;
};

struct MigrationPlan {
  // Slots [0, existing) mirror PlanInput::queues; the rest are new queues.
  std::vector<QueueLoad> loads;
  std::size_t existing = 0;
  std::vector<PlanMove> moves;
  // Per input flow: final slot, or -1 for a flagged whale.
  std::vector<int> placement;
  std::unordered_map<std::uint32_t, int> placement_by_flow;
  std::vector<std::uint32_t> alerted;  // best-effort whales
  std::size_t cores_requested = 0;
  bool at_risk = false;
};

MigrationPlan absorb_bursts(const PlanInput& in, const FrontierFamily& family,
                            const PlanOptions& opt);

// Smallest n >= 2 whose frontier admits a lone flow with p packets.
std::optional<std::size_t> plan_whale_split(std::uint64_t p, const FrontierFamily& family,
                                            std::size_t max_split);

}  // namespace nfvscale

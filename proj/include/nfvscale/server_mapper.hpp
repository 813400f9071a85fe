#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "nfvscale/predictor.hpp"
#include "nfvscale/types.hpp"

namespace nfvscale {

struct ServerMapperConfig {
  std::size_t buckets = 512;
  Nanos interval_ns = kSecond;
  Nanos rss_delay_ns = 2 * kMilli;
  std::uint64_t boost_threshold = 256;
  // Fraction shaved off T before packing; 0 uses the table as trained.
  double margin = 0;
  bool warm_start = true;
  Nanos warm_window_ns = 100 * kMilli;
  Nanos on_demand_gap_ns = 5 * kMilli;

  void validate() const;
};

struct BucketStats {
  std::vector<double> rate;   // pkts/s
  std::vector<double> flows;  // mean active flows per epoch window

  BucketStats() = default;
  explicit BucketStats(std::size_t n) : rate(n, 0.0), flows(n, 0.0) {}
  std::size_t size() const { return rate.size(); }
};

struct CoreMapping {
  std::vector<std::uint32_t> bucket_core;
  std::size_t cores = 0;

  CoreMapping() = default;
  CoreMapping(std::size_t buckets, std::size_t cores_, std::uint32_t all_on = 0)
      : bucket_core(buckets, all_on), cores(cores_) {}

  std::vector<double> core_rate(const BucketStats& s) const;
  std::vector<double> core_flows(const BucketStats& s) const;
  std::vector<bool> active() const;
  std::size_t active_count() const;
  bool operator==(const CoreMapping&) const = default;
};

double core_capacity(const RateThresholdTable& t, double flows, double margin);

// True iff every core satisfies CR <= T[CF].
bool mapping_feasible(const CoreMapping& m, const BucketStats& s,
                      const RateThresholdTable& t, double margin = 0);

struct RemapResult {
  CoreMapping mapping;
  std::vector<std::size_t> migrated;
  bool feasible = true;
};

RemapResult remap_greedy(const BucketStats& stats, const CoreMapping& current,
                         const RateThresholdTable& t, double margin = 0);

struct ExactResult {
  std::size_t cores = 0;
  CoreMapping witness;
  bool feasible = false;
};

// Branch-and-bound over bucket-to-core assignments; small instances only.
ExactResult milp_exact(const BucketStats& stats, const RateThresholdTable& t,
                       std::size_t max_cores, double margin = 0);

std::uint32_t rss_bucket(FlowId flow, std::size_t buckets);

// Mapping writes land after a fixed delay; a second install queues behind
// the first.
class MappingInstaller {
 public:
  explicit MappingInstaller(Nanos delay) : delay_(delay) {}
  Nanos install(CoreMapping m, Nanos now);
  // Pops the next mapping due at or before `now`.
  std::optional<CoreMapping> take_due(Nanos now);
  std::optional<Nanos> next_due() const;
  std::size_t pending() const { return queue_.size(); }

 private:
  Nanos delay_;
  Nanos last_effective_ = 0;
  std::deque<std::pair<Nanos, CoreMapping>> queue_;
};

enum class BoostTransition { None, Enter, Exit };

BoostTransition boost_check(bool in_boost, std::uint64_t backlog, std::uint64_t threshold);

}  // namespace nfvscale

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "nfvscale/types.hpp"

namespace nfvscale {

struct Stage {
  std::string name;
  Nanos cost_ns = 0;
};

struct ChainSpec {
  std::vector<Stage> stages;
  // State setup charged the first time a core sees a flow.
  Nanos per_new_flow_cost_ns = 0;
  std::size_t max_batch = 32;

  // Throws ConfigError on an invalid chain.
  void validate() const;
  Nanos total_cost() const;
  std::uint64_t hash() const;

  // Chain with setup cost defaulted to 3x the per-packet cost.
  static ChainSpec with_default_setup(std::vector<Stage> stages,
                                      std::size_t max_batch = 32);
};

// A cut at index c separates stage c-1 from stage c.
struct SplitScheme {
  std::vector<std::size_t> cut_points;

  std::size_t cores() const { return cut_points.size() + 1; }
  bool operator==(const SplitScheme&) const = default;
};

Nanos service_time(const ChainSpec& chain, bool is_new_flow);

void validate_scheme(const ChainSpec& chain, const SplitScheme& scheme);

// Per-packet cost of each sub-chain.
std::vector<Nanos> sub_chain_costs(const ChainSpec& chain,
                                   const SplitScheme& scheme);

// Setup cost split across sub-chains in proportion to their per-packet cost.
// The shares sum to chain.per_new_flow_cost_ns.
std::vector<Nanos> sub_chain_setup_costs(const ChainSpec& chain,
                                         const SplitScheme& scheme);

double split_throughput(const ChainSpec& chain, const SplitScheme& scheme);
Nanos split_latency(const ChainSpec& chain, const SplitScheme& scheme);

// All contiguous partitions into at most max_cores sub-chains, ordered by
// core count, then by descending throughput, then by cut points.
std::vector<SplitScheme> enumerate_splits(const ChainSpec& chain,
                                          std::size_t max_cores);

// Highest-throughput scheme with exactly n sub-chains (n <= stage count).
SplitScheme best_split(const ChainSpec& chain, std::size_t n);

}  // namespace nfvscale

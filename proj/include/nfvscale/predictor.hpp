#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nfvscale/chain_model.hpp"
#include "nfvscale/types.hpp"

namespace nfvscale {

struct FrontierPoint {
  std::uint32_t flows = 0;
  std::uint32_t packets = 0;
  bool operator==(const FrontierPoint&) const = default;
};

// Packets a core can finish within one epoch as a function of how many
// distinct flows those packets belong to.
class CapacityFrontier {
 public:
  CapacityFrontier() = default;
  // Points must have strictly increasing flows, non-increasing packets,
  // and positive values.
  CapacityFrontier(Nanos epoch_ns, std::vector<FrontierPoint> points);

  // Max p per observed f, then suffix maxima so p never grows with f.
  static CapacityFrontier from_observations(Nanos epoch_ns,
                                            const std::vector<FrontierPoint>& obs);
  static CapacityFrontier constant(Nanos epoch_ns, std::uint32_t packets,
                                   std::uint32_t max_flows);

  // Lookup steps to the nearest trained f' >= f; beyond the last point
  // only an empty backlog is admitted.
  bool admits(std::uint64_t f, std::uint64_t p) const;
  std::optional<std::uint32_t> capacity_at(std::uint64_t f) const;

  Nanos epoch() const { return epoch_ns_; }
  const std::vector<FrontierPoint>& points() const { return points_; }
  bool empty() const { return points_.empty(); }
  std::uint32_t min_packets() const;
  std::uint32_t max_packets() const;
  std::uint32_t max_flows() const;

  bool operator==(const CapacityFrontier&) const = default;

 private:
  Nanos epoch_ns_ = 0;
  std::vector<FrontierPoint> points_;
};

// One frontier per core count n; level n uses the best n-way split scheme.
struct FrontierFamily {
  std::vector<SplitScheme> schemes;
  std::vector<CapacityFrontier> frontiers;

  std::size_t max_level() const { return frontiers.size(); }
  const CapacityFrontier& level(std::size_t n) const { return frontiers.at(n - 1); }
  bool admits(std::size_t n, std::uint64_t f, std::uint64_t p) const {
    return n >= 1 && n <= frontiers.size() && frontiers[n - 1].admits(f, p);
  }

  // Replace the 1-core frontier with a constant at its min / max trained p.
  FrontierFamily static_safe() const;
  FrontierFamily static_unsafe() const;

  bool operator==(const FrontierFamily&) const = default;
};

class RateThresholdTable {
 public:
  struct Entry {
    std::uint32_t flows = 0;
    double rate = 0;
    bool operator==(const Entry&) const = default;
  };

  RateThresholdTable() = default;
  explicit RateThresholdTable(std::vector<Entry> entries);

  // Rate at the nearest grid point >= flows; 0 beyond the grid.
  double threshold(double flows) const;
  const std::vector<Entry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

  bool operator==(const RateThresholdTable&) const = default;

 private:
  std::vector<Entry> entries_;
};

struct PredictorHeader {
  std::uint64_t chain_hash = 0;
  Nanos epoch_ns = 0;
  Nanos slo_ns = 0;
};

std::string serialize_frontiers(const PredictorHeader& h, const FrontierFamily& fam);
std::string serialize_rate_table(const PredictorHeader& h, const RateThresholdTable& t);
// Throw PredictorError on a malformed file.
FrontierFamily parse_frontiers(const std::string& text, PredictorHeader* h);
RateThresholdTable parse_rate_table(const std::string& text, PredictorHeader* h);

void check_header(const PredictorHeader& h, std::uint64_t chain_hash, Nanos slo_ns,
                  const std::string& what);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

// Backlog partitioning: first group is what the dedicated core keeps.
struct BacklogFlow {
  std::uint32_t flow = 0;
  std::uint64_t task = 0;
};

struct BacklogGroup {
  std::vector<std::uint32_t> flows;
  std::uint64_t f = 0;
  std::uint64_t p = 0;
};

struct BacklogPartition {
  std::vector<BacklogGroup> groups;
  std::vector<std::uint32_t> whales;  // exceed the 1-core frontier on their own
};

BacklogPartition partition_backlog(const FrontierFamily& family,
                                   const std::vector<BacklogFlow>& backlog);

}  // namespace nfvscale

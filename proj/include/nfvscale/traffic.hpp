#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nfvscale/types.hpp"

namespace nfvscale {

struct PacketRecord {
  Nanos arrival_ns = 0;
  FlowId flow = 0;
  std::uint32_t dst_addr = 0;
  std::uint32_t size = 0;

  bool operator==(const PacketRecord&) const = default;
};

using Trace = std::vector<PacketRecord>;

struct TraceStats {
  std::uint64_t flow_count = 0;
  std::uint64_t packet_count = 0;
  double max_flow_rate = 0;     // pkts/s, densest window of any single flow
  double flow_arrival_rate = 0; // flows/s over the trace span
};

enum class PacketCountDist { Fixed, Geometric, Pareto };

struct WhaleSpec {
  Nanos start_ns = 0;
  Nanos duration_ns = 0;
  double rate_pps = 0;
};

struct StormSpec {
  Nanos start_ns = 0;
  Nanos window_ns = 0;
  std::uint64_t flow_count = 0;
  // 0 means draw from the base packet-count distribution.
  std::uint32_t packets_per_flow = 0;
};

struct WorkloadSpec {
  double flow_rate = 0;  // Poisson flow arrivals per second
  PacketCountDist count_dist = PacketCountDist::Geometric;
  double mean_packets = 10;
  double pareto_shape = 1.5;
  double flow_pps = 1000;  // per-flow pacing rate
  std::vector<WhaleSpec> whales;
  std::vector<StormSpec> storms;
  bool shape_flows = false;
  Nanos duration_ns = kSecond;
  std::uint64_t seed = 1;
  std::uint32_t address_pool = 1u << 16;
  std::uint32_t packet_size = 64;

  void validate() const;
};

// CSV `arrival_ns,flow_id,dst_addr,size`; a header line is optional and
// dst_addr may be decimal or dotted-quad.
Trace parse_trace(const std::string& path);
Trace parse_trace_text(const std::string& text);
void write_trace(const std::string& path, const Trace& trace);
std::string format_trace(const Trace& trace);

Trace generate(const WorkloadSpec& spec);

TraceStats compute_stats(const Trace& trace, Nanos window_ns = 10 * kMilli);

// Pool slot i maps to an address spread evenly across the IPv4 space, so
// distinct slots fall into distinct /16 prefixes when the pool is 2^16.
std::uint32_t pool_address(std::uint32_t slot, std::uint32_t pool_size);

}  // namespace nfvscale

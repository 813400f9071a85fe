#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nfvscale/predictor.hpp"
#include "nfvscale/simulator.hpp"

namespace nfvscale {

enum class FrontierSource { Auto, Probe, Trace };

FrontierSource parse_frontier_source(const std::string& s);
std::string to_string(FrontierSource s);

struct ShortTermOptions {
  // Packets per fresh flow in the saturation probes.
  std::vector<std::uint32_t> probe_flow_sizes = {1,  2,  3,   4,   6,   8,   12,   16,   24,   32,
                                                 48, 64, 128, 256, 512, 1024, 2048, 4096};
  std::uint32_t probe_backlog = 4096;
  FrontierSource source = FrontierSource::Auto;
};

struct ShortTermResult {
  FrontierFamily family;
  std::vector<std::size_t> observations;  // per level
  std::vector<bool> from_probe;           // per level
};

// Saturated-epoch observations of one probe: every flow has `per_flow`
// packets and all of them sit in the NIC ring at t=0.
std::vector<EpochObservation> probe_saturation(const SimConfig& base, std::size_t level,
                                               std::uint32_t per_flow, std::uint32_t backlog);

// The 1-core frontier comes from replaying `trace` onto a single core and
// keeping its saturated epochs. With an empty trace, or one too light to
// saturate a core, it falls back to saturation probing with fresh flows.
// Split levels are always probed on isolated queues.
ShortTermResult train_short_term(const SimConfig& base, const Trace& trace,
                                 const ShortTermOptions& opt);

struct LongTermOptions {
  std::vector<std::uint32_t> flow_grid = {1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048, 4096};
  Nanos probe_duration_ns = 30 * kSecond;
  // A probe flow is replaced by a fresh one after this many packets, so setup
  // churn scales with rate as it does in real traffic; 0 never replaces.
  std::uint32_t flow_packets = 20;
  double resolution = 0.01;
  double min_rate_fraction = 0.01;
  std::uint64_t seed = 1;
};

struct RateProbe {
  std::uint32_t flows = 0;
  double rate = 0;
  std::uint64_t seed = 0;
  bool pass = false;
  Nanos p99 = 0;
  double active_flows = 0;
};

struct LongTermResult {
  RateThresholdTable table;
  std::vector<std::string> warnings;
  std::vector<RateProbe> probes;
};

// Open-loop probe traffic: `flows` concurrent paced flows sharing `rate`,
// each replaced by a fresh flow after `flow_packets` packets. Slots come
// online staggered over the first `ramp`.
Trace probe_traffic(std::uint32_t flows, double rate, Nanos duration, std::uint32_t flow_packets,
                    Nanos ramp, std::uint64_t seed);

// Mean number of distinct flows per window.
double mean_active_flows(const Trace& trace, Nanos window);

// Ramp-up before steady state; arrivals before it are excluded from a verdict.
Nanos probe_warmup(const LongTermOptions& opt, std::uint32_t flows, double rate);

RateProbe probe_rate(const SimConfig& base, std::uint32_t flows, double rate,
                     const LongTermOptions& opt, std::uint64_t seed);

LongTermResult train_long_term(const SimConfig& base, const LongTermOptions& opt);

}  // namespace nfvscale

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nfvscale/chain_model.hpp"
#include "nfvscale/core_mapper.hpp"
#include "nfvscale/ingress_mapper.hpp"
#include "nfvscale/predictor.hpp"
#include "nfvscale/server_mapper.hpp"
#include "nfvscale/traffic.hpp"

namespace nfvscale {

enum class Mode {
  Full,
  PerFlowPerCore,
  HashOnly,
  NoCoreMapper,
  StaticSafe,
  StaticUnsafe,
  NoBoost,
  OnDemandRemap,
};

Mode parse_mode(const std::string& s);
std::string to_string(Mode m);
const std::vector<Mode>& all_modes();

struct RackConfig {
  std::size_t servers = 1;
  std::size_t cores_per_server = 32;
  std::size_t aux_pool = 8;
  std::size_t nic_capacity = 4096;
  std::size_t sw_capacity = 1024;
  // Aux pool grows on demand instead of running out.
  bool unbounded_aux = false;

  std::size_t dedicated_capable() const { return cores_per_server - aux_pool; }
  void validate() const;
};

struct SimConfig {
  ChainSpec chain;
  RackConfig rack;
  CoreMapperConfig core;
  ServerMapperConfig server;
  IngressConfig ingress;
  Mode mode = Mode::Full;

  // Per-packet cost of pulling from the NIC ring and dispatching.
  Nanos dispatch_cost_ns = 100;
  Nanos sample_window_ns = 100 * kMicro;
  // Simulated time after the last arrival before the run stops.
  Nanos drain_ns = 50 * kMilli;
  // hash_only: number of cores; 0 uses every dedicated-capable core.
  std::size_t hash_cores = 0;

  // Training probe: > 0 pins every flow onto one core-0 queue split across
  // this many cores, with all mappers off.
  std::size_t probe_level = 0;

  bool record_samples = false;  // per-packet latency stream
  bool record_epochs = false;   // per-queue epoch observations
  bool audit = false;           // ordering, affinity and conservation checks
  std::uint64_t seed = 1;

  void validate() const;
  std::uint64_t hash() const;
};

struct Predictors {
  FrontierFamily frontiers;
  RateThresholdTable rates;
};

struct Alert {
  Nanos time = 0;
  int server = 0;
  int core = 0;
  FlowId flow = 0;
  std::string reason;
};

struct EpochObservation {
  Nanos time = 0;
  int server = 0;
  int queue = 0;
  std::size_t level = 1;
  std::uint32_t flows = 0;
  std::uint32_t packets = 0;
  bool saturated = false;
};

struct IntervalRecord {
  Nanos time = 0;
  int server = 0;
  std::size_t active_dedicated = 0;
  std::size_t migrated_buckets = 0;
  std::uint64_t boost_entries = 0;
  std::uint64_t boost_exits = 0;
  bool feasible = true;
  bool on_demand = false;
};

struct LatencySample {
  FlowId flow = 0;
  Nanos arrival = 0;
  Nanos latency = 0;
};

struct Metrics {
  std::uint64_t arrivals = 0;
  std::uint64_t completions = 0;
  std::uint64_t in_flight = 0;
  std::uint64_t drops_nic = 0;
  std::uint64_t drops_sw = 0;
  Nanos p50 = 0;
  Nanos p99 = 0;
  Nanos max_latency = 0;
  double avg_cores = 0;
  std::uint64_t core_samples = 0;
  double loss_rate = 0;

  std::uint64_t plans = 0;
  std::uint64_t flow_migrations = 0;
  std::uint64_t at_risk_epochs = 0;
  std::uint64_t boost_entries = 0;
  std::uint64_t boost_exits = 0;
  std::uint64_t boost_denied = 0;
  std::uint64_t remaps = 0;
  std::uint64_t on_demand_remaps = 0;
  std::uint64_t servers_recruited = 0;
  std::uint64_t ingress_saturations = 0;
  std::uint64_t peak_aux_in_use = 0;

  std::vector<Alert> alerts;
  std::vector<FlowId> best_effort_flows;
  std::vector<IntervalRecord> intervals;
  std::vector<EpochObservation> epochs;
  std::vector<LatencySample> samples;
  std::vector<std::uint16_t> active_core_series;

  // Audits; all zero on a healthy run.
  std::uint64_t order_violations = 0;
  std::uint64_t affinity_violations = 0;
  std::uint64_t conservation_violations = 0;

  std::uint64_t event_digest = 0;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;

  std::uint64_t drops() const { return drops_nic + drops_sw; }
  bool conserved() const { return arrivals == completions + drops() + in_flight; }
};

// Nearest-rank percentile over an unsorted sample set.
Nanos percentile(std::vector<Nanos> values, double pct);

// Throws PredictorError when a mode needs predictors that are missing.
Metrics run(const SimConfig& config, const Predictors& predictors, const Trace& trace);
Metrics run_mode(SimConfig config, Mode mode, const Predictors& predictors, const Trace& trace);

}  // namespace nfvscale

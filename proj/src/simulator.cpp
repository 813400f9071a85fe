#include "nfvscale/simulator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <limits>
#include <queue>
#include <unordered_map>

namespace nfvscale {

Mode parse_mode(const std::string& s) {
  for (auto m : all_modes())
    if (to_string(m) == s) return m;
  throw ConfigError("unknown mode '" + s + "'");
}

std::string to_string(Mode m) {
  switch (m) {
    case Mode::Full: return "full";
    case Mode::PerFlowPerCore: return "per_flow_per_core";
    case Mode::HashOnly: return "hash_only";
    case Mode::NoCoreMapper: return "no_core_mapper";
    case Mode::StaticSafe: return "static_safe";
    case Mode::StaticUnsafe: return "static_unsafe";
    case Mode::NoBoost: return "no_boost";
    case Mode::OnDemandRemap: return "on_demand_remap";
  }
  return "?";
}

const std::vector<Mode>& all_modes() {
  static const std::vector<Mode> v = {Mode::Full,         Mode::PerFlowPerCore, Mode::HashOnly,
                                      Mode::NoCoreMapper, Mode::StaticSafe,     Mode::StaticUnsafe,
                                      Mode::NoBoost,      Mode::OnDemandRemap};
  return v;
}

void RackConfig::validate() const {
  if (servers == 0) throw ConfigError("rack.servers must be > 0");
  if (cores_per_server < 2) throw ConfigError("rack.cores_per_server must be >= 2");
  if (aux_pool >= cores_per_server)
    throw ConfigError("rack.aux_pool must leave at least one dedicated-capable core");
  if (nic_capacity == 0 || sw_capacity == 0) throw ConfigError("queue capacities must be > 0");
}

void SimConfig::validate() const {
  chain.validate();
  rack.validate();
  core.validate();
  server.validate();
  ingress.validate();
  if (dispatch_cost_ns < 0) throw ConfigError("dispatch_cost must be >= 0");
  if (sample_window_ns <= 0) throw ConfigError("sample_window must be > 0");
  if (drain_ns < 0) throw ConfigError("drain must be >= 0");
  if (probe_level > chain.stages.size())
    throw ConfigError("probe_level exceeds the chain's stage count");
}

std::uint64_t SimConfig::hash() const {
  std::string k = std::to_string(chain.hash());
  auto add = [&](auto v) { k += ";" + std::to_string(v); };
  add(rack.servers), add(rack.cores_per_server), add(rack.aux_pool), add(rack.nic_capacity);
  add(rack.sw_capacity), add(int(rack.unbounded_aux));
  add(core.slo_ns), add(core.max_split), add(core.plan_overhead_ns);
  add(server.buckets), add(server.interval_ns), add(server.rss_delay_ns);
  add(server.boost_threshold), add(server.margin), add(int(server.warm_start));
  add(server.warm_window_ns), add(server.on_demand_gap_ns);
  add(ingress.prefix_len), add(ingress.tau);
  k += ";" + to_string(mode);
  add(dispatch_cost_ns), add(sample_window_ns), add(drain_ns), add(hash_cores), add(probe_level);
  return fnv1a(k);
}

Nanos percentile(std::vector<Nanos> values, double pct) {
  if (values.empty()) return 0;
  auto n = values.size();
  auto rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::nth_element(values.begin(), values.begin() + static_cast<long>(rank - 1), values.end());
  return values[rank - 1];
}

namespace {

enum Kind : int {
  kBatchComplete = 0,
  kMappingEffective = 1,
  kEpochBoundary = 2,
  kServerTick = 3,
  kArrival = 4,
  kTraceEnd = 5,
};

struct Event {
  Nanos time;
  int kind;
  std::uint64_t seq;
  int arg;
};

struct Later {
  bool operator()(const Event& a, const Event& b) const {
    if (a.time != b.time) return a.time > b.time;
    if (a.kind != b.kind) return a.kind > b.kind;
    return a.seq > b.seq;
  }
};

struct Pkt {
  Nanos arrival;
  std::uint32_t flow;
  std::uint32_t seq;
  std::uint32_t seg;  // flow's home segment at arrival
};

struct FlowState {
  FlowId id = 0;
  std::uint32_t dst = 0;
  std::uint32_t bucket = 0;
  int server = -1;
  int home = -1;
  int target = -1;  // queue id; -1 means the home core's local queue
  // Re-homing starts a new segment; its packets wait until every packet of
  // earlier segments, which stay on their old cores, is gone.
  std::uint32_t seg = 0;
  std::uint32_t old_pending = 0;
  int old_target = -1;
  std::uint32_t pending = 0;
  std::uint32_t inflight = 0;
  int inflight_queue = -1;
  int inflight_core = -1;
  std::uint32_t next_seq = 0;
  std::int64_t last_done_seq = -1;
  std::int64_t bf_window = -1;
  std::int64_t counted_epoch = -1;
  int counted_queue = -1;
  int plan_dest = -1;
  bool best_effort = false;
  // Cores holding this flow's state, as (core, generation).
  std::array<std::pair<int, std::uint32_t>, 4> state{};
  std::uint8_t nstate = 0;
  std::uint8_t state_next = 0;
};

struct StageQ {
  int core = -1;
  Nanos cost = 0;
  Nanos setup = 0;
  std::deque<Pkt> in;
};

struct Queue {
  int id = 0;
  int server = 0;
  int owner = 0;
  bool local = false;
  bool alive = true;
  std::size_t level = 1;
  std::vector<StageQ> stages;
  std::vector<std::uint32_t> members;
  std::uint32_t ep_packets = 0;
  std::uint32_t ep_flows = 0;
  bool ep_idle = true;
};

struct Core {
  int id = 0;
  int server = 0;
  bool aux = false;
  std::uint32_t gen = 0;
  bool touched = false;

  // dedicated-capable cores
  std::deque<Pkt> nic;
  int local_queue = -1;
  std::vector<int> borrowed;
  bool boost = false;
  int boost_core = -1;
  CoreCounters counters;

  // aux cores
  int queue = -1;
  int stage = 0;

  bool busy = false;
  Nanos debt = 0;
  bool window_active = false;
  int blocked_on = -1;

  Nanos start = 0;
  int b_queue = -1;
  int b_stage = 0;
  std::vector<Pkt> proc;
  std::vector<Nanos> proc_done;
  std::vector<Pkt> dispatch;
};

struct Server {
  int id = 0;
  std::vector<int> dedicated;
  std::vector<int> aux_free;  // kept sorted, lowest id handed out first
  std::size_t aux_in_use = 0;
  CoreMapping mapping;
  CoreMapping latest;
  MappingInstaller installer{0};
  std::vector<std::uint64_t> bucket_pkts;
  std::vector<double> bucket_bf;
  Nanos interval_start = 0;
  Nanos last_on_demand = std::numeric_limits<Nanos>::min() / 2;
  std::uint64_t interval_boost_entries = 0;
  std::uint64_t interval_boost_exits = 0;
};

class Sim {
 public:
  Sim(const SimConfig& cfg, const Predictors& pred, const Trace& trace)
      : cfg_(cfg), trace_(trace), ingress_(cfg.rack.servers, cfg.ingress.prefix_len, tau(cfg)) {
    cfg_.validate();
    epoch_ = cfg_.core.epoch();
    setup_mode(pred);
    index_flows();
    build_rack();
  }

  Metrics run();

 private:
  static std::size_t tau(const SimConfig& c) {
    return c.ingress.tau ? c.ingress.tau : c.rack.dedicated_capable();
  }

  void setup_mode(const Predictors& pred);
  void index_flows();
  void build_rack();
  int new_core(int server, bool aux);
  int new_queue(int server, int owner, bool local, std::size_t level);

  void push(Nanos t, int kind, int arg) { events_.push({t, kind, seq_++, arg}); }
  void digest(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    std::uint64_t v[3] = {a, b, c};
    metrics_.event_digest = fnv1a(v, sizeof v, metrics_.event_digest);
  }

  void on_arrival(std::size_t i);
  void on_batch_complete(int core);
  void on_epoch(int server);
  void on_tick(int server);
  void on_mapping_effective(int server);

  int home_for(FlowState& f, Server& s);
  int resolve_target(const FlowState& f) const {
    if (f.target >= 0 && queues_[f.target].alive) return f.target;
    return cores_[f.home].local_queue;
  }
  // Where core `c` sends a packet it pulled; leftovers of a re-homed flow
  // stay on the core they arrived at.
  int target_on(const FlowState& f, const Core& c) const {
    if (f.home == c.id) return resolve_target(f);
    if (f.old_target >= 0 && queues_[f.old_target].alive && queues_[f.old_target].owner == c.id)
      return f.old_target;
    return c.local_queue;
  }
  void retire(const Pkt& p, FlowState& f);
  bool has_state(const FlowState& f, const Core& c) const {
    for (std::uint8_t i = 0; i < f.nstate; ++i)
      if (f.state[i].first == c.id && f.state[i].second == c.gen) return true;
    return false;
  }
  void add_state(FlowState& f, const Core& c) {
    if (f.nstate < f.state.size()) {
      f.state[f.nstate++] = {c.id, c.gen};
    } else {
      f.state[f.state_next] = {c.id, c.gen};
      f.state_next = static_cast<std::uint8_t>((f.state_next + 1) % f.state.size());
    }
  }

  void kick(int core);
  void start_batch(Core& c);
  std::size_t take_stage(Core& c, Queue& q, std::size_t stage, Nanos& duration);
  void enqueue_queue(int qid, const Pkt& p, Core& owner);
  void complete(const Pkt& p, Nanos done, Queue& q);
  void drop_sw(const Pkt& p, Core& owner);
  void release_flow_lock(FlowState& f);

  int acquire_aux(Server& s);
  void release_aux(Server& s, int core);

  void run_core_mapper(Core& c, Server& s, const EpochStats& stats, Nanos now);
  void release_idle_queues(Core& c, Server& s);
  void boost_step(Core& c, Server& s, Nanos now);
  void remap(Server& s, Nanos now, bool on_demand);
  void warm_start();
  void record_epoch(Core& c, Nanos now);
  std::uint64_t queue_backlog(const Queue& q) const;
  std::uint64_t physical_in_flight() const;
  void sample_until(Nanos t);
  bool core_has_work(const Core& c) const;

  SimConfig cfg_;
  const Trace& trace_;
  FrontierFamily family_;
  RateThresholdTable rates_;
  IngressMapper ingress_;
  Nanos epoch_ = 0;

  bool core_mapper_ = false;
  bool server_mapper_ = false;
  bool boost_ = false;
  bool on_demand_ = false;
  bool epochs_ = false;

  std::vector<FlowState> flows_;
  std::vector<std::uint32_t> flow_of_;
  std::deque<Core> cores_;
  std::deque<Queue> queues_;
  std::vector<Server> servers_;
  std::unordered_map<std::uint32_t, std::vector<int>> waiters_;
  std::vector<std::uint32_t> unfenced_;  // flows whose fence just lifted
  void wake_unfenced();
  int probe_queue_ = -1;

  std::priority_queue<Event, std::vector<Event>, Later> events_;
  std::uint64_t seq_ = 0;
  Nanos now_ = 0;
  std::int64_t epoch_index_ = 0;

  Nanos next_sample_ = 0;
  std::uint64_t sample_sum_ = 0;

  std::vector<Nanos> latencies_;
  std::uint64_t pending_total_ = 0;
  Metrics metrics_;
};

void Sim::setup_mode(const Predictors& pred) {
  auto m = cfg_.mode;
  bool probing = cfg_.probe_level > 0;
  core_mapper_ = !probing && (m == Mode::Full || m == Mode::StaticSafe ||
                              m == Mode::StaticUnsafe || m == Mode::NoBoost ||
                              m == Mode::OnDemandRemap);
  server_mapper_ = !probing && m != Mode::PerFlowPerCore && m != Mode::HashOnly;
  boost_ = !probing && (m == Mode::Full || m == Mode::NoCoreMapper || m == Mode::StaticSafe ||
                        m == Mode::StaticUnsafe);
  on_demand_ = !probing && m == Mode::OnDemandRemap;
  epochs_ = core_mapper_ || boost_ || on_demand_ || cfg_.record_epochs;

  if (core_mapper_) {
    if (pred.frontiers.frontiers.empty())
      throw PredictorError("mode " + to_string(m) + " needs a capacity frontier");
    for (const auto& f : pred.frontiers.frontiers)
      if (f.epoch() != epoch_)
        throw PredictorError("frontier epoch " + std::to_string(f.epoch()) +
                             " ns does not match slo/2 = " + std::to_string(epoch_) + " ns");
    if (m == Mode::StaticSafe)
      family_ = pred.frontiers.static_safe();
    else if (m == Mode::StaticUnsafe)
      family_ = pred.frontiers.static_unsafe();
    else
      family_ = pred.frontiers;
  }
  if (server_mapper_) {
    if (pred.rates.empty())
      throw PredictorError("mode " + to_string(m) + " needs a rate-threshold table");
    rates_ = pred.rates;
  }
}

void Sim::index_flows() {
  std::unordered_map<FlowId, std::uint32_t> idx;
  idx.reserve(trace_.size() / 4 + 16);
  flow_of_.resize(trace_.size());
  for (std::size_t i = 0; i < trace_.size(); ++i) {
    const auto& r = trace_[i];
    if (i > 0 && r.arrival_ns < trace_[i - 1].arrival_ns)
      throw TraceError("trace is not sorted by arrival time", i + 1);
    auto [it, fresh] = idx.emplace(r.flow, static_cast<std::uint32_t>(flows_.size()));
    if (fresh) {
      FlowState f;
      f.id = r.flow;
      f.dst = r.dst_addr;
      f.bucket = rss_bucket(r.flow, cfg_.server.buckets);
      flows_.push_back(f);
    }
    flow_of_[i] = it->second;
  }
}

int Sim::new_core(int server, bool aux) {
  Core c;
  c.id = static_cast<int>(cores_.size());
  c.server = server;
  c.aux = aux;
  cores_.push_back(std::move(c));
  return cores_.back().id;
}

int Sim::new_queue(int server, int owner, bool local, std::size_t level) {
  Queue q;
  q.id = static_cast<int>(queues_.size());
  q.server = server;
  q.owner = owner;
  q.local = local;
  q.level = level;
  SplitScheme scheme = level > 1 ? best_split(cfg_.chain, level) : SplitScheme{};
  auto costs = sub_chain_costs(cfg_.chain, scheme);
  auto setup = sub_chain_setup_costs(cfg_.chain, scheme);
  q.stages.resize(costs.size());
  for (std::size_t i = 0; i < costs.size(); ++i) {
    q.stages[i].cost = costs[i];
    q.stages[i].setup = setup[i];
  }
  queues_.push_back(std::move(q));
  cores_[owner].counters.add_queue(queues_.back().id);
  return queues_.back().id;
}

void Sim::build_rack() {
  const auto& r = cfg_.rack;
  for (std::size_t s = 0; s < r.servers; ++s) {
    Server sv;
    sv.id = static_cast<int>(s);
    sv.installer = MappingInstaller(cfg_.server.rss_delay_ns);
    sv.bucket_pkts.assign(cfg_.server.buckets, 0);
    sv.bucket_bf.assign(cfg_.server.buckets, 0.0);
    servers_.push_back(std::move(sv));
    if (cfg_.mode == Mode::PerFlowPerCore) continue;
    std::size_t ded = r.dedicated_capable();
    if (cfg_.mode == Mode::HashOnly && cfg_.hash_cores) ded = cfg_.hash_cores;
    for (std::size_t i = 0; i < ded; ++i) {
      int id = new_core(static_cast<int>(s), false);
      servers_[s].dedicated.push_back(id);
      cores_[id].local_queue = new_queue(static_cast<int>(s), id, true, 1);
      queues_[cores_[id].local_queue].stages[0].core = id;
    }
    for (std::size_t i = 0; i < r.aux_pool; ++i)
      servers_[s].aux_free.push_back(new_core(static_cast<int>(s), true));
    servers_[s].mapping = CoreMapping(cfg_.server.buckets, ded, 0);
    servers_[s].latest = servers_[s].mapping;
  }
  if (cfg_.probe_level >= 2) {
    auto& s = servers_[0];
    int owner = s.dedicated[0];
    probe_queue_ = new_queue(0, owner, false, cfg_.probe_level);
    auto& q = queues_[probe_queue_];
    for (auto& st : q.stages) {
      st.core = acquire_aux(s);
      cores_[st.core].queue = probe_queue_;
      cores_[st.core].stage = static_cast<int>(&st - q.stages.data());
    }
    cores_[owner].borrowed.push_back(probe_queue_);
  }
}

int Sim::acquire_aux(Server& s) {
  int id;
  if (!s.aux_free.empty()) {
    id = s.aux_free.front();
    s.aux_free.erase(s.aux_free.begin());
  } else if (cfg_.rack.unbounded_aux) {
    id = new_core(s.id, true);
  } else {
    return -1;
  }
  auto& c = cores_[id];
  c.gen++;
  c.queue = -1;
  c.stage = 0;
  c.blocked_on = -1;
  s.aux_in_use++;
  metrics_.peak_aux_in_use = std::max<std::uint64_t>(metrics_.peak_aux_in_use, s.aux_in_use);
  return id;
}

void Sim::release_aux(Server& s, int id) {
  auto& c = cores_[id];
  c.queue = -1;
  c.gen++;
  c.blocked_on = -1;
  s.aux_in_use--;
  s.aux_free.insert(std::lower_bound(s.aux_free.begin(), s.aux_free.end(), id), id);
}

int Sim::home_for(FlowState& f, Server& s) {
  switch (cfg_.mode) {
    case Mode::PerFlowPerCore:
      if (f.home < 0) {
        f.home = new_core(s.id, false);
        auto& c = cores_[f.home];
        c.local_queue = new_queue(s.id, c.id, true, 1);
        queues_[c.local_queue].stages[0].core = c.id;
        s.dedicated.push_back(c.id);
      }
      return f.home;
    case Mode::HashOnly:
      if (f.home < 0)
        f.home = s.dedicated[mix64(f.id ^ 0x5bd1e995ULL) % s.dedicated.size()];
      return f.home;
    default:
      break;
  }
  if (cfg_.probe_level > 0) {
    f.home = s.dedicated[0];
    if (probe_queue_ >= 0) f.target = probe_queue_;
    return f.home;
  }
  int desired = s.dedicated[s.mapping.bucket_core[f.bucket]];
  if (f.home != desired) {
    if (f.home >= 0 && f.pending > 0) {
      f.seg++;
      f.old_pending = f.pending;
      f.old_target = f.target;
    }
    f.home = desired;
    f.target = -1;
  }
  return f.home;
}

void Sim::on_arrival(std::size_t i) {
  const auto& r = trace_[i];
  auto fi = flow_of_[i];
  auto& f = flows_[fi];
  if (f.server < 0) f.server = static_cast<int>(ingress_.steer(f.dst));
  auto& s = servers_[f.server];
  int core = home_for(f, s);

  s.bucket_pkts[f.bucket]++;
  if (epoch_ > 0) {
    std::int64_t w = r.arrival_ns / epoch_;
    if (f.bf_window != w) {
      f.bf_window = w;
      s.bucket_bf[f.bucket] += 1.0;
    }
  }

  metrics_.arrivals++;
  auto& c = cores_[core];
  c.touched = true;
  std::uint32_t seq = f.next_seq++;
  if (c.nic.size() >= cfg_.rack.nic_capacity) {
    metrics_.drops_nic++;
    return;
  }
  c.nic.push_back({r.arrival_ns, fi, seq, f.seg});
  c.counters.on_arrival(fi, resolve_target(f));
  f.pending++;
  pending_total_++;
  c.window_active = true;
  kick(core);
}

void Sim::kick(int id) {
  auto& c = cores_[id];
  if (c.busy) return;
  start_batch(c);
}

std::size_t Sim::take_stage(Core& c, Queue& q, std::size_t stage, Nanos& duration) {
  auto& st = q.stages[stage];
  std::size_t taken = 0;
  c.blocked_on = -1;
  while (taken < cfg_.chain.max_batch && !st.in.empty()) {
    const Pkt& p = st.in.front();
    auto& f = flows_[p.flow];
    if (stage == 0) {
      bool older = p.seg == f.seg && f.old_pending > 0;
      if (older || (f.inflight > 0 && (f.inflight_queue != q.id || f.inflight_core != c.id))) {
        // Earlier packets of this flow are still in service elsewhere.
        c.blocked_on = static_cast<int>(p.flow);
        auto& w = waiters_[p.flow];
        if (std::find(w.begin(), w.end(), c.id) == w.end()) w.push_back(c.id);
        break;
      }
      f.inflight++;
      f.inflight_queue = q.id;
      f.inflight_core = c.id;
    } else if (cfg_.audit && f.inflight_queue != q.id) {
      metrics_.affinity_violations++;
    }
    Nanos cost = st.cost;
    if (!has_state(f, c)) {
      cost += st.setup;
      add_state(f, c);
    }
    duration += cost;
    c.proc.push_back(p);
    c.proc_done.push_back(duration);
    st.in.pop_front();
    ++taken;
  }
  return taken;
}

void Sim::start_batch(Core& c) {
  c.proc.clear();
  c.proc_done.clear();
  c.dispatch.clear();
  Nanos duration = c.debt;
  c.debt = 0;
  c.b_queue = -1;

  if (!c.aux) {
    std::size_t k = std::min(cfg_.chain.max_batch, c.nic.size());
    auto& local = queues_[c.local_queue];
    for (std::size_t i = 0; i < k; ++i) {
      Pkt p = c.nic.front();
      c.nic.pop_front();
      duration += cfg_.dispatch_cost_ns;
      int tq = target_on(flows_[p.flow], c);
      if (!c.boost && tq == c.local_queue) {
        if (local.stages[0].in.size() >= cfg_.rack.sw_capacity) {
          drop_sw(p, c);
          continue;
        }
        local.stages[0].in.push_back(p);
      } else {
        c.dispatch.push_back(p);
      }
    }
    if (!c.boost && local.stages[0].core == c.id) {
      if (take_stage(c, local, 0, duration) > 0) {
        c.b_queue = local.id;
        c.b_stage = 0;
      }
    }
  } else if (c.queue >= 0) {
    auto& q = queues_[c.queue];
    if (take_stage(c, q, static_cast<std::size_t>(c.stage), duration) > 0) {
      c.b_queue = q.id;
      c.b_stage = c.stage;
    }
  }

  if (duration == 0) {
    // Nothing to do; a queue whose server core idles is not saturated.
    if (!c.aux) {
      if (c.blocked_on < 0) queues_[c.local_queue].ep_idle = true;
    } else if (c.queue >= 0 && c.stage == 0 && c.blocked_on < 0) {
      queues_[c.queue].ep_idle = true;
    }
    return;
  }
  c.busy = true;
  c.window_active = true;
  c.start = now_;
  push(now_ + duration, kBatchComplete, c.id);
}

void Sim::retire(const Pkt& p, FlowState& f) {
  f.pending--;
  pending_total_--;
  if (p.seg != f.seg && --f.old_pending == 0) {
    f.old_target = -1;
    unfenced_.push_back(p.flow);
  }
}

void Sim::wake_unfenced() {
  while (!unfenced_.empty()) {
    auto fl = unfenced_.back();
    unfenced_.pop_back();
    auto it = waiters_.find(fl);
    if (it == waiters_.end()) continue;
    auto ws = std::move(it->second);
    waiters_.erase(it);
    for (int w : ws) kick(w);
  }
}

void Sim::drop_sw(const Pkt& p, Core& owner) {
  owner.counters.on_dropped(p.flow);
  retire(p, flows_[p.flow]);
  metrics_.drops_sw++;
}

void Sim::enqueue_queue(int qid, const Pkt& p, Core& owner) {
  auto& q = queues_[qid];
  auto& in = q.stages[0].in;
  if (in.size() >= cfg_.rack.sw_capacity) {
    drop_sw(p, owner);
    return;
  }
  in.push_back(p);
  auto& sc = cores_[q.stages[0].core];
  sc.window_active = true;
}

void Sim::release_flow_lock(FlowState& f) {
  if (--f.inflight > 0) return;
  f.inflight_queue = -1;
  f.inflight_core = -1;
}

void Sim::complete(const Pkt& p, Nanos done, Queue& q) {
  auto& f = flows_[p.flow];
  Nanos lat = done - p.arrival;
  latencies_.push_back(lat);
  metrics_.completions++;
  if (cfg_.record_samples) metrics_.samples.push_back({f.id, p.arrival, lat});
  if (cfg_.audit) {
    if (static_cast<std::int64_t>(p.seq) <= f.last_done_seq) metrics_.order_violations++;
  }
  f.last_done_seq = std::max<std::int64_t>(f.last_done_seq, p.seq);
  retire(p, f);
  cores_[q.owner].counters.on_processed(p.flow);
  q.ep_packets++;
  if (f.counted_epoch != epoch_index_ || f.counted_queue != q.id) {
    f.counted_epoch = epoch_index_;
    f.counted_queue = q.id;
    q.ep_flows++;
  }
  digest(f.id, static_cast<std::uint64_t>(done), p.seq);
}

void Sim::on_batch_complete(int id) {
  auto& c = cores_[id];
  c.busy = false;
  if (c.b_queue >= 0) {
    auto& q = queues_[c.b_queue];
    auto stage = static_cast<std::size_t>(c.b_stage);
    if (stage + 1 < q.stages.size()) {
      auto& next = q.stages[stage + 1];
      for (const auto& p : c.proc) next.in.push_back(p);
      cores_[next.core].window_active = true;
      kick(next.core);
    } else {
      for (std::size_t i = 0; i < c.proc.size(); ++i) {
        complete(c.proc[i], c.start + c.proc_done[i], q);
        auto& f = flows_[c.proc[i].flow];
        release_flow_lock(f);
        if (f.inflight == 0) unfenced_.push_back(c.proc[i].flow);
      }
    }
  }
  if (!c.dispatch.empty()) {
    std::vector<int> to_kick;
    for (const auto& p : c.dispatch) {
      int tq = target_on(flows_[p.flow], c);
      enqueue_queue(tq, p, c);
      to_kick.push_back(queues_[tq].stages[0].core);
    }
    std::sort(to_kick.begin(), to_kick.end());
    to_kick.erase(std::unique(to_kick.begin(), to_kick.end()), to_kick.end());
    for (int k : to_kick)
      if (k != id) kick(k);
  }
  c.proc.clear();
  c.dispatch.clear();
  c.window_active = true;
  kick(id);
  wake_unfenced();
}

std::uint64_t Sim::queue_backlog(const Queue& q) const {
  std::uint64_t n = 0;
  for (const auto& st : q.stages) n += st.in.size();
  return n;
}

void Sim::record_epoch(Core& c, Nanos now) {
  auto rec = [&](Queue& q, std::uint64_t backlog) {
    if (q.ep_packets > 0 || backlog > 0)
      metrics_.epochs.push_back({now, c.server, q.id, q.level, q.ep_flows, q.ep_packets,
                                 !q.ep_idle && backlog > 0});
  };
  auto& local = queues_[c.local_queue];
  rec(local, c.nic.size() + queue_backlog(local));
  for (int b : c.borrowed) rec(queues_[b], queue_backlog(queues_[b]));
}

void Sim::boost_step(Core& c, Server& s, Nanos now) {
  auto& local = queues_[c.local_queue];
  std::uint64_t backlog = c.nic.size() + local.stages[0].in.size();
  auto tr = boost_check(c.boost, backlog, cfg_.server.boost_threshold);
  if (tr == BoostTransition::Enter) {
    int aux = acquire_aux(s);
    if (aux < 0) {
      metrics_.boost_denied++;
      return;
    }
    c.boost = true;
    c.boost_core = aux;
    cores_[aux].queue = local.id;
    cores_[aux].stage = 0;
    local.stages[0].core = aux;
    metrics_.boost_entries++;
    s.interval_boost_entries++;
    digest(now, 0xb0057, static_cast<std::uint64_t>(c.id));
    kick(aux);
  } else if (tr == BoostTransition::Exit && !cores_[c.boost_core].busy) {
    local.stages[0].core = c.id;
    release_aux(s, c.boost_core);
    c.boost = false;
    c.boost_core = -1;
    metrics_.boost_exits++;
    s.interval_boost_exits++;
    kick(c.id);
  }
}

void Sim::run_core_mapper(Core& c, Server& s, const EpochStats& stats, Nanos now) {
  PlanInput in;
  std::vector<int> slot_queue;
  in.queues.push_back({c.local_queue, 1});
  slot_queue.push_back(c.local_queue);
  for (int b : c.borrowed) {
    in.queues.push_back({b, queues_[b].level});
    slot_queue.push_back(b);
  }
  bool any = false;
  for (const auto& fs : stats.flows) {
    // Leftovers of a flow already re-homed elsewhere are not this core's to move.
    if (fs.task_size == 0 || flows_[fs.flow].home != c.id) continue;
    std::size_t slot = 0;
    for (std::size_t k = 0; k < slot_queue.size(); ++k)
      if (slot_queue[k] == fs.queue) slot = k;
    in.flows.push_back({fs.flow, fs.task_size, slot});
    any = true;
  }
  if (!any) return;
  in.aux_available = cfg_.rack.unbounded_aux ? std::size_t{1} << 20 : s.aux_free.size();

  PlanOptions opt;
  opt.max_split = cfg_.core.max_split;
  auto plan = absorb_bursts(in, family_, opt);
  metrics_.plans++;
  c.debt += cfg_.core.plan_overhead_ns;
  if (plan.at_risk) metrics_.at_risk_epochs++;
  for (auto fl : plan.alerted) {
    auto& f = flows_[fl];
    if (!f.best_effort) {
      f.best_effort = true;
      metrics_.best_effort_flows.push_back(f.id);
    }
    metrics_.alerts.push_back({now, s.id, c.id, f.id,
                               "flow backlog exceeds every split scheme; processed best-effort"});
  }

  for (std::size_t k = plan.existing; k < plan.loads.size(); ++k) {
    std::size_t level = plan.loads[k].level;
    int qid = new_queue(s.id, c.id, false, level);
    auto& q = queues_[qid];
    for (std::size_t st = 0; st < q.stages.size(); ++st) {
      int aux = acquire_aux(s);
      q.stages[st].core = aux;
      cores_[aux].queue = qid;
      cores_[aux].stage = static_cast<int>(st);
    }
    c.borrowed.push_back(qid);
    slot_queue.push_back(qid);
  }

  if (!plan.moves.empty()) {
    std::vector<int> sources;
    for (const auto& mv : plan.moves) {
      flows_[mv.flow].plan_dest = slot_queue[mv.to];
      sources.push_back(slot_queue[mv.from]);
    }
    std::sort(sources.begin(), sources.end());
    sources.erase(std::unique(sources.begin(), sources.end()), sources.end());
    for (int src : sources) {
      auto& in0 = queues_[src].stages[0].in;
      std::deque<Pkt> keep;
      for (const auto& p : in0) {
        int dest = flows_[p.flow].plan_dest;
        if (dest >= 0 && dest != src) {
          queues_[dest].stages[0].in.push_back(p);
        } else {
          keep.push_back(p);
        }
      }
      in0.swap(keep);
    }
    for (const auto& mv : plan.moves) {
      auto& f = flows_[mv.flow];
      int from = slot_queue[mv.from];
      int to = slot_queue[mv.to];
      c.counters.on_move(mv.flow, from, to, mv.packets);
      f.target = queues_[to].local ? -1 : to;
      f.plan_dest = -1;
      if (!queues_[to].local) queues_[to].members.push_back(mv.flow);
      digest(now, f.id, static_cast<std::uint64_t>(to));
    }
    metrics_.flow_migrations += plan.moves.size();
    for (int q : slot_queue) {
      auto& qq = queues_[q];
      if (!qq.alive || qq.stages[0].in.empty()) continue;
      cores_[qq.stages[0].core].window_active = true;
      kick(qq.stages[0].core);
    }
  }
}

void Sim::release_idle_queues(Core& c, Server& s) {
  std::vector<int> keep;
  for (int b : c.borrowed) {
    auto& q = queues_[b];
    bool idle = b != probe_queue_ && queue_backlog(q) == 0;
    for (const auto& st : q.stages)
      if (cores_[st.core].busy) idle = false;
    if (idle)
      for (auto m : q.members)
        if (flows_[m].target == b && flows_[m].pending > 0) idle = false;
    if (!idle) {
      keep.push_back(b);
      continue;
    }
    for (auto m : q.members)
      if (flows_[m].target == b) flows_[m].target = -1;
    c.counters.remove_queue(b, c.local_queue);
    for (const auto& st : q.stages) release_aux(s, st.core);
    q.alive = false;
    q.members.clear();
    q.members.shrink_to_fit();
  }
  c.borrowed.swap(keep);
}

void Sim::on_epoch(int sid) {
  auto& s = servers_[sid];
  Nanos now = now_;
  for (int id : s.dedicated) {
    auto& c = cores_[id];
    if (!c.touched) continue;
    auto stats = c.counters.update_stats();
    if (cfg_.record_epochs) record_epoch(c, now);
    auto& local = queues_[c.local_queue];
    if (boost_) boost_step(c, s, now);
    if (on_demand_) {
      std::uint64_t backlog = c.nic.size() + local.stages[0].in.size();
      if (backlog > cfg_.server.boost_threshold &&
          now - s.last_on_demand >= cfg_.server.on_demand_gap_ns) {
        s.last_on_demand = now;
        remap(s, now, true);
      }
    }
    if (core_mapper_) run_core_mapper(c, s, stats, now);
    release_idle_queues(c, s);
    if (c.debt > 0 && !c.busy) kick(c.id);

    // Saturation tracking restarts with the new epoch.
    auto reset = [&](Queue& q) {
      q.ep_packets = 0;
      q.ep_flows = 0;
      q.ep_idle = !cores_[q.stages[0].core].busy;
    };
    reset(local);
    for (int b : c.borrowed) reset(queues_[b]);
  }
  if (cfg_.audit) {
    if (metrics_.arrivals != metrics_.completions + metrics_.drops() + pending_total_ ||
        pending_total_ != physical_in_flight())
      metrics_.conservation_violations++;
  }
}

void Sim::remap(Server& s, Nanos now, bool on_demand) {
  Nanos elapsed = now - s.interval_start;
  if (elapsed <= 0) return;
  BucketStats st(cfg_.server.buckets);
  double windows = std::max(1.0, static_cast<double>(elapsed) / static_cast<double>(epoch_));
  for (std::size_t j = 0; j < st.size(); ++j) {
    st.rate[j] = static_cast<double>(s.bucket_pkts[j]) * 1e9 / static_cast<double>(elapsed);
    st.flows[j] = s.bucket_bf[j] / windows;
  }
  auto res = remap_greedy(st, s.latest, rates_, cfg_.server.margin);
  s.latest = res.mapping;
  Nanos eff = s.installer.install(res.mapping, now);
  push(eff, kMappingEffective, s.id);
  metrics_.remaps++;
  if (on_demand) metrics_.on_demand_remaps++;
  std::size_t active = res.mapping.active_count();
  metrics_.intervals.push_back({now, s.id, active, res.migrated.size(), s.interval_boost_entries,
                                s.interval_boost_exits, res.feasible, on_demand});
  ingress_.report_cores(static_cast<std::size_t>(s.id), active);
  if (!on_demand) {
    s.interval_start = now;
    std::fill(s.bucket_pkts.begin(), s.bucket_pkts.end(), 0);
    std::fill(s.bucket_bf.begin(), s.bucket_bf.end(), 0.0);
    s.interval_boost_entries = s.interval_boost_exits = 0;
  }
  digest(now, 0x7e3a, active);
}

void Sim::on_tick(int sid) {
  remap(servers_[sid], now_, false);
}

void Sim::on_mapping_effective(int sid) {
  auto& s = servers_[sid];
  while (auto m = s.installer.take_due(now_)) s.mapping = std::move(*m);
}

void Sim::warm_start() {
  Nanos window = cfg_.server.warm_window_ns;
  std::vector<BucketStats> st(servers_.size(), BucketStats(cfg_.server.buckets));
  std::vector<std::int64_t> last_window(flows_.size(), -1);
  for (std::size_t i = 0; i < trace_.size() && trace_[i].arrival_ns < window; ++i) {
    auto& f = flows_[flow_of_[i]];
    if (f.server < 0) f.server = static_cast<int>(ingress_.steer(f.dst));
    auto& b = st[f.server];
    b.rate[f.bucket] += 1e9 / static_cast<double>(window);
    std::int64_t w = trace_[i].arrival_ns / epoch_;
    if (last_window[flow_of_[i]] != w) {
      last_window[flow_of_[i]] = w;
      b.flows[f.bucket] += 1.0;
    }
  }
  double windows = std::max(1.0, static_cast<double>(window) / static_cast<double>(epoch_));
  for (auto& s : servers_) {
    auto& b = st[s.id];
    for (auto& v : b.flows) v /= windows;
    auto res = remap_greedy(b, s.mapping, rates_, cfg_.server.margin);
    s.mapping = res.mapping;
    s.latest = res.mapping;
    ingress_.report_cores(static_cast<std::size_t>(s.id), res.mapping.active_count());
    metrics_.intervals.push_back(
        {0, s.id, res.mapping.active_count(), res.migrated.size(), 0, 0, res.feasible, false});
  }
}

bool Sim::core_has_work(const Core& c) const {
  if (!c.aux) {
    if (!c.nic.empty()) return true;
    const auto& local = queues_[c.local_queue];
    return local.stages[0].core == c.id && !local.stages[0].in.empty();
  }
  if (c.queue < 0) return false;
  return !queues_[c.queue].stages[static_cast<std::size_t>(c.stage)].in.empty();
}

void Sim::sample_until(Nanos t) {
  while (next_sample_ + cfg_.sample_window_ns <= t) {
    std::uint64_t n = 0;
    for (auto& c : cores_) {
      if (c.window_active || c.busy || core_has_work(c)) ++n;
      c.window_active = false;
    }
    sample_sum_ += n;
    metrics_.core_samples++;
    if (cfg_.record_samples)
      metrics_.active_core_series.push_back(static_cast<std::uint16_t>(std::min<std::uint64_t>(n, 65535)));
    next_sample_ += cfg_.sample_window_ns;
  }
}

std::uint64_t Sim::physical_in_flight() const {
  std::uint64_t n = 0;
  for (const auto& c : cores_) {
    n += c.nic.size() + c.dispatch.size();
    if (c.busy) n += c.proc.size();
  }
  for (const auto& q : queues_) n += queue_backlog(q);
  return n;
}

Metrics Sim::run() {
  metrics_.seed = cfg_.seed;
  metrics_.config_hash = cfg_.hash();
  latencies_.reserve(trace_.size());

  Nanos end = trace_.empty() ? 0 : trace_.back().arrival_ns + cfg_.drain_ns;
  if (server_mapper_ && !trace_.empty()) {
    if (cfg_.server.warm_start) warm_start();
    for (auto& s : servers_) push(cfg_.server.interval_ns, kServerTick, s.id);
  }
  if (epochs_ && !trace_.empty())
    for (auto& s : servers_) push(epoch_, kEpochBoundary, s.id);
  push(end, kTraceEnd, 0);

  std::size_t next = 0;
  for (;;) {
    bool take_arrival = false;
    if (next < trace_.size()) {
      const auto& top = events_.top();
      Nanos ta = trace_[next].arrival_ns;
      take_arrival = ta < top.time || (ta == top.time && kArrival < top.kind);
    }
    if (take_arrival) {
      now_ = trace_[next].arrival_ns;
      sample_until(now_);
      on_arrival(next++);
      wake_unfenced();
      continue;
    }
    Event e = events_.top();
    events_.pop();
    now_ = e.time;
    sample_until(now_);
    digest(static_cast<std::uint64_t>(e.time), static_cast<std::uint64_t>(e.kind),
           static_cast<std::uint64_t>(e.arg));
    if (e.kind == kTraceEnd) break;
    switch (e.kind) {
      case kBatchComplete: on_batch_complete(e.arg); break;
      case kMappingEffective: on_mapping_effective(e.arg); break;
      case kEpochBoundary:
        epoch_index_ = e.time / epoch_;
        on_epoch(e.arg);
        if (e.time + epoch_ <= end) push(e.time + epoch_, kEpochBoundary, e.arg);
        break;
      case kServerTick:
        on_tick(e.arg);
        if (e.time + cfg_.server.interval_ns <= end)
          push(e.time + cfg_.server.interval_ns, kServerTick, e.arg);
        break;
      default: break;
    }
    wake_unfenced();
  }

  metrics_.in_flight = pending_total_;
  if (cfg_.audit && pending_total_ != physical_in_flight()) metrics_.conservation_violations++;
  if (!metrics_.conserved()) metrics_.conservation_violations++;
  metrics_.p50 = percentile(latencies_, 50);
  metrics_.p99 = percentile(latencies_, 99);
  metrics_.max_latency = latencies_.empty() ? 0 : *std::max_element(latencies_.begin(), latencies_.end());
  metrics_.avg_cores = metrics_.core_samples
                           ? static_cast<double>(sample_sum_) / static_cast<double>(metrics_.core_samples)
                           : 0.0;
  metrics_.loss_rate = metrics_.arrivals
                           ? static_cast<double>(metrics_.drops()) / static_cast<double>(metrics_.arrivals)
                           : 0.0;
  metrics_.servers_recruited = ingress_.recruited_count();
  metrics_.ingress_saturations = ingress_.saturation_events();
  return std::move(metrics_);
}

}  // namespace

Metrics run(const SimConfig& config, const Predictors& predictors, const Trace& trace) {
  Sim sim(config, predictors, trace);
  return sim.run();
}

Metrics run_mode(SimConfig config, Mode mode, const Predictors& predictors, const Trace& trace) {
  config.mode = mode;
  return run(config, predictors, trace);
}

}  // namespace nfvscale

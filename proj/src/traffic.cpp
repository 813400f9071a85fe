#include "nfvscale/traffic.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_map>

namespace nfvscale {

void WorkloadSpec::validate() const {
  if (flow_rate < 0) throw ConfigError("workload.flow_rate must be >= 0");
  if (mean_packets < 1) throw ConfigError("workload.mean_packets must be >= 1");
  if (flow_pps <= 0) throw ConfigError("workload.flow_pps must be > 0");
  if (duration_ns <= 0) throw ConfigError("workload.duration must be > 0");
  if (address_pool == 0) throw ConfigError("workload.address_pool must be > 0");
  if (count_dist == PacketCountDist::Pareto && pareto_shape <= 1)
    throw ConfigError("workload.pareto_shape must be > 1");
  for (const auto& w : whales)
    if (w.start_ns < 0 || w.duration_ns <= 0 || w.rate_pps <= 0)
      throw ConfigError("whale entries need start >= 0, positive duration and rate");
  for (const auto& s : storms)
    if (s.start_ns < 0 || s.window_ns <= 0 || s.flow_count == 0)
      throw ConfigError("storm entries need start >= 0, positive window and flow count");
}

std::uint32_t pool_address(std::uint32_t slot, std::uint32_t pool_size) {
  std::uint64_t stride = (std::uint64_t{1} << 32) / pool_size;
  return static_cast<std::uint32_t>(slot * stride);
}

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
bool parse_num(const std::string& s, T& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

bool parse_addr(const std::string& s, std::uint32_t& out) {
  if (s.find('.') == std::string::npos) return parse_num(s, out);
  std::uint32_t v = 0;
  std::size_t pos = 0;
  for (int i = 0; i < 4; ++i) {
    auto end = s.find('.', pos);
    if ((i < 3) != (end != std::string::npos)) return false;
    std::uint32_t octet = 0;
    if (!parse_num(s.substr(pos, end - pos), octet) || octet > 255) return false;
    v = (v << 8) | octet;
    pos = end + 1;
  }
  out = v;
  return true;
}

}  // namespace

Trace parse_trace_text(const std::string& text) {
  Trace out;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, raw)) {
    ++line_no;
    auto line = trim(raw);
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (std::isalpha(static_cast<unsigned char>(line[0]))) continue;
    }
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(trim(f));
    if (fields.size() != 4)
      throw TraceError("expected 4 comma-separated fields", line_no);
    PacketRecord r;
    if (!parse_num(fields[0], r.arrival_ns) || r.arrival_ns < 0)
      throw TraceError("bad arrival_ns '" + fields[0] + "'", line_no);
    if (!parse_num(fields[1], r.flow))
      throw TraceError("bad flow_id '" + fields[1] + "'", line_no);
    if (!parse_addr(fields[2], r.dst_addr))
      throw TraceError("bad dst_addr '" + fields[2] + "'", line_no);
    if (!parse_num(fields[3], r.size))
      throw TraceError("bad size '" + fields[3] + "'", line_no);
    if (!out.empty() && r.arrival_ns < out.back().arrival_ns)
      throw TraceError("out-of-order arrival_ns", line_no);
    out.push_back(r);
  }
  if (out.empty()) throw TraceError("trace is empty", 0);
  return out;
}

Trace parse_trace(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw TraceError("cannot open trace file " + path, 0);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_trace_text(ss.str());
}

std::string format_trace(const Trace& trace) {
  std::string out = "arrival_ns,flow_id,dst_addr,size\n";
  out.reserve(trace.size() * 40);
  for (const auto& r : trace) {
    out += std::to_string(r.arrival_ns);
    out += ',';
    out += std::to_string(r.flow);
    out += ',';
    out += std::to_string(r.dst_addr);
    out += ',';
    out += std::to_string(r.size);
    out += '\n';
  }
  return out;
}

void write_trace(const std::string& path, const Trace& trace) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write trace file " + path);
  f << format_trace(trace);
}

namespace {

struct Gen {
  const WorkloadSpec& spec;
  std::mt19937_64 rng;
  std::vector<std::pair<PacketRecord, std::uint64_t>> out;  // record, seq
  FlowId next_flow = 1;

  explicit Gen(const WorkloadSpec& s) : spec(s), rng(s.seed) {}

  std::uint32_t draw_count() {
    switch (spec.count_dist) {
      case PacketCountDist::Fixed:
        return static_cast<std::uint32_t>(std::llround(spec.mean_packets));
      case PacketCountDist::Geometric: {
        if (spec.mean_packets <= 1) return 1;
        std::geometric_distribution<std::uint32_t> g(1.0 / spec.mean_packets);
        return 1 + g(rng);
      }
      case PacketCountDist::Pareto: {
        // Pareto with the requested mean; xm chosen so E[X] = mean.
        double a = spec.pareto_shape;
        double xm = spec.mean_packets * (a - 1) / a;
        std::uniform_real_distribution<double> u(0.0, 1.0);
        double x = xm / std::pow(1.0 - u(rng), 1.0 / a);
        return static_cast<std::uint32_t>(std::max(1.0, std::round(x)));
      }
    }
    return 1;
  }

  std::uint32_t draw_addr() {
    std::uniform_int_distribution<std::uint32_t> d(0, spec.address_pool - 1);
    return pool_address(d(rng), spec.address_pool);
  }

  void emit(Nanos t, FlowId id, std::uint32_t addr) {
    out.push_back({PacketRecord{t, id, addr, spec.packet_size}, out.size()});
  }

  // Packets of one paced flow starting at t0; stops at `until` if set.
  void emit_flow(Nanos t0, std::uint32_t count, Nanos until) {
    FlowId id = next_flow++;
    auto addr = draw_addr();
    double gap = 1e9 / spec.flow_pps;
    Nanos step = static_cast<Nanos>(std::ceil(gap));
    std::exponential_distribution<double> ex(1.0 / gap);
    Nanos t = t0;
    for (std::uint32_t k = 0; k < count; ++k) {
      if (until > 0 && t >= until) break;
      emit(t, id, addr);
      t += spec.shape_flows ? step : std::max<Nanos>(1, std::llround(ex(rng)));
    }
  }
};

}  // namespace

Trace generate(const WorkloadSpec& spec) {
  spec.validate();
  Gen g(spec);
  if (spec.flow_rate > 0) {
    std::exponential_distribution<double> iat(spec.flow_rate / 1e9);
    double t = iat(g.rng);
    while (t < static_cast<double>(spec.duration_ns)) {
      g.emit_flow(static_cast<Nanos>(t), g.draw_count(), spec.duration_ns);
      t += iat(g.rng);
    }
  }
  for (const auto& w : spec.whales) {
    FlowId id = g.next_flow++;
    auto addr = g.draw_addr();
    auto n = static_cast<std::uint64_t>(
        std::ceil(w.rate_pps * static_cast<double>(w.duration_ns) / 1e9));
    for (std::uint64_t i = 0; i < n; ++i)
      g.emit(w.start_ns + static_cast<Nanos>(static_cast<double>(i) * 1e9 /
                                             w.rate_pps),
             id, addr);
  }
  for (const auto& s : spec.storms) {
    std::uniform_int_distribution<Nanos> start(s.start_ns,
                                               s.start_ns + s.window_ns);
    for (std::uint64_t i = 0; i < s.flow_count; ++i) {
      auto count = s.packets_per_flow ? s.packets_per_flow : g.draw_count();
      g.emit_flow(start(g.rng), count, 0);
    }
  }
  std::sort(g.out.begin(), g.out.end(), [](const auto& a, const auto& b) {
    if (a.first.arrival_ns != b.first.arrival_ns)
      return a.first.arrival_ns < b.first.arrival_ns;
    return a.second < b.second;
  });
  Trace trace;
  trace.reserve(g.out.size());
  for (auto& [r, seq] : g.out) trace.push_back(r);
  return trace;
}

TraceStats compute_stats(const Trace& trace, Nanos window_ns) {
  TraceStats st;
  st.packet_count = trace.size();
  if (trace.empty()) return st;
  std::unordered_map<FlowId, std::vector<Nanos>> times;
  for (const auto& r : trace) times[r.flow].push_back(r.arrival_ns);
  st.flow_count = times.size();
  std::size_t best = 0;
  for (const auto& [id, ts] : times) {
    std::size_t lo = 0;
    for (std::size_t hi = 0; hi < ts.size(); ++hi) {
      while (ts[hi] - ts[lo] >= window_ns) ++lo;
      best = std::max(best, hi - lo + 1);
    }
  }
  st.max_flow_rate = static_cast<double>(best) * 1e9 / static_cast<double>(window_ns);
  Nanos span = trace.back().arrival_ns - trace.front().arrival_ns;
  st.flow_arrival_rate =
      span > 0 ? static_cast<double>(st.flow_count) * 1e9 / static_cast<double>(span)
               : 0.0;
  return st;
}

}  // namespace nfvscale

#include "nfvscale/predictor.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "nfvscale/core_mapper.hpp"

namespace nfvscale {

CapacityFrontier::CapacityFrontier(Nanos epoch_ns, std::vector<FrontierPoint> points)
    : epoch_ns_(epoch_ns), points_(std::move(points)) {
  if (epoch_ns_ <= 0) throw PredictorError("frontier epoch must be positive");
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const auto& pt = points_[i];
    if (pt.flows == 0 || pt.packets == 0)
      throw PredictorError("frontier points must be positive");
    if (i > 0 && pt.flows <= points_[i - 1].flows)
      throw PredictorError("frontier flows must be strictly increasing");
    if (i > 0 && pt.packets > points_[i - 1].packets)
      throw PredictorError("frontier packets must be non-increasing");
  }
}

CapacityFrontier CapacityFrontier::from_observations(
    Nanos epoch_ns, const std::vector<FrontierPoint>& obs) {
  std::map<std::uint32_t, std::uint32_t> best;
  for (const auto& o : obs) {
    if (o.flows == 0 || o.packets == 0) continue;
    auto& b = best[o.flows];
    b = std::max(b, o.packets);
  }
  // Suffix maxima: a core that managed p packets with f flows can also
  // manage p packets with fewer flows.
  std::vector<FrontierPoint> pts;
  std::uint32_t run = 0;
  for (auto it = best.rbegin(); it != best.rend(); ++it) {
    run = std::max(run, it->second);
    pts.push_back({it->first, run});
  }
  std::reverse(pts.begin(), pts.end());
  // Equal-p runs collapse onto their largest f; lookup semantics unchanged.
  std::vector<FrontierPoint> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i + 1 < pts.size() && pts[i + 1].packets == pts[i].packets) continue;
    out.push_back(pts[i]);
  }
  return CapacityFrontier(epoch_ns, std::move(out));
}

CapacityFrontier CapacityFrontier::constant(Nanos epoch_ns, std::uint32_t packets,
                                            std::uint32_t max_flows) {
  return CapacityFrontier(epoch_ns, {{max_flows, packets}});
}

std::optional<std::uint32_t> CapacityFrontier::capacity_at(std::uint64_t f) const {
  auto it = std::lower_bound(
      points_.begin(), points_.end(), f,
      [](const FrontierPoint& pt, std::uint64_t v) { return pt.flows < v; });
  if (it == points_.end()) return std::nullopt;
  return it->packets;
}

bool CapacityFrontier::admits(std::uint64_t f, std::uint64_t p) const {
  if (p == 0) return true;
  auto cap = capacity_at(f);
  return cap && p <= *cap;
}

std::uint32_t CapacityFrontier::min_packets() const {
  return points_.empty() ? 0 : points_.back().packets;
}
std::uint32_t CapacityFrontier::max_packets() const {
  return points_.empty() ? 0 : points_.front().packets;
}
std::uint32_t CapacityFrontier::max_flows() const {
  return points_.empty() ? 0 : points_.back().flows;
}

FrontierFamily FrontierFamily::static_safe() const {
  FrontierFamily out = *this;
  const auto& base = frontiers.at(0);
  out.frontiers[0] =
      CapacityFrontier::constant(base.epoch(), base.min_packets(), base.max_flows());
  return out;
}

FrontierFamily FrontierFamily::static_unsafe() const {
  FrontierFamily out = *this;
  const auto& base = frontiers.at(0);
  out.frontiers[0] =
      CapacityFrontier::constant(base.epoch(), base.max_packets(), base.max_flows());
  return out;
}

RateThresholdTable::RateThresholdTable(std::vector<Entry> entries)
    : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].flows == 0) throw PredictorError("rate table flows must be positive");
    if (entries_[i].rate < 0) throw PredictorError("rate table rates must be non-negative");
    if (i > 0 && entries_[i].flows <= entries_[i - 1].flows)
      throw PredictorError("rate table flows must be strictly increasing");
    if (i > 0 && entries_[i].rate > entries_[i - 1].rate)
      throw PredictorError("rate table rates must be non-increasing");
  }
}

double RateThresholdTable::threshold(double flows) const {
  for (const auto& e : entries_)
    if (static_cast<double>(e.flows) >= flows) return e.rate;
  return 0.0;
}

namespace {

std::string header_text(const char* kind, const PredictorHeader& h) {
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "# nfvscale %s v1\nchain_hash=%016" PRIx64 "\nepoch_ns=%" PRId64
                "\nslo_ns=%" PRId64 "\n",
                kind, h.chain_hash, h.epoch_ns, h.slo_ns);
  return buf;
}

struct Lines {
  std::vector<std::string> v;
  std::size_t i = 0;
  explicit Lines(const std::string& text) {
    std::istringstream in(text);
    std::string l;
    while (std::getline(in, l)) {
      if (!l.empty() && l.back() == '\r') l.pop_back();
      if (!l.empty()) v.push_back(l);
    }
  }
  bool done() const { return i >= v.size(); }
  const std::string& next(const char* what) {
    if (done()) throw PredictorError(std::string("truncated predictor file: missing ") + what);
    return v[i++];
  }
};

std::string value_of(const std::string& line, const std::string& key) {
  if (line.rfind(key + "=", 0) != 0)
    throw PredictorError("expected '" + key + "=' in predictor file, got '" + line + "'");
  return line.substr(key.size() + 1);
}

PredictorHeader parse_header(Lines& in, const char* kind) {
  std::string magic = std::string("# nfvscale ") + kind + " v1";
  if (in.next("header") != magic)
    throw PredictorError(std::string("not a version-1 ") + kind + " file");
  PredictorHeader h;
  try {
    h.chain_hash = std::stoull(value_of(in.next("chain_hash"), "chain_hash"), nullptr, 16);
    h.epoch_ns = std::stoll(value_of(in.next("epoch_ns"), "epoch_ns"));
    h.slo_ns = std::stoll(value_of(in.next("slo_ns"), "slo_ns"));
  } catch (const std::logic_error& e) {
    throw PredictorError(std::string("bad predictor header: ") + e.what());
  }
  return h;
}

}  // namespace

std::string serialize_frontiers(const PredictorHeader& h, const FrontierFamily& fam) {
  std::string out = header_text("frontier", h);
  for (std::size_t n = 0; n < fam.frontiers.size(); ++n) {
    out += "scheme n=" + std::to_string(n + 1) + " cuts=";
    const auto& cuts = fam.schemes.at(n).cut_points;
    for (std::size_t i = 0; i < cuts.size(); ++i)
      out += (i ? ":" : "") + std::to_string(cuts[i]);
    out += " points=" + std::to_string(fam.frontiers[n].points().size()) + "\n";
    for (const auto& pt : fam.frontiers[n].points())
      out += std::to_string(pt.flows) + "," + std::to_string(pt.packets) + "\n";
  }
  return out;
}

FrontierFamily parse_frontiers(const std::string& text, PredictorHeader* hout) {
  Lines in(text);
  auto h = parse_header(in, "frontier");
  FrontierFamily fam;
  while (!in.done()) {
    const auto& line = in.next("scheme");
    unsigned n = 0;
    char cuts[128] = {0};
    std::size_t npts = 0;
    if (std::sscanf(line.c_str(), "scheme n=%u cuts=%127[0-9:] points=%zu", &n, cuts, &npts) != 3 &&
        std::sscanf(line.c_str(), "scheme n=%u cuts= points=%zu", &n, &npts) != 2)
      throw PredictorError("bad scheme line '" + line + "'");
    if (n != fam.frontiers.size() + 1) throw PredictorError("schemes out of order");
    SplitScheme s;
    std::stringstream cs(cuts);
    std::string c;
    while (std::getline(cs, c, ':'))
      if (!c.empty()) s.cut_points.push_back(std::stoul(c));
    std::vector<FrontierPoint> pts;
    for (std::size_t k = 0; k < npts; ++k) {
      const auto& row = in.next("frontier row");
      FrontierPoint pt;
      if (std::sscanf(row.c_str(), "%u,%u", &pt.flows, &pt.packets) != 2)
        throw PredictorError("bad frontier row '" + row + "'");
      pts.push_back(pt);
    }
    fam.schemes.push_back(s);
    fam.frontiers.emplace_back(h.epoch_ns, std::move(pts));
  }
  if (fam.frontiers.empty()) throw PredictorError("frontier file has no schemes");
  if (hout) *hout = h;
  return fam;
}

std::string serialize_rate_table(const PredictorHeader& h, const RateThresholdTable& t) {
  std::string out = header_text("rate-table", h);
  for (const auto& e : t.entries()) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%u,%.3f\n", e.flows, e.rate);
    out += buf;
  }
  return out;
}

RateThresholdTable parse_rate_table(const std::string& text, PredictorHeader* hout) {
  Lines in(text);
  auto h = parse_header(in, "rate-table");
  std::vector<RateThresholdTable::Entry> rows;
  while (!in.done()) {
    const auto& row = in.next("row");
    RateThresholdTable::Entry e;
    if (std::sscanf(row.c_str(), "%u,%lf", &e.flows, &e.rate) != 2)
      throw PredictorError("bad rate-table row '" + row + "'");
    rows.push_back(e);
  }
  if (hout) *hout = h;
  return RateThresholdTable(std::move(rows));
}

void check_header(const PredictorHeader& h, std::uint64_t chain_hash, Nanos slo_ns,
                  const std::string& what) {
  if (h.chain_hash != chain_hash)
    throw PredictorError(what + ": trained for a different chain (hash mismatch)");
  if (h.slo_ns != slo_ns)
    throw PredictorError(what + ": trained for slo " + std::to_string(h.slo_ns) +
                         " ns, config wants " + std::to_string(slo_ns) + " ns");
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path);
  f << content;
}

BacklogPartition partition_backlog(const FrontierFamily& family,
                                   const std::vector<BacklogFlow>& backlog) {
  PlanInput in;
  in.queues.push_back({0, 1});
  for (const auto& b : backlog) in.flows.push_back({b.flow, b.task, 0});
  in.aux_available = backlog.size() + 1;
  PlanOptions opt;
  opt.allow_split = false;
  auto plan = absorb_bursts(in, family, opt);

  BacklogPartition out;
  out.groups.resize(plan.loads.size());
  for (std::size_t q = 0; q < plan.loads.size(); ++q) {
    out.groups[q].f = plan.loads[q].f;
    out.groups[q].p = plan.loads[q].p;
  }
  for (std::size_t i = 0; i < backlog.size(); ++i) {
    const auto& b = backlog[i];
    auto slot = plan.placement[i];
    if (slot < 0)
      out.whales.push_back(b.flow);
    else
      out.groups[static_cast<std::size_t>(slot)].flows.push_back(b.flow);
  }
  return out;
}

}  // namespace nfvscale

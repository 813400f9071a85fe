#include <cstdio>
#include <filesystem>
#include <map>
#include <set>

#include "doctest.h"
#include "nfvscale/traffic.hpp"

using namespace nfvscale;

TEST_CASE("parse a minimal trace") {
  auto t = parse_trace_text("0,1,10.0.0.1,64\n10,1,10.0.0.1,64\n20,1,10.0.0.1,64\n");
  REQUIRE(t.size() == 3);
  CHECK(t[0].dst_addr == 0x0a000001u);
  CHECK(compute_stats(t).flow_count == 1);
  auto h = parse_trace_text("arrival_ns,flow_id,dst_addr,size\n5,2,167772161,64\n");
  REQUIRE(h.size() == 1);
  CHECK(h[0].dst_addr == 167772161u);
}

TEST_CASE("trace errors name the line") {
  try {
    parse_trace_text("10,1,1,64\n5,1,1,64\n");
    FAIL("expected an error");
  } catch (const TraceError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("out-of-order") != std::string::npos);
  }
  try {
    parse_trace_text("0,1,1,64\n1,1,1\n");
    FAIL("expected an error");
  } catch (const TraceError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(parse_trace_text(""), TraceError);
  CHECK_THROWS_AS(parse_trace_text("x,1,1,64\n0,abc,1,64\n"), TraceError);
  CHECK_THROWS_AS(parse_trace_text("0,1,300.0.0.1,64\n"), TraceError);
  CHECK_THROWS_AS(parse_trace("/nonexistent/trace.csv"), TraceError);
}

TEST_CASE("generated traces round-trip through a file") {
  WorkloadSpec w;
  w.flow_rate = 2000;
  w.duration_ns = 200 * kMilli;
  w.whales = {{50 * kMilli, kMilli, 1e5}};
  auto t = generate(w);
  REQUIRE(t.size() >= 1000);
  t.resize(1000);
  auto path = (std::filesystem::temp_directory_path() / "nfvscale_roundtrip.csv").string();
  write_trace(path, t);
  CHECK(parse_trace(path) == t);
  std::remove(path.c_str());
}

TEST_CASE("generator determinism and the empty workload") {
  WorkloadSpec w;
  w.flow_rate = 300;
  w.storms = {{10 * kMilli, kMilli, 50, 0}};
  w.duration_ns = 100 * kMilli;
  CHECK(format_trace(generate(w)) == format_trace(generate(w)));
  auto other = w;
  other.seed = 2;
  CHECK(generate(w) != generate(other));

  WorkloadSpec none;
  none.flow_rate = 0;
  CHECK(generate(none).empty());
}

TEST_CASE("a 10^3-packet whale in 10 ms outruns a 10 us core") {
  WorkloadSpec w;
  w.flow_rate = 0;
  w.whales = {{0, 10 * kMilli, 1e5}};
  w.duration_ns = 10 * kMilli;
  auto t = generate(w);
  CHECK(t.size() >= 1000);
  auto st = compute_stats(t);
  CHECK(st.flow_count == 1);
  CHECK(st.max_flow_rate >= 1e5);
  // Demand in the window fills one core's 10 us per-packet budget.
  CHECK(static_cast<Nanos>(t.size()) * 10 * kMicro >= w.duration_ns);
}

TEST_CASE("storms produce exactly N new flows inside their window") {
  WorkloadSpec w;
  w.flow_rate = 0;
  w.flow_pps = 20000;
  w.storms = {{5 * kMilli, 2 * kMilli, 300, 3}, {20 * kMilli, kMilli, 40, 0}};
  auto t = generate(w);
  std::map<FlowId, Nanos> first;
  for (const auto& r : t) first.emplace(r.flow, r.arrival_ns);
  CHECK(first.size() == 340);
  std::size_t in_a = 0, in_b = 0;
  for (auto& [id, t0] : first) {
    in_a += t0 >= 5 * kMilli && t0 <= 7 * kMilli;
    in_b += t0 >= 20 * kMilli && t0 <= 21 * kMilli;
  }
  CHECK(in_a == 300);
  CHECK(in_b == 40);
}

TEST_CASE("shaped flows never burst") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    WorkloadSpec w;
    w.seed = seed;
    w.flow_rate = 2000;
    w.flow_pps = 7000;
    w.mean_packets = 15;
    w.shape_flows = true;
    w.duration_ns = 100 * kMilli;
    w.storms = {{30 * kMilli, 3 * kMilli, 200, 0}};
    auto t = generate(w);
    std::map<FlowId, Nanos> last;
    Nanos pace = static_cast<Nanos>(1e9 / w.flow_pps);
    bool ok = true;
    for (const auto& r : t) {
      auto it = last.find(r.flow);
      if (it != last.end() && r.arrival_ns - it->second < pace) ok = false;
      last[r.flow] = r.arrival_ns;
    }
    CHECK(ok);
  }
}

TEST_CASE("stats track the generator's parameters") {
  WorkloadSpec w;
  w.flow_rate = 1000;
  w.mean_packets = 10;
  w.flow_pps = 1000;
  w.duration_ns = 10 * kSecond;
  auto t = generate(w);
  auto st = compute_stats(t);
  CHECK(st.flow_arrival_rate == doctest::Approx(1000).epsilon(0.05));
  CHECK(static_cast<double>(st.packet_count) == doctest::Approx(1000 * 10 * 10.0).epsilon(0.05));
  CHECK(st.flow_count <= st.packet_count);

  Trace three = {{0, 1, 0, 64}, {kSecond / 2, 1, 0, 64}, {kSecond, 1, 0, 64}};
  auto s3 = compute_stats(three);
  CHECK(s3.flow_count == 1);
  CHECK(s3.packet_count == 3);
}

TEST_CASE("pool addresses land in distinct /16 prefixes") {
  std::set<std::uint32_t> prefixes;
  for (std::uint32_t i = 0; i < (1u << 16); i += 97) prefixes.insert(pool_address(i, 1u << 16) >> 16);
  CHECK(prefixes.size() == ((1u << 16) + 96) / 97);
}

TEST_CASE("workload validation") {
  WorkloadSpec w;
  w.flow_rate = -1;
  CHECK_THROWS_AS(w.validate(), ConfigError);
  w = {};
  w.flow_pps = 0;
  CHECK_THROWS_AS(w.validate(), ConfigError);
  w = {};
  w.whales = {{0, kMilli, 0}};
  CHECK_THROWS_AS(w.validate(), ConfigError);
}

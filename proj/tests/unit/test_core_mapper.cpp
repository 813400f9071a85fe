#include <map>
#include <random>

#include "doctest.h"
#include "nfvscale/core_mapper.hpp"

using namespace nfvscale;

TEST_CASE("epoch is half the slo") {
  CHECK(epoch_length(200 * kMicro) == 100 * kMicro);
  CHECK(epoch_length(500 * kMicro) == 250 * kMicro);
  CHECK(epoch_length(100 * kMicro) == 50 * kMicro);
  CHECK_THROWS_AS(epoch_length(0), ConfigError);
}

TEST_CASE("counters: drained and partly drained queues") {
  CoreCounters c;
  c.add_queue(0);
  for (int i = 0; i < 40; ++i) c.on_arrival(7, 0);
  for (int i = 0; i < 40; ++i) c.on_processed(7);
  auto st = c.update_stats();
  REQUIRE(st.queue(0));
  CHECK(st.queue(0)->queued == 0);
  CHECK(st.queue(0)->flows_queued == 0);

  CoreCounters d;
  d.add_queue(0);
  for (int i = 0; i < 100; ++i) d.on_arrival(3, 0);
  for (int i = 0; i < 60; ++i) d.on_processed(3);
  st = d.update_stats();
  CHECK(st.queue(0)->queued == 40);
  CHECK(st.queue(0)->flows_queued == 1);
  REQUIRE(st.flows.size() == 1);
  CHECK(st.flows[0].task_size == 40);
  // Arrival and processed counts restart; the backlog carries.
  st = d.update_stats();
  CHECK(st.queue(0)->arrived == 0);
  CHECK(st.queue(0)->queued == 40);
  CHECK_THROWS(d.on_processed(99));
}

TEST_CASE("counters agree with a per-packet recount") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    CoreCounters c;
    std::vector<int> queues = {0, 1, 2};
    for (int q : queues) c.add_queue(q);
    std::map<std::uint32_t, int> where;         // flow -> queue
    std::map<std::uint32_t, std::uint64_t> held;  // flow -> queued packets
    for (int epoch = 0; epoch < 20; ++epoch) {
      for (int step = 0; step < 200; ++step) {
        std::uint32_t flow = rng() % 12;
        switch (rng() % 4) {
          case 0:
          case 1: {
            int q = where.count(flow) ? where[flow] : static_cast<int>(rng() % 3);
            where[flow] = q;
            c.on_arrival(flow, q);
            held[flow]++;
            break;
          }
          case 2:
            if (held[flow] > 0) {
              c.on_processed(flow);
              held[flow]--;
            }
            break;
          default:
            if (where.count(flow) && held[flow] > 0) {
              int to = static_cast<int>(rng() % 3);
              c.on_move(flow, where[flow], to, held[flow]);
              where[flow] = to;
            }
        }
      }
      auto st = c.update_stats();
      std::map<int, std::uint64_t> q_pk, q_fl;
      for (auto& [f, n] : held)
        if (n) q_pk[where[f]] += n, q_fl[where[f]]++;
      for (int q : queues) {
        CHECK(st.queue(q)->queued == q_pk[q]);
        CHECK(st.queue(q)->flows_queued == q_fl[q]);
      }
      for (const auto& fs : st.flows) {
        CHECK(fs.task_size == held[fs.flow]);
        if (fs.task_size) CHECK(fs.queue == where[fs.flow]);
      }
      for (auto& [f, n] : held) {
        if (n == 0) where.erase(f);
      }
    }
  }
}

TEST_CASE("removing a queue hands its flows to the heir") {
  CoreCounters c;
  c.add_queue(0);
  c.add_queue(5);
  c.on_arrival(1, 5);
  c.on_arrival(1, 5);
  c.remove_queue(5, 0);
  CHECK_FALSE(c.has_queue(5));
  c.on_processed(1);
  auto st = c.update_stats();
  CHECK(st.queue(0)->queued == 1);
  CHECK(st.flows.at(0).queue == 0);
}

namespace {

FrontierFamily family() {
  FrontierFamily fam;
  fam.schemes = {SplitScheme{}, SplitScheme{{1}}, SplitScheme{{1, 2}}};
  fam.frontiers = {CapacityFrontier(100 * kMicro, {{10, 96}, {55, 64}}),
                   CapacityFrontier(100 * kMicro, {{4, 160}}),
                   CapacityFrontier(100 * kMicro, {{2, 224}})};
  return fam;
}

PlanInput backlog(std::size_t flows, std::uint64_t packets, std::size_t aux) {
  PlanInput in;
  in.queues = {{0, 1}};
  for (std::size_t i = 0; i < flows; ++i)
    in.flows.push_back({static_cast<std::uint32_t>(i + 1), packets / flows + (i < packets % flows), 0});
  in.aux_available = aux;
  return in;
}

}  // namespace

TEST_CASE("an admitted backlog yields an empty plan") {
  auto plan = absorb_bursts(backlog(20, 60, 8), family(), {});
  CHECK(plan.moves.empty());
  CHECK(plan.cores_requested == 0);
  CHECK_FALSE(plan.at_risk);
}

TEST_CASE("a 55-flow, 220-packet backlog needs borrowed queues") {
  auto plan = absorb_bursts(backlog(55, 220, 8), family(), {});
  CHECK(plan.loads.size() - plan.existing >= 2);
  CHECK_FALSE(plan.moves.empty());
  for (const auto& l : plan.loads) CHECK(family().admits(l.level, l.f, l.p));
}

TEST_CASE("an exhausted pool degrades to best effort") {
  auto plan = absorb_bursts(backlog(55, 220, 0), family(), {});
  CHECK(plan.at_risk);
  CHECK(plan.moves.empty());
}

TEST_CASE("random backlogs: every planned queue is admitted and nothing is lost") {
  std::mt19937_64 rng(17);
  auto fam = family();
  for (int trial = 0; trial < 1000; ++trial) {
    PlanInput in;
    in.queues = {{0, 1}};
    std::size_t borrowed = rng() % 3;
    for (std::size_t b = 0; b < borrowed; ++b) in.queues.push_back({static_cast<int>(b + 1), 1 + rng() % 2});
    std::size_t n = 1 + rng() % 40;
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::uint64_t t = 1 + rng() % 40;
      in.flows.push_back({static_cast<std::uint32_t>(i + 1), t, 0});
      total += t;
    }
    in.aux_available = 64;
    auto plan = absorb_bursts(in, fam, {});
    REQUIRE_FALSE(plan.at_risk);
    std::uint64_t f = 0, p = 0;
    for (const auto& l : plan.loads) {
      if (!l.best_effort) CHECK(fam.admits(l.level, l.f, l.p));
      f += l.f;
      p += l.p;
    }
    CHECK(f == n);
    CHECK(p == total);
    std::size_t opened = 0;
    for (std::size_t s = plan.existing; s < plan.loads.size(); ++s) opened += plan.loads[s].level;
    CHECK(plan.cores_requested >= opened);
    CHECK(plan.cores_requested <= in.aux_available);
    // The local queue keeps the smallest tasks it can hold.
    for (const auto& mv : plan.moves) CHECK(mv.from == 0);
  }
}

TEST_CASE("whale split picks the fewest cores that admit it") {
  auto fam = family();
  CHECK(plan_whale_split(150, fam, 3) == 2u);
  CHECK(plan_whale_split(200, fam, 3) == 3u);
  CHECK(plan_whale_split(200, fam, 2) == std::nullopt);
  CHECK(plan_whale_split(1000, fam, 3) == std::nullopt);
  for (std::uint64_t p = 97; p < 300; ++p) {
    std::optional<std::size_t> scan;
    for (std::size_t n = 2; n <= 3 && !scan; ++n)
      if (fam.admits(n, 1, p)) scan = n;
    CHECK(plan_whale_split(p, fam, 3) == scan);
  }
}

TEST_CASE("unsplittable whales raise an alert") {
  PlanInput in = backlog(1, 1000, 8);
  auto plan = absorb_bursts(in, family(), {});
  CHECK(plan.alerted == std::vector<std::uint32_t>{1});
  CHECK(plan.loads.back().best_effort);
  PlanOptions off;
  off.allow_split = false;
  auto flagged = absorb_bursts(in, family(), off);
  CHECK(flagged.placement[0] == -1);
}

#include <fstream>
#include <sstream>

#include "doctest.h"
#include "nfvscale/config.hpp"

using namespace nfvscale;

TEST_CASE("shipped default config matches the built-in defaults") {
  std::ifstream in(std::string(NFVSCALE_SOURCE_DIR) + "/configs/default.jsonc");
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == default_config_text());
}

TEST_CASE("defaults resolve to the documented values") {
  auto cfg = load_config("", {});
  CHECK(cfg.sim.chain.stages.size() == 3);
  CHECK(cfg.sim.chain.total_cost() == kMicro);
  CHECK(cfg.sim.chain.per_new_flow_cost_ns == 3 * kMicro);
  CHECK(cfg.slos == std::vector<Nanos>{200 * kMicro});
  CHECK(cfg.modes == std::vector<Mode>{Mode::Full});
  CHECK(cfg.sim.core.epoch() == 100 * kMicro);
  CHECK(cfg.sim.server.margin == 0.1);
  CHECK(cfg.workload.duration_ns == kSecond);
  CHECK(cfg.training.long_term.flow_packets == 20);
}

TEST_CASE("overrides") {
  auto cfg = load_config("", {"--rack.cores_per_server=16", "slo_us=[100,300]",
                              "modes=[\"full\",\"hash_only\"]", "training.dir=elsewhere",
                              "workload.count_dist=pareto"});
  CHECK(cfg.sim.rack.cores_per_server == 16);
  CHECK(cfg.slos == std::vector<Nanos>{100 * kMicro, 300 * kMicro});
  CHECK(cfg.modes.size() == 2);
  CHECK(cfg.training.dir == "elsewhere");
  CHECK(cfg.workload.count_dist == PacketCountDist::Pareto);
  CHECK(cfg.cell(300 * kMicro, Mode::HashOnly).core.epoch() == 150 * kMicro);
  CHECK(cfg.hash != load_config("", {}).hash);
  CHECK(load_config("", {}).hash == load_config("", {}).hash);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(load_config("", {"rack.cores=3"}), ConfigError);
  CHECK_THROWS_AS(load_config("", {"nonsense"}), ConfigError);
  CHECK_THROWS_AS(load_config("", {"modes=[\"turbo\"]"}), ConfigError);
  CHECK_THROWS_AS(load_config("", {"slo_us=[]"}), ConfigError);
  CHECK_THROWS_AS(load_config("", {"training.flow_grid=[4,2]"}), ConfigError);
  CHECK_THROWS_AS(load_config("", {"rack.servers=\"two\""}), ConfigError);
  CHECK_THROWS_AS(load_config("", {"trace=/no/such/file.csv"}), ConfigError);
  CHECK_THROWS_AS(load_config("/no/such/config.jsonc", {}), ConfigError);
  try {
    load_config("", {"server_mapper.bogus=1"});
    FAIL("no error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("server_mapper.bogus") != std::string::npos);
  }
}

TEST_CASE("example configs resolve") {
  for (const char* name : {"default.jsonc", "quick.jsonc", "storm.jsonc"}) {
    CAPTURE(name);
    CHECK_NOTHROW(load_config(std::string(NFVSCALE_SOURCE_DIR) + "/configs/" + name, {}));
  }
}

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "nfvscale/config.hpp"
#include "nfvscale/server_mapper.hpp"

using namespace nfvscale;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kOther = 1, kUsage = 2, kTrace = 3, kPredictor = 4, kCellFailed = 5 };

struct Common {
  std::string config;
  std::vector<std::string> set;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("-c,--config", c.config, "experiment config (JSON, comments allowed)");
  sub->add_option("--set", c.set, "override, section.key=value (repeatable)");
  sub->allow_extras();
}

ExperimentConfig load(const Common& c, const CLI::App* sub) {
  std::vector<std::string> overrides = c.set;
  for (const auto& extra : sub->remaining()) {
    if (extra.rfind("--", 0) != 0 || extra.find('=') == std::string::npos)
      throw ConfigError("unexpected argument '" + extra + "'");
    overrides.push_back(extra);
  }
  return load_config(c.config, overrides);
}

void log(const std::string& s) { std::fprintf(stderr, "%s\n", s.c_str()); }

int cmd_train(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.training.dir);
  Trace trace;
  if (cfg.training.short_term.source != FrontierSource::Probe) trace = load_workload(cfg);
  for (Nanos slo : cfg.slos) {
    SimConfig base = cfg.cell(slo, Mode::Full);
    PredictorHeader h{cfg.sim.chain.hash(), base.core.epoch(), slo};

    auto lt = train_long_term(base, cfg.training.long_term);
    for (const auto& w : lt.warnings) log("warning: slo " + std::to_string(slo / kMicro) + "us: " + w);
    write_file(rate_table_path(cfg, slo), serialize_rate_table(h, lt.table));

    auto st = train_short_term(base, trace, cfg.training.short_term);
    write_file(frontier_path(cfg, slo), serialize_frontiers(h, st.family));

    std::printf("slo %ldus: %zu rate rows, %zu probes;", static_cast<long>(slo / kMicro),
                lt.table.entries().size(), lt.probes.size());
    for (std::size_t n = 0; n < st.family.frontiers.size(); ++n)
      std::printf(" level %zu: %zu points (%s)", n + 1, st.family.frontiers[n].points().size(),
                  st.from_probe[n] ? "probe" : "trace");
    std::printf("\n");
  }
  return kOk;
}

struct Cell {
  Nanos slo;
  Mode mode;
  Metrics metrics;
  std::string error;
  int code = kOk;
};

void write_streams(const fs::path& dir, const Cell& cell) {
  std::string stem = "slo" + std::to_string(cell.slo / kMicro) + "_" + to_string(cell.mode);
  std::ofstream s(dir / ("samples_" + stem + ".jsonl"));
  for (const auto& x : cell.metrics.samples)
    s << Json{{"flow", x.flow}, {"arrival_ns", x.arrival}, {"latency_ns", x.latency}}.dump() << '\n';
  std::ofstream c(dir / ("cores_" + stem + ".jsonl"));
  const auto& series = cell.metrics.active_core_series;
  for (std::size_t i = 0; i < series.size(); ++i)
    c << Json{{"window", i}, {"active_cores", series[i]}}.dump() << '\n';
  std::ofstream iv(dir / ("intervals_" + stem + ".jsonl"));
  for (const auto& r : cell.metrics.intervals)
    iv << Json{{"time_ns", r.time}, {"server", r.server}, {"active_dedicated", r.active_dedicated},
               {"migrated_buckets", r.migrated_buckets}, {"feasible", r.feasible},
               {"on_demand", r.on_demand}}
              .dump()
       << '\n';
}

int cmd_run(const ExperimentConfig& cfg) {
  Trace trace = load_workload(cfg);
  fs::path dir = cfg.output.dir;
  fs::create_directories(dir);

  std::vector<Cell> cells;
  for (Nanos slo : cfg.slos)
    for (Mode m : cfg.modes) cells.push_back({slo, m, {}, {}, kOk});

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < cells.size();) {
      auto& cell = cells[i];
      try {
        SimConfig sc = cfg.cell(cell.slo, cell.mode);
        sc.record_samples = cfg.output.verbose;
        auto pred = load_predictors(cfg, cell.slo, cell.mode);
        cell.metrics = run(sc, pred, trace);
      } catch (const PredictorError& e) {
        cell.error = e.what();
        cell.code = kPredictor;
      } catch (const std::exception& e) {
        cell.error = e.what();
        cell.code = kOther;
      }
    }
  };
  std::size_t threads = std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(),
                                                        static_cast<unsigned>(cells.size())));
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::ofstream summary(dir / "summary.jsonl");
  std::ofstream table(dir / "table.txt");
  char line[256];
  std::snprintf(line, sizeof line, "%-8s %-16s %10s %10s %10s %10s\n", "SLO(us)", "mode",
                "p50(us)", "p99(us)", "AvgCores", "Loss(%)");
  std::cout << line;
  table << line;
  int rc = kOk;
  for (const auto& cell : cells) {
    if (cell.code != kOk) {
      Json err{{"slo_us", cell.slo / kMicro}, {"mode", to_string(cell.mode)},
               {"error", cell.error}, {"config_hash", cfg.hash}, {"seed", cfg.sim.seed}};
      summary << err.dump() << '\n';
      std::snprintf(line, sizeof line, "%-8ld %-16s failed: %s\n",
                    static_cast<long>(cell.slo / kMicro), to_string(cell.mode).c_str(),
                    cell.error.c_str());
      rc = kCellFailed;
    } else {
      summary << summary_record(cell.metrics, cell.slo, cell.mode, cfg).dump() << '\n';
      const auto& m = cell.metrics;
      std::snprintf(line, sizeof line, "%-8ld %-16s %10.1f %10.1f %10.2f %10.3f\n",
                    static_cast<long>(cell.slo / kMicro), to_string(cell.mode).c_str(),
                    static_cast<double>(m.p50) / 1e3, static_cast<double>(m.p99) / 1e3,
                    m.avg_cores, m.loss_rate * 100);
      if (cfg.output.verbose) write_streams(dir, cell);
    }
    std::cout << line;
    table << line;
  }
  return rc;
}

int cmd_stats(const ExperimentConfig& cfg, const std::string& trace_path, double window_ms) {
  Trace t = trace_path.empty() ? load_workload(cfg) : parse_trace(trace_path);
  auto s = compute_stats(t, static_cast<Nanos>(window_ms * 1e6));
  Json j{{"packets", s.packet_count},
         {"flows", s.flow_count},
         {"max_flow_rate_pps", s.max_flow_rate},
         {"flow_arrival_rate", s.flow_arrival_rate},
         {"span_ns", t.empty() ? 0 : t.back().arrival_ns - t.front().arrival_ns}};
  std::cout << j.dump(2) << '\n';
  return kOk;
}

int cmd_generate(const ExperimentConfig& cfg, const std::string& out) {
  write_trace(out, generate(cfg.workload));
  return kOk;
}

// Instance: {"buckets": [{"rate": r, "flows": f}, ...], "rates": [{"flows": f, "rate": r}, ...],
//            "max_cores": C, "margin": 0}
int cmd_oracle(const std::string& path) {
  Json in;
  try {
    in = Json::parse(read_file(path), nullptr, true, true);
  } catch (const Json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  BucketStats st(0);
  std::vector<RateThresholdTable::Entry> rows;
  std::size_t max_cores = 0;
  double margin = 0;
  try {
    for (const auto& b : in.at("buckets")) {
      st.rate.push_back(b.at("rate").get<double>());
      st.flows.push_back(b.at("flows").get<double>());
    }
    for (const auto& r : in.at("rates"))
      rows.push_back({r.at("flows").get<std::uint32_t>(), r.at("rate").get<double>()});
    max_cores = in.at("max_cores").get<std::size_t>();
    margin = in.value("margin", 0.0);
  } catch (const Json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  RateThresholdTable table(std::move(rows));
  auto exact = milp_exact(st, table, max_cores, margin);

  CoreMapping start(st.size(), max_cores);
  auto greedy = remap_greedy(st, start, table, margin);
  Json j{{"exact", {{"feasible", exact.feasible}, {"cores", exact.cores},
                    {"assignment", exact.witness.bucket_core}}},
         {"greedy", {{"feasible", greedy.feasible}, {"cores", greedy.mapping.active_count()},
                     {"assignment", greedy.mapping.bucket_core}}}};
  std::cout << j.dump(2) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical core allocation simulator for NF chains"};
  app.require_subcommand(1);

  Common common;
  auto* train = app.add_subcommand("train", "train capacity frontiers and rate tables per SLO");
  add_common(train, common);
  auto* runc = app.add_subcommand("run", "run the (slo x mode) sweep and write reports");
  add_common(runc, common);
  auto* stats = app.add_subcommand("stats", "trace statistics");
  add_common(stats, common);
  std::string trace_path;
  double window_ms = 10;
  stats->add_option("--trace", trace_path, "trace CSV (default: config workload)");
  stats->add_option("--window-ms", window_ms, "window for per-flow peak rate");
  auto* gen = app.add_subcommand("generate", "write the configured synthetic workload as CSV");
  add_common(gen, common);
  std::string gen_out;
  gen->add_option("-o,--out", gen_out, "output CSV")->required();
  auto* oracle = app.add_subcommand("oracle", "exact and greedy packing of a small instance");
  std::string instance;
  oracle->add_option("instance", instance, "instance JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*oracle) return cmd_oracle(instance);
    CLI::App* sub = *train ? train : *runc ? runc : *stats ? stats : gen;
    auto cfg = load(common, sub);
    if (*train) return cmd_train(cfg);
    if (*runc) return cmd_run(cfg);
    if (*stats) return cmd_stats(cfg, trace_path, window_ms);
    return cmd_generate(cfg, gen_out);
  } catch (const ConfigError& e) {
    log(std::string("config error: ") + e.what());
    return kUsage;
  } catch (const TraceError& e) {
    log(std::string("trace error: ") + e.what());
    return kTrace;
  } catch (const PredictorError& e) {
    log(std::string("predictor error: ") + e.what());
    return kPredictor;
  } catch (const std::exception& e) {
    log(std::string("error: ") + e.what());
    return kOther;
  }
}

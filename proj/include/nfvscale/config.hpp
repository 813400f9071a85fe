#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "nfvscale/simulator.hpp"
#include "nfvscale/training.hpp"

namespace nfvscale {

using Json = nlohmann::json;

struct TrainingConfig {
  std::string dir = "predictors";
  ShortTermOptions short_term;
  LongTermOptions long_term;
};

struct OutputConfig {
  std::string dir = "out";
  bool verbose = false;
};

struct ExperimentConfig {
  SimConfig sim;  // mode and slo are set per sweep cell
  WorkloadSpec workload;
  std::string trace_path;  // empty: generate from `workload`
  std::vector<Nanos> slos;
  std::vector<Mode> modes;
  TrainingConfig training;
  OutputConfig output;

  Json resolved;            // defaults merged with file and overrides
  std::uint64_t hash = 0;   // fnv1a over the resolved dump

  SimConfig cell(Nanos slo, Mode mode) const;
};

// Built-in defaults, with comments; the same text ships as configs/default.jsonc.
const std::string& default_config_text();
Json default_config();

// Accepts `section.key=value` (or `--section.key=value`); value is parsed
// as JSON when possible, otherwise taken as a string.
void apply_override(Json& j, const std::string& assignment);

// Merges `user` over the defaults; keys the defaults do not know are errors.
Json merge_config(const Json& user);

ExperimentConfig resolve_config(const Json& merged);
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides);

Trace load_workload(const ExperimentConfig& cfg);

std::string frontier_path(const ExperimentConfig& cfg, Nanos slo);
std::string rate_table_path(const ExperimentConfig& cfg, Nanos slo);

// Loads what `mode` needs; throws PredictorError on a missing or mismatched file.
Predictors load_predictors(const ExperimentConfig& cfg, Nanos slo, Mode mode);

Json summary_record(const Metrics& m, Nanos slo, Mode mode, const ExperimentConfig& cfg);

}  // namespace nfvscale

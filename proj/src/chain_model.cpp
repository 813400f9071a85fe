#include "nfvscale/chain_model.hpp"

#include <algorithm>

namespace nfvscale {

void ChainSpec::validate() const {
  if (stages.empty()) throw ConfigError("chain needs at least one stage");
  for (const auto& s : stages)
    if (s.cost_ns <= 0)
      throw ConfigError("stage '" + s.name + "' must have a positive cost");
  if (per_new_flow_cost_ns < 0)
    throw ConfigError("per_new_flow_cost must be non-negative");
  if (max_batch < 1) throw ConfigError("max_batch must be at least 1");
}

Nanos ChainSpec::total_cost() const {
  Nanos t = 0;
  for (const auto& s : stages) t += s.cost_ns;
  return t;
}

std::uint64_t ChainSpec::hash() const {
  std::string key;
  for (const auto& s : stages)
    key += s.name + ":" + std::to_string(s.cost_ns) + ";";
  key += "setup=" + std::to_string(per_new_flow_cost_ns);
  key += ";batch=" + std::to_string(max_batch);
  return fnv1a(key);
}

ChainSpec ChainSpec::with_default_setup(std::vector<Stage> stages,
                                        std::size_t max_batch) {
  ChainSpec c;
  c.stages = std::move(stages);
  c.max_batch = max_batch;
  c.per_new_flow_cost_ns = 3 * c.total_cost();
  return c;
}

Nanos service_time(const ChainSpec& chain, bool is_new_flow) {
  return chain.total_cost() + (is_new_flow ? chain.per_new_flow_cost_ns : 0);
}

void validate_scheme(const ChainSpec& chain, const SplitScheme& scheme) {
  std::size_t prev = 0;
  for (auto c : scheme.cut_points) {
    if (c <= prev || c >= chain.stages.size())
      throw ConfigError("invalid cut point " + std::to_string(c));
    prev = c;
  }
}

std::vector<Nanos> sub_chain_costs(const ChainSpec& chain,
                                   const SplitScheme& scheme) {
  validate_scheme(chain, scheme);
  std::vector<Nanos> out;
  std::size_t begin = 0;
  auto cuts = scheme.cut_points;
  cuts.push_back(chain.stages.size());
  for (auto end : cuts) {
    Nanos c = 0;
    for (auto i = begin; i < end; ++i) c += chain.stages[i].cost_ns;
    out.push_back(c);
    begin = end;
  }
  return out;
}

std::vector<Nanos> sub_chain_setup_costs(const ChainSpec& chain,
                                         const SplitScheme& scheme) {
  auto costs = sub_chain_costs(chain, scheme);
  Nanos total = chain.total_cost();
  std::vector<Nanos> out(costs.size());
  Nanos given = 0;
  for (std::size_t i = 0; i + 1 < costs.size(); ++i) {
    out[i] = chain.per_new_flow_cost_ns * costs[i] / total;
    given += out[i];
  }
  out.back() = chain.per_new_flow_cost_ns - given;
  return out;
}

double split_throughput(const ChainSpec& chain, const SplitScheme& scheme) {
  auto costs = sub_chain_costs(chain, scheme);
  Nanos worst = *std::max_element(costs.begin(), costs.end());
  return 1e9 / static_cast<double>(worst);
}

Nanos split_latency(const ChainSpec& chain, const SplitScheme& scheme) {
  auto costs = sub_chain_costs(chain, scheme);
  Nanos t = 0;
  for (auto c : costs) t += c;
  return t;
}

namespace {

void cuts_rec(std::size_t stages, std::size_t next, std::size_t remaining,
              std::vector<std::size_t>& cur,
              std::vector<SplitScheme>& out) {
  if (remaining == 0) {
    out.push_back(SplitScheme{cur});
    return;
  }
  for (auto c = next; c < stages; ++c) {
    cur.push_back(c);
    cuts_rec(stages, c + 1, remaining - 1, cur, out);
    cur.pop_back();
  }
}

}  // namespace

std::vector<SplitScheme> enumerate_splits(const ChainSpec& chain,
                                          std::size_t max_cores) {
  chain.validate();
  std::vector<SplitScheme> all;
  std::size_t top = std::min(max_cores, chain.stages.size());
  for (std::size_t n = 1; n <= top; ++n) {
    std::vector<SplitScheme> level;
    std::vector<std::size_t> cur;
    cuts_rec(chain.stages.size(), 1, n - 1, cur, level);
    std::stable_sort(level.begin(), level.end(),
                     [&](const SplitScheme& a, const SplitScheme& b) {
                       return split_throughput(chain, a) >
                              split_throughput(chain, b);
                     });
    all.insert(all.end(), level.begin(), level.end());
  }
  return all;
}

SplitScheme best_split(const ChainSpec& chain, std::size_t n) {
  if (n < 1 || n > chain.stages.size())
    throw ConfigError("cannot split a " +
                      std::to_string(chain.stages.size()) +
                      "-stage chain across " + std::to_string(n) + " cores");
  for (auto& s : enumerate_splits(chain, n))
    if (s.cores() == n) return s;
  return {};
}

}  // namespace nfvscale

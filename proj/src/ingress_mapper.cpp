#include "nfvscale/ingress_mapper.hpp"

#include <string>

#include "nfvscale/types.hpp"

namespace nfvscale {

void IngressConfig::validate() const {
  if (prefix_len < 1 || prefix_len > 32) throw ConfigError("ingress.prefix_len must be in [1, 32]");
}

IngressMapper::IngressMapper(std::size_t servers, unsigned prefix_len, std::size_t tau)
    : prefix_len_(prefix_len),
      tau_(tau),
      reported_(servers, 0),
      prefixes_(servers, 0),
      recruited_(servers, false) {
  if (servers == 0) throw ConfigError("rack needs at least one server");
}

std::uint32_t IngressMapper::prefix_of(std::uint32_t dst_addr) const {
  return prefix_len_ >= 32 ? dst_addr : dst_addr >> (32 - prefix_len_);
}

std::size_t IngressMapper::recruited_count() const {
  std::size_t n = 0;
  for (bool r : recruited_) n += r;
  return n;
}

std::size_t IngressMapper::steer(std::uint32_t dst_addr) {
  auto key = prefix_of(dst_addr);
  if (auto it = table_.find(key); it != table_.end()) return it->second;

  std::size_t pick = reported_.size();
  for (std::size_t s = 0; s < reported_.size(); ++s) {
    if (!recruited_[s] || reported_[s] >= tau_) continue;
    if (pick == reported_.size() || reported_[s] > reported_[pick]) pick = s;
  }
  if (pick == reported_.size()) {
    for (std::size_t s = 0; s < recruited_.size(); ++s)
      if (!recruited_[s]) {
        pick = s;
        recruited_[s] = true;
        break;
      }
  }
  if (pick == reported_.size()) {
    ++saturations_;
    pick = 0;
    for (std::size_t s = 1; s < reported_.size(); ++s)
      if (reported_[s] < reported_[pick] ||
          (reported_[s] == reported_[pick] && prefixes_[s] < prefixes_[pick]))
        pick = s;
  }
  table_.emplace(key, pick);
  prefixes_[pick]++;
  return pick;
}

void IngressMapper::report_cores(std::size_t server, std::size_t dedicated) {
  if (server >= reported_.size())
    throw Error("report from unknown server " + std::to_string(server));
  reported_[server] = dedicated;
}

}  // namespace nfvscale

#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

namespace nfvscale {

struct IngressConfig {
  unsigned prefix_len = 16;
  std::size_t tau = 0;  // 0: cores_per_server - aux_pool
  void validate() const;
};

class IngressMapper {
 public:
  IngressMapper(std::size_t servers, unsigned prefix_len, std::size_t tau);

  std::size_t steer(std::uint32_t dst_addr);
  void report_cores(std::size_t server, std::size_t dedicated);

  std::uint32_t prefix_of(std::uint32_t dst_addr) const;
  std::size_t reported(std::size_t server) const { return reported_.at(server); }
  bool recruited(std::size_t server) const { return recruited_.at(server); }
  std::size_t recruited_count() const;
  std::size_t prefix_count() const { return table_.size(); }
  std::uint64_t saturation_events() const { return saturations_; }

 private:
  unsigned prefix_len_;
  std::size_t tau_;
  std::unordered_map<std::uint32_t, std::size_t> table_;
  std::vector<std::size_t> reported_;
  std::vector<std::size_t> prefixes_;
  std::vector<bool> recruited_;
  std::uint64_t saturations_ = 0;
};

}  // namespace nfvscale

#pragma once

#include <cstring>
#include <vector>

#include "hetft/device_model.hpp"
#include "json.hpp"

namespace fixtures {

/// host + gpu1 + gpu2 spaces with one cpu and two gpu units.
inline nlohmann::json three_unit_fleet() {
  return {
      {"memory_spaces",
       {{{"id", "host"}, {"host", true}},
        {{"id", "gpu1_mem"}},
        {{"id", "gpu2_mem"}}}},
      {"default_ns_per_byte", 0.1},
      {"units",
       {{{"id", "cpu"}, {"kind", "cpu"}, {"memory_space", "host"}, {"base_latency_us", 100.0},
         {"seed", 1}},
        {{"id", "gpu1"}, {"kind", "gpu"}, {"memory_space", "gpu1_mem"},
         {"base_latency_us", 10.0}, {"seed", 2}},
        {{"id", "gpu2"}, {"kind", "gpu"}, {"memory_space", "gpu2_mem"},
         {"base_latency_us", 20.0}, {"seed", 3}}}}};
}

template <class T>
std::vector<std::byte> to_bytes(const std::vector<T>& values) {
  std::vector<std::byte> out(values.size() * sizeof(T));
  std::memcpy(out.data(), values.data(), out.size());
  return out;
}

template <class T>
std::vector<T> from_bytes(std::span<const std::byte> bytes) {
  std::vector<T> out(bytes.size() / sizeof(T));
  std::memcpy(out.data(), bytes.data(), out.size() * sizeof(T));
  return out;
}

}  // namespace fixtures

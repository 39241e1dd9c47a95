#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hetft/runtime.hpp"
#include "json.hpp"

namespace hetft {

/// Input data for one invocation of a workload task. Every built-in task has
/// the shape (input area "r", output area "w", scalars...).
struct WorkloadData {
  std::vector<std::byte> input;
  std::uint64_t input_elements = 0;
  ValueType input_type = ValueType::kBytes;
  std::uint64_t output_elements = 0;
  ValueType output_type = ValueType::kBytes;
  std::vector<Arg> scalars;
};

struct Workload {
  std::string id;
  std::string description;
  std::string task;
  std::uint64_t default_size = 0;
  nlohmann::json default_fleet;
  /// Declares the task and attaches its kernel variants.
  std::function<void(Runtime&)> install;
  std::function<WorkloadData(std::uint64_t size, std::mt19937_64& rng)> generate;
  /// Reference output computed directly on the host.
  std::function<std::vector<std::byte>(const WorkloadData&)> oracle;
};

const std::vector<Workload>& builtin_workloads();
/// Throws ConfigError listing the available ids when `id` is unknown.
const Workload& find_workload(std::string_view id);

struct StagedWorkload {
  AreaId input;
  AreaId output;
  std::vector<Arg> args;
};

/// Registers the input and a zero-filled output area.
StagedWorkload stage_workload(Runtime& rt, const WorkloadData& data);
void unstage_workload(Runtime& rt, const StagedWorkload& staged);

/// True when `output` equals the oracle, within `float_delta` for floats.
bool matches_oracle(const Workload& w, const WorkloadData& data,
                    std::span<const std::byte> output, double float_delta);

}  // namespace hetft

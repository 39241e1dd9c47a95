#include "hetft/workloads.hpp"

#include <algorithm>
#include <cstring>

namespace hetft {

namespace {

using nlohmann::json;

const Signature kIncSignature{Param::area(ValueType::kFloat32), Param::area(ValueType::kFloat32),
                              Param::scalar(ValueType::kInt64)};

const Signature kPathSignature{Param::area(ValueType::kInt32), Param::area(ValueType::kInt32),
                               Param::scalar(ValueType::kInt64), Param::scalar(ValueType::kInt64)};

constexpr std::int64_t kPathRows = 16;

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

json space(const std::string& id, bool host) {
  return {{"id", id}, {"host", host}, {"copy_ns_per_byte", 0.01}};
}

json unit(const std::string& id, const std::string& kind, const std::string& memory,
          double base_us, double per_elem_ns, std::uint64_t seed) {
  return {{"id", id},
          {"kind", kind},
          {"memory_space", memory},
          {"base_latency_us", base_us},
          {"per_elem_cost_ns", per_elem_ns},
          {"seed", seed}};
}

json three_unit_spaces() {
  return json::array({space("host", true), space("gpu1_mem", false), space("gpu2_mem", false)});
}

void inc_kernel(KernelContext& ctx, bool drop_last) {
  auto in = ctx.request_read<float>(0);
  auto out = ctx.request_write<float>(1);
  auto n = static_cast<std::size_t>(ctx.scalar<std::int64_t>(2));
  if (drop_last && n > 0) --n;
  for (std::size_t i = 0; i < n; ++i) out[i] = in[i] + 1.0f;
}

WorkloadData inc_data(std::uint64_t size, std::mt19937_64& rng) {
  std::vector<float> in(size);
  for (auto& x : in) x = static_cast<float>(1.0 + unit_interval(rng));
  WorkloadData d;
  d.input = to_bytes(in);
  d.input_elements = size;
  d.input_type = ValueType::kFloat32;
  d.output_elements = size;
  d.output_type = ValueType::kFloat32;
  d.scalars = {static_cast<std::int64_t>(size)};
  return d;
}

std::vector<std::byte> inc_oracle(const WorkloadData& d) {
  auto in = from_bytes<float>(d.input);
  for (auto& x : in) x += 1.0f;
  return to_bytes(in);
}

void pathfinder_kernel(KernelContext& ctx) {
  auto grid = ctx.request_read<std::int32_t>(0);
  auto out = ctx.request_write<std::int32_t>(1);
  const auto rows = static_cast<std::size_t>(ctx.scalar<std::int64_t>(2));
  const auto cols = static_cast<std::size_t>(ctx.scalar<std::int64_t>(3));
  std::vector<std::int32_t> prev(grid.begin(), grid.begin() + static_cast<std::ptrdiff_t>(cols));
  std::vector<std::int32_t> next(cols);
  for (std::size_t r = 1; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      std::int32_t best = prev[c];
      if (c > 0) best = std::min(best, prev[c - 1]);
      if (c + 1 < cols) best = std::min(best, prev[c + 1]);
      next[c] = best + grid[r * cols + c];
    }
    prev.swap(next);
  }
  std::copy(prev.begin(), prev.end(), out.begin());
}

WorkloadData pathfinder_data(std::uint64_t cols, std::mt19937_64& rng) {
  std::vector<std::int32_t> grid(kPathRows * cols);
  for (auto& x : grid) x = static_cast<std::int32_t>(rng() % 10);
  WorkloadData d;
  d.input = to_bytes(grid);
  d.input_elements = grid.size();
  d.input_type = ValueType::kInt32;
  d.output_elements = cols;
  d.output_type = ValueType::kInt32;
  d.scalars = {kPathRows, static_cast<std::int64_t>(cols)};
  return d;
}

std::vector<std::byte> pathfinder_oracle(const WorkloadData& d) {
  auto grid = from_bytes<std::int32_t>(d.input);
  const std::size_t cols = d.output_elements;
  std::vector<std::int32_t> cost(grid.begin(), grid.begin() + static_cast<std::ptrdiff_t>(cols));
  for (std::size_t r = 1; r < static_cast<std::size_t>(kPathRows); ++r) {
    std::vector<std::int32_t> row(cols);
    for (std::size_t c = 0; c < cols; ++c) {
      std::int32_t best = cost[c];
      if (c > 0 && cost[c - 1] < best) best = cost[c - 1];
      if (c + 1 < cols && cost[c + 1] < best) best = cost[c + 1];
      row[c] = best + grid[r * cols + c];
    }
    cost = row;
  }
  return to_bytes(cost);
}

Workload make_inc() {
  Workload w;
  w.id = "inc";
  w.description = "float32 array increment with cpu and gpu variants";
  w.task = "inc";
  w.default_size = 1 << 16;
  w.default_fleet = {{"memory_spaces", three_unit_spaces()},
                     {"default_ns_per_byte", 0.1},
                     {"units", json::array({unit("cpu", "cpu", "host", 50, 2.0, 11),
                                            unit("gpu1", "gpu", "gpu1_mem", 20, 0.1, 12),
                                            unit("gpu2", "gpu", "gpu2_mem", 25, 0.12, 13)})}};
  w.install = [](Runtime& rt) {
    rt.declare_task("inc", kIncSignature);
    rt.attach_kernel("inc", "inc_cpu", "cpu", kIncSignature,
                     [](KernelContext& ctx) { inc_kernel(ctx, false); });
    rt.attach_kernel("inc", "inc_gpu", "gpu", kIncSignature,
                     [](KernelContext& ctx) { inc_kernel(ctx, false); });
  };
  w.generate = inc_data;
  w.oracle = inc_oracle;
  return w;
}

Workload make_pathfinder() {
  Workload w;
  w.id = "pathfinder-like";
  w.description = "16-row grid min-path DP; cpu kernel 3x faster than the best gpu kernel";
  w.task = "pathfinder";
  w.default_size = 256;
  w.default_fleet = {{"memory_spaces", three_unit_spaces()},
                     {"default_ns_per_byte", 0.05},
                     {"units", json::array({unit("cpu", "cpu", "host", 1000, 0.0, 21),
                                            unit("gpu1", "gpu", "gpu1_mem", 3000, 0.0, 22),
                                            unit("gpu2", "gpu", "gpu2_mem", 3500, 0.0, 23)})}};
  w.install = [](Runtime& rt) {
    rt.declare_task("pathfinder", kPathSignature);
    rt.attach_kernel("pathfinder", "pathfinder_omp", "cpu", kPathSignature, pathfinder_kernel);
    rt.attach_kernel("pathfinder", "pathfinder_cuda", "gpu", kPathSignature, pathfinder_kernel);
  };
  w.generate = pathfinder_data;
  w.oracle = pathfinder_oracle;
  return w;
}

Workload make_buggy() {
  Workload w;
  w.id = "buggy-variant";
  w.description = "array increment whose fastest gpu variant skips the last element";
  w.task = "inc_buggy";
  w.default_size = 4096;
  json units = json::array({unit("cpu", "cpu", "host", 500, 0.0, 31),
                            unit("gpu1", "gpu", "gpu1_mem", 300, 0.0, 32),
                            unit("gpu2", "gpu", "gpu2_mem", 300, 0.0, 33)});
  units[0]["kernels"] = {{"inc_cpu", {{"base_latency_us", 500}}}};
  for (std::size_t i : {1, 2}) {
    units[i]["kernels"] = {{"inc_gpu_fast", {{"base_latency_us", 100}}},
                           {"inc_gpu", {{"base_latency_us", 300}}}};
  }
  w.default_fleet = {
      {"memory_spaces", three_unit_spaces()}, {"default_ns_per_byte", 0.1}, {"units", units}};
  w.install = [](Runtime& rt) {
    rt.declare_task("inc_buggy", kIncSignature);
    rt.attach_kernel("inc_buggy", "inc_gpu_fast", "gpu", kIncSignature,
                     [](KernelContext& ctx) { inc_kernel(ctx, true); });
    rt.attach_kernel("inc_buggy", "inc_gpu", "gpu", kIncSignature,
                     [](KernelContext& ctx) { inc_kernel(ctx, false); });
    rt.attach_kernel("inc_buggy", "inc_cpu", "cpu", kIncSignature,
                     [](KernelContext& ctx) { inc_kernel(ctx, false); });
  };
  w.generate = inc_data;
  w.oracle = inc_oracle;
  return w;
}

Workload make_voter_sweep() {
  Workload w;
  w.id = "voter-sweep";
  w.description = "array increment on two cpus sharing host memory; isolates voter cost";
  w.task = "inc";
  w.default_size = 256;
  w.default_fleet = {{"memory_spaces", json::array({space("host", true), space("gpu_mem", false)})},
                     {"default_ns_per_byte", 0.0},
                     {"units", json::array({unit("cpu0", "cpu", "host", 10, 0.0, 41),
                                            unit("cpu1", "cpu", "host", 10, 0.0, 42),
                                            unit("gpu0", "gpu", "gpu_mem", 10, 0.0, 43)})}};
  w.install = [](Runtime& rt) {
    rt.declare_task("inc", kIncSignature);
    rt.attach_kernel("inc", "inc_cpu", "cpu", kIncSignature,
                     [](KernelContext& ctx) { inc_kernel(ctx, false); });
  };
  w.generate = inc_data;
  w.oracle = inc_oracle;
  return w;
}

}  // namespace

const std::vector<Workload>& builtin_workloads() {
  static const std::vector<Workload> registry{make_inc(), make_pathfinder(), make_buggy(),
                                              make_voter_sweep()};
  return registry;
}

const Workload& find_workload(std::string_view id) {
  std::string known;
  for (const auto& w : builtin_workloads()) {
    if (w.id == id) return w;
    known += (known.empty() ? "" : ", ") + w.id;
  }
  throw ConfigError("unknown workload '" + std::string(id) + "' (available: " + known + ")");
}

StagedWorkload stage_workload(Runtime& rt, const WorkloadData& data) {
  StagedWorkload s;
  s.input = rt.register_data(data.input, data.input_elements, data.input_type, AccessMode::kRead);
  std::vector<std::byte> zeros(data.output_elements * element_width(data.output_type));
  s.output = rt.register_data(zeros, data.output_elements, data.output_type, AccessMode::kWrite);
  s.args = {s.input, s.output};
  s.args.insert(s.args.end(), data.scalars.begin(), data.scalars.end());
  return s;
}

void unstage_workload(Runtime& rt, const StagedWorkload& staged) {
  rt.unregister(staged.input);
  rt.unregister(staged.output);
}

bool matches_oracle(const Workload& w, const WorkloadData& data,
                    std::span<const std::byte> output, double float_delta) {
  std::vector<std::byte> expected = w.oracle(data);
  if (expected.size() != output.size()) return false;
  ResultArea a{AreaId{0}, data.output_type, output};
  ResultArea b{AreaId{0}, data.output_type, expected};
  return compare(std::span(&a, 1), std::span(&b, 1), VoterConfig{float_delta, {}}).match();
}

}  // namespace hetft

#pragma once

#include <numeric>

#include "fixtures.hpp"
#include "hetft/runtime.hpp"

namespace helpers {

using namespace hetft;

inline const Signature kIncSignature{Param::area(ValueType::kInt32),
                                     Param::area(ValueType::kInt32)};

/// out[i] = in[i] + 1, with cpu and gpu variants.
inline void install_inc(Runtime& rt) {
  rt.declare_task("inc", kIncSignature);
  KernelBody body = [](KernelContext& ctx) {
    auto in = ctx.request_read<std::int32_t>(0);
    auto out = ctx.request_write<std::int32_t>(1);
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] + 1;
  };
  rt.attach_kernel("inc", "inc_cpu", "cpu", kIncSignature, body);
  rt.attach_kernel("inc", "inc_gpu", "gpu", kIncSignature, body);
}

struct IncData {
  AreaId in;
  AreaId out;
  std::vector<std::int32_t> input;

  std::vector<std::int32_t> expected() const {
    std::vector<std::int32_t> e(input);
    for (auto& x : e) ++x;
    return e;
  }
  std::vector<Arg> args() const { return {in, out}; }
};

inline IncData stage_inc(Runtime& rt, std::size_t n, std::int32_t start = 0) {
  IncData d;
  d.input.resize(n);
  std::iota(d.input.begin(), d.input.end(), start);
  std::vector<std::int32_t> zeros(n, 0);
  d.in = rt.register_data<std::int32_t>(std::span<const std::int32_t>(d.input), AccessMode::kRead);
  d.out = rt.register_data<std::int32_t>(std::span<const std::int32_t>(zeros), AccessMode::kWrite);
  return d;
}

inline Runtime make_runtime(const nlohmann::json& fleet, RuntimeOptions options = {}) {
  return Runtime(load_fleet(fleet), std::move(options));
}

}  // namespace helpers

#include "hetft/voter.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace hetft {

namespace {

double decode(ValueType type, const std::byte* at) {
  switch (type) {
    case ValueType::kInt32: {
      std::int32_t v;
      std::memcpy(&v, at, sizeof v);
      return v;
    }
    case ValueType::kInt64: {
      std::int64_t v;
      std::memcpy(&v, at, sizeof v);
      return static_cast<double>(v);
    }
    case ValueType::kFloat32: {
      float v;
      std::memcpy(&v, at, sizeof v);
      return v;
    }
    case ValueType::kFloat64: {
      double v;
      std::memcpy(&v, at, sizeof v);
      return v;
    }
    case ValueType::kBytes:
      return static_cast<double>(std::to_integer<unsigned>(*at));
  }
  return 0.0;
}

}  // namespace

bool floats_match(double x, double y, double delta) {
  if (x == y) return true;
  if (std::isnan(x) || std::isnan(y)) return std::isnan(x) && std::isnan(y);
  if (std::isinf(x) || std::isinf(y)) return false;
  return std::fabs(x - y) <= delta * std::max(std::fabs(x), std::fabs(y));
}

VoteOutcome compare(std::span<const ResultArea> a, std::span<const ResultArea> b,
                    const VoterConfig& config) {
  if (a.size() != b.size()) throw DispatchError("voter: result sets differ in area count");
  VoteOutcome outcome;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const ResultArea& lhs = a[i];
    const ResultArea& rhs = b[i];
    if (lhs.area != rhs.area || lhs.type != rhs.type || lhs.bytes.size() != rhs.bytes.size()) {
      throw DispatchError("voter: result areas differ in identity, type or size");
    }
    const std::size_t width = element_width(lhs.type);
    const std::size_t count = lhs.bytes.size() / width;
    const std::byte* pa = lhs.bytes.data();
    const std::byte* pb = rhs.bytes.data();
    if (!is_floating(lhs.type)) {
      if (std::memcmp(pa, pb, lhs.bytes.size()) == 0) continue;
      for (std::size_t e = 0; e < count; ++e) {
        if (std::memcmp(pa + e * width, pb + e * width, width) != 0) {
          outcome.verdict = Verdict::kMismatch;
          outcome.first_divergence =
              Divergence{lhs.area, e, decode(lhs.type, pa + e * width),
                         decode(lhs.type, pb + e * width)};
          return outcome;
        }
      }
      continue;
    }
    for (std::size_t e = 0; e < count; ++e) {
      double x = decode(lhs.type, pa + e * width);
      double y = decode(lhs.type, pb + e * width);
      if (!floats_match(x, y, config.float_delta)) {
        outcome.verdict = Verdict::kMismatch;
        outcome.first_divergence = Divergence{lhs.area, e, x, y};
        return outcome;
      }
    }
  }
  return outcome;
}

Duration voter_cost(const VoterKernel& kernel, std::uint64_t size_bytes) {
  return kernel.speed.runtime(size_bytes);
}

const VoterKernel& cheapest_voter(std::span<const VoterKernel> kernels,
                                  std::uint64_t size_bytes) {
  if (kernels.empty()) throw DispatchError("no voter kernels configured");
  const VoterKernel* best = &kernels.front();
  for (const auto& k : kernels) {
    if (voter_cost(k, size_bytes) < voter_cost(*best, size_bytes)) best = &k;
  }
  return *best;
}

VoterChoice place_voter(const Fleet& fleet, const VoterContext& context,
                        const VoterConfig& config) {
  auto evaluate = [&](bool avoid) {
    std::optional<VoterChoice> best;
    for (const auto& unit : fleet.units()) {
      if (avoid && std::find(context.replica_units.begin(), context.replica_units.end(),
                             unit.id) != context.replica_units.end()) {
        continue;
      }
      for (const auto& kernel : fleet.voter_kernels()) {
        if (kernel.kind != unit.kind) continue;
        VoterChoice choice{kernel.id, unit.id, voter_cost(kernel, context.size_bytes),
                           Duration{0}};
        for (MemorySpaceId space : context.result_spaces) {
          choice.transfer_cost +=
              fleet.transfers().cost(space, unit.memory_space, context.size_bytes);
        }
        // Ties keep the earlier unit, then the earlier kernel.
        if (!best || choice.total() < best->total()) best = choice;
      }
    }
    return best;
  };
  std::optional<VoterChoice> choice;
  if (config.placement == VoterPlacement::kAvoidTaskUnits) choice = evaluate(true);
  if (!choice) choice = evaluate(false);
  if (!choice) throw DispatchError("no unit can run a voter kernel");
  return *choice;
}

}  // namespace hetft

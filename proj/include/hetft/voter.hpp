#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hetft/device_model.hpp"
#include "hetft/types.hpp"

namespace hetft {

enum class VoterPlacement : std::uint8_t {
  /// Cheapest (kernel, unit) including the transfers of both results.
  kLowestCost,
  /// Like kLowestCost but skips the units that ran the replicas when any
  /// other unit can vote.
  kAvoidTaskUnits,
};

struct VoterConfig {
  /// Relative tolerance for floating-point elements.
  double float_delta = 0.001;
  VoterPlacement placement = VoterPlacement::kLowestCost;
};

struct ResultArea {
  AreaId area;
  ValueType type = ValueType::kBytes;
  std::span<const std::byte> bytes;
};

enum class Verdict : std::uint8_t { kMatch, kMismatch };

struct Divergence {
  AreaId area;
  std::uint64_t index = 0;
  double lhs = 0.0;
  double rhs = 0.0;
};

struct VoteOutcome {
  Verdict verdict = Verdict::kMatch;
  std::optional<Divergence> first_divergence;

  bool match() const { return verdict == Verdict::kMatch; }
};

/// True when two floats are equal within `delta` relative to the larger
/// magnitude. NaN matches only NaN; infinities only match themselves.
bool floats_match(double x, double y, double delta);

/// Element-wise comparison of two result sets: bitwise for integer-like
/// types, relative delta for floats.
VoteOutcome compare(std::span<const ResultArea> a, std::span<const ResultArea> b,
                    const VoterConfig& config);

Duration voter_cost(const VoterKernel& kernel, std::uint64_t size_bytes);

/// Cheapest voter kernel by compute cost alone (no transfers).
const VoterKernel& cheapest_voter(std::span<const VoterKernel> kernels,
                                  std::uint64_t size_bytes);

struct VoterContext {
  /// Units that executed the replicas.
  std::vector<UnitId> replica_units;
  /// Spaces where the two result sets live.
  std::vector<MemorySpaceId> result_spaces;
  /// Size of one result set.
  std::uint64_t size_bytes = 0;
};

struct VoterChoice {
  KernelId kernel;
  UnitId unit;
  Duration compare_cost{0};
  Duration transfer_cost{0};

  Duration total() const { return compare_cost + transfer_cost; }
};

VoterChoice place_voter(const Fleet& fleet, const VoterContext& context,
                        const VoterConfig& config);

}  // namespace hetft

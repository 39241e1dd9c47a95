#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hetft/types.hpp"
#include "json.hpp"

namespace hetft {

/// Affine runtime model: base + per_element * size, with exact-size overrides.
struct SpeedProfile {
  Duration base_latency{1};
  double per_element_ns = 0.0;
  std::map<std::uint64_t, Duration> piecewise;

  Duration runtime(std::uint64_t size) const;
};

enum class CorruptionMode : std::uint8_t {
  /// Multiply the chosen element by (1 + magnitude); zero becomes magnitude.
  kScale,
  /// XOR the lowest byte of the chosen element with a fixed mask.
  kBitFlip,
};

struct CorruptionSpec {
  CorruptionMode mode = CorruptionMode::kScale;
  double magnitude = 0.01;
};

struct FaultModel {
  double abort_prob = 0.0;
  double api_error_prob = 0.0;
  double hang_prob = 0.0;
  double corrupt_prob = 0.0;
  CorruptionSpec corruption;
  std::uint64_t rng_seed = 1;

  double total() const {
    return abort_prob + api_error_prob + hang_prob + corrupt_prob;
  }
};

struct MemorySpace {
  MemorySpaceId id;
  std::string label;
  bool host = false;
  /// Cost of an intra-space copy, charged when a checkpoint duplicate is made
  /// inside one memory.
  double copy_ns_per_byte = 0.0;
};

struct ProcessingUnit {
  UnitId id;
  std::string name;
  std::string kind;
  MemorySpaceId memory_space;
  SpeedProfile speed;
  /// Per-kernel overrides of `speed`.
  std::map<KernelId, SpeedProfile> kernel_speeds;
  FaultModel faults;
  /// Relative runtime jitter in [0, 1); 0 disables it.
  double jitter = 0.0;

  const SpeedProfile& speed_for(const KernelId& kernel) const;
};

/// Voter kernel: compares two result sets. Its speed profile is byte based.
struct VoterKernel {
  KernelId id;
  std::string kind;
  SpeedProfile speed;
};

class TransferCostModel {
 public:
  TransferCostModel() = default;
  TransferCostModel(std::size_t spaces, double default_ns_per_byte);

  void set(MemorySpaceId from, MemorySpaceId to, double ns_per_byte);
  double ns_per_byte(MemorySpaceId from, MemorySpaceId to) const;
  Duration cost(MemorySpaceId from, MemorySpaceId to, std::uint64_t bytes) const;

 private:
  std::size_t spaces_ = 0;
  std::vector<double> matrix_;
};

/// Immutable description of the simulated machine.
class Fleet {
 public:
  const std::vector<MemorySpace>& spaces() const { return spaces_; }
  const std::vector<ProcessingUnit>& units() const { return units_; }
  const std::vector<VoterKernel>& voter_kernels() const { return voters_; }
  const TransferCostModel& transfers() const { return transfers_; }

  MemorySpaceId host_space() const { return host_; }
  const MemorySpace& space(MemorySpaceId id) const;
  const ProcessingUnit& unit(UnitId id) const;
  ProcessingUnit& mutable_unit(UnitId id);
  std::optional<UnitId> find_unit(std::string_view name) const;
  std::optional<MemorySpaceId> find_space(std::string_view label) const;
  bool has_kind(std::string_view kind) const;

  /// Copy cost inside one space (checkpoints) or transfer cost across spaces.
  Duration copy_cost(MemorySpaceId from, MemorySpaceId to,
                     std::uint64_t bytes) const;

 private:
  friend Fleet load_fleet(const nlohmann::json& config);

  std::vector<MemorySpace> spaces_;
  std::vector<ProcessingUnit> units_;
  std::vector<VoterKernel> voters_;
  TransferCostModel transfers_;
  MemorySpaceId host_;
};

/// Parses a fleet description. Errors name the offending field.
Fleet load_fleet(const nlohmann::json& config);
Fleet load_fleet_file(const std::filesystem::path& path);

/// Voter kernels used when a fleet config does not list any. Calibrated so
/// that single-threaded comparison wins below ~10 kB, the parallel CPU kernel
/// between ~10 kB and ~100 kB, and the GPU kernel above.
std::vector<VoterKernel> default_voter_kernels();

/// Fault classes a single attempt can draw.
enum class FaultClass : std::uint8_t { kNone, kAbort, kApiError, kHang, kCorrupt };

std::string_view to_string(FaultClass fault);

struct OutputBuffer {
  std::span<std::byte> bytes;
  ValueType type = ValueType::kBytes;
};

struct ExecutionOutcome {
  UnitId unit;
  KernelId kernel;
  /// Empty when the attempt never terminated.
  std::optional<Duration> duration;
  /// What actually happened. kCorrupt is ground truth for experiments; the
  /// runtime cannot observe it and treats such an attempt as fault-free.
  FaultClass fault = FaultClass::kNone;
  std::string message;

  bool reported_ok() const {
    return fault == FaultClass::kNone || fault == FaultClass::kCorrupt;
  }
};

/// Mutable per-unit simulation state (fault RNG, jitter RNG). Attempts on the
/// same unit must be serialized by the caller; distinct units are independent.
class DeviceSimulator {
 public:
  explicit DeviceSimulator(const Fleet& fleet);

  /// Simulates one attempt. `body` performs the real computation on the
  /// output buffers; it runs only when the drawn outcome lets the kernel
  /// complete. Exceptions from `body` become abort (or api_error for
  /// KernelApiError) outcomes.
  ExecutionOutcome simulate_execution(UnitId unit, const KernelId& kernel,
                                      std::string_view kernel_kind,
                                      std::uint64_t size,
                                      std::span<const OutputBuffer> outputs,
                                      const std::function<void()>& body);

  /// Fault-free duration the unit reports for `kernel` at `size`.
  Duration simulated_duration(UnitId unit, const KernelId& kernel,
                              std::uint64_t size) const;

  FaultClass draw_fault(UnitId unit);

  void reset_context(UnitId unit);
  std::uint64_t context_resets(UnitId unit) const;

  const Fleet& fleet() const { return fleet_; }

 private:
  struct UnitState {
    std::mt19937_64 fault_rng;
    std::mt19937_64 aux_rng;
    std::uint64_t resets = 0;
  };

  FaultClass draw_locked(const ProcessingUnit& unit, UnitState& state);
  Duration jittered(const ProcessingUnit& unit, UnitState& state,
                    Duration nominal);
  void corrupt(const ProcessingUnit& unit, UnitState& state,
               std::span<const OutputBuffer> outputs);

  const Fleet& fleet_;
  std::vector<UnitState> states_;
};

/// Uniform double in [0, 1) from the top 53 bits; platform independent.
double unit_interval(std::mt19937_64& rng);

/// splitmix64 step, used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace hetft

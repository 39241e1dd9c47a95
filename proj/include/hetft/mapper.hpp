#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "hetft/device_model.hpp"
#include "hetft/profile_db.hpp"
#include "hetft/types.hpp"
#include "hetft/voter.hpp"

namespace hetft {

struct FaultAwareEstimate {
  ProfileKey key;
  /// Mean fault-free runtime; empty when the key never ran fault-free.
  std::optional<double> runtime_ns;
  double fault_probability = 0.0;
  /// R / (1 - p); +infinity when p == 1.
  double fault_aware_ns = 0.0;

  bool infinite() const { return fault_aware_ns == std::numeric_limits<double>::infinity(); }
};

/// Fault-aware estimate from raw counters: p = (t - v) / t, F = R * t / v.
FaultAwareEstimate make_estimate(ProfileKey key, std::optional<double> runtime_ns,
                                 std::uint64_t valid, std::uint64_t total);

enum class StrategyKind : std::uint8_t { kPerf, kPerfCP, kDMR, kHetDMR };

std::string_view to_string(StrategyKind kind);

struct Strategy {
  StrategyKind kind = StrategyKind::kPerfCP;
  /// Deadline = estimated fault-free runtime * timeout_factor.
  double timeout_factor = 3.0;
  /// Rank by raw fault-free runtime instead of the fault-aware estimate.
  /// Always true for Perf.
  bool raw_runtime = false;
  /// Never select a (kernel, unit) again once it faulted.
  bool avoid_faulted = false;
  /// HetDMR -> DMR -> PerfCP when the diversity constraint cannot be met.
  bool allow_degradation = false;
  VoterPlacement voter_placement = VoterPlacement::kLowestCost;

  bool redundant() const {
    return kind == StrategyKind::kDMR || kind == StrategyKind::kHetDMR;
  }
  bool protect() const { return kind != StrategyKind::kPerf; }
  bool ranks_raw() const { return raw_runtime || kind == StrategyKind::kPerf; }
  std::string label() const;
};

/// Accepts Perf, PerfCP (or Perf+CP), DMR, HetDMR, and the baselines
/// PerfCP-raw (raw-runtime ordering) and PerfCP-avoid (raw ordering plus
/// permanent exclusion of faulted pairs).
Strategy parse_strategy(std::string_view name);

struct Candidate {
  KernelId kernel;
  std::string kernel_kind;
  UnitId unit;
  ProfileKey key;

  bool same_pair(const Candidate& other) const {
    return kernel == other.kernel && unit == other.unit;
  }
};

struct Selection {
  Candidate candidate;
  std::optional<FaultAwareEstimate> estimate;
  Duration deadline{0};
  std::string rationale;
};

struct MappingDecision {
  StrategyKind kind = StrategyKind::kPerfCP;
  std::vector<Selection> selections;
  bool protect = true;
};

struct MapperConfig {
  /// Dispatches of a key between probes of a quarantined (p = 1) pairing;
  /// 0 disables quarantine.
  std::uint64_t check_interval = 100;
  std::uint64_t attempt_limit = 16;
  /// Deadline for pairings without a known fault-free runtime.
  Duration default_deadline = std::chrono::seconds(1);
};

/// Per task-instance retry bookkeeping.
struct RetryState {
  using Pairing = std::pair<KernelId, UnitId>;
  std::set<Pairing> failed;
  /// Replica pairs whose results disagreed.
  std::set<std::pair<Pairing, Pairing>> failed_pairs;
  std::uint64_t attempts = 0;
};

/// Chooses (kernel, unit) pairings using the profile database. Quarantine
/// and avoidance state are internally serialized.
class Mapper {
 public:
  Mapper(const Fleet& fleet, const ProfileDb& db, MapperConfig config);

  /// Empty when the key has no observation at all.
  std::optional<FaultAwareEstimate> estimate(const ProfileKey& key) const;

  MappingDecision select(const Strategy& strategy, std::span<const Candidate> candidates);

  /// Next pairing for a single-selection strategy after `failed` faulted.
  /// Throws UnrecoverableTaskError once the attempt limit is reached.
  Selection on_fault(const Strategy& strategy, std::span<const Candidate> candidates,
                     RetryState& state, const Candidate& failed);

  /// Replacement for one DMR replica; `partner` is the replica that is kept.
  /// Empty when no pairing satisfies the diversity constraint with it.
  std::optional<Selection> replace_replica(const Strategy& strategy,
                                           std::span<const Candidate> candidates,
                                           RetryState& state, const Candidate& failed,
                                           const Candidate& partner);

  /// Fresh replica pair after a vote mismatch or an unusable partner.
  MappingDecision reselect_pair(const Strategy& strategy,
                                std::span<const Candidate> candidates, RetryState& state,
                                std::span<const Candidate> failed);

  /// True when a quarantined key may be probed again.
  bool check_quarantine(const ProfileKey& key) const;
  /// Book-keeping after an attempt ran on `key`.
  void note_attempt(const ProfileKey& key);
  void note_fault(const Candidate& candidate);
  bool avoided(const Candidate& candidate) const;

  const MapperConfig& config() const { return config_; }

 private:
  struct Ranked {
    const Candidate* candidate;
    std::optional<FaultAwareEstimate> estimate;
    int tier;  // 0 explore/probe, 1 ranked, 2 quarantined or avoided
    double metric;
    std::string rationale;
  };

  std::vector<Ranked> rank(const Strategy& strategy, std::span<const Candidate> candidates,
                           bool tick);
  Selection to_selection(const Strategy& strategy, const Ranked& ranked) const;
  std::optional<std::pair<std::size_t, std::size_t>> pick_pair(
      StrategyKind kind, const std::vector<Ranked>& order,
      const std::set<std::pair<KernelId, UnitId>>* skip,
      const std::set<std::pair<RetryState::Pairing, RetryState::Pairing>>* skip_pairs =
          nullptr) const;
  void count_attempt(RetryState& state) const;

  const Fleet& fleet_;
  const ProfileDb& db_;
  MapperConfig config_;
  mutable std::mutex mutex_;
  std::map<ProfileKey, std::uint64_t> clock_;
  std::map<ProfileKey, std::uint64_t> last_attempt_;
  std::set<std::pair<KernelId, UnitId>> avoided_;
};

}  // namespace hetft

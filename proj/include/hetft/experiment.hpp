#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "hetft/profile_db.hpp"
#include "json.hpp"

namespace hetft {

/// "unit.field=start:stop:step" (additive) or "unit.field=start:stop:xF"
/// (multiplicative). `unit` is a unit id, "*" for every unit, or "task" with
/// field "size" for the problem size.
struct Sweep {
  std::string target;
  std::string field;
  std::vector<double> values;
};

Sweep parse_sweep(std::string_view text);

struct ExperimentSpec {
  std::string workload;
  /// Fleet description; the workload's default fleet when null.
  nlohmann::json fleet;
  std::vector<std::string> strategies;
  std::optional<Sweep> sweep;
  std::uint64_t reps = 100;
  std::uint64_t seed = 1;
  /// Unmeasured repetitions run before the measured ones.
  std::uint64_t warmup = 0;
  /// Problem size; the workload default when 0.
  std::uint64_t size = 0;
  /// Seed the profile database with one fault-free observation per pairing.
  bool calibrate = true;
  double timeout_factor = 3.0;
  std::uint64_t check_interval = 100;
  std::uint64_t attempt_limit = 16;
  BucketMode bucketing = BucketMode::kExact;
  /// Loaded into every runtime when it exists; updated after the run.
  std::string profile_db;
};

/// Accepts the keys workload, fleet (path or inline object), strategies,
/// sweep, reps, seed, warmup, size, calibrate, timeout_factor,
/// check_interval, attempt_limit, bucketing, profile_db.
ExperimentSpec parse_experiment_spec(const nlohmann::json& config);

struct ExperimentRow {
  std::string strategy;
  double sweep_value = 0.0;
  double mean_time_ns = 0.0;
  double attempts_mean = 0.0;
  std::uint64_t faults_abort = 0;
  std::uint64_t faults_api = 0;
  std::uint64_t faults_timeout = 0;
  std::uint64_t faults_vote = 0;
  double voter_time_ns = 0.0;
  double transfer_time_ns = 0.0;

  // Not part of the CSV.
  double stddev_time_ns = 0.0;
  std::uint64_t reps = 0;
  std::uint64_t unrecovered = 0;
  std::uint64_t oracle_mismatches = 0;

  /// Half width of the normal-approximation confidence interval.
  double ci_half_width(double z) const;
};

std::vector<ExperimentRow> run_experiment(const ExperimentSpec& spec,
                                          std::ostream* trace = nullptr);

inline constexpr const char* kCsvHeader =
    "strategy,sweep_value,mean_time_ns,attempts_mean,faults_abort,faults_api,faults_timeout,"
    "faults_vote,voter_time_ns,transfer_time_ns";

void write_csv(std::ostream& out, const std::vector<ExperimentRow>& rows);

}  // namespace hetft

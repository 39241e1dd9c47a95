#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "hetft/types.hpp"

namespace hetft {

enum class BucketMode : std::uint8_t { kExact, kPowerOfTwo };

struct ProfileKey {
  KernelId kernel;
  std::uint64_t size_bucket = 0;
  std::string unit;

  friend auto operator<=>(const ProfileKey&, const ProfileKey&) = default;
};

struct ProfileRecord {
  ProfileKey key;
  std::int64_t runtime_sum_ns = 0;
  std::uint64_t runtime_count = 0;
  std::uint64_t valid = 0;
  std::uint64_t total = 0;

  friend bool operator==(const ProfileRecord&, const ProfileRecord&) = default;
};

struct ProfileStats {
  /// Mean fault-free runtime; empty when no fault-free run was observed.
  std::optional<double> mean_runtime_ns;
  std::uint64_t valid = 0;
  std::uint64_t total = 0;

  double fault_rate() const {
    return total == 0 ? 0.0 : static_cast<double>(total - valid) / static_cast<double>(total);
  }
};

/// One finished attempt as seen by the runtime. Timeouts and vote mismatches
/// are faulty observations; silent corruptions look fault-free.
struct RunObservation {
  bool fault_free = true;
  Duration duration{0};
};

/// Online-learning runtime database keyed by (kernel, size bucket, unit).
/// Thread-safe; cross-process sharing works through persist/load, which
/// merges by summing counters.
class ProfileDb {
 public:
  static constexpr std::string_view kFormatTag = "hetft-profile\tv1";

  explicit ProfileDb(BucketMode mode = BucketMode::kExact) : mode_(mode) {}
  ProfileDb(const ProfileDb& other);
  ProfileDb& operator=(const ProfileDb& other);

  BucketMode bucket_mode() const { return mode_; }
  std::uint64_t bucket(std::uint64_t size) const;
  ProfileKey key(const KernelId& kernel, std::uint64_t size, const std::string& unit) const;

  void record_outcome(const ProfileKey& key, const RunObservation& run);
  std::optional<ProfileStats> lookup(const ProfileKey& key) const;

  void merge(const ProfileDb& other);
  void merge_record(const ProfileRecord& record);

  /// Writes a header line followed by one tab-separated record per line.
  void persist(const std::filesystem::path& path) const;
  /// Merges the records of `path` into this database.
  void load(const std::filesystem::path& path);
  std::string serialize() const;
  void parse(std::string_view text, std::string_view origin = "<memory>");

  std::vector<ProfileRecord> records() const;
  std::size_t size() const;

 private:
  BucketMode mode_;
  mutable std::mutex mutex_;
  std::map<ProfileKey, ProfileRecord> records_;
};

}  // namespace hetft

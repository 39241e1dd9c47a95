#include "hetft/profile_db.hpp"

#include <bit>
#include <charconv>
#include <fstream>
#include <sstream>

namespace hetft {

namespace {

template <class T>
T parse_number(std::string_view text, std::string_view origin, std::size_t line,
               std::string_view name) {
  T value{};
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ProfileFormatError(std::string(origin) + ":" + std::to_string(line) + ": bad " +
                             std::string(name) + " '" + std::string(text) + "'");
  }
  return value;
}

void check_name(const std::string& name, std::string_view what) {
  if (name.empty() || name.find_first_of("\t\n\r") != std::string::npos) {
    throw Error(std::string(what) + " name must be non-empty and free of tabs/newlines");
  }
}

}  // namespace

ProfileDb::ProfileDb(const ProfileDb& other) : mode_(other.mode_) {
  std::lock_guard lock(other.mutex_);
  records_ = other.records_;
}

ProfileDb& ProfileDb::operator=(const ProfileDb& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mutex_, other.mutex_);
  mode_ = other.mode_;
  records_ = other.records_;
  return *this;
}

std::uint64_t ProfileDb::bucket(std::uint64_t size) const {
  if (mode_ == BucketMode::kExact || size == 0) return size;
  return std::bit_ceil(size);
}

ProfileKey ProfileDb::key(const KernelId& kernel, std::uint64_t size,
                          const std::string& unit) const {
  return ProfileKey{kernel, bucket(size), unit};
}

void ProfileDb::record_outcome(const ProfileKey& key, const RunObservation& run) {
  std::lock_guard lock(mutex_);
  ProfileRecord& rec = records_[key];
  rec.key = key;
  ++rec.total;
  if (run.fault_free) {
    ++rec.valid;
    ++rec.runtime_count;
    rec.runtime_sum_ns += run.duration.count();
  }
}

std::optional<ProfileStats> ProfileDb::lookup(const ProfileKey& key) const {
  std::lock_guard lock(mutex_);
  auto it = records_.find(key);
  if (it == records_.end()) return std::nullopt;
  const ProfileRecord& rec = it->second;
  ProfileStats stats;
  stats.valid = rec.valid;
  stats.total = rec.total;
  if (rec.runtime_count > 0) {
    stats.mean_runtime_ns =
        static_cast<double>(rec.runtime_sum_ns) / static_cast<double>(rec.runtime_count);
  }
  return stats;
}

void ProfileDb::merge_record(const ProfileRecord& record) {
  std::lock_guard lock(mutex_);
  ProfileRecord& rec = records_[record.key];
  rec.key = record.key;
  rec.runtime_sum_ns += record.runtime_sum_ns;
  rec.runtime_count += record.runtime_count;
  rec.valid += record.valid;
  rec.total += record.total;
}

void ProfileDb::merge(const ProfileDb& other) {
  for (const auto& rec : other.records()) merge_record(rec);
}

std::string ProfileDb::serialize() const {
  std::ostringstream out;
  out << '#' << kFormatTag << '\n';
  for (const auto& rec : records()) {
    check_name(rec.key.kernel, "kernel");
    check_name(rec.key.unit, "unit");
    out << rec.key.kernel << '\t' << rec.key.size_bucket << '\t' << rec.key.unit << '\t'
        << rec.runtime_sum_ns << '\t' << rec.runtime_count << '\t' << rec.valid << '\t'
        << rec.total << '\n';
  }
  return out.str();
}

void ProfileDb::parse(std::string_view text, std::string_view origin) {
  std::vector<ProfileRecord> parsed;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    auto fail = [&](const std::string& what) {
      return ProfileFormatError(std::string(origin) + ":" + std::to_string(line_no) + ": " +
                                what);
    };
    if (!header_seen) {
      if (line.size() < 1 || line[0] != '#' || line.substr(1) != kFormatTag) {
        throw fail("missing or unsupported header (expected '#" +
                   std::string(kFormatTag) + "')");
      }
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;

    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string_view::npos ? tab : tab - start));
      if (tab == std::string_view::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 7) {
      throw fail("expected 7 tab-separated fields, found " + std::to_string(fields.size()));
    }
    if (fields[0].empty() || fields[2].empty()) throw fail("empty kernel or unit name");
    ProfileRecord rec;
    rec.key.kernel = std::string(fields[0]);
    rec.key.size_bucket = parse_number<std::uint64_t>(fields[1], origin, line_no, "size_bucket");
    rec.key.unit = std::string(fields[2]);
    rec.runtime_sum_ns = parse_number<std::int64_t>(fields[3], origin, line_no, "runtime_sum_ns");
    rec.runtime_count = parse_number<std::uint64_t>(fields[4], origin, line_no, "runtime_count");
    rec.valid = parse_number<std::uint64_t>(fields[5], origin, line_no, "v");
    rec.total = parse_number<std::uint64_t>(fields[6], origin, line_no, "t");
    if (rec.valid > rec.total) throw fail("v exceeds t");
    if (rec.runtime_count > rec.total) throw fail("runtime_count exceeds t");
    if (rec.runtime_sum_ns < 0) throw fail("negative runtime_sum_ns");
    if (rec.runtime_count == 0 && rec.runtime_sum_ns != 0) {
      throw fail("runtime_sum_ns without fault-free runs");
    }
    parsed.push_back(std::move(rec));
  }
  if (!header_seen) throw ProfileFormatError(std::string(origin) + ": empty profile file");
  for (const auto& rec : parsed) merge_record(rec);
}

void ProfileDb::persist(const std::filesystem::path& path) const {
  std::string text = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write profile database '" + path.string() + "'");
  out << text;
  if (!out) throw Error("failed writing profile database '" + path.string() + "'");
}

void ProfileDb::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ProfileFormatError("cannot open profile database '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  parse(buffer.str(), path.string());
}

std::vector<ProfileRecord> ProfileDb::records() const {
  std::lock_guard lock(mutex_);
  std::vector<ProfileRecord> out;
  out.reserve(records_.size());
  for (const auto& [_, rec] : records_) out.push_back(rec);
  return out;
}

std::size_t ProfileDb::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

}  // namespace hetft

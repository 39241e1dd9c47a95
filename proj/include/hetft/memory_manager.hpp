#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hetft/device_model.hpp"
#include "hetft/types.hpp"

namespace hetft {

struct AreaMeta {
  AreaId area;
  std::uint64_t size_elements = 0;
  ValueType value_type = ValueType::kBytes;
  AccessMode declared_mode = AccessMode::kRead;

  std::uint64_t size_bytes() const { return size_elements * element_width(value_type); }
};

/// How a write handle reaches its buffer.
enum class WriteTarget : std::uint8_t {
  kNone,         // read handle
  kInPlace,      // writes the committed sibling of the space directly
  kProvisional,  // writes an attempt-private buffer, installed on commit
};

/// Token returned by request(). Cheap to copy; the manager owns the buffers.
struct SiblingHandle {
  std::uint64_t id = 0;
  AreaId area;
  MemorySpaceId space;
  Access access = Access::kRead;
  WriteTarget target = WriteTarget::kNone;
  /// Latest version of the area when the handle was issued.
  std::uint64_t version = 0;
  /// Space the content came from; equals `space` when no copy was needed.
  MemorySpaceId source;
  Duration transfer_cost{0};
  Duration checkpoint_cost{0};
};

struct SiblingRow {
  AreaId area;
  MemorySpaceId space;
  std::uint64_t version = 0;
  bool valid = false;
  std::uint32_t readers = 0;
  bool writer = false;

  friend bool operator==(const SiblingRow&, const SiblingRow&) = default;
};

/// Versioned sibling table for registered areas.
///
/// Every area keeps at most one committed sibling per memory space. Each
/// sibling carries a version and a validity flag; the area tracks the latest
/// committed version, which never decreases. Reads are served from a valid
/// sibling at the latest version (copying one in if the target space lacks
/// it). Writes become visible only on commit_success(), which bumps the
/// version by one.
///
/// With protection on, a write never destroys the only copy of the latest
/// version: if the target space holds the sole up-to-date sibling the kernel
/// gets a fresh provisional buffer, and a protected read in device memory of
/// a sole copy first duplicates it into host memory. rollback() after a fault
/// then only has to mark the attempt's siblings invalid.
///
/// All operations are serialized by an internal mutex. Payload spans handed
/// out for a live handle stay valid until the handle is committed, rolled
/// back or released.
class MemoryManager {
 public:
  explicit MemoryManager(const Fleet& fleet);

  AreaId register_area(std::span<const std::byte> host_payload,
                       std::uint64_t size_elements, ValueType type,
                       AccessMode mode);
  /// Drops an area and all its siblings. The area must have no live handles.
  void unregister_area(AreaId area);

  SiblingHandle request(AreaId area, MemorySpaceId space, Access access,
                        bool protect);

  /// Marks the committed sibling at (area, space) invalid.
  void invalidate(AreaId area, MemorySpaceId space);

  /// Applies the writes of a fault-free attempt and releases its reads.
  void commit_success(std::span<const SiblingHandle> handles);

  /// After a faulty attempt: written siblings become invalid, provisional
  /// buffers are dropped, reads in device (non-host) memory are invalidated.
  void rollback(std::span<const SiblingHandle> handles);

  /// Drops the handles of a fault-free attempt whose results are not used
  /// (the losing DMR replica). Written siblings become invalid; reads are
  /// left alone.
  void release(std::span<const SiblingHandle> handles);

  std::span<std::byte> payload(const SiblingHandle& handle);
  std::span<const std::byte> read_payload(const SiblingHandle& handle) const;

  const AreaMeta& meta(AreaId area) const;
  std::uint64_t latest_version(AreaId area) const;
  std::vector<SiblingRow> table() const;
  std::optional<SiblingRow> row(AreaId area, MemorySpaceId space) const;
  std::vector<std::byte> sibling_bytes(AreaId area, MemorySpaceId space) const;
  std::size_t live_handles() const;

  /// Sibling table as text, one "area=.. space=.. version=.. valid=.." line
  /// per sibling.
  std::string dump() const;

  const Fleet& fleet() const { return fleet_; }

 private:
  struct Sibling {
    std::uint64_t version = 0;
    bool valid = false;
    std::uint32_t readers = 0;
    bool writer = false;
    std::vector<std::byte> bytes;
  };

  struct Area {
    AreaMeta meta;
    std::uint64_t latest = 0;
    std::map<MemorySpaceId, Sibling> siblings;
  };

  struct LiveHandle {
    SiblingHandle handle;
    std::unique_ptr<std::vector<std::byte>> buffer;  // provisional only
  };

  enum class Finish { kCommit, kRollback, kRelease };

  Area& area_locked(AreaId id);
  const Area& area_locked(AreaId id) const;
  void check_space(MemorySpaceId space) const;
  std::optional<MemorySpaceId> pick_source(const Area& area,
                                           std::optional<MemorySpaceId> exclude) const;
  void finish(std::span<const SiblingHandle> handles, Finish how);

  const Fleet& fleet_;
  mutable std::mutex mutex_;
  std::map<AreaId, Area> areas_;
  std::map<std::uint64_t, LiveHandle> live_;
  std::uint64_t next_area_ = 0;
  std::uint64_t next_handle_ = 1;
};

}  // namespace hetft

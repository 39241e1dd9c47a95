#include "hetft/memory_manager.hpp"

#include <algorithm>
#include <sstream>

namespace hetft {

MemoryManager::MemoryManager(const Fleet& fleet) : fleet_(fleet) {}

MemoryManager::Area& MemoryManager::area_locked(AreaId id) {
  auto it = areas_.find(id);
  if (it == areas_.end()) {
    throw LookupError("unknown area " + std::to_string(id.value));
  }
  return it->second;
}

const MemoryManager::Area& MemoryManager::area_locked(AreaId id) const {
  auto it = areas_.find(id);
  if (it == areas_.end()) {
    throw LookupError("unknown area " + std::to_string(id.value));
  }
  return it->second;
}

void MemoryManager::check_space(MemorySpaceId space) const {
  if (space.value >= fleet_.spaces().size()) {
    throw LookupError("unknown memory space " + std::to_string(space.value));
  }
}

AreaId MemoryManager::register_area(std::span<const std::byte> host_payload,
                                    std::uint64_t size_elements, ValueType type,
                                    AccessMode mode) {
  if (size_elements == 0) throw RegistrationError("area size must be positive");
  std::size_t width = element_width(type);
  if (host_payload.size() != size_elements * width) {
    throw RegistrationError("host payload holds " + std::to_string(host_payload.size()) +
                            " bytes, expected " + std::to_string(size_elements * width));
  }
  std::lock_guard lock(mutex_);
  AreaId id{next_area_++};
  Area area;
  area.meta = AreaMeta{id, size_elements, type, mode};
  Sibling& host = area.siblings[fleet_.host_space()];
  host.valid = true;
  host.bytes.assign(host_payload.begin(), host_payload.end());
  areas_.emplace(id, std::move(area));
  return id;
}

void MemoryManager::unregister_area(AreaId id) {
  std::lock_guard lock(mutex_);
  area_locked(id);
  for (const auto& [_, live] : live_) {
    if (live.handle.area == id) {
      throw BusyError("area " + std::to_string(id.value) + " has live handles");
    }
  }
  areas_.erase(id);
}

std::optional<MemorySpaceId> MemoryManager::pick_source(
    const Area& area, std::optional<MemorySpaceId> exclude) const {
  std::optional<MemorySpaceId> best;
  for (const auto& [space, sib] : area.siblings) {
    if (!sib.valid || sib.version != area.latest || sib.writer) continue;
    if (exclude && space == *exclude) continue;
    if (space == fleet_.host_space()) return space;
    if (!best) best = space;  // map order is ascending id
  }
  return best;
}

SiblingHandle MemoryManager::request(AreaId id, MemorySpaceId space, Access access,
                                     bool protect) {
  std::lock_guard lock(mutex_);
  Area& area = area_locked(id);
  check_space(space);

  const std::uint64_t latest = area.latest;
  const std::uint64_t bytes = area.meta.size_bytes();
  auto up_to_date = [&](const Sibling& s) { return s.valid && s.version == latest; };
  if (std::none_of(area.siblings.begin(), area.siblings.end(),
                   [&](const auto& kv) { return up_to_date(kv.second); })) {
    throw DataLossError("area " + std::to_string(id.value) +
                        " has no valid sibling at version " + std::to_string(latest));
  }
  auto other_backups = [&](MemorySpaceId self) {
    return std::count_if(area.siblings.begin(), area.siblings.end(), [&](const auto& kv) {
      return kv.first != self && up_to_date(kv.second) && !kv.second.writer;
    });
  };
  auto busy = [&](const char* why) {
    return BusyError("area " + std::to_string(id.value) + " in space " +
                     fleet_.space(space).label + ": " + why);
  };

  SiblingHandle handle;
  handle.id = next_handle_++;
  handle.area = id;
  handle.space = space;
  handle.access = access;
  handle.version = latest;
  handle.source = space;

  auto existing = area.siblings.find(space);
  Sibling* here = existing == area.siblings.end() ? nullptr : &existing->second;

  // Brings the sibling in `space` up to date by copying from the best source.
  auto fill_here = [&]() -> Sibling& {
    auto src = pick_source(area, std::nullopt);
    if (!src) throw busy("every up-to-date copy is being written");
    Sibling& target = area.siblings[space];
    const Sibling& from = area.siblings.at(*src);
    target.bytes = from.bytes;
    target.version = latest;
    target.valid = true;
    handle.source = *src;
    handle.transfer_cost = fleet_.transfers().cost(*src, space, bytes);
    return target;
  };

  LiveHandle live;
  if (access == Access::kRead) {
    if (here && here->writer) throw busy("sibling is being written");
    const bool stale = !(here && up_to_date(*here));
    if (stale && here && here->readers > 0) throw busy("stale sibling still has readers");
    const bool checkpoint =
        protect && space != fleet_.host_space() && other_backups(space) == 0;
    if (checkpoint) {
      auto host = area.siblings.find(fleet_.host_space());
      if (host != area.siblings.end() && (host->second.writer || host->second.readers > 0)) {
        throw busy("host checkpoint slot is locked");
      }
    }
    if (stale) here = &fill_here();
    if (checkpoint) {
      Sibling& host = area.siblings[fleet_.host_space()];
      host.bytes = here->bytes;
      host.version = latest;
      host.valid = true;
      handle.checkpoint_cost = fleet_.copy_cost(space, fleet_.host_space(), bytes);
    }
    ++here->readers;
  } else if (!protect) {
    if (here && (here->writer || here->readers > 0)) throw busy("sibling is in use");
    if (!(here && up_to_date(*here))) here = &fill_here();
    here->writer = true;
    handle.target = WriteTarget::kInPlace;
  } else {
    const bool locked = here && (here->writer || here->readers > 0);
    if (here && up_to_date(*here)) {
      if (!locked && other_backups(space) > 0) {
        here->writer = true;
        handle.target = WriteTarget::kInPlace;
      } else {
        // Sole (or locked) up-to-date copy: the kernel writes a duplicate.
        std::optional<MemorySpaceId> src =
            here->writer ? pick_source(area, space) : std::optional{space};
        if (!src) throw busy("every up-to-date copy is being written");
        live.buffer = std::make_unique<std::vector<std::byte>>(area.siblings.at(*src).bytes);
        handle.source = *src;
        if (*src == space) {
          handle.checkpoint_cost = fleet_.copy_cost(space, space, bytes);
        } else {
          handle.transfer_cost = fleet_.transfers().cost(*src, space, bytes);
        }
        handle.target = WriteTarget::kProvisional;
      }
    } else if (locked) {
      auto src = pick_source(area, std::nullopt);
      if (!src) throw busy("every up-to-date copy is being written");
      live.buffer = std::make_unique<std::vector<std::byte>>(area.siblings.at(*src).bytes);
      handle.source = *src;
      handle.transfer_cost = fleet_.transfers().cost(*src, space, bytes);
      handle.target = WriteTarget::kProvisional;
    } else {
      // The source keeps its copy, so writing the fresh sibling in place is safe.
      here = &fill_here();
      here->writer = true;
      handle.target = WriteTarget::kInPlace;
    }
  }

  live.handle = handle;
  live_.emplace(handle.id, std::move(live));
  return handle;
}

void MemoryManager::invalidate(AreaId id, MemorySpaceId space) {
  std::lock_guard lock(mutex_);
  Area& area = area_locked(id);
  check_space(space);
  auto it = area.siblings.find(space);
  if (it == area.siblings.end()) {
    throw LookupError("area " + std::to_string(id.value) + " has no sibling in space " +
                      fleet_.space(space).label);
  }
  if (it->second.writer) {
    throw BusyError("cannot invalidate a sibling with an outstanding write handle");
  }
  it->second.valid = false;
}

void MemoryManager::finish(std::span<const SiblingHandle> handles, Finish how) {
  std::lock_guard lock(mutex_);
  std::map<std::pair<AreaId, MemorySpaceId>, std::uint32_t> batch_reads;
  for (const auto& h : handles) {
    if (!live_.contains(h.id)) throw LookupError("unknown or finished handle");
    if (h.access == Access::kRead) ++batch_reads[{h.area, h.space}];
  }
  if (how == Finish::kCommit) {
    for (const auto& h : handles) {
      if (h.target != WriteTarget::kProvisional) continue;
      const Area& area = area_locked(h.area);
      auto it = area.siblings.find(h.space);
      if (it == area.siblings.end()) continue;
      std::uint32_t own = batch_reads[{h.area, h.space}];
      if (it->second.writer || it->second.readers > own) {
        throw BusyError("cannot install result over a sibling in use");
      }
    }
  }
  const bool faulty = how == Finish::kRollback;
  for (const auto& h : handles) {
    auto node = live_.extract(h.id);
    LiveHandle& live = node.mapped();
    Area& area = area_locked(h.area);
    switch (h.target) {
      case WriteTarget::kNone: {
        Sibling& sib = area.siblings.at(h.space);
        --sib.readers;
        if (faulty && h.space != fleet_.host_space()) sib.valid = false;
        break;
      }
      case WriteTarget::kInPlace: {
        Sibling& sib = area.siblings.at(h.space);
        sib.writer = false;
        if (how == Finish::kCommit) {
          sib.version = ++area.latest;
          sib.valid = true;
        } else {
          sib.valid = false;
        }
        break;
      }
      case WriteTarget::kProvisional: {
        if (how == Finish::kCommit) {
          Sibling& sib = area.siblings[h.space];
          sib.bytes = std::move(*live.buffer);
          sib.version = ++area.latest;
          sib.valid = true;
        } else if (!area.siblings.contains(h.space)) {
          // The device buffer stays allocated as an invalid sibling.
          Sibling& sib = area.siblings[h.space];
          sib.bytes = std::move(*live.buffer);
          sib.version = h.version;
          sib.valid = false;
        }
        break;
      }
    }
  }
}

void MemoryManager::commit_success(std::span<const SiblingHandle> handles) {
  finish(handles, Finish::kCommit);
}

void MemoryManager::rollback(std::span<const SiblingHandle> handles) {
  finish(handles, Finish::kRollback);
}

void MemoryManager::release(std::span<const SiblingHandle> handles) {
  finish(handles, Finish::kRelease);
}

std::span<std::byte> MemoryManager::payload(const SiblingHandle& handle) {
  std::lock_guard lock(mutex_);
  auto it = live_.find(handle.id);
  if (it == live_.end()) throw LookupError("unknown or finished handle");
  if (it->second.buffer) return *it->second.buffer;
  return area_locked(handle.area).siblings.at(handle.space).bytes;
}

std::span<const std::byte> MemoryManager::read_payload(const SiblingHandle& handle) const {
  std::lock_guard lock(mutex_);
  auto it = live_.find(handle.id);
  if (it == live_.end()) throw LookupError("unknown or finished handle");
  if (it->second.buffer) return *it->second.buffer;
  return area_locked(handle.area).siblings.at(handle.space).bytes;
}

const AreaMeta& MemoryManager::meta(AreaId id) const {
  std::lock_guard lock(mutex_);
  return area_locked(id).meta;
}

std::uint64_t MemoryManager::latest_version(AreaId id) const {
  std::lock_guard lock(mutex_);
  return area_locked(id).latest;
}

std::vector<SiblingRow> MemoryManager::table() const {
  std::lock_guard lock(mutex_);
  std::vector<SiblingRow> rows;
  for (const auto& [id, area] : areas_) {
    for (const auto& [space, sib] : area.siblings) {
      rows.push_back({id, space, sib.version, sib.valid, sib.readers, sib.writer});
    }
  }
  return rows;
}

std::optional<SiblingRow> MemoryManager::row(AreaId id, MemorySpaceId space) const {
  std::lock_guard lock(mutex_);
  const Area& area = area_locked(id);
  auto it = area.siblings.find(space);
  if (it == area.siblings.end()) return std::nullopt;
  const Sibling& sib = it->second;
  return SiblingRow{id, space, sib.version, sib.valid, sib.readers, sib.writer};
}

std::vector<std::byte> MemoryManager::sibling_bytes(AreaId id, MemorySpaceId space) const {
  std::lock_guard lock(mutex_);
  const Area& area = area_locked(id);
  auto it = area.siblings.find(space);
  if (it == area.siblings.end()) throw LookupError("no sibling in that space");
  return it->second.bytes;
}

std::size_t MemoryManager::live_handles() const {
  std::lock_guard lock(mutex_);
  return live_.size();
}

std::string MemoryManager::dump() const {
  std::ostringstream out;
  for (const auto& r : table()) {
    out << "area=" << r.area.value << " space=" << fleet_.space(r.space).label
        << " version=" << r.version << " valid=" << (r.valid ? 1 : 0);
    if (r.readers) out << " readers=" << r.readers;
    if (r.writer) out << " writer=1";
    out << '\n';
  }
  return out.str();
}

}  // namespace hetft

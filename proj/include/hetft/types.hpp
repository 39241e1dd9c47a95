#pragma once

#include <chrono>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hetft {

/// Virtual (simulated) time. All accounting is done in integral nanoseconds so
/// that cost breakdowns add up exactly.
using Duration = std::chrono::nanoseconds;

using KernelId = std::string;

struct MemorySpaceId {
  std::uint32_t value = 0;
  friend auto operator<=>(MemorySpaceId, MemorySpaceId) = default;
};

struct UnitId {
  std::uint32_t value = 0;
  friend auto operator<=>(UnitId, UnitId) = default;
};

struct AreaId {
  std::uint64_t value = 0;
  friend auto operator<=>(AreaId, AreaId) = default;
};

enum class ValueType : std::uint8_t {
  kInt32,
  kInt64,
  kBytes,
  kFloat32,
  kFloat64,
};

std::size_t element_width(ValueType type);
bool is_floating(ValueType type);
std::string_view to_string(ValueType type);
/// Accepts "int32", "int64", "bytes", "float32"/"float", "float64"/"double".
ValueType parse_value_type(std::string_view name);

/// Mode an area was registered with.
enum class AccessMode : std::uint8_t { kRead, kWrite, kReadWrite };

std::string_view to_string(AccessMode mode);
AccessMode parse_access_mode(std::string_view mode);

/// Access requested by a kernel for one attempt. "rw" areas are requested
/// with write access (read-modify-write, content is copied in).
enum class Access : std::uint8_t { kRead, kWrite };

inline Access access_for(AccessMode mode) {
  return mode == AccessMode::kRead ? Access::kRead : Access::kWrite;
}

// Error hierarchy. Every error the library raises derives from Error.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A kernel/unit pairing that can never run (signals a mapper bug).
class DispatchError : public Error {
 public:
  using Error::Error;
};

class RegistrationError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

/// No valid sibling holds the latest version of an area.
class DataLossError : public Error {
 public:
  using Error::Error;
};

/// A sibling is locked by an outstanding handle that conflicts with the request.
class BusyError : public Error {
 public:
  using Error::Error;
};

class ProfileFormatError : public Error {
 public:
  using Error::Error;
};

class StrategyInfeasibleError : public Error {
 public:
  using Error::Error;
};

class UnrecoverableTaskError : public Error {
 public:
  using Error::Error;
};

class DeclarationError : public Error {
 public:
  using Error::Error;
};

class BindingError : public Error {
 public:
  using Error::Error;
};

/// Thrown inside a kernel body that touches an argument without requesting it.
class RequestDisciplineError : public Error {
 public:
  using Error::Error;
};

/// Thrown by a kernel body to report an error code from a device API.
class KernelApiError : public Error {
 public:
  using Error::Error;
};

/// Raised by the Perf strategy, which does not recover from faults.
class TaskFaultError : public Error {
 public:
  using Error::Error;
};

}  // namespace hetft

template <>
struct std::hash<hetft::AreaId> {
  std::size_t operator()(hetft::AreaId id) const noexcept {
    return std::hash<std::uint64_t>{}(id.value);
  }
};

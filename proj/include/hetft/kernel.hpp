#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "hetft/types.hpp"

namespace hetft {

using Scalar = std::variant<std::int64_t, double>;

/// Argument view handed to a kernel body for one attempt.
///
/// Area arguments are staged by the runtime before the body starts; the body
/// still has to request each one before touching its bytes.
class KernelContext {
 public:
  std::uint64_t size() const { return size_; }
  UnitId unit() const { return unit_; }
  const std::string& unit_name() const { return unit_name_; }
  const std::string& unit_kind() const { return unit_kind_; }
  const KernelId& kernel() const { return kernel_; }
  std::size_t arity() const { return slots_.size(); }

  /// Marks area argument `arg` as requested. A write request on an area
  /// staged for reading throws RequestDisciplineError.
  void request(std::size_t arg, Access access);

  std::span<const std::byte> bytes(std::size_t arg) const;
  std::span<std::byte> mutable_bytes(std::size_t arg);
  std::uint64_t elements(std::size_t arg) const;
  ValueType value_type(std::size_t arg) const;

  template <class T>
  std::span<const T> request_read(std::size_t arg) {
    request(arg, Access::kRead);
    check_width(arg, sizeof(T));
    auto raw = bytes(arg);
    return {reinterpret_cast<const T*>(raw.data()), raw.size() / sizeof(T)};
  }

  template <class T>
  std::span<T> request_write(std::size_t arg) {
    request(arg, Access::kWrite);
    check_width(arg, sizeof(T));
    auto raw = mutable_bytes(arg);
    return {reinterpret_cast<T*>(raw.data()), raw.size() / sizeof(T)};
  }

  template <class T>
  T scalar(std::size_t arg) const {
    const Slot& s = slot(arg);
    if (s.is_area) throw RequestDisciplineError("argument " + std::to_string(arg) + " is an area");
    return std::visit([](auto v) { return static_cast<T>(v); }, s.scalar);
  }

 private:
  friend class Executor;

  struct Slot {
    bool is_area = false;
    ValueType type = ValueType::kBytes;
    std::uint64_t elements = 0;
    Access staged = Access::kRead;
    bool requested = false;
    Access requested_as = Access::kRead;
    std::span<const std::byte> read;
    std::span<std::byte> write;
    Scalar scalar;
  };

  const Slot& slot(std::size_t arg) const;
  Slot& slot(std::size_t arg);
  void check_width(std::size_t arg, std::size_t width) const;

  std::uint64_t size_ = 0;
  UnitId unit_;
  std::string unit_name_;
  std::string unit_kind_;
  KernelId kernel_;
  std::vector<Slot> slots_;
};

using KernelBody = std::function<void(KernelContext&)>;

struct KernelVariant {
  KernelId id;
  std::string kind;
  KernelBody body;
};

struct BoundArg {
  bool is_area = false;
  AreaId area;
  Scalar scalar;
};

}  // namespace hetft

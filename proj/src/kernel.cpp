#include "hetft/kernel.hpp"

namespace hetft {

const KernelContext::Slot& KernelContext::slot(std::size_t arg) const {
  if (arg >= slots_.size()) {
    throw RequestDisciplineError("argument index " + std::to_string(arg) + " out of range");
  }
  return slots_[arg];
}

KernelContext::Slot& KernelContext::slot(std::size_t arg) {
  return const_cast<Slot&>(std::as_const(*this).slot(arg));
}

void KernelContext::request(std::size_t arg, Access access) {
  Slot& s = slot(arg);
  if (!s.is_area) {
    throw RequestDisciplineError("argument " + std::to_string(arg) + " is not an area");
  }
  if (access == Access::kWrite && s.staged != Access::kWrite) {
    throw RequestDisciplineError("write request on read-only argument " + std::to_string(arg));
  }
  if (!s.requested || access == Access::kWrite) s.requested_as = access;
  s.requested = true;
}

std::span<const std::byte> KernelContext::bytes(std::size_t arg) const {
  const Slot& s = slot(arg);
  if (!s.is_area || !s.requested) {
    throw RequestDisciplineError("argument " + std::to_string(arg) +
                                 " touched without a prior request");
  }
  if (s.staged == Access::kWrite) return s.write;
  return s.read;
}

std::span<std::byte> KernelContext::mutable_bytes(std::size_t arg) {
  Slot& s = slot(arg);
  if (!s.is_area || !s.requested || s.requested_as != Access::kWrite) {
    throw RequestDisciplineError("argument " + std::to_string(arg) +
                                 " written without a prior write request");
  }
  return s.write;
}

std::uint64_t KernelContext::elements(std::size_t arg) const { return slot(arg).elements; }

ValueType KernelContext::value_type(std::size_t arg) const { return slot(arg).type; }

void KernelContext::check_width(std::size_t arg, std::size_t width) const {
  const Slot& s = slot(arg);
  if (s.type != ValueType::kBytes && element_width(s.type) != width) {
    throw RequestDisciplineError("argument " + std::to_string(arg) + " holds " +
                                 std::string(to_string(s.type)) + " elements");
  }
}

}  // namespace hetft

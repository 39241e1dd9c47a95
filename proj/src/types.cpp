#include "hetft/types.hpp"

#include <string>

namespace hetft {

std::size_t element_width(ValueType type) {
  switch (type) {
    case ValueType::kInt32:
    case ValueType::kFloat32:
      return 4;
    case ValueType::kInt64:
    case ValueType::kFloat64:
      return 8;
    case ValueType::kBytes:
      return 1;
  }
  throw RegistrationError("unknown value type");
}

bool is_floating(ValueType type) {
  return type == ValueType::kFloat32 || type == ValueType::kFloat64;
}

std::string_view to_string(ValueType type) {
  switch (type) {
    case ValueType::kInt32: return "int32";
    case ValueType::kInt64: return "int64";
    case ValueType::kBytes: return "bytes";
    case ValueType::kFloat32: return "float32";
    case ValueType::kFloat64: return "float64";
  }
  return "unknown";
}

ValueType parse_value_type(std::string_view name) {
  if (name == "int32" || name == "int") return ValueType::kInt32;
  if (name == "int64") return ValueType::kInt64;
  if (name == "bytes") return ValueType::kBytes;
  if (name == "float32" || name == "float") return ValueType::kFloat32;
  if (name == "float64" || name == "double") return ValueType::kFloat64;
  throw RegistrationError("unknown value type '" + std::string(name) + "'");
}

std::string_view to_string(AccessMode mode) {
  switch (mode) {
    case AccessMode::kRead: return "r";
    case AccessMode::kWrite: return "w";
    case AccessMode::kReadWrite: return "rw";
  }
  return "?";
}

AccessMode parse_access_mode(std::string_view mode) {
  if (mode == "r") return AccessMode::kRead;
  if (mode == "w") return AccessMode::kWrite;
  if (mode == "rw") return AccessMode::kReadWrite;
  throw RegistrationError("unknown access mode '" + std::string(mode) + "'");
}

}  // namespace hetft

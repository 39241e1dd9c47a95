#include "hetft/device_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace hetft {

namespace {

using nlohmann::json;

Duration from_us(double us) {
  return Duration(static_cast<std::int64_t>(std::llround(us * 1000.0)));
}

std::string field(std::string_view prefix, std::string_view name) {
  std::string out(prefix);
  out += '.';
  out += name;
  return out;
}

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ConfigError(where + ": " + what);
}

double number(const json& obj, std::string_view key, const std::string& where,
              double fallback, bool required = false) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    if (required) fail(field(where, key), "missing");
    return fallback;
  }
  if (!it->is_number()) fail(field(where, key), "expected a number");
  return it->get<double>();
}

double non_negative(const json& obj, std::string_view key,
                    const std::string& where, double fallback,
                    bool required = false) {
  double value = number(obj, key, where, fallback, required);
  if (!(value >= 0.0)) fail(field(where, key), "must be non-negative");
  return value;
}

double probability(const json& obj, std::string_view key,
                   const std::string& where) {
  double value = number(obj, key, where, 0.0);
  if (!(value >= 0.0 && value <= 1.0)) fail(field(where, key), "must lie in [0, 1]");
  return value;
}

std::string text(const json& obj, std::string_view key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(field(where, key), "missing");
  if (!it->is_string() || it->get<std::string>().empty()) {
    fail(field(where, key), "expected a non-empty string");
  }
  return it->get<std::string>();
}

SpeedProfile parse_speed(const json& obj, const std::string& where,
                         std::string_view per_unit_key) {
  SpeedProfile speed;
  double base_us = non_negative(obj, "base_latency_us", where, 0.0, true);
  speed.base_latency = from_us(base_us);
  if (speed.base_latency <= Duration::zero()) {
    fail(field(where, "base_latency_us"), "must be positive");
  }
  speed.per_element_ns = non_negative(obj, per_unit_key, where, 0.0);
  if (auto it = obj.find("piecewise"); it != obj.end()) {
    if (!it->is_array()) fail(field(where, "piecewise"), "expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const json& entry = (*it)[i];
      std::string at = field(where, "piecewise[" + std::to_string(i) + "]");
      double size = non_negative(entry, "size", at, 0.0, true);
      Duration latency = from_us(non_negative(entry, "latency_us", at, 0.0, true));
      if (latency <= Duration::zero()) fail(field(at, "latency_us"), "must be positive");
      speed.piecewise[static_cast<std::uint64_t>(size)] = latency;
    }
  }
  return speed;
}

FaultModel parse_faults(const json& obj, const std::string& where) {
  FaultModel model;
  model.abort_prob = probability(obj, "abort_prob", where);
  model.api_error_prob = probability(obj, "api_error_prob", where);
  model.hang_prob = probability(obj, "hang_prob", where);
  model.corrupt_prob = probability(obj, "corrupt_prob", where);
  if (model.total() > 1.0 + 1e-12) fail(where, "fault probabilities sum above 1");
  model.rng_seed = static_cast<std::uint64_t>(non_negative(obj, "seed", where, 1.0));
  if (auto it = obj.find("corruption"); it != obj.end()) {
    std::string at = field(where, "corruption");
    if (auto mode = it->find("mode"); mode != it->end()) {
      std::string name = mode->is_string() ? mode->get<std::string>() : "";
      if (name == "scale") {
        model.corruption.mode = CorruptionMode::kScale;
      } else if (name == "bitflip") {
        model.corruption.mode = CorruptionMode::kBitFlip;
      } else {
        fail(field(at, "mode"), "expected \"scale\" or \"bitflip\"");
      }
    }
    model.corruption.magnitude = non_negative(*it, "magnitude", at, 0.01);
  }
  return model;
}

template <class T>
void perturb_scalar(std::byte* where, const CorruptionSpec& spec) {
  T value;
  std::memcpy(&value, where, sizeof(T));
  if constexpr (std::is_floating_point_v<T>) {
    value = value == T(0) ? static_cast<T>(spec.magnitude)
                          : static_cast<T>(value * (1.0 + spec.magnitude));
  } else {
    double step = std::max(1.0, std::round(std::fabs(static_cast<double>(value)) *
                                           spec.magnitude));
    value = static_cast<T>(value + static_cast<T>(step));
  }
  std::memcpy(where, &value, sizeof(T));
}

}  // namespace

Duration SpeedProfile::runtime(std::uint64_t size) const {
  if (auto it = piecewise.find(size); it != piecewise.end()) return it->second;
  auto extra = static_cast<std::int64_t>(
      std::llround(per_element_ns * static_cast<double>(size)));
  return base_latency + Duration(extra);
}

const SpeedProfile& ProcessingUnit::speed_for(const KernelId& kernel) const {
  auto it = kernel_speeds.find(kernel);
  return it == kernel_speeds.end() ? speed : it->second;
}

TransferCostModel::TransferCostModel(std::size_t spaces, double default_ns_per_byte)
    : spaces_(spaces), matrix_(spaces * spaces, default_ns_per_byte) {
  for (std::size_t i = 0; i < spaces; ++i) matrix_[i * spaces + i] = 0.0;
}

void TransferCostModel::set(MemorySpaceId from, MemorySpaceId to, double ns_per_byte) {
  if (from == to) return;
  matrix_.at(from.value * spaces_ + to.value) = ns_per_byte;
}

double TransferCostModel::ns_per_byte(MemorySpaceId from, MemorySpaceId to) const {
  if (from == to) return 0.0;
  return matrix_.at(from.value * spaces_ + to.value);
}

Duration TransferCostModel::cost(MemorySpaceId from, MemorySpaceId to,
                                 std::uint64_t bytes) const {
  return Duration(static_cast<std::int64_t>(
      std::llround(ns_per_byte(from, to) * static_cast<double>(bytes))));
}

const MemorySpace& Fleet::space(MemorySpaceId id) const {
  if (id.value >= spaces_.size()) throw LookupError("unknown memory space");
  return spaces_[id.value];
}

const ProcessingUnit& Fleet::unit(UnitId id) const {
  if (id.value >= units_.size()) throw LookupError("unknown processing unit");
  return units_[id.value];
}

ProcessingUnit& Fleet::mutable_unit(UnitId id) {
  if (id.value >= units_.size()) throw LookupError("unknown processing unit");
  return units_[id.value];
}

std::optional<UnitId> Fleet::find_unit(std::string_view name) const {
  for (const auto& unit : units_) {
    if (unit.name == name) return unit.id;
  }
  return std::nullopt;
}

std::optional<MemorySpaceId> Fleet::find_space(std::string_view label) const {
  for (const auto& space : spaces_) {
    if (space.label == label) return space.id;
  }
  return std::nullopt;
}

bool Fleet::has_kind(std::string_view kind) const {
  return std::any_of(units_.begin(), units_.end(),
                     [&](const ProcessingUnit& u) { return u.kind == kind; });
}

Duration Fleet::copy_cost(MemorySpaceId from, MemorySpaceId to,
                          std::uint64_t bytes) const {
  if (from == to) {
    return Duration(static_cast<std::int64_t>(std::llround(
        space(from).copy_ns_per_byte * static_cast<double>(bytes))));
  }
  return transfers_.cost(from, to, bytes);
}

std::vector<VoterKernel> default_voter_kernels() {
  auto make = [](std::string id, std::string kind, double base_us, double per_byte) {
    SpeedProfile speed;
    speed.base_latency = from_us(base_us);
    speed.per_element_ns = per_byte;
    return VoterKernel{std::move(id), std::move(kind), speed};
  };
  // Crossovers: 2 + 1.0x = 10 + 0.2x at x = 10 kB; 10 + 0.2x = 30 + 0.01x at
  // x ~ 105 kB.
  return {make("vote_single", "cpu", 2.0, 1.0),
          make("vote_parallel", "cpu", 10.0, 0.2),
          make("vote_gpu", "gpu", 30.0, 0.01)};
}

Fleet load_fleet(const json& config) {
  if (!config.is_object()) throw ConfigError("fleet: expected an object");
  Fleet fleet;

  const auto spaces_it = config.find("memory_spaces");
  if (spaces_it == config.end() || !spaces_it->is_array() || spaces_it->empty()) {
    fail("memory_spaces", "expected a non-empty array");
  }
  std::optional<MemorySpaceId> host;
  for (std::size_t i = 0; i < spaces_it->size(); ++i) {
    const json& entry = (*spaces_it)[i];
    std::string where = "memory_spaces[" + std::to_string(i) + "]";
    MemorySpace space;
    space.id = MemorySpaceId{static_cast<std::uint32_t>(i)};
    space.label = text(entry, "id", where);
    if (fleet.find_space(space.label)) {
      fail(field(where, "id"), "duplicate memory space '" + space.label + "'");
    }
    space.host = entry.value("host", false);
    space.copy_ns_per_byte = non_negative(entry, "copy_ns_per_byte", where, 0.0);
    if (space.host) {
      if (host) fail(field(where, "host"), "more than one host space");
      host = space.id;
    }
    fleet.spaces_.push_back(std::move(space));
  }
  if (!host) fail("memory_spaces", "missing host space");
  fleet.host_ = *host;

  double default_cost = non_negative(config, "default_ns_per_byte", "fleet", 0.0);
  fleet.transfers_ = TransferCostModel(fleet.spaces_.size(), default_cost);
  if (auto it = config.find("transfers"); it != config.end()) {
    if (!it->is_array()) fail("transfers", "expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const json& entry = (*it)[i];
      std::string where = "transfers[" + std::to_string(i) + "]";
      auto from = fleet.find_space(text(entry, "from", where));
      if (!from) fail(field(where, "from"), "unknown memory space");
      auto to = fleet.find_space(text(entry, "to", where));
      if (!to) fail(field(where, "to"), "unknown memory space");
      fleet.transfers_.set(*from, *to, non_negative(entry, "ns_per_byte", where, 0.0, true));
    }
  }

  const auto units_it = config.find("units");
  if (units_it == config.end() || !units_it->is_array() || units_it->empty()) {
    fail("units", "expected a non-empty array (empty fleet)");
  }
  for (std::size_t i = 0; i < units_it->size(); ++i) {
    const json& entry = (*units_it)[i];
    std::string where = "units[" + std::to_string(i) + "]";
    ProcessingUnit unit;
    unit.id = UnitId{static_cast<std::uint32_t>(i)};
    unit.name = text(entry, "id", where);
    if (fleet.find_unit(unit.name)) {
      fail(field(where, "id"), "duplicate unit id '" + unit.name + "'");
    }
    unit.kind = text(entry, "kind", where);
    auto space = fleet.find_space(text(entry, "memory_space", where));
    if (!space) fail(field(where, "memory_space"), "unknown memory space");
    unit.memory_space = *space;
    unit.speed = parse_speed(entry, where, "per_elem_cost_ns");
    if (auto kernels = entry.find("kernels"); kernels != entry.end()) {
      if (!kernels->is_object()) fail(field(where, "kernels"), "expected an object");
      for (const auto& [name, spec] : kernels->items()) {
        unit.kernel_speeds[name] =
            parse_speed(spec, field(where, "kernels." + name), "per_elem_cost_ns");
      }
    }
    unit.faults = parse_faults(entry, where);
    unit.jitter = non_negative(entry, "jitter", where, 0.0);
    if (unit.jitter >= 1.0) fail(field(where, "jitter"), "must be below 1");
    fleet.units_.push_back(std::move(unit));
  }

  if (auto it = config.find("voter_kernels"); it != config.end()) {
    if (!it->is_array()) fail("voter_kernels", "expected an array");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < it->size(); ++i) {
      const json& entry = (*it)[i];
      std::string where = "voter_kernels[" + std::to_string(i) + "]";
      VoterKernel voter;
      voter.id = text(entry, "id", where);
      if (!seen.insert(voter.id).second) {
        fail(field(where, "id"), "duplicate voter kernel '" + voter.id + "'");
      }
      voter.kind = text(entry, "kind", where);
      voter.speed = parse_speed(entry, where, "per_byte_cost_ns");
      fleet.voters_.push_back(std::move(voter));
    }
  } else {
    fleet.voters_ = default_voter_kernels();
  }
  return fleet;
}

Fleet load_fleet_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open fleet config '" + path.string() + "'");
  json config;
  try {
    in >> config;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return load_fleet(config);
}

std::string_view to_string(FaultClass fault) {
  switch (fault) {
    case FaultClass::kNone: return "none";
    case FaultClass::kAbort: return "abort";
    case FaultClass::kApiError: return "api_error";
    case FaultClass::kHang: return "hang";
    case FaultClass::kCorrupt: return "corrupt";
  }
  return "?";
}

double unit_interval(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

DeviceSimulator::DeviceSimulator(const Fleet& fleet) : fleet_(fleet) {
  states_.reserve(fleet.units().size());
  for (const auto& unit : fleet.units()) {
    UnitState state;
    state.fault_rng.seed(unit.faults.rng_seed);
    state.aux_rng.seed(mix_seed(unit.faults.rng_seed, 0x6a177e7));
    states_.push_back(std::move(state));
  }
}

Duration DeviceSimulator::simulated_duration(UnitId unit, const KernelId& kernel,
                                             std::uint64_t size) const {
  return fleet_.unit(unit).speed_for(kernel).runtime(size);
}

FaultClass DeviceSimulator::draw_locked(const ProcessingUnit& unit,
                                        UnitState& state) {
  const FaultModel& m = unit.faults;
  double u = unit_interval(state.fault_rng);
  double edge = m.abort_prob;
  if (u < edge) return FaultClass::kAbort;
  edge += m.api_error_prob;
  if (u < edge) return FaultClass::kApiError;
  edge += m.hang_prob;
  if (u < edge) return FaultClass::kHang;
  edge += m.corrupt_prob;
  if (u < edge) return FaultClass::kCorrupt;
  return FaultClass::kNone;
}

FaultClass DeviceSimulator::draw_fault(UnitId unit) {
  return draw_locked(fleet_.unit(unit), states_.at(unit.value));
}

Duration DeviceSimulator::jittered(const ProcessingUnit& unit, UnitState& state,
                                   Duration nominal) {
  if (unit.jitter <= 0.0) return nominal;
  double u = unit_interval(state.aux_rng);
  double scale = 1.0 + unit.jitter * (2.0 * u - 1.0);
  auto ns = static_cast<std::int64_t>(
      std::llround(static_cast<double>(nominal.count()) * scale));
  return Duration(std::max<std::int64_t>(ns, 1));
}

void DeviceSimulator::corrupt(const ProcessingUnit& unit, UnitState& state,
                              std::span<const OutputBuffer> outputs) {
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (!outputs[i].bytes.empty()) usable.push_back(i);
  }
  if (usable.empty()) return;
  const OutputBuffer& out = outputs[usable[state.fault_rng() % usable.size()]];
  std::size_t width = element_width(out.type);
  std::size_t count = out.bytes.size() / width;
  std::byte* at = out.bytes.data() + (state.fault_rng() % count) * width;
  const CorruptionSpec& spec = unit.faults.corruption;
  if (spec.mode == CorruptionMode::kBitFlip) {
    // Lowest-order byte in little-endian layout.
    std::size_t low = std::endian::native == std::endian::little ? 0 : width - 1;
    at[low] ^= std::byte{0x01};
    return;
  }
  switch (out.type) {
    case ValueType::kInt32: perturb_scalar<std::int32_t>(at, spec); break;
    case ValueType::kInt64: perturb_scalar<std::int64_t>(at, spec); break;
    case ValueType::kFloat32: perturb_scalar<float>(at, spec); break;
    case ValueType::kFloat64: perturb_scalar<double>(at, spec); break;
    case ValueType::kBytes: *at ^= std::byte{0x5a}; break;
  }
}

ExecutionOutcome DeviceSimulator::simulate_execution(
    UnitId unit_id, const KernelId& kernel, std::string_view kernel_kind,
    std::uint64_t size, std::span<const OutputBuffer> outputs,
    const std::function<void()>& body) {
  const ProcessingUnit& unit = fleet_.unit(unit_id);
  if (unit.kind != kernel_kind) {
    throw DispatchError("kernel '" + kernel + "' (kind " + std::string(kernel_kind) +
                        ") cannot run on unit '" + unit.name + "' (kind " +
                        unit.kind + ")");
  }
  UnitState& state = states_.at(unit_id.value);

  ExecutionOutcome outcome;
  outcome.unit = unit_id;
  outcome.kernel = kernel;
  Duration duration = jittered(unit, state, unit.speed_for(kernel).runtime(size));
  outcome.fault = draw_locked(unit, state);

  auto scribble = [&] {
    for (const auto& out : outputs) {
      std::fill(out.bytes.begin(), out.bytes.end(), std::byte{0xde});
    }
  };

  switch (outcome.fault) {
    case FaultClass::kNone:
    case FaultClass::kCorrupt:
      try {
        body();
      } catch (const KernelApiError& e) {
        outcome.fault = FaultClass::kApiError;
        outcome.message = e.what();
        scribble();
        break;
      } catch (const std::exception& e) {
        outcome.fault = FaultClass::kAbort;
        outcome.message = e.what();
        scribble();
        break;
      }
      if (outcome.fault == FaultClass::kCorrupt) corrupt(unit, state, outputs);
      break;
    case FaultClass::kAbort:
      outcome.message = "injected abort";
      scribble();
      break;
    case FaultClass::kApiError:
      outcome.message = "injected device API error";
      scribble();
      break;
    case FaultClass::kHang:
      outcome.message = "injected hang";
      scribble();
      break;
  }
  if (outcome.fault != FaultClass::kHang) outcome.duration = duration;
  return outcome;
}

void DeviceSimulator::reset_context(UnitId unit) { ++states_.at(unit.value).resets; }

std::uint64_t DeviceSimulator::context_resets(UnitId unit) const {
  return states_.at(unit.value).resets;
}

}  // namespace hetft

#pragma once

#include <cstdint>
#include <cstring>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "hetft/device_model.hpp"
#include "hetft/executor.hpp"
#include "hetft/kernel.hpp"
#include "hetft/mapper.hpp"
#include "hetft/memory_manager.hpp"
#include "hetft/profile_db.hpp"
#include "hetft/voter.hpp"

namespace hetft {

struct Param {
  enum class Kind : std::uint8_t { kArea, kScalar };
  Kind kind = Kind::kArea;
  ValueType type = ValueType::kBytes;

  static Param area(ValueType t) { return {Kind::kArea, t}; }
  static Param scalar(ValueType t) { return {Kind::kScalar, t}; }
  friend bool operator==(const Param&, const Param&) = default;
};

using Signature = std::vector<Param>;
using Arg = std::variant<AreaId, std::int64_t, double>;

template <class T>
constexpr ValueType value_type_of() {
  if constexpr (std::is_same_v<T, float>) return ValueType::kFloat32;
  else if constexpr (std::is_same_v<T, double>) return ValueType::kFloat64;
  else if constexpr (std::is_same_v<T, std::int32_t>) return ValueType::kInt32;
  else if constexpr (std::is_same_v<T, std::int64_t>) return ValueType::kInt64;
  else {
    static_assert(sizeof(T) == 1, "unsupported element type");
    return ValueType::kBytes;
  }
}

struct RuntimeOptions {
  MapperConfig mapper;
  BucketMode bucketing = BucketMode::kExact;
  VoterConfig voter;
  Strategy default_strategy;
  /// Shared profile database; a private one is created when empty.
  std::shared_ptr<ProfileDb> profiles;
};

/// Public entry point: register data, declare multi-variant tasks, attach
/// kernels per unit kind and invoke tasks under a redundancy strategy.
///
///   Runtime rt(load_fleet_file("fleet.json"));
///   rt.declare_task("inc", {Param::area(ValueType::kFloat32),
///                           Param::area(ValueType::kFloat32),
///                           Param::scalar(ValueType::kInt64)});
///   rt.attach_kernel("inc", "inc_cpu", "cpu", sig, body);
///   AreaId in = rt.register_data<float>(input, AccessMode::kRead);
///   AreaId out = rt.register_data<float>(output, AccessMode::kWrite);
///   rt.invoke("inc", {in, out, std::int64_t{n}});
///   std::vector<float> result = rt.read<float>(out);
///
/// One invoke is in flight at a time; the object is not thread safe.
class Runtime {
 public:
  explicit Runtime(Fleet fleet, RuntimeOptions options = {});
  Runtime(const Runtime&) = delete;
  Runtime& operator=(const Runtime&) = delete;

  AreaId register_data(std::span<const std::byte> bytes, std::uint64_t elements, ValueType type,
                       AccessMode mode);

  template <class T>
  AreaId register_data(std::span<const T> data, AccessMode mode) {
    return register_data(std::as_bytes(data), data.size(), value_type_of<T>(), mode);
  }

  void unregister(AreaId area);

  void declare_task(const std::string& name, Signature signature);
  /// Variants for a kind without any unit in the fleet stay dormant.
  void attach_kernel(const std::string& task, const KernelId& id, const std::string& kind,
                     const Signature& signature, KernelBody body);
  void set_voter_config(const std::string& task, VoterConfig config);
  void set_default_strategy(Strategy strategy) { options_.default_strategy = strategy; }

  TaskReport invoke(const std::string& task, const std::vector<Arg>& args,
                    std::optional<Strategy> strategy = std::nullopt);

  /// Seeds the profile database with one fault-free observation per candidate
  /// pairing, at the nominal simulated runtime for these arguments.
  void calibrate(const std::string& task, const std::vector<Arg>& args);

  /// Host-space copy of the latest version; `transfer` receives the cost of
  /// bringing it to host memory.
  std::vector<std::byte> read_bytes(AreaId area, Duration* transfer = nullptr);

  template <class T>
  std::vector<T> read(AreaId area, Duration* transfer = nullptr) {
    std::vector<std::byte> raw = read_bytes(area, transfer);
    std::vector<T> out(raw.size() / sizeof(T));
    std::memcpy(out.data(), raw.data(), out.size() * sizeof(T));
    return out;
  }

  void set_trace(std::ostream* sink) { executor_->set_trace(sink); }

  const Fleet& fleet() const { return *fleet_; }
  DeviceSimulator& devices() { return *devices_; }
  MemoryManager& memory() { return *memory_; }
  ProfileDb& profiles() { return *profiles_; }
  Mapper& mapper() { return *mapper_; }
  Executor& executor() { return *executor_; }

 private:
  struct Task {
    Signature signature;
    std::vector<std::unique_ptr<KernelVariant>> variants;
    std::optional<VoterConfig> voter;
  };

  Task& task(const std::string& name);
  TaskInstance bind(const std::string& name, const std::vector<Arg>& args);

  RuntimeOptions options_;
  std::unique_ptr<Fleet> fleet_;
  std::unique_ptr<DeviceSimulator> devices_;
  std::unique_ptr<MemoryManager> memory_;
  std::shared_ptr<ProfileDb> profiles_;
  std::unique_ptr<Mapper> mapper_;
  std::unique_ptr<Executor> executor_;
  std::map<std::string, Task> tasks_;
};

}  // namespace hetft

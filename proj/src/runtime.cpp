#include "hetft/runtime.hpp"

namespace hetft {

Runtime::Runtime(Fleet fleet, RuntimeOptions options)
    : options_(std::move(options)), fleet_(std::make_unique<Fleet>(std::move(fleet))) {
  devices_ = std::make_unique<DeviceSimulator>(*fleet_);
  memory_ = std::make_unique<MemoryManager>(*fleet_);
  profiles_ = options_.profiles ? options_.profiles
                                : std::make_shared<ProfileDb>(options_.bucketing);
  mapper_ = std::make_unique<Mapper>(*fleet_, *profiles_, options_.mapper);
  executor_ = std::make_unique<Executor>(*fleet_, *devices_, *memory_, *profiles_, *mapper_);
}

AreaId Runtime::register_data(std::span<const std::byte> bytes, std::uint64_t elements,
                              ValueType type, AccessMode mode) {
  return memory_->register_area(bytes, elements, type, mode);
}

void Runtime::unregister(AreaId area) { memory_->unregister_area(area); }

void Runtime::declare_task(const std::string& name, Signature signature) {
  if (name.empty()) throw DeclarationError("task name must not be empty");
  auto [it, inserted] = tasks_.try_emplace(name);
  if (!inserted) throw DeclarationError("task '" + name + "' already declared");
  it->second.signature = std::move(signature);
}

Runtime::Task& Runtime::task(const std::string& name) {
  auto it = tasks_.find(name);
  if (it == tasks_.end()) throw DeclarationError("unknown task '" + name + "'");
  return it->second;
}

void Runtime::attach_kernel(const std::string& name, const KernelId& id, const std::string& kind,
                            const Signature& signature, KernelBody body) {
  Task& t = task(name);
  if (signature != t.signature) {
    throw DeclarationError("variant '" + id + "' does not match the signature of task '" +
                           name + "'");
  }
  if (!body) throw DeclarationError("variant '" + id + "' has no body");
  for (const auto& v : t.variants) {
    if (v->id == id) throw DeclarationError("variant '" + id + "' already attached");
  }
  t.variants.push_back(std::make_unique<KernelVariant>(KernelVariant{id, kind, std::move(body)}));
}

void Runtime::set_voter_config(const std::string& name, VoterConfig config) {
  if (!(config.float_delta >= 0.0)) throw ConfigError("float_delta must be >= 0");
  task(name).voter = config;
}

TaskInstance Runtime::bind(const std::string& name, const std::vector<Arg>& args) {
  Task& t = task(name);
  if (t.variants.empty()) {
    throw DeclarationError("task '" + name + "' has no kernel variant attached");
  }
  if (args.size() != t.signature.size()) {
    throw BindingError("task '" + name + "' takes " + std::to_string(t.signature.size()) +
                       " arguments, got " + std::to_string(args.size()));
  }
  TaskInstance inst;
  inst.name = name;
  inst.voter = t.voter.value_or(options_.voter);
  for (const auto& v : t.variants) inst.variants.push_back(v.get());
  for (std::size_t i = 0; i < args.size(); ++i) {
    const Param& p = t.signature[i];
    const std::string where = "argument " + std::to_string(i) + " of '" + name + "'";
    BoundArg bound;
    if (p.kind == Param::Kind::kArea) {
      const AreaId* area = std::get_if<AreaId>(&args[i]);
      if (!area) throw BindingError(where + " must be a registered area");
      const AreaMeta* meta = nullptr;
      try {
        meta = &memory_->meta(*area);
      } catch (const LookupError&) {
        throw BindingError(where + " refers to unregistered area " +
                           std::to_string(area->value));
      }
      if (p.type != ValueType::kBytes && meta->value_type != p.type) {
        throw BindingError(where + " expects " + std::string(to_string(p.type)) +
                           " elements, area holds " + std::string(to_string(meta->value_type)));
      }
      bound.is_area = true;
      bound.area = *area;
    } else {
      if (std::holds_alternative<AreaId>(args[i])) {
        throw BindingError(where + " must be a scalar");
      }
      if (is_floating(p.type)) {
        bound.scalar = std::visit(
            [](auto v) -> Scalar {
              if constexpr (std::is_same_v<decltype(v), AreaId>) return 0.0;
              else return static_cast<double>(v);
            },
            args[i]);
      } else {
        const auto* value = std::get_if<std::int64_t>(&args[i]);
        if (!value) throw BindingError(where + " must be an integer");
        bound.scalar = *value;
      }
    }
    inst.args.push_back(bound);
  }
  return inst;
}

TaskReport Runtime::invoke(const std::string& name, const std::vector<Arg>& args,
                           std::optional<Strategy> strategy) {
  TaskInstance inst = bind(name, args);
  return executor_->run_task(inst, strategy.value_or(options_.default_strategy));
}

void Runtime::calibrate(const std::string& name, const std::vector<Arg>& args) {
  TaskInstance inst = bind(name, args);
  const std::uint64_t size = executor_->problem_size(inst);
  for (const auto& c : executor_->candidates(inst)) {
    profiles_->record_outcome(
        c.key, RunObservation{true, devices_->simulated_duration(c.unit, c.kernel, size)});
  }
}

std::vector<std::byte> Runtime::read_bytes(AreaId area, Duration* transfer) {
  SiblingHandle h = memory_->request(area, fleet_->host_space(), Access::kRead, false);
  auto payload = memory_->read_payload(h);
  std::vector<std::byte> out(payload.begin(), payload.end());
  memory_->commit_success(std::span<const SiblingHandle>(&h, 1));
  if (transfer) *transfer = h.transfer_cost;
  return out;
}

}  // namespace hetft

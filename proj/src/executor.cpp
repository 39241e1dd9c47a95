#include "hetft/executor.hpp"

#include <algorithm>
#include <array>

namespace hetft {

// ---------------------------------------------------------------------------
// WorkerPool

WorkerPool::WorkerPool(std::size_t units) {
  workers_.reserve(units);
  for (std::size_t i = 0; i < units; ++i) {
    auto worker = std::make_unique<Worker>();
    Worker* w = worker.get();
    w->thread = std::jthread([w](std::stop_token stop) {
      while (true) {
        std::packaged_task<ExecutionOutcome()> job;
        {
          std::unique_lock lock(w->mutex);
          if (!w->cv.wait(lock, stop, [w] { return !w->queue.empty(); })) return;
          job = std::move(w->queue.front());
          w->queue.pop_front();
        }
        job();
      }
    });
    workers_.push_back(std::move(worker));
  }
}

WorkerPool::~WorkerPool() {
  for (auto& w : workers_) w->thread.request_stop();
}

std::future<ExecutionOutcome> WorkerPool::submit(UnitId unit,
                                                 std::function<ExecutionOutcome()> job) {
  Worker& w = *workers_.at(unit.value);
  std::packaged_task<ExecutionOutcome()> task(std::move(job));
  auto future = task.get_future();
  {
    std::lock_guard lock(w.mutex);
    w.queue.push_back(std::move(task));
  }
  w.cv.notify_one();
  return future;
}

// ---------------------------------------------------------------------------
// Report

std::string_view to_string(FaultEventClass cls) {
  switch (cls) {
    case FaultEventClass::kAbort: return "abort";
    case FaultEventClass::kApiError: return "api_error";
    case FaultEventClass::kTimeout: return "timeout";
    case FaultEventClass::kVoteMismatch: return "vote_mismatch";
  }
  return "?";
}

std::string_view to_string(CostComponent component) {
  switch (component) {
    case CostComponent::kCompute: return "compute";
    case CostComponent::kTransfer: return "transfer";
    case CostComponent::kCheckpoint: return "checkpoint";
    case CostComponent::kVoter: return "voter";
  }
  return "?";
}

Duration TaskReport::total() const {
  Duration sum{0};
  for (const auto& c : costs) sum += c.amount;
  return sum;
}

Duration TaskReport::component(CostComponent which) const {
  Duration sum{0};
  for (const auto& c : costs) {
    if (c.component == which) sum += c.amount;
  }
  return sum;
}

std::size_t TaskReport::fault_count(FaultEventClass cls) const {
  return static_cast<std::size_t>(
      std::count_if(faults.begin(), faults.end(), [cls](const FaultEvent& f) { return f.cls == cls; }));
}

// ---------------------------------------------------------------------------
// Executor

Executor::Executor(const Fleet& fleet, DeviceSimulator& devices, MemoryManager& memory,
                   ProfileDb& db, Mapper& mapper)
    : fleet_(fleet),
      devices_(devices),
      memory_(memory),
      db_(db),
      mapper_(mapper),
      workers_(fleet.units().size()) {}

std::uint64_t Executor::problem_size(const TaskInstance& task) const {
  std::uint64_t size = 0;
  for (const auto& arg : task.args) {
    if (arg.is_area) size = std::max(size, memory_.meta(arg.area).size_elements);
  }
  return size;
}

std::vector<Candidate> Executor::candidates(const TaskInstance& task) const {
  std::uint64_t size = problem_size(task);
  std::vector<Candidate> out;
  for (const KernelVariant* v : task.variants) {
    for (const auto& unit : fleet_.units()) {
      if (unit.kind != v->kind) continue;
      out.push_back(Candidate{v->id, v->kind, unit.id, db_.key(v->id, size, unit.name)});
    }
  }
  return out;
}

const KernelVariant* Executor::variant_for(const TaskInstance& task, const KernelId& id) const {
  for (const KernelVariant* v : task.variants) {
    if (v->id == id) return v;
  }
  throw DispatchError("task '" + task.name + "' has no variant '" + id + "'");
}

std::unique_ptr<Executor::Attempt> Executor::stage(const TaskInstance& task,
                                                   const Selection& selection, bool protect,
                                                   int replica, std::uint64_t size) {
  auto a = std::make_unique<Attempt>();
  a->id = next_attempt_++;
  a->replica = replica;
  a->selection = selection;
  a->variant = variant_for(task, selection.candidate.kernel);
  const ProcessingUnit& unit = fleet_.unit(selection.candidate.unit);
  KernelContext& ctx = a->context;
  ctx.size_ = size;
  ctx.unit_ = unit.id;
  ctx.unit_name_ = unit.name;
  ctx.unit_kind_ = unit.kind;
  ctx.kernel_ = selection.candidate.kernel;
  try {
    for (const auto& arg : task.args) {
      KernelContext::Slot slot;
      if (!arg.is_area) {
        slot.scalar = arg.scalar;
        ctx.slots_.push_back(slot);
        continue;
      }
      const AreaMeta& meta = memory_.meta(arg.area);
      Access access = access_for(meta.declared_mode);
      SiblingHandle h = memory_.request(arg.area, unit.memory_space, access, protect);
      a->handles.push_back(h);
      a->transfer += h.transfer_cost;
      a->checkpoint += h.checkpoint_cost;
      slot.is_area = true;
      slot.type = meta.value_type;
      slot.elements = meta.size_elements;
      slot.staged = access;
      if (access == Access::kWrite) {
        slot.write = memory_.payload(h);
        slot.read = slot.write;
      } else {
        slot.read = memory_.read_payload(h);
      }
      ctx.slots_.push_back(slot);
    }
  } catch (...) {
    memory_.release(a->handles);
    throw;
  }
  return a;
}

void Executor::launch(std::vector<Attempt*> attempts, std::uint64_t size) {
  std::vector<std::future<ExecutionOutcome>> futures;
  futures.reserve(attempts.size());
  for (Attempt* a : attempts) {
    futures.push_back(workers_.submit(a->selection.candidate.unit, [this, a, size] {
      std::vector<OutputBuffer> outputs;
      for (const auto& slot : a->context.slots_) {
        if (slot.is_area && slot.staged == Access::kWrite) {
          outputs.push_back(OutputBuffer{slot.write, slot.type});
        }
      }
      const Candidate& c = a->selection.candidate;
      return devices_.simulate_execution(c.unit, c.kernel, c.kernel_kind, size, outputs,
                                         [a] { a->variant->body(a->context); });
    }));
  }
  for (std::size_t i = 0; i < attempts.size(); ++i) {
    Attempt& a = *attempts[i];
    a.outcome = futures[i].get();
    const Duration deadline = a.selection.deadline;
    switch (a.outcome.fault) {
      case FaultClass::kAbort:
        a.fault = FaultEventClass::kAbort;
        break;
      case FaultClass::kApiError:
        a.fault = FaultEventClass::kApiError;
        break;
      case FaultClass::kHang:
        a.fault = FaultEventClass::kTimeout;
        break;
      case FaultClass::kNone:
      case FaultClass::kCorrupt:
        if (*a.outcome.duration > deadline) a.fault = FaultEventClass::kTimeout;
        break;
    }
    a.charged = a.fault == FaultEventClass::kTimeout ? deadline : *a.outcome.duration;
    mapper_.note_attempt(a.selection.candidate.key);
  }
}

void Executor::book_staging(TaskReport& report, const Attempt& a) const {
  if (a.transfer.count() > 0) {
    report.costs.push_back({CostComponent::kTransfer, a.transfer, "stage"});
  }
  if (a.checkpoint.count() > 0) {
    report.costs.push_back({CostComponent::kCheckpoint, a.checkpoint, "stage"});
  }
}

void Executor::record(TaskReport& report, const Attempt& a) {
  AttemptRecord rec;
  rec.id = a.id;
  rec.replica = a.replica;
  rec.kernel = a.selection.candidate.kernel;
  rec.unit = a.selection.candidate.unit;
  rec.unit_name = fleet_.unit(rec.unit).name;
  rec.duration = a.charged;
  rec.injected = a.outcome.fault;
  rec.event = a.fault;
  rec.rationale = a.selection.rationale;
  if (trace_) {
    *trace_ << "task=" << report.task << " strategy=" << report.strategy << " attempt=" << rec.id
            << " replica=" << rec.replica << " kernel=" << rec.kernel << " unit=" << rec.unit_name
            << " duration_ns=" << rec.duration.count() << " injected=" << to_string(rec.injected)
            << " event=" << (rec.event ? to_string(*rec.event) : "none")
            << " rationale=" << rec.rationale << '\n';
  }
  report.attempts.push_back(std::move(rec));
}

void Executor::fail(TaskReport& report, Attempt& a, bool rollback) {
  if (rollback) memory_.rollback(a.handles);
  a.handles.clear();
  devices_.reset_context(a.selection.candidate.unit);
  db_.record_outcome(a.selection.candidate.key, RunObservation{false, a.charged});
  mapper_.note_fault(a.selection.candidate);
  report.faults.push_back(FaultEvent{*a.fault, a.id, a.selection.candidate.unit,
                                     a.selection.candidate.kernel});
}

std::vector<ResultArea> Executor::results(const TaskInstance& task, const Attempt& a) const {
  std::vector<ResultArea> out;
  std::size_t h = 0;
  for (const auto& arg : task.args) {
    if (!arg.is_area) continue;
    const SiblingHandle& handle = a.handles.at(h++);
    if (handle.access != Access::kWrite) continue;
    out.push_back(ResultArea{arg.area, memory_.meta(arg.area).value_type,
                             memory_.read_payload(handle)});
  }
  return out;
}

TaskReport Executor::run_task(const TaskInstance& task, const Strategy& strategy) {
  if (task.variants.empty()) {
    throw DispatchError("task '" + task.name + "' has no kernel variant attached");
  }
  const std::uint64_t size = problem_size(task);
  std::vector<Candidate> cands = candidates(task);
  last_ = TaskReport{};
  last_.task = task.name;
  last_.strategy = strategy.label();
  MappingDecision decision = mapper_.select(strategy, cands);
  last_.executed = decision.kind;

  Strategy effective = strategy;
  effective.kind = decision.kind;
  if (decision.selections.size() == 2) {
    run_redundant(task, effective, decision, cands, size, last_);
  } else {
    run_single(task, effective, decision, cands, size, last_);
  }
  return last_;
}

void Executor::run_single(const TaskInstance& task, const Strategy& strategy,
                          const MappingDecision& decision, std::span<const Candidate> cands,
                          std::uint64_t size, TaskReport& report) {
  Selection sel = decision.selections.front();
  RetryState state;
  while (true) {
    ++state.attempts;
    auto a = stage(task, sel, decision.protect, 0, size);
    book_staging(report, *a);
    launch({a.get()}, size);
    report.costs.push_back({CostComponent::kCompute, a->charged, a->selection.candidate.kernel});
    record(report, *a);
    if (!a->fault) {
      db_.record_outcome(sel.candidate.key, RunObservation{true, *a->outcome.duration});
      memory_.commit_success(a->handles);
      report.committed_by = sel.candidate;
      report.corrupted_commit = a->outcome.fault == FaultClass::kCorrupt;
      return;
    }
    fail(report, *a, true);
    if (decision.kind == StrategyKind::kPerf) {
      throw TaskFaultError("task '" + task.name + "' faulted (" +
                           std::string(to_string(*a->fault)) + ") on unit '" +
                           fleet_.unit(sel.candidate.unit).name + "': " + a->outcome.message);
    }
    sel = mapper_.on_fault(strategy, cands, state, sel.candidate);
  }
}

void Executor::run_redundant(const TaskInstance& task, const Strategy& strategy,
                             const MappingDecision& decision, std::span<const Candidate> cands,
                             std::uint64_t size, TaskReport& report) {
  std::array<Selection, 2> sel{decision.selections[0], decision.selections[1]};
  std::array<std::unique_ptr<Attempt>, 2> live;
  std::vector<int> pending{0, 1};
  RetryState state;
  VoterConfig voter = task.voter;
  if (strategy.voter_placement == VoterPlacement::kAvoidTaskUnits) {
    voter.placement = VoterPlacement::kAvoidTaskUnits;
  }

  auto repair = [&](std::vector<Candidate> failed) {
    MappingDecision next = mapper_.reselect_pair(strategy, cands, state, failed);
    sel = {next.selections[0], next.selections[1]};
    pending = {0, 1};
  };

  try {
    while (true) {
      std::vector<Attempt*> batch;
      for (int r : pending) {
        ++state.attempts;
        live[r] = stage(task, sel[r], true, r, size);
        book_staging(report, *live[r]);
        batch.push_back(live[r].get());
      }
      launch(batch, size);
      Duration round{0};
      for (Attempt* a : batch) {
        round = std::max(round, a->charged);
        record(report, *a);
      }
      report.costs.push_back({CostComponent::kCompute, round, "replicas"});

      std::vector<int> faulted;
      for (int r : pending) {
        if (live[r]->fault) {
          fail(report, *live[r], true);
          faulted.push_back(r);
        }
      }
      if (faulted.size() == 2) {
        live = {};
        repair({sel[0].candidate, sel[1].candidate});
        continue;
      }
      if (faulted.size() == 1) {
        const int r = faulted.front();
        const int other = 1 - r;
        live[r].reset();
        auto replacement = mapper_.replace_replica(strategy, cands, state, sel[r].candidate,
                                                   sel[other].candidate);
        if (replacement) {
          sel[r] = *replacement;
          pending = {r};
        } else {
          memory_.release(live[other]->handles);
          live[other].reset();
          repair({sel[r].candidate});
        }
        continue;
      }

      Attempt& a0 = *live[0];
      Attempt& a1 = *live[1];
      auto ra = results(task, a0);
      auto rb = results(task, a1);
      std::uint64_t bytes = 0;
      for (const auto& r : ra) bytes += r.bytes.size();
      VoterContext vctx{{a0.selection.candidate.unit, a1.selection.candidate.unit},
                        {fleet_.unit(a0.selection.candidate.unit).memory_space,
                         fleet_.unit(a1.selection.candidate.unit).memory_space},
                        bytes};
      VoterChoice choice = place_voter(fleet_, vctx, voter);
      report.costs.push_back({CostComponent::kVoter, choice.compare_cost, choice.kernel});
      if (choice.transfer_cost.count() > 0) {
        report.costs.push_back({CostComponent::kTransfer, choice.transfer_cost, "voter"});
      }
      VoteOutcome vote = compare(ra, rb, voter);
      ++report.votes;
      if (trace_) {
        *trace_ << "task=" << report.task << " strategy=" << report.strategy
                << " vote=" << (vote.match() ? "match" : "mismatch") << " voter=" << choice.kernel
                << " unit=" << fleet_.unit(choice.unit).name
                << " duration_ns=" << choice.total().count() << '\n';
      }
      if (vote.match()) {
        db_.record_outcome(a0.selection.candidate.key, RunObservation{true, *a0.outcome.duration});
        db_.record_outcome(a1.selection.candidate.key, RunObservation{true, *a1.outcome.duration});
        memory_.release(a1.handles);
        a1.handles.clear();
        memory_.commit_success(a0.handles);
        a0.handles.clear();
        report.committed_by = a0.selection.candidate;
        report.corrupted_commit = a0.outcome.fault == FaultClass::kCorrupt;
        return;
      }

      for (Attempt* a : {&a0, &a1}) {
        db_.record_outcome(a->selection.candidate.key, RunObservation{false, a->charged});
        mapper_.note_fault(a->selection.candidate);
        for (auto& rec : report.attempts) {
          if (rec.id == a->id) rec.event = FaultEventClass::kVoteMismatch;
        }
        memory_.release(a->handles);
        a->handles.clear();
      }
      report.faults.push_back(FaultEvent{FaultEventClass::kVoteMismatch, a0.id,
                                         a0.selection.candidate.unit,
                                         a0.selection.candidate.kernel});
      std::vector<Candidate> failed{a0.selection.candidate, a1.selection.candidate};
      live = {};
      repair(std::move(failed));
    }
  } catch (...) {
    for (auto& a : live) {
      if (a && !a->handles.empty()) memory_.release(a->handles);
    }
    throw;
  }
}

}  // namespace hetft

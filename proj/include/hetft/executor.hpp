#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "hetft/device_model.hpp"
#include "hetft/kernel.hpp"
#include "hetft/mapper.hpp"
#include "hetft/memory_manager.hpp"
#include "hetft/profile_db.hpp"
#include "hetft/voter.hpp"

namespace hetft {

/// One persistent worker thread per processing unit. Jobs for a unit run in
/// submission order; jobs for distinct units run concurrently.
class WorkerPool {
 public:
  explicit WorkerPool(std::size_t units);
  ~WorkerPool();
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  std::future<ExecutionOutcome> submit(UnitId unit, std::function<ExecutionOutcome()> job);

 private:
  struct Worker {
    std::mutex mutex;
    std::condition_variable_any cv;
    std::deque<std::packaged_task<ExecutionOutcome()>> queue;
    std::jthread thread;
  };

  std::vector<std::unique_ptr<Worker>> workers_;
};

enum class FaultEventClass : std::uint8_t { kAbort, kApiError, kTimeout, kVoteMismatch };

std::string_view to_string(FaultEventClass cls);

enum class CostComponent : std::uint8_t { kCompute, kTransfer, kCheckpoint, kVoter };

std::string_view to_string(CostComponent component);

struct CostEntry {
  CostComponent component = CostComponent::kCompute;
  Duration amount{0};
  std::string note;
};

struct AttemptRecord {
  std::uint64_t id = 0;
  int replica = 0;
  KernelId kernel;
  UnitId unit;
  std::string unit_name;
  /// Virtual time charged for the attempt (the deadline on timeout).
  Duration duration{0};
  FaultClass injected = FaultClass::kNone;
  std::optional<FaultEventClass> event;
  std::string rationale;
};

struct FaultEvent {
  FaultEventClass cls = FaultEventClass::kAbort;
  std::uint64_t attempt = 0;
  UnitId unit;
  KernelId kernel;
};

struct TaskReport {
  std::string task;
  std::string strategy;
  /// Strategy actually run; differs from the requested one after degradation.
  StrategyKind executed = StrategyKind::kPerfCP;
  std::vector<AttemptRecord> attempts;
  std::vector<FaultEvent> faults;
  std::vector<CostEntry> costs;
  std::uint64_t votes = 0;
  std::optional<Candidate> committed_by;
  /// Ground truth: the committed output came from a corrupted attempt.
  bool corrupted_commit = false;

  Duration total() const;
  Duration component(CostComponent c) const;
  std::size_t fault_count(FaultEventClass cls) const;
};

/// A task invocation as seen by the executor.
struct TaskInstance {
  std::string name;
  std::vector<const KernelVariant*> variants;
  std::vector<BoundArg> args;
  VoterConfig voter;
};

/// Drives attempts for one task at a time: stages arguments through the
/// memory manager, runs kernel bodies on unit workers, turns hangs and
/// overruns into timeouts, rolls back faulty attempts and asks the mapper for
/// the next pairing.
class Executor {
 public:
  Executor(const Fleet& fleet, DeviceSimulator& devices, MemoryManager& memory, ProfileDb& db,
           Mapper& mapper);

  TaskReport run_task(const TaskInstance& task, const Strategy& strategy);

  /// Candidate pairings of the task's variants with the fleet's units.
  std::vector<Candidate> candidates(const TaskInstance& task) const;
  /// Size used for profile keys: element count of the largest area argument.
  std::uint64_t problem_size(const TaskInstance& task) const;

  void set_trace(std::ostream* sink) { trace_ = sink; }

  /// Report of the most recent run_task, also when it threw.
  const TaskReport& last_report() const { return last_; }

 private:
  struct Attempt {
    std::uint64_t id = 0;
    int replica = 0;
    Selection selection;
    const KernelVariant* variant = nullptr;
    std::vector<SiblingHandle> handles;
    KernelContext context;
    Duration transfer{0};
    Duration checkpoint{0};
    ExecutionOutcome outcome;
    std::optional<FaultEventClass> fault;
    Duration charged{0};
  };

  std::unique_ptr<Attempt> stage(const TaskInstance& task, const Selection& selection,
                                 bool protect, int replica, std::uint64_t size);
  void launch(std::vector<Attempt*> attempts, std::uint64_t size);
  void book_staging(TaskReport& report, const Attempt& a) const;
  void record(TaskReport& report, const Attempt& a);
  void fail(TaskReport& report, Attempt& a, bool rollback);
  const KernelVariant* variant_for(const TaskInstance& task, const KernelId& id) const;
  std::vector<ResultArea> results(const TaskInstance& task, const Attempt& a) const;

  void run_single(const TaskInstance& task, const Strategy& strategy,
                  const MappingDecision& decision, std::span<const Candidate> cands,
                  std::uint64_t size, TaskReport& report);
  void run_redundant(const TaskInstance& task, const Strategy& strategy,
                     const MappingDecision& decision, std::span<const Candidate> cands,
                     std::uint64_t size, TaskReport& report);

  const Fleet& fleet_;
  DeviceSimulator& devices_;
  MemoryManager& memory_;
  ProfileDb& db_;
  Mapper& mapper_;
  WorkerPool workers_;
  std::ostream* trace_ = nullptr;
  std::uint64_t next_attempt_ = 1;
  TaskReport last_;
};

}  // namespace hetft

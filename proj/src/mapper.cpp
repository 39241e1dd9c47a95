#include "hetft/mapper.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace hetft {

FaultAwareEstimate make_estimate(ProfileKey key, std::optional<double> runtime_ns,
                                 std::uint64_t valid, std::uint64_t total) {
  FaultAwareEstimate est;
  est.key = std::move(key);
  est.runtime_ns = runtime_ns;
  if (total == 0) {
    est.fault_probability = 0.0;
    est.fault_aware_ns = runtime_ns.value_or(0.0);
    return est;
  }
  est.fault_probability = static_cast<double>(total - valid) / static_cast<double>(total);
  if (valid == 0 || !runtime_ns) {
    est.fault_aware_ns = std::numeric_limits<double>::infinity();
  } else {
    // R / (1 - p) with 1 - p = v / t, evaluated without the subtraction.
    est.fault_aware_ns = *runtime_ns * static_cast<double>(total) / static_cast<double>(valid);
  }
  return est;
}

std::string_view to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::kPerf: return "Perf";
    case StrategyKind::kPerfCP: return "PerfCP";
    case StrategyKind::kDMR: return "DMR";
    case StrategyKind::kHetDMR: return "HetDMR";
  }
  return "?";
}

std::string Strategy::label() const {
  std::string out(to_string(kind));
  if (kind == StrategyKind::kPerfCP && avoid_faulted) return out + "-avoid";
  if (kind == StrategyKind::kPerfCP && raw_runtime) return out + "-raw";
  return out;
}

Strategy parse_strategy(std::string_view name) {
  Strategy s;
  if (name == "Perf") {
    s.kind = StrategyKind::kPerf;
    s.raw_runtime = true;
  } else if (name == "PerfCP" || name == "Perf+CP") {
    s.kind = StrategyKind::kPerfCP;
  } else if (name == "PerfCP-raw") {
    s.kind = StrategyKind::kPerfCP;
    s.raw_runtime = true;
  } else if (name == "PerfCP-avoid") {
    s.kind = StrategyKind::kPerfCP;
    s.raw_runtime = true;
    s.avoid_faulted = true;
  } else if (name == "DMR") {
    s.kind = StrategyKind::kDMR;
  } else if (name == "HetDMR") {
    s.kind = StrategyKind::kHetDMR;
  } else {
    throw ConfigError("unknown strategy '" + std::string(name) +
                      "' (expected Perf, PerfCP, PerfCP-raw, PerfCP-avoid, DMR, HetDMR)");
  }
  return s;
}

Mapper::Mapper(const Fleet& fleet, const ProfileDb& db, MapperConfig config)
    : fleet_(fleet), db_(db), config_(config) {}

std::optional<FaultAwareEstimate> Mapper::estimate(const ProfileKey& key) const {
  auto stats = db_.lookup(key);
  if (!stats) return std::nullopt;
  return make_estimate(key, stats->mean_runtime_ns, stats->valid, stats->total);
}

bool Mapper::check_quarantine(const ProfileKey& key) const {
  std::lock_guard lock(mutex_);
  if (config_.check_interval == 0) return true;
  auto last = last_attempt_.find(key);
  if (last == last_attempt_.end()) return true;
  auto clock = clock_.find(key);
  std::uint64_t now = clock == clock_.end() ? 0 : clock->second;
  return now - last->second >= config_.check_interval;
}

void Mapper::note_attempt(const ProfileKey& key) {
  std::lock_guard lock(mutex_);
  last_attempt_[key] = clock_[key];
}

void Mapper::note_fault(const Candidate& candidate) {
  std::lock_guard lock(mutex_);
  avoided_.insert({candidate.kernel, candidate.unit});
}

bool Mapper::avoided(const Candidate& candidate) const {
  std::lock_guard lock(mutex_);
  return avoided_.contains({candidate.kernel, candidate.unit});
}

std::vector<Mapper::Ranked> Mapper::rank(const Strategy& strategy,
                                         std::span<const Candidate> candidates, bool tick) {
  if (tick) {
    std::lock_guard lock(mutex_);
    for (const auto& c : candidates) ++clock_[c.key];
  }
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<Ranked> order;
  order.reserve(candidates.size());
  for (const auto& c : candidates) {
    Ranked r{&c, estimate(c.key), 1, 0.0, {}};
    if (strategy.avoid_faulted && avoided(c)) {
      r.tier = 2;
      r.metric = r.estimate && r.estimate->runtime_ns ? *r.estimate->runtime_ns : kInf;
      r.rationale = "avoided";
    } else if (!r.estimate) {
      r.tier = 0;
      r.rationale = "explore";
    } else if (strategy.ranks_raw()) {
      if (r.estimate->runtime_ns) {
        r.metric = *r.estimate->runtime_ns;
        r.rationale = "best-R";
      } else {
        r.tier = 0;
        r.rationale = "explore";
      }
    } else if (r.estimate->infinite()) {
      if (check_quarantine(c.key)) {
        r.tier = 0;
        r.rationale = "probe";
      } else {
        r.tier = 2;
        r.metric = kInf;
        r.rationale = "quarantined";
      }
    } else {
      r.metric = r.estimate->fault_aware_ns;
      r.rationale = "best-F";
    }
    order.push_back(std::move(r));
  }
  std::stable_sort(order.begin(), order.end(), [](const Ranked& a, const Ranked& b) {
    return std::tie(a.tier, a.metric, a.candidate->unit, a.candidate->kernel) <
           std::tie(b.tier, b.metric, b.candidate->unit, b.candidate->kernel);
  });
  return order;
}

Selection Mapper::to_selection(const Strategy& strategy, const Ranked& ranked) const {
  Selection sel;
  sel.candidate = *ranked.candidate;
  sel.estimate = ranked.estimate;
  sel.rationale = ranked.rationale;
  if (ranked.estimate && ranked.estimate->runtime_ns) {
    sel.deadline = Duration(static_cast<std::int64_t>(
        std::llround(*ranked.estimate->runtime_ns * strategy.timeout_factor)));
  } else {
    sel.deadline = config_.default_deadline;
  }
  return sel;
}

namespace {

std::pair<RetryState::Pairing, RetryState::Pairing> ordered_pair(const Candidate& a,
                                                                  const Candidate& b) {
  RetryState::Pairing x{a.kernel, a.unit};
  RetryState::Pairing y{b.kernel, b.unit};
  return x < y ? std::pair{x, y} : std::pair{y, x};
}

}  // namespace

std::optional<std::pair<std::size_t, std::size_t>> Mapper::pick_pair(
    StrategyKind kind, const std::vector<Ranked>& order,
    const std::set<std::pair<KernelId, UnitId>>* skip,
    const std::set<std::pair<RetryState::Pairing, RetryState::Pairing>>* skip_pairs) const {
  auto skipped = [&](const Ranked& r) {
    return skip && skip->contains({r.candidate->kernel, r.candidate->unit});
  };
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (skipped(order[i])) continue;
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      if (skipped(order[j])) continue;
      const Candidate& a = *order[i].candidate;
      const Candidate& b = *order[j].candidate;
      if (a.unit == b.unit) continue;
      if (kind == StrategyKind::kHetDMR && a.kernel == b.kernel) continue;
      if (skip_pairs && skip_pairs->contains(ordered_pair(a, b))) continue;
      return std::pair{i, j};
    }
  }
  return std::nullopt;
}

void Mapper::count_attempt(RetryState& state) const {
  if (state.attempts >= config_.attempt_limit) {
    throw UnrecoverableTaskError("task failed after " + std::to_string(state.attempts) +
                                 " attempts");
  }
}

MappingDecision Mapper::select(const Strategy& strategy, std::span<const Candidate> candidates) {
  if (strategy.timeout_factor <= 1.0) throw ConfigError("timeout factor must exceed 1");
  if (candidates.empty()) {
    throw StrategyInfeasibleError("no kernel variant can run on any unit of the fleet");
  }
  std::vector<Ranked> order = rank(strategy, candidates, true);
  MappingDecision decision;
  decision.kind = strategy.kind;
  decision.protect = strategy.protect();

  StrategyKind kind = strategy.kind;
  while (kind == StrategyKind::kDMR || kind == StrategyKind::kHetDMR) {
    if (auto pair = pick_pair(kind, order, nullptr)) {
      decision.kind = kind;
      decision.selections.push_back(to_selection(strategy, order[pair->first]));
      decision.selections.push_back(to_selection(strategy, order[pair->second]));
      decision.selections[1].rationale += "+replica";
      return decision;
    }
    if (!strategy.allow_degradation) {
      throw StrategyInfeasibleError(std::string(to_string(kind)) +
                                    ": no pair of candidates satisfies the diversity constraint");
    }
    kind = kind == StrategyKind::kHetDMR ? StrategyKind::kDMR : StrategyKind::kPerfCP;
  }
  decision.kind = kind;
  decision.selections.push_back(to_selection(strategy, order.front()));
  return decision;
}

Selection Mapper::on_fault(const Strategy& strategy, std::span<const Candidate> candidates,
                           RetryState& state, const Candidate& failed) {
  state.failed.insert({failed.kernel, failed.unit});
  count_attempt(state);
  std::vector<Ranked> order = rank(strategy, candidates, false);
  for (const auto& r : order) {
    if (!state.failed.contains({r.candidate->kernel, r.candidate->unit})) {
      Selection sel = to_selection(strategy, r);
      sel.rationale = "retry-next:" + sel.rationale;
      return sel;
    }
  }
  state.failed.clear();
  Selection sel = to_selection(strategy, order.front());
  sel.rationale = "restart:" + sel.rationale;
  return sel;
}

std::optional<Selection> Mapper::replace_replica(const Strategy& strategy,
                                                 std::span<const Candidate> candidates,
                                                 RetryState& state, const Candidate& failed,
                                                 const Candidate& partner) {
  state.failed.insert({failed.kernel, failed.unit});
  count_attempt(state);
  std::vector<Ranked> order = rank(strategy, candidates, false);
  auto fits = [&](const Candidate& c) {
    if (c.unit == partner.unit) return false;
    return !(strategy.kind == StrategyKind::kHetDMR && c.kernel == partner.kernel);
  };
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& r : order) {
      if (!fits(*r.candidate)) continue;
      if (pass == 0 && state.failed.contains({r.candidate->kernel, r.candidate->unit})) continue;
      Selection sel = to_selection(strategy, r);
      sel.rationale = (pass == 0 ? "retry-next:" : "restart:") + sel.rationale;
      return sel;
    }
    state.failed.clear();
  }
  return std::nullopt;
}

MappingDecision Mapper::reselect_pair(const Strategy& strategy,
                                      std::span<const Candidate> candidates, RetryState& state,
                                      std::span<const Candidate> failed) {
  for (const auto& c : failed) state.failed.insert({c.kernel, c.unit});
  if (failed.size() == 2) state.failed_pairs.insert(ordered_pair(failed[0], failed[1]));
  count_attempt(state);
  std::vector<Ranked> order = rank(strategy, candidates, false);
  MappingDecision decision;
  decision.kind = strategy.kind;
  decision.protect = true;
  std::string prefix = "retry-next:";
  auto pair = pick_pair(strategy.kind, order, &state.failed, &state.failed_pairs);
  if (!pair) pair = pick_pair(strategy.kind, order, nullptr, &state.failed_pairs);
  if (!pair) {
    state.failed.clear();
    state.failed_pairs.clear();
    prefix = "restart:";
    pair = pick_pair(strategy.kind, order, nullptr);
  }
  if (!pair) {
    throw StrategyInfeasibleError(std::string(to_string(strategy.kind)) +
                                  ": no pair of candidates satisfies the diversity constraint");
  }
  decision.selections.push_back(to_selection(strategy, order[pair->first]));
  decision.selections.push_back(to_selection(strategy, order[pair->second]));
  for (auto& sel : decision.selections) sel.rationale = prefix + sel.rationale;
  return decision;
}

}  // namespace hetft

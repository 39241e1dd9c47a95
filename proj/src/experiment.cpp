#include "hetft/experiment.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>

#include "hetft/runtime.hpp"
#include "hetft/workloads.hpp"

namespace hetft {

namespace {

using nlohmann::json;

double parse_double(std::string_view text, std::string_view what) {
  double value = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ConfigError("sweep: bad " + std::string(what) + " '" + std::string(text) + "'");
  }
  return value;
}

const std::set<std::string, std::less<>> kProbabilityFields{
    "abort_prob", "api_error_prob", "hang_prob", "corrupt_prob", "jitter"};
const std::set<std::string, std::less<>> kSpeedFields{"base_latency_us", "per_elem_cost_ns"};

/// Fleet and size for one sweep point, with unit seeds derived from the
/// experiment seed and the point index.
std::pair<json, std::uint64_t> point_config(const ExperimentSpec& spec, const json& base,
                                            std::uint64_t size, std::size_t point,
                                            std::optional<double> value) {
  json fleet = base;
  if (value && spec.sweep) {
    const Sweep& sw = *spec.sweep;
    if (sw.target == "task") {
      size = static_cast<std::uint64_t>(std::llround(*value));
    } else {
      bool hit = false;
      for (auto& unit : fleet.at("units")) {
        if (sw.target != "*" && unit.value("id", "") != sw.target) continue;
        unit[sw.field] = *value;
        hit = true;
      }
      if (!hit) throw ConfigError("sweep: fleet has no unit '" + sw.target + "'");
    }
  }
  std::uint64_t index = 0;
  for (auto& unit : fleet.at("units")) {
    std::uint64_t own = unit.value("seed", std::uint64_t{index + 1});
    unit["seed"] = mix_seed(mix_seed(spec.seed, own), point);
    ++index;
  }
  return {fleet, size};
}

ProfileRecord subtract(ProfileRecord rec, const std::optional<ProfileRecord>& base) {
  if (!base) return rec;
  rec.runtime_sum_ns -= base->runtime_sum_ns;
  rec.runtime_count -= base->runtime_count;
  rec.valid -= base->valid;
  rec.total -= base->total;
  return rec;
}

}  // namespace

Sweep parse_sweep(std::string_view text) {
  Sweep sw;
  auto eq = text.find('=');
  auto dot = text.find('.');
  if (eq == std::string_view::npos || dot == std::string_view::npos || dot > eq) {
    throw ConfigError("sweep: expected unit.field=start:stop:step, got '" + std::string(text) +
                      "'");
  }
  sw.target = std::string(text.substr(0, dot));
  sw.field = std::string(text.substr(dot + 1, eq - dot - 1));
  std::string_view range = text.substr(eq + 1);
  auto c1 = range.find(':');
  auto c2 = c1 == std::string_view::npos ? c1 : range.find(':', c1 + 1);
  if (c2 == std::string_view::npos) throw ConfigError("sweep: range must be start:stop:step");
  const double start = parse_double(range.substr(0, c1), "start");
  const double stop = parse_double(range.substr(c1 + 1, c2 - c1 - 1), "stop");
  std::string_view step = range.substr(c2 + 1);
  if (stop < start) throw ConfigError("sweep: stop below start");

  if (!step.empty() && step.front() == 'x') {
    const double factor = parse_double(step.substr(1), "factor");
    if (!(factor > 1.0) || !(start > 0.0)) {
      throw ConfigError("sweep: multiplicative range needs start > 0 and factor > 1");
    }
    for (double v = start; v <= stop * (1 + 1e-9); v *= factor) sw.values.push_back(v);
  } else {
    const double inc = parse_double(step, "step");
    if (!(inc > 0.0)) throw ConfigError("sweep: step must be positive");
    const auto n = static_cast<std::size_t>(std::floor((stop - start) / inc + 1e-9)) + 1;
    for (std::size_t i = 0; i < n; ++i) sw.values.push_back(start + static_cast<double>(i) * inc);
  }

  if (sw.target == "task") {
    if (sw.field != "size") throw ConfigError("sweep: task only supports 'size'");
  } else if (kProbabilityFields.contains(sw.field)) {
    for (double v : sw.values) {
      if (v < 0.0 || v > 1.0) throw ConfigError("sweep: " + sw.field + " must stay within [0, 1]");
    }
  } else if (!kSpeedFields.contains(sw.field)) {
    throw ConfigError("sweep: unsupported field '" + sw.field + "'");
  }
  return sw;
}

ExperimentSpec parse_experiment_spec(const json& config) {
  if (!config.is_object()) throw ConfigError("experiment spec: expected an object");
  ExperimentSpec spec;
  try {
    spec.workload = config.at("workload").get<std::string>();
    if (auto it = config.find("fleet"); it != config.end()) {
      spec.fleet = it->is_string() ? [&] {
        std::ifstream in(it->get<std::string>());
        if (!in) throw ConfigError("cannot open fleet config '" + it->get<std::string>() + "'");
        return json::parse(in);
      }()
                                   : *it;
    }
    if (auto it = config.find("strategies"); it != config.end()) {
      spec.strategies = it->get<std::vector<std::string>>();
    }
    if (auto it = config.find("sweep"); it != config.end() && !it->is_null()) {
      spec.sweep = parse_sweep(it->get<std::string>());
    }
    spec.reps = config.value("reps", spec.reps);
    spec.seed = config.value("seed", spec.seed);
    spec.warmup = config.value("warmup", spec.warmup);
    spec.size = config.value("size", spec.size);
    spec.calibrate = config.value("calibrate", spec.calibrate);
    spec.timeout_factor = config.value("timeout_factor", spec.timeout_factor);
    spec.check_interval = config.value("check_interval", spec.check_interval);
    spec.attempt_limit = config.value("attempt_limit", spec.attempt_limit);
    spec.profile_db = config.value("profile_db", spec.profile_db);
    std::string bucketing = config.value("bucketing", std::string("exact"));
    if (bucketing == "exact") spec.bucketing = BucketMode::kExact;
    else if (bucketing == "pow2") spec.bucketing = BucketMode::kPowerOfTwo;
    else throw ConfigError("experiment spec: bucketing must be 'exact' or 'pow2'");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment spec: ") + e.what());
  }
  if (spec.strategies.empty()) spec.strategies = {"PerfCP"};
  if (spec.reps < 1) throw ConfigError("experiment spec: reps must be >= 1");
  return spec;
}

double ExperimentRow::ci_half_width(double z) const {
  if (reps == 0) return 0.0;
  return z * stddev_time_ns / std::sqrt(static_cast<double>(reps));
}

std::vector<ExperimentRow> run_experiment(const ExperimentSpec& spec, std::ostream* trace) {
  const Workload& w = find_workload(spec.workload);
  const json base_fleet = spec.fleet.is_null() ? w.default_fleet : spec.fleet;
  const std::uint64_t base_size = spec.size ? spec.size : w.default_size;
  std::vector<Strategy> strategies;
  for (const auto& name : spec.strategies) {
    Strategy s = parse_strategy(name);
    s.timeout_factor = spec.timeout_factor;
    strategies.push_back(s);
  }

  ProfileDb seed_db(spec.bucketing);
  if (!spec.profile_db.empty() && std::filesystem::exists(spec.profile_db)) {
    seed_db.load(spec.profile_db);
  }
  ProfileDb learned = seed_db;

  std::vector<std::optional<double>> points;
  if (spec.sweep) {
    for (double v : spec.sweep->values) points.emplace_back(v);
  } else {
    points.emplace_back(std::nullopt);
  }

  std::vector<ExperimentRow> rows;
  for (std::size_t s = 0; s < strategies.size(); ++s) {
    for (std::size_t p = 0; p < points.size(); ++p) {
      auto [fleet_json, size] = point_config(spec, base_fleet, base_size, p, points[p]);
      RuntimeOptions options;
      options.mapper.check_interval = spec.check_interval;
      options.mapper.attempt_limit = spec.attempt_limit;
      options.bucketing = spec.bucketing;
      options.profiles = std::make_shared<ProfileDb>(seed_db);
      Runtime rt(load_fleet(fleet_json), options);
      w.install(rt);

      std::mt19937_64 data_rng(mix_seed(mix_seed(spec.seed, 0xda7a), p));
      if (spec.calibrate) {
        WorkloadData sample = w.generate(size, data_rng);
        StagedWorkload staged = stage_workload(rt, sample);
        rt.calibrate(w.task, staged.args);
        unstage_workload(rt, staged);
      }

      ExperimentRow row;
      row.strategy = spec.strategies[s];
      row.sweep_value = points[p].value_or(0.0);
      if (trace) {
        *trace << "# strategy=" << row.strategy << " sweep_value=" << std::setprecision(10)
               << row.sweep_value << '\n';
      }
      double sum = 0.0;
      double sum_sq = 0.0;
      double attempts = 0.0;
      double voter = 0.0;
      double transfer = 0.0;
      for (std::uint64_t rep = 0; rep < spec.warmup + spec.reps; ++rep) {
        const bool measured = rep >= spec.warmup;
        rt.set_trace(measured ? trace : nullptr);
        WorkloadData data = w.generate(size, data_rng);
        StagedWorkload staged = stage_workload(rt, data);
        TaskReport report;
        bool ok = true;
        try {
          report = rt.invoke(w.task, staged.args, strategies[s]);
        } catch (const UnrecoverableTaskError&) {
          ok = false;
        } catch (const TaskFaultError&) {
          ok = false;
        }
        if (!ok) report = rt.executor().last_report();
        Duration readback{0};
        bool correct = false;
        if (ok) {
          auto out = rt.read_bytes(staged.output, &readback);
          correct = matches_oracle(w, data, out, VoterConfig{}.float_delta);
        }
        unstage_workload(rt, staged);
        if (!measured) continue;

        const double t = static_cast<double>((report.total() + readback).count());
        sum += t;
        sum_sq += t * t;
        attempts += static_cast<double>(report.attempts.size());
        voter += static_cast<double>(report.component(CostComponent::kVoter).count());
        transfer +=
            static_cast<double>((report.component(CostComponent::kTransfer) + readback).count());
        row.faults_abort += report.fault_count(FaultEventClass::kAbort);
        row.faults_api += report.fault_count(FaultEventClass::kApiError);
        row.faults_timeout += report.fault_count(FaultEventClass::kTimeout);
        row.faults_vote += report.fault_count(FaultEventClass::kVoteMismatch);
        if (!ok) ++row.unrecovered;
        if (ok && !correct) ++row.oracle_mismatches;
      }
      const auto n = static_cast<double>(spec.reps);
      row.reps = spec.reps;
      row.mean_time_ns = sum / n;
      row.attempts_mean = attempts / n;
      row.voter_time_ns = voter / n;
      row.transfer_time_ns = transfer / n;
      const double var = spec.reps > 1 ? (sum_sq - sum * sum / n) / (n - 1) : 0.0;
      row.stddev_time_ns = std::sqrt(std::max(0.0, var));
      rows.push_back(row);

      for (const auto& rec : rt.profiles().records()) {
        std::optional<ProfileRecord> before;
        for (const auto& b : seed_db.records()) {
          if (b.key == rec.key) before = b;
        }
        learned.merge_record(subtract(rec, before));
      }
    }
  }
  if (!spec.profile_db.empty()) learned.persist(spec.profile_db);
  return rows;
}

void write_csv(std::ostream& out, const std::vector<ExperimentRow>& rows) {
  out << kCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.strategy << ',' << std::defaultfloat << std::setprecision(10) << r.sweep_value << ','
        << std::fixed << std::setprecision(3) << r.mean_time_ns << ',' << r.attempts_mean << ','
        << r.faults_abort << ',' << r.faults_api << ',' << r.faults_timeout << ',' << r.faults_vote
        << ',' << r.voter_time_ns << ',' << r.transfer_time_ns << '\n';
  }
  out << std::defaultfloat;
}

}  // namespace hetft

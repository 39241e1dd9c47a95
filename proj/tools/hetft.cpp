#include <fstream>
#include <iomanip>
#include <iostream>

#include "CLI11.hpp"
#include "hetft/experiment.hpp"
#include "hetft/mapper.hpp"
#include "hetft/workloads.hpp"

using namespace hetft;

namespace {

std::vector<std::string> split_strategies(const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  for (const auto& item : raw) {
    std::size_t start = 0;
    while (start <= item.size()) {
      std::size_t comma = item.find(',', start);
      std::string part = item.substr(start, comma == std::string::npos ? comma : comma - start);
      if (!part.empty()) out.push_back(part);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  return out;
}

int dump_profile_db(const std::string& path) {
  ProfileDb db;
  db.load(path);
  std::cout << std::left << std::setw(20) << "kernel" << std::setw(12) << "size" << std::setw(10)
            << "unit" << std::setw(14) << "R_ns" << std::setw(8) << "v" << std::setw(8) << "t"
            << std::setw(10) << "p" << "F_ns\n";
  for (const auto& rec : db.records()) {
    std::optional<double> r;
    if (rec.runtime_count) {
      r = static_cast<double>(rec.runtime_sum_ns) / static_cast<double>(rec.runtime_count);
    }
    FaultAwareEstimate est = make_estimate(rec.key, r, rec.valid, rec.total);
    std::cout << std::setw(20) << rec.key.kernel << std::setw(12) << rec.key.size_bucket
              << std::setw(10) << rec.key.unit << std::setw(14)
              << (r ? std::to_string(static_cast<long long>(std::llround(*r))) : "-")
              << std::setw(8) << rec.valid << std::setw(8) << rec.total << std::setw(10)
              << std::setprecision(4) << est.fault_probability
              << (est.infinite() ? std::string("inf")
                                 : std::to_string(static_cast<long long>(
                                       std::llround(est.fault_aware_ns))))
              << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fault-aware heterogeneous task runtime: simulated experiments"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run an experiment and write CSV");
  std::string spec_path, workload, fleet_path, sweep, out_path, trace_path, profile_db;
  std::string bucketing = "exact";
  std::vector<std::string> strategies;
  std::uint64_t reps = 100, seed = 1, warmup = 0, size = 0;
  double timeout_factor = 3.0;
  bool no_calibrate = false;
  run->add_option("--spec", spec_path, "JSON experiment spec; flags override its fields")
      ->check(CLI::ExistingFile);
  run->add_option("--workload", workload, "Built-in workload id");
  run->add_option("--fleet", fleet_path, "Fleet JSON (default: the workload's fleet)")
      ->check(CLI::ExistingFile);
  run->add_option("--strategy", strategies,
                  "Strategies: Perf, PerfCP, PerfCP-raw, PerfCP-avoid, DMR, HetDMR");
  run->add_option("--sweep", sweep, "unit.field=start:stop:step or start:stop:xFACTOR");
  run->add_option("--reps", reps, "Measured repetitions per point");
  run->add_option("--warmup", warmup, "Unmeasured repetitions per point");
  run->add_option("--seed", seed, "Experiment seed");
  run->add_option("--size", size, "Problem size (workload default when 0)");
  run->add_option("--timeout-factor", timeout_factor, "Deadline = R * factor");
  run->add_option("--profile-db", profile_db, "Profile database file to seed from and update");
  run->add_option("--bucketing", bucketing, "Profile size bucketing: exact or pow2")
      ->check(CLI::IsMember({"exact", "pow2"}));
  run->add_flag("--no-calibrate", no_calibrate, "Skip seeding the profile database");
  run->add_option("--out", out_path, "CSV output file (default: stdout)");
  run->add_option("--trace", trace_path, "Per-attempt trace output file");

  auto* list = app.add_subcommand("list-workloads", "List built-in workloads");

  auto* dump = app.add_subcommand("dump-profile-db", "Print a profile database");
  std::string dump_path;
  dump->add_option("path", dump_path, "Profile database file")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*list) {
      for (const auto& w : builtin_workloads()) {
        std::cout << std::left << std::setw(18) << w.id << w.description << '\n';
      }
      return 0;
    }
    if (*dump) return dump_profile_db(dump_path);

    nlohmann::json config = nlohmann::json::object();
    if (!spec_path.empty()) {
      std::ifstream in(spec_path);
      config = nlohmann::json::parse(in);
    }
    if (!workload.empty()) config["workload"] = workload;
    if (!fleet_path.empty()) config["fleet"] = fleet_path;
    if (!strategies.empty()) config["strategies"] = split_strategies(strategies);
    if (!sweep.empty()) config["sweep"] = sweep;
    if (run->count("--reps")) config["reps"] = reps;
    if (run->count("--warmup")) config["warmup"] = warmup;
    if (run->count("--seed")) config["seed"] = seed;
    if (run->count("--size")) config["size"] = size;
    if (run->count("--timeout-factor")) config["timeout_factor"] = timeout_factor;
    if (run->count("--bucketing")) config["bucketing"] = bucketing;
    if (!profile_db.empty()) config["profile_db"] = profile_db;
    if (no_calibrate) config["calibrate"] = false;
    if (!config.contains("workload")) {
      throw ConfigError("a workload is required (--workload or the spec's \"workload\")");
    }
    if (!out_path.empty() && config.contains("out")) config.erase("out");

    ExperimentSpec spec = parse_experiment_spec(config);
    std::ofstream trace_file;
    if (!trace_path.empty()) {
      trace_file.open(trace_path, std::ios::binary | std::ios::trunc);
      if (!trace_file) throw ConfigError("cannot write trace file '" + trace_path + "'");
    }
    auto rows = run_experiment(spec, trace_path.empty() ? nullptr : &trace_file);
    if (out_path.empty()) {
      write_csv(std::cout, rows);
    } else {
      std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
      if (!out) throw ConfigError("cannot write '" + out_path + "'");
      write_csv(out, rows);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << run->help();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

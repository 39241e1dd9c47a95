#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "hetft/experiment.hpp"
#include "hetft/workloads.hpp"

using namespace hetft;
using nlohmann::json;

TEST_CASE("additive and multiplicative sweeps") {
  Sweep s = parse_sweep("gpu1.abort_prob=0.1:0.9:0.1");
  CHECK(s.target == "gpu1");
  CHECK(s.field == "abort_prob");
  REQUIRE(s.values.size() == 9);
  CHECK(s.values.front() == doctest::Approx(0.1));
  CHECK(s.values.back() == doctest::Approx(0.9));

  s = parse_sweep("task.size=1024:1048576:x4");
  CHECK(s.values == std::vector<double>{1024, 4096, 16384, 65536, 262144, 1048576});

  s = parse_sweep("*.base_latency_us=10:30:10");
  CHECK(s.target == "*");
  CHECK(s.values.size() == 3);
}

TEST_CASE("malformed sweeps are config errors") {
  for (const char* bad : {"abort_prob=0:1:0.1", "gpu1.abort_prob=0:1", "gpu1.abort_prob=0:2:0.5",
                          "gpu1.abort_prob=0.5:0.1:0.1", "gpu1.abort_prob=0:1:0",
                          "gpu1.colour=0:1:0.5", "task.abort_prob=0:1:0.5",
                          "task.size=0:10:x2", "gpu1.abort_prob=a:1:0.5"}) {
    INFO(bad);
    CHECK_THROWS_AS(parse_sweep(bad), ConfigError);
  }
}

TEST_CASE("experiment spec parsing") {
  auto spec = parse_experiment_spec(
      {{"workload", "inc"}, {"strategies", {"Perf", "DMR"}}, {"reps", 7}, {"seed", 3},
       {"sweep", "gpu1.abort_prob=0:0.5:0.25"}, {"bucketing", "pow2"}});
  CHECK(spec.workload == "inc");
  CHECK(spec.strategies.size() == 2);
  CHECK(spec.reps == 7);
  CHECK(spec.sweep->values.size() == 3);
  CHECK(spec.bucketing == BucketMode::kPowerOfTwo);

  CHECK_THROWS_AS(parse_experiment_spec(json::array()), ConfigError);
  CHECK_THROWS_AS(parse_experiment_spec({{"strategies", {"Perf"}}}), ConfigError);
  CHECK_THROWS_AS(parse_experiment_spec({{"workload", "inc"}, {"reps", 0}}), ConfigError);
  CHECK_THROWS_AS(parse_experiment_spec({{"workload", "inc"}, {"bucketing", "log"}}),
                  ConfigError);
  CHECK_THROWS_AS(parse_experiment_spec({{"workload", "inc"}, {"fleet", "/nonexistent.json"}}),
                  ConfigError);
}

TEST_CASE("unknown workload lists the available ones") {
  try {
    find_workload("matmul");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    CHECK(msg.find("pathfinder-like") != std::string::npos);
    CHECK(msg.find("buggy-variant") != std::string::npos);
  }
}

TEST_CASE("workload oracles") {
  const Workload& inc = find_workload("inc");
  WorkloadData d;
  std::vector<float> in{1.0f, 2.0f, 3.0f};
  d.input = fixtures::to_bytes(in);
  d.input_elements = 3;
  d.input_type = ValueType::kFloat32;
  d.output_elements = 3;
  d.output_type = ValueType::kFloat32;
  d.scalars = {std::int64_t{3}};
  CHECK(fixtures::from_bytes<float>(inc.oracle(d)) == std::vector<float>{2.0f, 3.0f, 4.0f});

  const Workload& path = find_workload("pathfinder-like");
  std::mt19937_64 rng(1);
  WorkloadData p = path.generate(8, rng);
  auto grid = fixtures::from_bytes<std::int32_t>(p.input);
  // Relaxation over 64-bit costs, row by row.
  const std::size_t rows = grid.size() / 8;
  std::vector<std::int64_t> cur(grid.begin(), grid.begin() + 8);
  for (std::size_t r = 1; r < rows; ++r) {
    std::vector<std::int64_t> nxt(8, std::int64_t{1} << 40);
    for (std::size_t c = 0; c < 8; ++c) {
      for (int dc = -1; dc <= 1; ++dc) {
        auto from = static_cast<std::ptrdiff_t>(c) + dc;
        if (from < 0 || from >= 8) continue;
        nxt[c] = std::min(nxt[c], cur[static_cast<std::size_t>(from)] + grid[r * 8 + c]);
      }
    }
    cur = nxt;
  }
  std::vector<std::int32_t> expected(cur.begin(), cur.end());
  CHECK(fixtures::from_bytes<std::int32_t>(path.oracle(p)) == expected);
}

TEST_CASE("every built-in workload produces oracle-equal results when fault free") {
  for (const auto& w : builtin_workloads()) {
    Runtime rt(load_fleet(w.default_fleet));
    w.install(rt);
    std::mt19937_64 rng(4);
    WorkloadData data = w.generate(w.id == "inc" ? 512 : w.default_size, rng);
    StagedWorkload staged = stage_workload(rt, data);
    rt.calibrate(w.task, staged.args);
    auto report = rt.invoke(w.task, staged.args, parse_strategy("PerfCP"));
    auto out = rt.read_bytes(staged.output);
    INFO(w.id);
    if (w.id == "buggy-variant") {
      CHECK(report.committed_by->kernel == "inc_gpu_fast");
      CHECK_FALSE(matches_oracle(w, data, out, 0.001));
      auto expected = fixtures::from_bytes<float>(w.oracle(data));
      auto got = fixtures::from_bytes<float>(out);
      std::size_t differing = 0;
      for (std::size_t i = 0; i < got.size(); ++i) differing += got[i] != expected[i];
      CHECK(differing == 1);
      CHECK(got.back() != expected.back());
    } else {
      CHECK(matches_oracle(w, data, out, 0.001));
    }
  }
}

TEST_CASE("CSV has the documented header and one row per strategy and point") {
  auto spec = parse_experiment_spec({{"workload", "inc"},
                                     {"strategies", {"Perf", "PerfCP"}},
                                     {"reps", 3},
                                     {"size", 256},
                                     {"sweep", "gpu1.abort_prob=0:0.5:0.5"}});
  auto rows = run_experiment(spec);
  REQUIRE(rows.size() == 4);
  std::ostringstream csv;
  write_csv(csv, rows);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  CHECK(line ==
        "strategy,sweep_value,mean_time_ns,attempts_mean,faults_abort,faults_api,"
        "faults_timeout,faults_vote,voter_time_ns,transfer_time_ns");
  int count = 0;
  while (std::getline(in, line)) {
    ++count;
    CHECK(std::count(line.begin(), line.end(), ',') == 9);
  }
  CHECK(count == 4);
  CHECK(rows[0].strategy == "Perf");
  CHECK(rows[1].sweep_value == 0.5);
}

TEST_CASE("Perf rows count unrecovered repetitions") {
  auto spec = parse_experiment_spec({{"workload", "inc"},
                                     {"strategies", {"Perf"}},
                                     {"reps", 20},
                                     {"size", 64},
                                     {"sweep", "gpu1.abort_prob=1:1:1"}});
  auto rows = run_experiment(spec);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].unrecovered == 20);
  CHECK(rows[0].faults_abort == 20);
}

TEST_CASE("repeated runs are identical and seeds matter") {
  auto base = json{{"workload", "inc"},
                   {"strategies", {"PerfCP", "DMR"}},
                   {"reps", 20},
                   {"size", 128},
                   {"sweep", "gpu1.abort_prob=0.2:0.6:0.4"}};
  auto run = [&](std::uint64_t seed) {
    json c = base;
    c["seed"] = seed;
    std::ostringstream csv, trace;
    write_csv(csv, run_experiment(parse_experiment_spec(c), &trace));
    return csv.str() + trace.str();
  };
  const std::string first = run(9);
  CHECK(first == run(9));
  CHECK(first != run(10));
}

TEST_CASE("profile database persists across experiments") {
  auto path = std::filesystem::temp_directory_path() / "hetft_experiment_profile.db";
  std::filesystem::remove(path);
  json c{{"workload", "inc"}, {"strategies", {"PerfCP"}}, {"reps", 5}, {"size", 32},
         {"profile_db", path.string()}};
  run_experiment(parse_experiment_spec(c));
  ProfileDb first;
  first.load(path);
  CHECK(first.size() == 3);
  std::uint64_t total_first = 0;
  for (const auto& r : first.records()) total_first += r.total;
  // 3 calibration records plus 5 attempts.
  CHECK(total_first == 8);

  run_experiment(parse_experiment_spec(c));
  ProfileDb second;
  second.load(path);
  std::uint64_t total_second = 0;
  for (const auto& r : second.records()) total_second += r.total;
  CHECK(total_second == 16);
  std::filesystem::remove(path);
}

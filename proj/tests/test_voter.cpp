#include <cmath>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "hetft/voter.hpp"

using namespace hetft;

namespace {

ResultArea view(const std::vector<float>& v, AreaId id = AreaId{0}) {
  return {id, ValueType::kFloat32, std::as_bytes(std::span(v))};
}

ResultArea view(const std::vector<std::int32_t>& v, AreaId id = AreaId{0}) {
  return {id, ValueType::kInt32, std::as_bytes(std::span(v))};
}

template <class T>
bool votes_match(const std::vector<T>& a, const std::vector<T>& b, double delta) {
  std::array<ResultArea, 1> x{view(a)}, y{view(b)};
  return compare(x, y, VoterConfig{delta, VoterPlacement::kLowestCost}).match();
}

/// Straightforward reading of the rule, used as an oracle.
bool naive_match(const std::vector<float>& a, const std::vector<float>& b, double delta) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    double x = a[i], y = b[i];
    if (std::isnan(x) || std::isnan(y)) {
      if (std::isnan(x) != std::isnan(y)) return false;
      continue;
    }
    if (x == y) continue;
    double scale = std::max(std::abs(x), std::abs(y));
    if (std::isinf(scale) || std::abs(x - y) > delta * scale) return false;
  }
  return true;
}

std::vector<float> random_floats(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<float> mag(-1000.0f, 1000.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = mag(rng);
  return v;
}

}  // namespace

TEST_CASE("float rule edge cases") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(floats_match(0.0, 0.0, 0.001));
  CHECK(floats_match(0.0, -0.0, 0.001));
  CHECK(floats_match(nan, nan, 0.001));
  CHECK_FALSE(floats_match(nan, 1.0, 0.001));
  CHECK(floats_match(inf, inf, 0.001));
  CHECK_FALSE(floats_match(inf, -inf, 0.001));
  CHECK_FALSE(floats_match(inf, 1e308, 0.5));
  CHECK(floats_match(1000.0, 1000.9, 0.001));
  CHECK_FALSE(floats_match(1000.0, 1001.1, 0.001));
  CHECK_FALSE(floats_match(0.0, 1e-30, 0.001));
}

TEST_CASE("integers compare bitwise and report the first divergence") {
  std::vector<std::int32_t> a{1, 2, 3, 4}, b{1, 2, 9, 5};
  std::array<ResultArea, 1> x{view(a, AreaId{7})}, y{view(b, AreaId{7})};
  auto out = compare(x, y, {});
  CHECK_FALSE(out.match());
  REQUIRE(out.first_divergence);
  CHECK(out.first_divergence->area == AreaId{7});
  CHECK(out.first_divergence->index == 2);
  CHECK(out.first_divergence->lhs == 3.0);
  CHECK(out.first_divergence->rhs == 9.0);
  CHECK(votes_match(a, a, 0.0));
}

TEST_CASE("mismatched result shapes are rejected") {
  std::vector<float> a(4), b(5);
  std::array<ResultArea, 1> x{view(a)}, y{view(b)};
  CHECK_THROWS_AS(compare(x, y, {}), DispatchError);
  std::array<ResultArea, 1> z{view(a, AreaId{1})};
  std::array<ResultArea, 1> w{view(a, AreaId{2})};
  CHECK_THROWS_AS(compare(z, w, {}), DispatchError);
}

TEST_CASE("voter properties on random buffers") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> noise(-0.003, 0.003);
  for (int trial = 0; trial < 400; ++trial) {
    const std::size_t n = 1 + rng() % 64;
    auto a = random_floats(rng, n);
    auto b = a;
    for (auto& x : b) {
      if (rng() % 4 == 0) x = static_cast<float>(x * (1.0 + noise(rng)));
    }
    if (rng() % 16 == 0) a[rng() % n] = std::numeric_limits<float>::quiet_NaN();
    const double delta = 0.0005 + 0.002 * static_cast<double>(rng() % 100) / 100.0;

    CHECK(votes_match(a, a, delta));
    CHECK(votes_match(a, b, delta) == votes_match(b, a, delta));
    CHECK(votes_match(a, b, delta) == naive_match(a, b, delta));
    if (votes_match(a, b, delta)) CHECK(votes_match(a, b, delta * 2));
  }
}

TEST_CASE("a single element outside delta is always detected") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    auto a = random_floats(rng, 1 + rng() % 128);
    auto b = a;
    std::size_t at = rng() % a.size();
    b[at] = static_cast<float>(a[at] * 1.002);
    if (a[at] == 0.0f) b[at] = 1.0f;
    CHECK_FALSE(votes_match(a, b, 0.001));
  }
}

TEST_CASE("default voter kernels switch with input size") {
  auto kernels = default_voter_kernels();
  CHECK(cheapest_voter(kernels, 1000).id == "vote_single");
  CHECK(cheapest_voter(kernels, 9000).id == "vote_single");
  CHECK(cheapest_voter(kernels, 11000).id == "vote_parallel");
  CHECK(cheapest_voter(kernels, 50000).id == "vote_parallel");
  CHECK(cheapest_voter(kernels, 110000).id == "vote_gpu");
  CHECK(cheapest_voter(kernels, 1000000).id == "vote_gpu");
  CHECK(voter_cost(kernels[0], 1000) == Duration(3000));
}

TEST_CASE("placement counts the transfers of both results") {
  Fleet fleet = load_fleet(fixtures::three_unit_fleet());
  VoterConfig config;
  // Both results on host: moving 1 MB twice to a GPU costs more than voting on the CPU.
  VoterContext on_host{{UnitId{0}, UnitId{0}}, {MemorySpaceId{0}, MemorySpaceId{0}}, 1000000};
  auto c = place_voter(fleet, on_host, config);
  CHECK(c.kernel == "vote_parallel");
  CHECK(c.unit == UnitId{0});
  CHECK(c.transfer_cost == Duration(0));

  // Both results on gpu1: voting there avoids all transfers.
  VoterContext on_gpu{{UnitId{1}, UnitId{1}}, {MemorySpaceId{1}, MemorySpaceId{1}}, 1000000};
  c = place_voter(fleet, on_gpu, config);
  CHECK(c.kernel == "vote_gpu");
  CHECK(c.unit == UnitId{1});
  CHECK(c.total() == Duration(40000));

  config.placement = VoterPlacement::kAvoidTaskUnits;
  c = place_voter(fleet, on_gpu, config);
  CHECK(c.unit != UnitId{1});
}

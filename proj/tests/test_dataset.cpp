#include <doctest.h>

#include <algorithm>
#include <random>

#include "helpers.hpp"
#include "tiee/dataset.hpp"
#include "tiee/errors.hpp"

using namespace tiee;

TEST_SUITE("dataset") {

TEST_CASE("load_csv parses a small file") {
  const auto p = testing::write_file("three.csv", "y,d,x\n1.0,1,0.2\n2.0,0,-0.5\n3.0,1,0.9\n");
  const Dataset data = load_csv(p, {"y", "d", {"x"}});
  CHECK(data.n() == 3);
  CHECK(data.cov_dim() == 1);
  CHECK(data.y(1) == 2.0);
  CHECK(data.d(1) == 0);
  CHECK(data.covariate(2, 0) == doctest::Approx(0.9));
}

TEST_CASE("load_csv preserves row order and maps columns by name") {
  const auto p = testing::write_file("reorder.csv", "x,extra,d,y\n0.1,a,1,5\n0.2,b,0,6\n");
  const Dataset data = load_csv(p, {"y", "d", {"x"}});
  CHECK(data.y(0) == 5.0);
  CHECK(data.y(1) == 6.0);
  CHECK(data.covariate(1, 0) == doctest::Approx(0.2));
}

TEST_CASE("load_csv accepts quoted fields") {
  const auto p = testing::write_file("quoted.csv", "\"y\",d,note\n\"1.5\",1,\"a, b\"\n2,0,c\n");
  const Dataset data = load_csv(p, {"y", "d", {}});
  CHECK(data.n() == 2);
  CHECK(data.y(0) == 1.5);
}

TEST_CASE("load_csv reports the offending row for a bad treatment") {
  const auto p = testing::write_file("bad_d.csv", "y,d\n1,0\n2,1\n3,0\n4,1\n5,2\n");
  try {
    (void)load_csv(p, {"y", "d", {}});
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.row == 5);
    CHECK(std::string(e.what()).find('5') != std::string::npos);
  }
}

TEST_CASE("load_csv rejects non-numeric cells") {
  const auto p = testing::write_file("nan.csv", "y,d\n1,0\nabc,1\n");
  CHECK_THROWS_AS((void)load_csv(p, {"y", "d", {}}), ParseError);
}

TEST_CASE("load_csv errors") {
  const auto header = testing::write_file("header.csv", "y,d,x\n");
  CHECK_THROWS_AS((void)load_csv(header, {"y", "d", {"x"}}), EmptyInputError);
  const auto p = testing::write_file("ok.csv", "y,d\n1,0\n");
  try {
    (void)load_csv(p, {"y", "d", {"age"}});
    FAIL("expected a schema error");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("age") != std::string::npos);
  }
}

TEST_CASE("weighted_quantile examples") {
  CHECK(weighted_quantile(WeightedSample::unit({1, 2, 3}), 0.5) == 2.0);
  CHECK(weighted_quantile(WeightedSample::unit({1, 2, 3, 4}), 0.25) == 1.0);
  CHECK(weighted_quantile(WeightedSample({5.0}, {1.0}), 0.9) == 5.0);
}

TEST_CASE("weighted_quantile errors") {
  const auto s = WeightedSample::unit({1, 2});
  CHECK_THROWS_AS((void)weighted_quantile(s, 0.0), DomainError);
  CHECK_THROWS_AS((void)weighted_quantile(s, 1.0), DomainError);
  CHECK_THROWS_AS((void)weighted_quantile(WeightedSample({1, 2}, {0, 0}), 0.5), DegenerateWeightsError);
  CHECK_THROWS_AS(WeightedSample({1, 2}, {1, -1}), DomainError);
}

TEST_CASE("ties aggregate weight before inversion") {
  const WeightedSample s({2, 1, 2, 3}, {1, 1, 1, 1});
  CHECK(weighted_quantile(s, 0.3) == 2.0);
  CHECK(weighted_quantile(s, 0.75) == 2.0);
  CHECK(weighted_quantile(s, 0.76) == 3.0);
}

TEST_CASE("property: brute-force agreement, monotonicity, scaling, check-loss optimality") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 1 + rep % 20;
    std::vector<double> v(n), w(n);
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = std::floor(10 * U(rng)) / 2.0;
      w[i] = rep % 3 == 0 ? 1.0 : U(rng) + (i % 4 == 0 ? 0.0 : 0.1);
    }
    if (std::all_of(w.begin(), w.end(), [](double x) { return x == 0.0; })) w[0] = 1.0;
    const WeightedSample s(v, w);
    std::vector<double> w7(w);
    for (double& x : w7) x *= 7.3;
    const WeightedSample s7(v, w7);
    double prev = -INFINITY;
    for (int k = 1; k < 50; ++k) {
      const double p = k / 50.0;
      const double q = weighted_quantile(s, p);
      CHECK(q == testing::brute_quantile(v, w, p));
      CHECK(q >= prev);
      CHECK(weighted_quantile(s7, p) == q);
      prev = q;
      double best = INFINITY;
      for (double c : v) {
        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) loss += w[i] * check_loss(v[i] - c, p);
        best = std::min(best, loss);
      }
      double at_q = 0.0;
      for (std::size_t i = 0; i < n; ++i) at_q += w[i] * check_loss(v[i] - q, p);
      CHECK(at_q <= best + 1e-9);
    }
  }
}

TEST_CASE("unit weights match the unweighted left-continuous ECDF inverse") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> N;
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> v(1 + rep * 2);
    for (double& x : v) x = N(rng);
    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    const auto s = WeightedSample::unit(v);
    for (int k = 1; k < 100; ++k) {
      const double p = k / 100.0;
      const auto idx = static_cast<std::size_t>(std::ceil(p * sorted.size() - 1e-12)) - 1;
      CHECK(weighted_quantile(s, p) == sorted[idx]);
    }
  }
}

TEST_CASE("dataset arms and selection") {
  const Dataset data = testing::make_dataset({1, 2, 3, 4}, {1, 0, 1, 1});
  CHECK(data.arm_size(1) == 3);
  CHECK(data.arm_indices(0) == std::vector<std::size_t>{1});
  const std::vector<std::size_t> idx{0, 0, 3};
  const Dataset sub = data.select(idx);
  CHECK(sub.n() == 3);
  CHECK(sub.y(2) == 4.0);
  CHECK_THROWS_AS(sub.require_both_arms(), EmptyArmError);
  CHECK_THROWS_AS(testing::make_dataset({1.0, NAN}, {0, 1}), ParseError);
  CHECK_THROWS_AS(testing::make_dataset({1.0, 2.0}, {0, 3}), ParseError);
}

}  // TEST_SUITE

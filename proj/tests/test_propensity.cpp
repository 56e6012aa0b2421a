#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "tiee/errors.hpp"
#include "tiee/propensity.hpp"
#include "tiee/rng.hpp"

using namespace tiee;

namespace {

Dataset draw_logit(std::size_t n, std::uint64_t seed, double a, double b) {
  const CounterRng rng(seed);
  std::vector<double> y(n), x(n);
  std::vector<int> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = 2 * rng.uniform(i, 0) - 1;
    const double p = 1 / (1 + std::exp(-(a + b * x[i])));
    d[i] = rng.uniform(i, 1) < p ? 1 : 0;
    y[i] = rng.uniform(i, 2);
  }
  return Dataset(y, d, x, 1, {"x"});
}

Dataset draw_quadratic(std::size_t n, std::uint64_t seed) {
  const CounterRng rng(seed);
  std::vector<double> y(n), x(n);
  std::vector<int> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = 2 * rng.uniform(i, 0) - 1;
    d[i] = rng.uniform(i, 1) < 0.5 * x[i] * x[i] + 0.25 ? 1 : 0;
    y[i] = rng.uniform(i, 2);
  }
  return Dataset(y, d, x, 1, {"x"});
}

}  // namespace

TEST_SUITE("propensity") {

TEST_CASE("build_design rows") {
  const Dataset one({0.0}, {1}, {0.5}, 1, {"x"});
  DesignSpec spec;
  spec.polynomial(0, 2);
  const Eigen::MatrixXd X = build_design(one, spec);
  REQUIRE(X.cols() == 3);
  CHECK(X(0, 0) == 1.0);
  CHECK(X(0, 1) == 0.5);
  CHECK(X(0, 2) == 0.25);

  const Dataset zero({0.0}, {1}, {0.0}, 1, {"x"});
  DesignSpec cubic;
  cubic.polynomial(0, 3);
  const Eigen::MatrixXd Z = build_design(zero, cubic);
  CHECK(Z(0, 0) == 1.0);
  CHECK(Z.rightCols(3).isZero());

  const Dataset two({0.0}, {1}, {2.0, 3.0}, 2, {"a", "b"});
  const DesignSpec inter = DesignSpec::parse("1,a,b,a*b", two.covariate_names(), Link::logit);
  const Eigen::MatrixXd I = build_design(two, inter);
  CHECK(I(0, 3) == 6.0);
}

TEST_CASE("basis parsing") {
  const std::vector<std::string> names{"x", "ao"};
  const DesignSpec s = DesignSpec::parse("1,x^2,ao:4", names, Link::identity);
  CHECK(s.intercept);
  CHECK(s.columns() == 6);
  CHECK(s.link == Link::identity);
  CHECK_THROWS_AS(DesignSpec::parse("1,w", names, Link::logit), UsageError);
}

TEST_CASE("intercept-only fit with half treated") {
  const Dataset data = testing::make_dataset({1, 2, 3, 4, 5, 6}, {1, 0, 1, 0, 1, 0});
  for (Link link : {Link::logit, Link::identity}) {
    DesignSpec spec;
    spec.link = link;
    const PropensityFit fit = fit_glm(data, spec);
    CHECK(fit.converged);
    for (Eigen::Index i = 0; i < fit.pi.size(); ++i) CHECK(fit.pi[i] == doctest::Approx(0.5).epsilon(1e-10));
    const double mapped = link == Link::logit ? 1 / (1 + std::exp(-fit.coefficients[0])) : fit.coefficients[0];
    CHECK(mapped == doctest::Approx(0.5).epsilon(1e-10));
  }
}

TEST_CASE("logit recovery on 50000 draws") {
  const Dataset data = draw_logit(50000, 2024, 0.3, 1.2);
  const PropensityFit fit = fit_glm(data, DesignSpec::linear(1, Link::logit));
  CHECK(fit.converged);
  CHECK(std::abs(fit.coefficients[0] - 0.3) <= 0.05);
  CHECK(std::abs(fit.coefficients[1] - 1.2) <= 0.05);
  CHECK(fit.scores.colwise().mean().norm() <= 1e-6);
}

TEST_CASE("identity-link recovery of the quadratic assignment model") {
  const Dataset data = draw_quadratic(50000, 77);
  const DesignSpec spec = DesignSpec::parse("1,x^2", data.covariate_names(), Link::identity);
  const PropensityFit fit = fit_glm(data, spec);
  CHECK(fit.converged);
  CHECK(std::abs(fit.coefficients[0] - 0.25) <= 0.02);
  CHECK(std::abs(fit.coefficients[1] - 0.5) <= 0.02);
  CHECK(fit.scores.colwise().mean().norm() <= 1e-6);
}

TEST_CASE("rank deficiency is a singular-design error") {
  const Dataset data = testing::make_dataset({1, 2, 3, 4}, {1, 0, 1, 0}, {1, 1, 1, 1}, 1);
  CHECK_THROWS_AS((void)fit_glm(data, DesignSpec::linear(1, Link::logit)), SingularDesignError);
}

TEST_CASE("separation is reported as non-convergence, not an exception") {
  const Dataset data = testing::make_dataset({1, 2, 3, 4, 5, 6}, {0, 0, 0, 1, 1, 1}, {-3, -2, -1, 1, 2, 3}, 1);
  const PropensityFit fit = fit_glm(data, DesignSpec::linear(1, Link::logit));
  CHECK_FALSE(fit.converged);
  CHECK_FALSE(fit.warning.empty());
  CHECK(fit.pi.minCoeff() >= 0.01);
  CHECK(fit.pi.maxCoeff() <= 0.99);
}

TEST_CASE("ipw weight examples") {
  const Dataset data = testing::make_dataset({3, 1, 7}, {1, 1, 0});
  PropensityFit fit;
  fit.pi = Eigen::Vector3d(0.5, 0.5, 0.5);
  const WeightedSample w = ipw_weights(fit, data, 1);
  CHECK(std::vector<double>(w.values().begin(), w.values().end()) == std::vector<double>{1, 3});
  CHECK(w.weights()[0] == doctest::Approx(1.0));
  CHECK(w.weights()[1] == doctest::Approx(1.0));

  const Dataset two = testing::make_dataset({1, 2, 5}, {1, 1, 0});
  fit.pi = Eigen::Vector3d(0.25, 0.75, 0.5);
  const WeightedSample v = ipw_weights(fit, two, 1);
  CHECK(v.weights()[0] == doctest::Approx(1.5));
  CHECK(v.weights()[1] == doctest::Approx(0.5));

  const Dataset treated = testing::make_dataset({1, 2}, {1, 1});
  fit.pi = Eigen::Vector2d(0.5, 0.5);
  CHECK_THROWS_AS((void)ipw_weights(fit, treated, 0), EmptyArmError);
}

TEST_CASE("property: clipping, Hajek mean, reparameterization invariance") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Dataset data = draw_logit(3000, seed, -0.2, 3.0 + static_cast<double>(seed));
    const PropensityFit fit = fit_glm(data, DesignSpec::linear(1, Link::logit));
    CHECK(fit.pi.minCoeff() >= 0.01);
    CHECK(fit.pi.maxCoeff() <= 0.99);
    for (int d : {0, 1}) {
      const WeightedSample w = ipw_weights(fit, data, d);
      double s = 0.0;
      for (double x : w.weights()) s += x;
      CHECK(std::abs(s / static_cast<double>(w.size()) - 1.0) <= 1e-12);
    }
    std::vector<double> y, x;
    std::vector<int> dd;
    for (std::size_t i = 0; i < data.n(); ++i) {
      y.push_back(data.y(i));
      dd.push_back(data.d(i));
      x.push_back(2.5 * data.covariate(i, 0) - 4.0);
    }
    const Dataset moved(y, dd, x, 1, {"x"});
    const PropensityFit fit2 = fit_glm(moved, DesignSpec::linear(1, Link::logit));
    CHECK((fit.pi - fit2.pi).cwiseAbs().maxCoeff() <= 1e-7);
  }
}

TEST_CASE("identity link keeps probabilities inside the clip band") {
  const Dataset data = draw_logit(2000, 9, 0.0, 6.0);
  const PropensityFit fit = fit_glm(data, DesignSpec::linear(1, Link::identity));
  CHECK(fit.pi.minCoeff() >= 0.01);
  CHECK(fit.pi.maxCoeff() <= 0.99);
}

}  // TEST_SUITE

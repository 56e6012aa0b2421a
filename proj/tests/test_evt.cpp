#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "tiee/distributions.hpp"
#include "tiee/errors.hpp"
#include "tiee/evt.hpp"
#include "tiee/rng.hpp"

using namespace tiee;

namespace {

double gpd_draw(double u, double sigma, double xi) {
  if (xi == 0.0) return -sigma * std::log1p(-u);
  return sigma * (std::pow(1.0 - u, -xi) - 1.0) / xi;
}

WeightedSample gpd_sample(std::size_t m, double sigma, double xi, std::uint64_t seed) {
  const CounterRng rng(seed);
  std::vector<double> v(m);
  for (std::size_t i = 0; i < m; ++i) v[i] = gpd_draw(rng.uniform(i, 0), sigma, xi);
  return WeightedSample::unit(std::move(v));
}

PropensityFit constant_fit(std::size_t n, double p) {
  PropensityFit fit;
  fit.pi = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), p);
  return fit;
}

}  // namespace

TEST_SUITE("evt") {

TEST_CASE("default threshold level") {
  CHECK(default_threshold_level(1000) == doctest::Approx(0.910875).epsilon(1e-6));
  CHECK(default_threshold_level(5000) == doctest::Approx(1 - std::exp(-0.35 * std::log(5000.0))).epsilon(1e-14));
  CHECK_THROWS_AS((void)default_threshold_level(10), TooFewObservationsError);
}

TEST_CASE("gpd quantile examples") {
  const GpdTail t{10, 0.9, 2, 0.5, {}};
  CHECK(gpd_quantile(t, 0.99) == doctest::Approx(10 + 4 * (std::sqrt(10.0) - 1)).epsilon(1e-12));
  CHECK(gpd_quantile(t, 0.99) == doctest::Approx(18.6491).epsilon(1e-5));
  const GpdTail e{0, 0, 1, 0, {}};
  CHECK(gpd_quantile(e, 1 - std::exp(-1.0)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS((void)gpd_quantile(t, 0.9), DomainError);
}

TEST_CASE("gpd cdf examples") {
  const GpdTail t{10, 0.9, 2, 0.5, {}};
  for (double tau : {0.95, 0.99, 0.999}) CHECK(std::abs(gpd_cdf(t, gpd_quantile(t, tau)) - tau) < 1e-10);
  CHECK(gpd_cdf(t, 10.0) == 0.9);
  const GpdTail b{0, 0, 1, -0.5, {}};
  CHECK(gpd_cdf(b, 2.0) == 1.0);
  CHECK(gpd_cdf(b, 3.0) == 1.0);
  CHECK_THROWS_AS((void)gpd_cdf(t, 9.0), DomainError);
}

TEST_CASE("property: monotone quantile, continuity at xi=0, round trip") {
  for (double xi : {-0.8, -0.3, 0.0, 1e-9, 0.2, 0.5, 2.0}) {
    const GpdTail t{1.5, 0.8, 0.7, xi, {}};
    double prev = -INFINITY;
    for (int k = 1; k < 2000; ++k) {
      const double tau = 0.8 + 0.2 * k / 2000.0;
      const double q = gpd_quantile(t, tau);
      CHECK(q > prev);
      prev = q;
      CHECK(std::abs(gpd_cdf(t, q) - tau) < 1e-10);
    }
  }
  for (double tau : {0.95, 0.99, 0.999}) {
    const GpdTail near{0, 0.9, 3, 1e-9, {}}, zero{0, 0.9, 3, 0, {}};
    CHECK(std::abs(gpd_quantile(near, tau) - gpd_quantile(zero, tau)) < 1e-6 * 3);
  }
}

TEST_CASE("fit_gpd recovers exponential and Pareto tails") {
  {
    const CounterRng rng(31);
    std::vector<double> v(50000);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = dist::exponential_quantile(rng.uniform(i, 0), 1.0);
    const GpdFit f = fit_gpd(WeightedSample::unit(v));
    CHECK(std::abs(f.xi) <= 0.05);
    CHECK(std::abs(f.sigma - 1.0) <= 0.05);
  }
  {
    const CounterRng rng(32);
    std::vector<double> v(500000);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = dist::pareto_quantile(rng.uniform(i, 0), 2.0, 1.0);
    const double u = dist::pareto_quantile(0.9, 2.0, 1.0);
    std::vector<double> e;
    for (double y : v)
      if (y > u) e.push_back(y - u);
    const GpdFit f = fit_gpd(WeightedSample::unit(e));
    CHECK(std::abs(f.xi - 0.5) <= 0.05);
  }
}

TEST_CASE("property: fit_gpd parameter recovery for several shapes") {
  for (double xi : {-0.3, 0.0, 0.5}) {
    const GpdFit f = fit_gpd(gpd_sample(50000, 2.0, xi, 100 + static_cast<std::uint64_t>(10 * (xi + 1))));
    CHECK(std::abs(f.xi - xi) <= 0.05);
    CHECK(std::abs(f.sigma / 2.0 - 1.0) <= 0.05);
  }
}

TEST_CASE("fit_gpd errors") {
  CHECK_THROWS_AS((void)fit_gpd(WeightedSample::unit({1, 2, 3, 4, 5})), InsufficientTailDataError);
  CHECK_THROWS_AS((void)fit_gpd(WeightedSample::unit(std::vector<double>(20, 1.5))), DegenerateTailError);
}

TEST_CASE("weighted fit equals the fit on replicated data") {
  const WeightedSample s = gpd_sample(400, 1.0, 0.3, 5);
  std::vector<double> v(s.values().begin(), s.values().end()), w(v.size()), rep;
  for (std::size_t i = 0; i < v.size(); ++i) {
    w[i] = i % 3 == 0 ? 2.0 : 1.0;
    rep.push_back(v[i]);
    if (w[i] == 2.0) rep.push_back(v[i]);
  }
  const GpdFit a = fit_gpd(WeightedSample(v, w));
  const GpdFit b = fit_gpd(WeightedSample::unit(rep));
  CHECK(a.xi == doctest::Approx(b.xi).epsilon(1e-4));
  CHECK(a.sigma == doctest::Approx(b.sigma).epsilon(1e-4));
}

TEST_CASE("covariate GPD regression") {
  const std::size_t m = 100000;
  const CounterRng rng(8);
  std::vector<double> y(m), x(m);
  std::vector<int> d(m, 1);
  for (std::size_t i = 0; i < m; ++i) {
    x[i] = 2 * rng.uniform(i, 0) - 1;
    y[i] = 1.0 + gpd_draw(rng.uniform(i, 1), std::exp(0.5 + 0.3 * x[i]), 0.2);
  }
  const Dataset data(y, d, x, 1, {"x"});
  const PropensityFit fit = constant_fit(m, 0.5);
  const WeightedSample arm = ipw_weights(fit, data, 1);
  const std::vector<std::size_t> covs{0};
  const GpdCovariateFit g = fit_gpd_covariate(data, arm, 1.0, covs);
  CHECK(std::abs(g.beta_sigma[0] - 0.5) <= 0.05);
  CHECK(std::abs(g.beta_sigma[1] - 0.3) <= 0.05);
  CHECK(std::abs(g.xi - 0.2) <= 0.05);

  const GpdCovariateFit flat = fit_gpd_covariate(data, arm, 1.0, {});
  std::vector<double> e;
  for (double v : y)
    if (v > 1.0) e.push_back(v - 1.0);
  const GpdFit plain = fit_gpd(WeightedSample::unit(e));
  CHECK(std::exp(flat.beta_sigma[0]) == doctest::Approx(plain.sigma).epsilon(1e-4));
  CHECK(flat.xi == doctest::Approx(plain.xi).epsilon(1e-4));

  std::vector<double> cx(m, 0.3);
  const Dataset constant(y, d, cx, 1, {"x"});
  CHECK_THROWS_AS((void)fit_gpd_covariate(constant, ipw_weights(fit, constant, 1), 1.0, covs), SingularDesignError);
}

TEST_CASE("weighted hill direct formula") {
  const double e = std::exp(1.0);
  const std::vector<double> v{e, e * e, e * e * e}, w{1, 1, 1};
  CHECK(weighted_hill(v, w, 1.0, 3.0) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("causal hill with equal weights is the classical Hill estimator") {
  std::vector<double> y;
  for (int i = 1; i <= 60; ++i) y.push_back(std::pow(1.0 + i * 0.37, 1.3) + 0.01 * (i % 7));
  const std::vector<int> d(y.size(), 1);
  const Dataset data = testing::make_dataset(y, d);
  const double tau_n = 0.75;
  const EviEstimate h = hill_causal(data, constant_fit(y.size(), 0.5), 1, tau_n);
  std::vector<double> s = y;
  std::sort(s.begin(), s.end());
  const auto k = static_cast<std::size_t>(std::ceil(tau_n * s.size())) - 1;
  const double q = s[k];
  double acc = 0.0;
  for (double v : s)
    if (v > q) acc += std::log(v) - std::log(q);
  // raw weights 1/pi = 2 with normalizer n (1 - tau_n)
  CHECK(h.gamma == doctest::Approx(2.0 * acc / (s.size() * (1 - tau_n))).epsilon(1e-12));
}

TEST_CASE("causal hill on a Pareto sample and its errors") {
  const std::size_t n = 100000;
  const CounterRng rng(4);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = dist::pareto_quantile(rng.uniform(i, 0), 2.0, 1.0);
  const Dataset data = testing::make_dataset(y, std::vector<int>(n, 1));
  const double tau_n = 1 - std::pow(static_cast<double>(n), -0.35);
  const EviEstimate h = hill_causal(data, constant_fit(n, 1.0), 1, tau_n);
  CHECK(std::abs(h.gamma - 0.5) <= 0.05);

  const Dataset flat = testing::make_dataset(std::vector<double>(50, 3.0), std::vector<int>(50, 1));
  CHECK_THROWS_AS((void)hill_causal(flat, constant_fit(50, 1.0), 1, 0.9), InsufficientTailDataError);
  std::vector<double> neg(50);
  for (int i = 0; i < 50; ++i) neg[static_cast<std::size_t>(i)] = -100.0 + i;
  const Dataset negative = testing::make_dataset(neg, std::vector<int>(50, 1));
  CHECK_THROWS_AS((void)hill_causal(negative, constant_fit(50, 1.0), 1, 0.5), LogDomainError);
}

TEST_CASE("hill extrapolation") {
  CHECK(hill_extrapolate(10, 0.01, 0.001, 0.5) == doctest::Approx(31.6228).epsilon(1e-5));
  CHECK(hill_extrapolate(10, 0.01, 0.01, 0.5) == 10.0);
  CHECK_THROWS_AS((void)hill_extrapolate(10, 0.01, 0.001, -0.1), HeavyTailViolationError);
}

TEST_CASE("pickands evi exactness and errors") {
  const std::vector<double> w1{1.0};
  auto gpd = [](double xi) {
    return [xi](double s) { return xi == 0.0 ? -std::log(s) : (std::pow(s, -xi) - 1.0) / xi; };
  };
  CHECK(std::abs(pickands_evi(gpd(0.5), 0.01, 2.0, 2.0, 1, w1).gamma - 0.5) < 1e-10);
  CHECK(std::abs(pickands_evi(gpd(0.5), 0.01, 0.5, 2.0, 1, w1).gamma - 0.5) < 1e-10);
  CHECK(std::abs(pickands_evi(gpd(0.0), 0.01, 0.5, 2.0, 1, w1).gamma) < 1e-6);
  const std::vector<double> w3{1.0 / 3, 1.0 / 3, 1.0 / 3};
  CHECK(std::abs(pickands_evi(gpd(-0.3), 0.01, 0.5, 2.0, 3, w3).gamma + 0.3) < 1e-10);
  CHECK_THROWS_AS((void)pickands_evi([](double) { return 4.0; }, 0.01, 0.5, 2.0, 1, w1), DegenerateSpacingError);
  CHECK_THROWS_AS((void)pickands_evi(gpd(0.5), 0.2, 2.0, 2.0, 3, w3), DomainError);
}

}  // TEST_SUITE

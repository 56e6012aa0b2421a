#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "tiee/baselines.hpp"
#include "tiee/distributions.hpp"
#include "tiee/errors.hpp"
#include "tiee/evt.hpp"
#include "tiee/simulation.hpp"

using namespace tiee;

namespace {

PropensityFit constant_fit(const Dataset& data) { return fit_glm(data, DesignSpec{}); }

Dataset interleaved(const std::vector<double>& y1, const std::vector<double>& y0) {
  std::vector<double> y;
  std::vector<int> d;
  for (std::size_t i = 0; i < y1.size(); ++i) {
    y.push_back(y1[i]);
    d.push_back(1);
    y.push_back(y0[i]);
    d.push_back(0);
  }
  return testing::make_dataset(y, d);
}

}  // namespace

TEST_SUITE("baselines") {

TEST_CASE("zhang-firpo median and boundary") {
  std::vector<double> a(100), b(100);
  for (int i = 0; i < 100; ++i) {
    a[static_cast<std::size_t>(i)] = i + 1;
    b[static_cast<std::size_t>(i)] = 0.5 * (i + 1);
  }
  const Dataset data = interleaved(a, b);
  const PropensityFit fit = constant_fit(data);
  ZhangFirpoOptions opt;
  opt.interval = false;
  const BaselineResult r = zhang_firpo(data, fit, 0.5, opt);
  CHECK(r.theta1 == 50.0);
  CHECK(r.theta0 == 25.0);
  CHECK(r.delta == 25.0);
  CHECK(!r.at_boundary);
  CHECK(!r.ci.has_value());

  const Dataset small = interleaved(std::vector<double>(a.begin(), a.begin() + 50),
                                    std::vector<double>(b.begin(), b.begin() + 50));
  const BaselineResult e = zhang_firpo(small, constant_fit(small), 0.999, opt);
  CHECK(e.at_boundary);
  CHECK(e.theta1 == 50.0);
  CHECK(e.theta0 == 25.0);
}

TEST_CASE("zhang-firpo bootstrap interval") {
  const Dataset data = sim::generate({sim::Scenario::M1L, 1000, 9, false}).data;
  const PropensityFit fit = fit_glm(data, sim::variant_design(sim::PropensityVariant::true_model));
  ZhangFirpoOptions opt;
  opt.B = 200;
  opt.seed = 3;
  const BaselineResult r = zhang_firpo(data, fit, 0.9, opt);
  REQUIRE(r.ci.has_value());
  CHECK(r.ci->first <= r.ci->second);
  CHECK(r.delta == r.theta1 - r.theta0);
  CHECK(zhang_firpo(data, fit, 0.9, opt).ci == r.ci);
  CHECK(bootstrap_subsample_size(1000) == static_cast<std::size_t>(std::ceil(std::pow(1000.0, 0.8))));
}

TEST_CASE("property: zhang-firpo with unit weights is the empirical quantile") {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> N;
  ZhangFirpoOptions opt;
  opt.interval = false;
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t m = 10 + static_cast<std::size_t>(rep);
    std::vector<double> a(m), b(m);
    for (std::size_t i = 0; i < m; ++i) {
      a[i] = std::round(4 * N(rng)) / 2;
      b[i] = N(rng);
    }
    const Dataset data = interleaved(a, b);
    const PropensityFit fit = constant_fit(data);
    const std::vector<double> ones(m, 1.0);
    for (double tau : {0.1, 0.25, 0.5, 0.77, 0.9}) {
      const BaselineResult r = zhang_firpo(data, fit, tau, opt);
      CHECK(r.theta1 == testing::brute_quantile(a, ones, tau));
      CHECK(r.theta0 == testing::brute_quantile(b, ones, tau));
    }
  }
}

TEST_CASE("causal hill on a stratified Pareto sample") {
  const std::size_t m = 50000, n = 2 * m;
  std::vector<double> y0(m), y1(m);
  for (std::size_t i = 0; i < m; ++i) {
    y0[i] = dist::pareto_quantile((static_cast<double>(i) + 0.5) / m, 2.0, 1.0);
    y1[i] = 2 * y0[i];
  }
  const Dataset data = interleaved(y1, y0);
  const PropensityFit fit = constant_fit(data);
  const double tau = 1 - 1.0 / n;
  const BaselineResult r = causal_hill(data, fit, tau, default_threshold_level(n));
  const double q0 = dist::pareto_quantile(tau, 2.0, 1.0);
  CHECK(std::abs(r.delta / q0 - 1) < 0.05);
  CHECK(r.gamma1 == doctest::Approx(0.5).epsilon(0.05));
  REQUIRE(r.ci.has_value());
  CHECK(r.ci->first <= r.delta);
  CHECK(r.delta <= r.ci->second);
}

TEST_CASE("hill extrapolation at the intermediate level is the identity") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(0.01, 0.3);
  for (int rep = 0; rep < 50; ++rep) {
    const double q = 1 + 10 * U(rng), t = U(rng), g = U(rng);
    CHECK(hill_extrapolate(q, t, t, g) == doctest::Approx(q).epsilon(1e-14));
  }
}

TEST_CASE("causal hill with no outcomes above the intermediate quantile") {
  const std::size_t m = 500;
  std::vector<double> a(m), b(m);
  for (std::size_t i = 0; i < m; ++i) {
    a[i] = std::min(dist::pareto_quantile((static_cast<double>(i) + 0.5) / m, 2.0, 1.0), 1.5);
    b[i] = dist::pareto_quantile((static_cast<double>(i) + 0.5) / m, 2.0, 1.0);
  }
  const Dataset data = interleaved(a, b);
  CHECK_THROWS_AS((void)causal_hill(data, constant_fit(data), 0.999, default_threshold_level(2 * m)),
                  HeavyTailViolationError);
}

TEST_CASE("pickands extrapolation is exact on GPD quantile functions") {
  for (double xi : {-0.3, 0.2, 0.5, 1.0}) {
    const double u = 3.0, sigma = 1.7, p0 = 0.1;
    auto tail_q = [&](double s) { return u + sigma * (std::pow(s / p0, -xi) - 1) / xi; };
    const double w3[] = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    const double tau_n = 0.05, m = 2.0;
    const EviEstimate e = pickands_evi(tail_q, tau_n, 0.5, m, 3, w3);
    CHECK(e.gamma == doctest::Approx(xi).epsilon(1e-9));
    for (double p : {1e-3, 1e-4, 2e-5}) {
      const double est = pickands_extrapolate(tail_q(tau_n), tail_q(m * tau_n), tau_n, p, m, e.gamma);
      CHECK(std::abs(est - tail_q(p)) < 1e-6 * std::max(1.0, std::abs(tail_q(p))));
    }
  }
}

TEST_CASE("pickands on constant outcomes reports degenerate spacing") {
  const Dataset data = interleaved(std::vector<double>(200, 4.0), std::vector<double>(200, 2.0));
  CHECK_THROWS_AS((void)pickands_quantile(data, constant_fit(data), 0.99), DegenerateSpacingError);
}

TEST_CASE("simulated baseline performance bands") {
  using namespace sim;
  McCampaign c;
  c.reps = 200;
  c.base_seed = 7;
  c.intervals = false;
  c.regimes = {Regime::five_over_n};

  c.scenario = Scenario::M1L;
  c.methods = {Method::zhang_firpo};
  const McResult zf = run_campaign(c).front();
  CHECK(zf.mse >= 2.0);
  CHECK(zf.mse <= 9.0);
  CHECK(std::abs(zf.bias) <= 3 * 0.090 + 3 * std::sqrt(zf.mse / zf.reps));

  c.scenario = Scenario::M1H;
  c.methods = {Method::causal_hill, Method::pickands, Method::tiee};
  const auto res = run_campaign(c);
  const McResult& hill = res[0];
  const McResult& pick = res[1];
  const McResult& tiee = res[2];
  REQUIRE(hill.method == Method::causal_hill);
  REQUIRE(tiee.method == Method::tiee);
  CHECK(hill.mse >= 70.0);
  CHECK(hill.mse <= 260.0);
  CHECK(pick.mse > tiee.mse);
  CHECK(std::abs(pick.bias) > std::abs(tiee.bias));
}

}  // TEST_SUITE

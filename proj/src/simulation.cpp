#include "tiee/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <ostream>
#include <thread>
#include <tuple>

#include "tiee/baselines.hpp"
#include "tiee/distributions.hpp"
#include "tiee/errors.hpp"
#include "tiee/inference.hpp"
#include "tiee/rng.hpp"

namespace tiee::sim {

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::M1H: return "M1H";
    case Scenario::M2H: return "M2H";
    case Scenario::M3H: return "M3H";
    case Scenario::M1L: return "M1L";
    case Scenario::M2L: return "M2L";
    case Scenario::M3L: return "M3L";
  }
  return "?";
}

std::string to_string(Regime r) {
  switch (r) {
    case Regime::five_over_n: return "5_over_n";
    case Regime::one_over_n: return "1_over_n";
    case Regime::five_over_n_log_n: return "5_over_nlogn";
  }
  return "?";
}

std::string to_string(Method m) {
  switch (m) {
    case Method::tiee: return "tiee";
    case Method::zhang_firpo: return "zhang_firpo";
    case Method::causal_hill: return "causal_hill";
    case Method::pickands: return "pickands";
  }
  return "?";
}

std::string to_string(PropensityVariant v) {
  switch (v) {
    case PropensityVariant::true_model: return "true";
    case PropensityVariant::polynomial: return "polynomial";
    case PropensityVariant::linear: return "linear";
    case PropensityVariant::logit: return "logit";
    case PropensityVariant::spurious: return "spurious";
  }
  return "?";
}

std::string display_name(PropensityVariant v) {
  switch (v) {
    case PropensityVariant::true_model: return "True Model (Quadratic)";
    case PropensityVariant::polynomial: return "Polynomial Basis";
    case PropensityVariant::linear: return "Misspecified Form (Linear)";
    case PropensityVariant::logit: return "Misspecified Link (Logit)";
    case PropensityVariant::spurious: return "Spurious Covariates";
  }
  return "?";
}

Scenario parse_scenario(const std::string& s) {
  for (Scenario x : kAllScenarios)
    if (to_string(x) == s) return x;
  throw UsageError("unknown scenario '" + s + "' (expected M1H, M2H, M3H, M1L, M2L or M3L)");
}

Regime parse_regime(const std::string& s) {
  for (Regime x : kAllRegimes)
    if (to_string(x) == s) return x;
  throw UsageError("unknown regime '" + s + "' (expected 5_over_n, 1_over_n or 5_over_nlogn)");
}

Method parse_method(const std::string& s) {
  for (Method m : {Method::tiee, Method::zhang_firpo, Method::causal_hill, Method::pickands})
    if (to_string(m) == s) return m;
  throw UsageError("unknown method '" + s + "' (expected tiee, zhang_firpo, causal_hill or pickands)");
}

PropensityVariant parse_variant(const std::string& s) {
  for (PropensityVariant v : kAllVariants)
    if (to_string(v) == s) return v;
  throw UsageError("unknown propensity variant '" + s + "'");
}

double tail_probability(Regime r, std::size_t n) {
  const double nn = static_cast<double>(n);
  switch (r) {
    case Regime::five_over_n: return 5.0 / nn;
    case Regime::one_over_n: return 1.0 / nn;
    case Regime::five_over_n_log_n: return 5.0 / (nn * std::log(nn));
  }
  return 0.0;
}

double target_level(Regime r, std::size_t n) { return 1.0 - tail_probability(r, n); }

double true_propensity(double x) { return 0.5 * x * x + 0.25; }

bool shares_draw(Scenario s) {
  return s == Scenario::M1H || s == Scenario::M1L || s == Scenario::M3H;
}

double potential_outcome(Scenario s, int d, double x, double u) {
  switch (s) {
    case Scenario::M1H: return (d == 1 ? 5.0 : 1.0) * dist::student_t3_quantile(u) * (1.0 + x);
    case Scenario::M1L: return (d == 1 ? 5.0 : 1.0) * dist::normal_quantile(u) * (1.0 + x);
    case Scenario::M2H: return dist::frechet_quantile(u, d == 1 ? 2.0 : 3.0) * std::exp(x);
    case Scenario::M2L: return dist::exponential_quantile(u, d == 1 ? 1.0 : 2.0) * std::exp(x);
    case Scenario::M3H: return dist::pareto_quantile(u, 1.75 + x, d == 1 ? 2.0 : 1.0);
    case Scenario::M3L:
      return d == 1 ? dist::weibull_quantile(u, 2.0 + x, 2.0) : dist::weibull_quantile(u, 3.0 + 2.0 * x, 1.0);
  }
  return 0.0;
}

Generated generate(const DgpSpec& spec) {
  if (spec.n < 100) throw UsageError("simulated samples need n >= 100");
  const CounterRng rng(spec.seed);
  const std::size_t k = spec.spurious ? 2 : 1;
  std::vector<double> y(spec.n), x(spec.n * k), y1(spec.n), y0(spec.n);
  std::vector<int> d(spec.n);
  const std::uint32_t stream0 = shares_draw(spec.scenario) ? kStreamY1 : kStreamY0;
  for (std::size_t i = 0; i < spec.n; ++i) {
    const double xi = 2.0 * rng.uniform(i, kStreamX) - 1.0;
    x[i * k] = xi;
    if (spec.spurious) x[i * k + 1] = 2.0 * rng.uniform(i, kStreamZ) - 1.0;
    d[i] = rng.uniform(i, kStreamD) < true_propensity(xi) ? 1 : 0;
    y1[i] = potential_outcome(spec.scenario, 1, xi, rng.uniform(i, kStreamY1));
    y0[i] = potential_outcome(spec.scenario, 0, xi, rng.uniform(i, stream0));
    y[i] = d[i] == 1 ? y1[i] : y0[i];
  }
  std::vector<std::string> names{"x"};
  if (spec.spurious) names.push_back("z");
  return {Dataset(std::move(y), std::move(d), std::move(x), k, std::move(names)), std::move(y1), std::move(y0)};
}

DesignSpec variant_design(PropensityVariant v) {
  DesignSpec s;
  s.link = Link::identity;
  switch (v) {
    case PropensityVariant::true_model: s.powers = {{0, 2}}; break;
    case PropensityVariant::polynomial: s.powers = {{0, 1}, {0, 2}}; break;
    case PropensityVariant::linear: s.powers = {{0, 1}}; break;
    case PropensityVariant::logit:
      s.powers = {{0, 1}, {0, 2}};
      s.link = Link::logit;
      break;
    case PropensityVariant::spurious:
      s.powers = {{0, 2}, {1, 1}};
      s.interactions = {{0, 1}};
      break;
  }
  return s;
}

namespace {

double empirical_quantile(std::vector<double>& v, double tau) {
  const auto n = v.size();
  std::size_t k = static_cast<std::size_t>(std::ceil(tau * static_cast<double>(n) - 1e-9));
  k = std::clamp<std::size_t>(k, 1, n) - 1;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

}  // namespace

std::vector<OracleResult> true_eqte_oracle(Scenario s, std::span<const double> taus, std::size_t n_mc,
                                           std::uint64_t seed) {
  for (double tau : taus)
    if (!(tau > 0.0 && tau < 1.0)) throw DomainError("tau must lie in (0,1)");
  constexpr std::size_t kBlocks = 20;
  if (n_mc < kBlocks * 100) throw UsageError("oracle sample too small");
  const CounterRng rng(seed);
  const std::uint32_t stream0 = shares_draw(s) ? kStreamY1 : kStreamY0;
  std::vector<double> y1(n_mc), y0(n_mc);
  for (std::size_t i = 0; i < n_mc; ++i) {
    const double x = 2.0 * rng.uniform(i, kStreamX) - 1.0;
    y1[i] = potential_outcome(s, 1, x, rng.uniform(i, kStreamY1));
    y0[i] = potential_outcome(s, 0, x, rng.uniform(i, stream0));
  }
  const std::size_t bs = n_mc / kBlocks;
  std::vector<std::vector<double>> deltas(taus.size());
  std::vector<double> a(bs), c(bs);
  for (std::size_t b = 0; b < kBlocks; ++b) {
    for (std::size_t t = 0; t < taus.size(); ++t) {
      std::copy_n(y1.begin() + static_cast<std::ptrdiff_t>(b * bs), bs, a.begin());
      std::copy_n(y0.begin() + static_cast<std::ptrdiff_t>(b * bs), bs, c.begin());
      deltas[t].push_back(empirical_quantile(a, taus[t]) - empirical_quantile(c, taus[t]));
    }
  }
  std::vector<OracleResult> out(taus.size());
  for (std::size_t t = 0; t < taus.size(); ++t) {
    double mean = 0.0;
    for (double v : deltas[t]) mean += v;
    mean /= kBlocks;
    double ss = 0.0;
    for (double v : deltas[t]) ss += (v - mean) * (v - mean);
    out[t].se = std::sqrt(ss / (kBlocks - 1) / kBlocks);
    out[t].q1 = empirical_quantile(y1, taus[t]);
    out[t].q0 = empirical_quantile(y0, taus[t]);
    out[t].value = out[t].q1 - out[t].q0;
  }
  return out;
}

OracleResult true_eqte_oracle(Scenario s, double tau, std::size_t n_mc, std::uint64_t seed) {
  const double taus[] = {tau};
  return true_eqte_oracle(s, taus, n_mc, seed).front();
}

std::string McResult::modal_failure() const {
  std::string best;
  int count = 0;
  for (const auto& [k, v] : failure_modes)
    if (v > count) {
      best = k;
      count = v;
    }
  return best;
}

unsigned resolve_threads(unsigned requested) {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (requested > 0) return requested;
  if (const char* env = std::getenv("TIEE_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return hw;
}

namespace {

// Truth values are reused across campaigns in one process (sweeps, studies).
std::vector<OracleResult> cached_oracle(Scenario s, const std::vector<double>& taus, std::size_t n_mc,
                                        std::uint64_t seed) {
  static std::mutex mu;
  static std::map<std::tuple<int, double, std::size_t, std::uint64_t>, OracleResult> cache;
  auto key = [&](double tau) { return std::make_tuple(static_cast<int>(s), tau, n_mc, seed); };
  std::lock_guard lock(mu);
  std::vector<double> missing;
  for (double t : taus)
    if (!cache.contains(key(t)) && std::find(missing.begin(), missing.end(), t) == missing.end())
      missing.push_back(t);
  if (!missing.empty()) {
    const auto res = true_eqte_oracle(s, missing, n_mc, seed);
    for (std::size_t i = 0; i < missing.size(); ++i) cache.emplace(key(missing[i]), res[i]);
  }
  std::vector<OracleResult> out;
  for (double t : taus) out.push_back(cache.at(key(t)));
  return out;
}

struct Cell {
  Method method;
  Regime regime;
  double p_u;
  std::size_t K;
};

void fail(ReplicateRecord& rec, const Error& e) {
  rec.ok = false;
  rec.error = e.kind() + ": " + e.what();
}

void record(ReplicateRecord& rec, double estimate, const std::optional<std::pair<double, double>>& ci) {
  rec.ok = std::isfinite(estimate);
  rec.estimate = estimate;
  if (!rec.ok) rec.error = "nonfinite: estimate is not finite";
  if (ci) {
    rec.has_ci = true;
    rec.lo = ci->first;
    rec.hi = ci->second;
  }
}

void run_replicate(const McCampaign& c, const std::vector<Cell>& cells, int r,
                   std::vector<McResult>& out) {
  const std::uint64_t seed = derive_seed(c.base_seed, static_cast<std::uint64_t>(r));
  for (std::size_t j = 0; j < cells.size(); ++j) {
    out[j].records[static_cast<std::size_t>(r)].rep = r;
    out[j].records[static_cast<std::size_t>(r)].seed = seed;
  }
  auto rec = [&](std::size_t j) -> ReplicateRecord& { return out[j].records[static_cast<std::size_t>(r)]; };

  const bool spurious = c.propensity == PropensityVariant::spurious;
  const Generated g = generate({c.scenario, c.n, seed, spurious});
  PropensityFit fit;
  try {
    fit = fit_glm(g.data, variant_design(c.propensity));
  } catch (const Error& e) {
    for (std::size_t j = 0; j < cells.size(); ++j) fail(rec(j), e);
    return;
  }

  // TIEE: one reconstruction per (arm, p_u), reused across tau and K.
  std::map<double, std::vector<std::size_t>> tiee_by_pu;
  std::vector<std::size_t> zf, hill, pick;
  for (std::size_t j = 0; j < cells.size(); ++j) {
    switch (cells[j].method) {
      case Method::tiee: tiee_by_pu[cells[j].p_u].push_back(j); break;
      case Method::zhang_firpo: zf.push_back(j); break;
      case Method::causal_hill: hill.push_back(j); break;
      case Method::pickands: pick.push_back(j); break;
    }
  }
  TieeConfig base = c.tiee;
  if (base.tail_covariates.empty()) base.tail_covariates = {0};
  for (const auto& [pu_key, idx] : tiee_by_pu) {
    const double p_u = std::isnan(pu_key) ? default_threshold_level(c.n) : pu_key;
    try {
      const auto w1 = signal_weights(g.data, &fit, 1, base.signal);
      const auto w0 = signal_weights(g.data, &fit, 0, base.signal);
      const auto r1 = reconstruct_quantile(g.data, w1, p_u, base.tail_mode, base.tail_covariates);
      const auto r0 = reconstruct_quantile(g.data, w0, p_u, base.tail_mode, base.tail_covariates);
      for (std::size_t j : idx) {
        try {
          TieeConfig cfg = base;
          cfg.tau = target_level(cells[j].regime, c.n);
          cfg.K = cells[j].K;
          cfg.p_u = p_u;
          TieeEstimate e1 = solve_tiee(cfg, r1);
          e1.d = 1;
          TieeEstimate e0 = solve_tiee(cfg, r0);
          e0.d = 0;
          const EqteResult eq = infer_eqte(g.data, &fit, cfg, e1, e0, {c.alpha, c.sandwich});
          record(rec(j), eq.delta, c.intervals ? eq.ci : std::nullopt);
        } catch (const Error& e) {
          fail(rec(j), e);
        }
      }
    } catch (const Error& e) {
      for (std::size_t j : idx) fail(rec(j), e);
    }
  }

  if (!zf.empty()) {
    std::vector<double> taus;
    for (std::size_t j : zf) taus.push_back(target_level(cells[j].regime, c.n));
    try {
      ZhangFirpoOptions opt;
      opt.interval = c.intervals;
      opt.B = c.bootstrap_B;
      opt.alpha = c.alpha;
      opt.seed = derive_seed(seed, 0x5A4Bull);
      const auto res = zhang_firpo(g.data, fit, taus, opt);
      for (std::size_t t = 0; t < zf.size(); ++t) record(rec(zf[t]), res[t].delta, res[t].ci);
    } catch (const Error& e) {
      for (std::size_t j : zf) fail(rec(j), e);
    }
  }
  for (std::size_t j : hill) {
    try {
      const auto res = causal_hill(g.data, fit, target_level(cells[j].regime, c.n),
                                   default_threshold_level(c.n), c.alpha);
      record(rec(j), res.delta, c.intervals ? res.ci : std::nullopt);
    } catch (const Error& e) {
      fail(rec(j), e);
    }
  }
  for (std::size_t j : pick) {
    try {
      record(rec(j), pickands_quantile(g.data, fit, target_level(cells[j].regime, c.n)).delta, std::nullopt);
    } catch (const Error& e) {
      fail(rec(j), e);
    }
  }
}

void aggregate(McResult& m) {
  double sum = 0.0, sq = 0.0;
  int covered = 0;
  m.reps = 0;
  m.failures = 0;
  m.intervals = 0;
  for (const auto& r : m.records) {
    if (!r.ok) {
      ++m.failures;
      ++m.failure_modes[r.error.substr(0, r.error.find(':'))];
      continue;
    }
    ++m.reps;
    const double dev = r.estimate - m.truth;
    sum += dev;
    sq += dev * dev;
    if (r.has_ci) {
      ++m.intervals;
      if (r.lo <= m.truth && m.truth <= r.hi) ++covered;
    }
  }
  if (m.reps > 0) {
    m.bias = sum / m.reps;
    m.mse = sq / m.reps;
  }
  if (m.intervals > 0) m.coverage = static_cast<double>(covered) / m.intervals;
}

}  // namespace

std::vector<McResult> run_campaign(const McCampaign& c) {
  if (c.reps < 1) throw UsageError("reps must be at least 1");
  if (c.methods.empty() || c.regimes.empty()) throw UsageError("campaign needs methods and regimes");
  std::vector<double> pus = c.pu_values;
  if (pus.empty()) pus.push_back(c.tiee.p_u);
  std::vector<std::size_t> ks = c.k_values;
  if (ks.empty()) ks.push_back(c.tiee.K == 0 ? default_grid_size(c.n) : c.tiee.K);

  std::vector<Cell> cells;
  for (Method m : c.methods)
    for (Regime r : c.regimes) {
      if (m == Method::tiee) {
        for (double pu : pus)
          for (std::size_t k : ks) cells.push_back({m, r, pu, k});
      } else {
        cells.push_back({m, r, std::numeric_limits<double>::quiet_NaN(), 0});
      }
    }

  std::vector<McResult> out(cells.size());
  for (std::size_t j = 0; j < cells.size(); ++j) {
    McResult& m = out[j];
    m.scenario = c.scenario;
    m.method = cells[j].method;
    m.regime = cells[j].regime;
    m.propensity = c.propensity;
    m.n = c.n;
    m.tau = target_level(cells[j].regime, c.n);
    if (m.method == Method::tiee) {
      m.p_u = std::isnan(cells[j].p_u) ? default_threshold_level(c.n) : cells[j].p_u;
      m.K = cells[j].K;
    }
    m.records.resize(static_cast<std::size_t>(c.reps));
  }
  std::vector<double> taus;
  for (const auto& m : out) taus.push_back(m.tau);
  const auto truth = cached_oracle(c.scenario, taus, c.oracle_n, c.oracle_seed);
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j].truth = truth[j].value;
    out[j].truth_se = truth[j].se;
  }

  const unsigned workers = std::min<unsigned>(resolve_threads(c.threads), static_cast<unsigned>(c.reps));
  std::atomic<int> next{0};
  auto work = [&] {
    for (int r = next++; r < c.reps; r = next++) run_replicate(c, cells, r, out);
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < workers; ++t) pool.emplace_back(work);
  }
  for (auto& m : out) aggregate(m);
  return out;
}

McResult run_mc(Scenario s, Method m, Regime r, int reps, std::uint64_t base_seed,
                const McCampaign& overrides) {
  McCampaign c = overrides;
  c.scenario = s;
  c.methods = {m};
  c.regimes = {r};
  c.reps = reps;
  c.base_seed = base_seed;
  c.pu_values.clear();
  c.k_values.clear();
  McResult res = run_campaign(c).front();
  if (res.reps == 0)
    throw CampaignError("all " + std::to_string(reps) + " replicates failed; most common failure: " +
                        res.modal_failure());
  return res;
}

std::vector<double> pu_grid() {
  std::vector<double> v;
  for (int i = 85; i <= 95; ++i) v.push_back(i / 100.0);
  return v;
}

std::vector<std::size_t> k_grid() {
  std::vector<std::size_t> v;
  for (std::size_t k = 100; k <= 2000; k += 100) v.push_back(k);
  return v;
}

namespace {

std::vector<CurvePoint> sweep(McCampaign c, bool over_pu) {
  c.methods = {Method::tiee};
  c.intervals = false;
  std::vector<CurvePoint> curve;
  for (const McResult& m : run_campaign(c))
    curve.push_back({m.regime, over_pu ? m.p_u : static_cast<double>(m.K), m.mse, m.bias, m.reps});
  return curve;
}

}  // namespace

std::vector<CurvePoint> sensitivity_pu(Scenario s, const std::vector<Regime>& regimes, int reps,
                                       std::uint64_t seed, const McCampaign& overrides) {
  McCampaign c = overrides;
  c.scenario = s;
  c.regimes = regimes;
  c.reps = reps;
  c.base_seed = seed;
  c.pu_values = pu_grid();
  c.k_values.clear();
  return sweep(c, true);
}

std::vector<CurvePoint> sensitivity_k(Scenario s, const std::vector<Regime>& regimes, int reps,
                                      std::uint64_t seed, const McCampaign& overrides) {
  McCampaign c = overrides;
  c.scenario = s;
  c.regimes = regimes;
  c.reps = reps;
  c.base_seed = seed;
  c.pu_values.clear();
  c.k_values = k_grid();
  return sweep(c, false);
}

std::vector<McResult> misspec_study(const std::vector<Regime>& regimes, int reps, std::uint64_t seed,
                                    const McCampaign& overrides) {
  std::vector<McResult> out;
  for (PropensityVariant v : kAllVariants) {
    McCampaign c = overrides;
    c.scenario = Scenario::M1H;
    c.methods = {Method::tiee};
    c.regimes = regimes;
    c.reps = reps;
    c.base_seed = seed;
    c.propensity = v;
    c.pu_values.clear();
    c.k_values.clear();
    for (auto& m : run_campaign(c)) out.push_back(std::move(m));
  }
  return out;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

namespace {
std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}
}  // namespace

void write_results_csv(std::ostream& os, const std::vector<McResult>& results, bool include_replicates) {
  os << "row,scenario,method,regime,propensity,n,tau,p_u,K,rep,seed,estimate,ci_lo,ci_hi,"
        "truth,truth_se,bias,mse,coverage,reps_ok,failures,error\n";
  for (const McResult& m : results) {
    const std::string head = to_string(m.scenario) + "," + to_string(m.method) + "," + to_string(m.regime) +
                             "," + to_string(m.propensity) + "," + std::to_string(m.n) + "," +
                             format_number(m.tau) + "," + format_number(m.p_u) + "," +
                             (m.K ? std::to_string(m.K) : std::string("NA"));
    if (include_replicates)
      for (const auto& r : m.records)
        os << "replicate," << head << "," << r.rep << "," << r.seed << ","
           << (r.ok ? format_number(r.estimate) : "NA") << "," << format_number(r.lo) << ","
           << format_number(r.hi) << "," << format_number(m.truth) << ",NA,NA,NA,NA,NA,NA,"
           << csv_escape(r.error) << "\n";
    os << "aggregate," << head << ",NA,NA,NA,NA,NA," << format_number(m.truth) << ","
       << format_number(m.truth_se) << "," << format_number(m.bias) << "," << format_number(m.mse) << ","
       << format_number(m.coverage) << "," << m.reps << "," << m.failures << ","
       << csv_escape(m.modal_failure()) << "\n";
  }
}

void write_curve_csv(std::ostream& os, const std::vector<CurvePoint>& curve, const std::string& x_name) {
  os << "regime," << x_name << ",mse,bias,reps_ok\n";
  for (const auto& p : curve)
    os << to_string(p.regime) << "," << format_number(p.x) << "," << format_number(p.mse) << ","
       << format_number(p.bias) << "," << p.reps << "\n";
}

}  // namespace tiee::sim

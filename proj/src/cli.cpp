#include "tiee/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "tiee/baselines.hpp"
#include "tiee/errors.hpp"
#include "tiee/evt.hpp"
#include "tiee/inference.hpp"
#include "tiee/simulation.hpp"
#include "tiee/tiee.hpp"

namespace tiee::cli {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

ordered_json to_json(const RunConfig& c) {
  ordered_json j;
  j["command"] = c.command;
  if (c.command == "estimate") {
    j["input"] = c.input;
    j["y"] = c.y;
    j["d"] = c.d;
    j["x"] = c.x;
    j["tau"] = c.tau;
    j["basis"] = c.basis.empty() ? "linear" : c.basis;
    j["link"] = c.link;
  } else {
    j["scenario"] = c.scenario;
    j["regimes"] = c.regimes;
    j["n"] = c.n;
    j["reps"] = c.reps;
    j["seed"] = c.seed;
    j["propensity"] = c.basis.empty() ? "true" : c.basis;
    if (!c.study.empty()) j["study"] = c.study;
    if (!c.sweep.empty()) j["sweep"] = c.sweep;
  }
  j["methods"] = c.methods;
  if (c.p_u >= 0.0) j["p_u"] = c.p_u;
  else j["p_u"] = "default";
  if (c.K > 0) j["K"] = c.K;
  else j["K"] = "default";
  j["alpha"] = c.alpha;
  j["out"] = c.out;
  j["format"] = c.format;
  return j;
}

namespace {

ordered_json provenance(const RunConfig& c) {
  ordered_json j;
  j["tool"] = "tiee";
  j["version"] = kVersion;
  j["config"] = to_json(c);
  return j;
}

ordered_json number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

void write_error(const RunConfig& c, const std::string& kind, const std::string& message, int code) {
  std::error_code ec;
  fs::create_directories(c.out, ec);
  std::ofstream f(fs::path(c.out) / "error.json");
  if (!f) return;
  ordered_json j;
  j["error"] = {{"kind", kind}, {"message", message}, {"exit_code", code}};
  j["provenance"] = provenance(c);
  f << j.dump(2) << "\n";
}

std::ofstream open_output(const RunConfig& c, const std::string& name) {
  fs::create_directories(c.out);
  std::ofstream f(fs::path(c.out) / name, std::ios::binary);
  if (!f) throw UsageError("cannot write " + (fs::path(c.out) / name).string());
  return f;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return q + "\"";
}

void write_json_or_csv(const RunConfig& c, const std::string& stem, const std::vector<std::string>& columns,
                       const std::vector<std::vector<ordered_json>>& rows) {
  if (c.format == "json") {
    ordered_json j;
    j["provenance"] = provenance(c);
    j["rows"] = ordered_json::array();
    for (const auto& r : rows) {
      ordered_json o;
      for (std::size_t k = 0; k < columns.size(); ++k) o[columns[k]] = r[k];
      j["rows"].push_back(o);
    }
    open_output(c, stem + ".json") << j.dump(2) << "\n";
    return;
  }
  auto f = open_output(c, stem + ".csv");
  f << "# " << provenance(c).dump() << "\n";
  for (std::size_t k = 0; k < columns.size(); ++k) f << (k ? "," : "") << columns[k];
  f << "\n";
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < r.size(); ++k) {
      if (k) f << ",";
      const ordered_json& v = r[k];
      if (v.is_null()) f << "NA";
      else if (v.is_number_float()) f << sim::format_number(v.get<double>());
      else if (v.is_string()) f << csv_field(v.get<std::string>());
      else f << v.dump();
    }
    f << "\n";
  }
}

struct MethodRow {
  std::string method;
  std::string status = "ok";
  std::string message;
  double theta1 = NAN, theta0 = NAN, delta = NAN, lo = NAN, hi = NAN;
  double gamma1 = NAN, gamma0 = NAN, p_u = NAN, xi1 = NAN, xi0 = NAN;
  long K = -1, exc1 = -1, exc0 = -1;
  std::string flags;
};

std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
  return s;
}

MethodRow run_method(const std::string& method, const Dataset& data, const PropensityFit& fit,
                     const RunConfig& c) {
  MethodRow row;
  row.method = method;
  if (method == "tiee") {
    TieeConfig cfg;
    cfg.tau = c.tau;
    cfg.K = c.K;
    if (c.p_u >= 0.0) cfg.p_u = c.p_u;
    const TieeEstimate e1 = estimate_tiee(data, &fit, 1, cfg);
    const TieeEstimate e0 = estimate_tiee(data, &fit, 0, cfg);
    InferenceOptions opt;
    opt.alpha = c.alpha;
    const EqteResult r = infer_eqte(data, &fit, cfg, e1, e0, opt);
    row.theta1 = r.theta1;
    row.theta0 = r.theta0;
    row.delta = r.delta;
    if (r.ci) std::tie(row.lo, row.hi) = *r.ci;
    row.p_u = e1.p_u;
    row.xi1 = e1.xi;
    row.xi0 = e0.xi;
    row.K = static_cast<long>(e1.K);
    row.exc1 = e1.exceedances;
    row.exc0 = e0.exceedances;
    row.flags = join(r.warnings, "; ");
    return row;
  }
  BaselineResult r;
  if (method == "zhang_firpo") {
    ZhangFirpoOptions opt;
    opt.alpha = c.alpha;
    opt.seed = c.seed;
    r = zhang_firpo(data, fit, c.tau, opt);
  } else if (method == "causal_hill") {
    r = causal_hill(data, fit, c.tau, default_threshold_level(data.n()), c.alpha);
  } else if (method == "pickands") {
    r = pickands_quantile(data, fit, c.tau);
  } else {
    throw UsageError("unknown method '" + method + "'");
  }
  row.theta1 = r.theta1;
  row.theta0 = r.theta0;
  row.delta = r.delta;
  if (r.ci) std::tie(row.lo, row.hi) = *r.ci;
  row.gamma1 = r.gamma1;
  row.gamma0 = r.gamma0;
  std::vector<std::string> flags = r.diagnostics;
  if (r.at_boundary) flags.push_back("arm quantile equals the arm maximum");
  row.flags = join(flags, "; ");
  return row;
}

int cmd_estimate(const RunConfig& c, std::ostream& out, std::ostream& err) {
  if (!(c.tau > 0.0 && c.tau < 1.0)) throw UsageError("--tau must lie in (0,1)");
  for (const auto& m : c.methods)
    if (m != "tiee" && m != "zhang_firpo" && m != "causal_hill" && m != "pickands")
      throw UsageError("unknown method '" + m + "'");
  const Dataset data = load_csv(c.input, ColumnMap{c.y, c.d, c.x});
  data.require_both_arms();
  const Link link = c.link == "identity" ? Link::identity : Link::logit;
  const DesignSpec spec = c.basis.empty() || c.basis == "linear" ? DesignSpec::linear(data.cov_dim(), link)
                                                                 : DesignSpec::parse(c.basis, data.covariate_names(), link);

  PropensityFit fit;
  try {
    fit = fit_glm(data, spec);
  } catch (const Error& e) {
    err << "propensity fit failed: " << e.what() << "\n";
    write_error(c, e.kind(), e.what(), kEstimation);
    return kEstimation;
  }

  std::vector<MethodRow> rows;
  int failed = 0;
  for (const auto& m : c.methods) {
    try {
      rows.push_back(run_method(m, data, fit, c));
    } catch (const Error& e) {
      MethodRow r;
      r.method = m;
      r.status = e.kind();
      r.message = e.what();
      rows.push_back(r);
      ++failed;
      err << m << ": " << e.kind() << ": " << e.what() << "\n";
    }
  }

  const std::vector<std::string> cols{"method", "status", "tau", "theta1", "theta0", "delta", "ci_lo", "ci_hi",
                                      "gamma1", "gamma0", "p_u", "xi1", "xi0", "K", "exceedances1",
                                      "exceedances0", "propensity_converged", "diagnostics"};
  std::vector<std::vector<ordered_json>> table;
  auto count = [](long v) -> ordered_json { return v < 0 ? ordered_json(nullptr) : ordered_json(v); };
  for (const auto& r : rows)
    table.push_back({r.method, r.status, c.tau, number(r.theta1), number(r.theta0), number(r.delta),
                     number(r.lo), number(r.hi), number(r.gamma1), number(r.gamma0), number(r.p_u),
                     number(r.xi1), number(r.xi0), count(r.K), count(r.exc1), count(r.exc0), fit.converged,
                     r.status == "ok" ? r.flags : r.message});
  write_json_or_csv(c, "estimates", cols, table);

  auto fmt = [](double v) {
    std::ostringstream s;
    s << std::setprecision(6) << v;
    return s.str();
  };
  out << std::left << std::setw(13) << "method" << std::right << std::setw(14) << "theta1" << std::setw(14)
      << "theta0" << std::setw(14) << "delta" << "   interval\n";
  for (const auto& r : rows) {
    out << std::left << std::setw(13) << r.method << std::right;
    if (r.status != "ok") {
      out << "  failed (" << r.status << ")\n";
      continue;
    }
    const std::string ci = std::isfinite(r.lo) ? "[" + fmt(r.lo) + ", " + fmt(r.hi) + "]" : "-";
    out << std::setw(14) << fmt(r.theta1) << std::setw(14) << fmt(r.theta0) << std::setw(14) << fmt(r.delta)
        << "   " << ci << "\n";
  }

  if (failed == static_cast<int>(rows.size())) {
    const MethodRow& first = rows.front();
    write_error(c, first.status, first.message, kEstimation);
    return kEstimation;
  }
  return kOk;
}

bool is_input_error(const std::string& kind) {
  return kind == "usage" || kind == "schema" || kind == "parse" || kind == "empty_input" || kind == "domain" ||
         kind == "empty_arm";
}

std::vector<sim::Regime> regimes_of(const RunConfig& c) {
  std::vector<sim::Regime> r;
  for (const auto& s : c.regimes) r.push_back(sim::parse_regime(s));
  if (r.empty()) r = {sim::Regime::five_over_n, sim::Regime::one_over_n, sim::Regime::five_over_n_log_n};
  return r;
}

sim::McCampaign campaign_of(const RunConfig& c) {
  sim::McCampaign m;
  m.n = c.n;
  m.reps = c.reps;
  m.base_seed = c.seed;
  m.alpha = c.alpha;
  m.regimes = regimes_of(c);
  m.methods.clear();
  for (const auto& s : c.methods) m.methods.push_back(sim::parse_method(s));
  if (!c.basis.empty()) m.propensity = sim::parse_variant(c.basis);
  if (c.p_u >= 0.0) m.tiee.p_u = c.p_u;
  m.tiee.K = c.K;
  return m;
}

ordered_json cell_json(const sim::McResult& m) {
  ordered_json j;
  j["scenario"] = sim::to_string(m.scenario);
  j["method"] = sim::to_string(m.method);
  j["regime"] = sim::to_string(m.regime);
  j["propensity"] = sim::to_string(m.propensity);
  j["n"] = m.n;
  j["tau"] = m.tau;
  j["p_u"] = number(m.p_u);
  j["K"] = m.K;
  j["truth"] = m.truth;
  j["truth_se"] = m.truth_se;
  j["reps"] = m.reps;
  j["failures"] = m.failures;
  j["bias"] = number(m.bias);
  j["mse"] = number(m.mse);
  j["coverage"] = number(m.coverage);
  if (m.failures > 0) j["modal_failure"] = m.modal_failure();
  return j;
}

void write_campaign(const RunConfig& c, const std::vector<sim::McResult>& results) {
  if (c.format == "json") {
    ordered_json j;
    j["provenance"] = provenance(c);
    j["cells"] = ordered_json::array();
    for (const auto& m : results) {
      ordered_json cell = cell_json(m);
      cell["replicates"] = ordered_json::array();
      for (const auto& r : m.records)
        cell["replicates"].push_back({{"rep", r.rep}, {"seed", r.seed}, {"ok", r.ok},
                                      {"estimate", number(r.estimate)}, {"ci_lo", number(r.lo)},
                                      {"ci_hi", number(r.hi)}, {"error", r.error}});
      j["cells"].push_back(cell);
    }
    open_output(c, "results.json") << j.dump(2) << "\n";
  } else {
    auto f = open_output(c, "results.csv");
    f << "# " << provenance(c).dump() << "\n";
    sim::write_results_csv(f, results);
  }
  ordered_json manifest;
  manifest["provenance"] = provenance(c);
  ordered_json seeds = ordered_json::array();
  if (!results.empty())
    for (const auto& r : results.front().records) seeds.push_back(r.seed);
  manifest["base_seed"] = c.seed;
  manifest["replicate_seeds"] = seeds;
  manifest["cells"] = ordered_json::array();
  for (const auto& m : results) manifest["cells"].push_back(cell_json(m));
  open_output(c, "manifest.json") << manifest.dump(2) << "\n";
}

void print_summary(std::ostream& out, const std::vector<sim::McResult>& results, bool by_variant) {
  out << std::left << std::setw(by_variant ? 26 : 13) << (by_variant ? "propensity" : "method") << std::setw(14)
      << "regime" << std::right << std::setw(12) << "true" << std::setw(12) << "bias" << std::setw(12) << "mse"
      << std::setw(10) << "coverage" << std::setw(8) << "fails" << "\n";
  for (const auto& m : results) {
    std::ostringstream b, s, t, cov;
    b << std::fixed << std::setprecision(3) << m.bias;
    s << std::fixed << std::setprecision(3) << m.mse;
    t << std::fixed << std::setprecision(3) << m.truth;
    if (std::isfinite(m.coverage)) cov << std::fixed << std::setprecision(3) << m.coverage;
    else cov << "-";
    out << std::left << std::setw(by_variant ? 26 : 13)
        << (by_variant ? sim::display_name(m.propensity) : sim::to_string(m.method)) << std::setw(14)
        << sim::to_string(m.regime) << std::right << std::setw(12) << t.str() << std::setw(12) << b.str()
        << std::setw(12) << s.str() << std::setw(10) << cov.str() << std::setw(8) << m.failures << "\n";
  }
}

int cmd_simulate(const RunConfig& c, std::ostream& out, std::ostream&) {
  if (!c.seed_set) throw UsageError("--seed is required for simulate");
  if (c.reps < 1) throw UsageError("--reps must be at least 1");
  if (!c.study.empty() && c.study != "misspec") throw UsageError("unknown study '" + c.study + "'");
  sim::McCampaign m = campaign_of(c);
  std::vector<sim::McResult> results;
  if (c.study == "misspec") {
    results = sim::misspec_study(m.regimes, c.reps, c.seed, m);
  } else {
    if (c.scenario.empty()) throw UsageError("--scenario is required");
    m.scenario = sim::parse_scenario(c.scenario);
    results = sim::run_campaign(m);
  }
  write_campaign(c, results);
  print_summary(out, results, c.study == "misspec");
  for (const auto& r : results)
    if (r.reps > 0) return kOk;
  throw CampaignError("every replicate failed in every cell");
}

int cmd_sensitivity(const RunConfig& c, std::ostream& out, std::ostream&) {
  if (!c.seed_set) throw UsageError("--seed is required for sensitivity");
  if (c.sweep != "pu" && c.sweep != "k") throw UsageError("unknown sweep '" + c.sweep + "' (expected pu or k)");
  if (c.scenario.empty()) throw UsageError("--scenario is required");
  const sim::Scenario s = sim::parse_scenario(c.scenario);
  const sim::McCampaign m = campaign_of(c);
  const auto curve = c.sweep == "pu" ? sim::sensitivity_pu(s, m.regimes, c.reps, c.seed, m)
                                     : sim::sensitivity_k(s, m.regimes, c.reps, c.seed, m);
  const std::string x = c.sweep == "pu" ? "p_u" : "K";
  std::vector<std::vector<ordered_json>> rows;
  for (const auto& p : curve)
    rows.push_back({sim::to_string(p.regime), p.x, number(p.mse), number(p.bias), p.reps});
  write_json_or_csv(c, "sensitivity_" + c.sweep, {"regime", x, "mse", "bias", "reps"}, rows);
  out << std::left << std::setw(14) << "regime" << std::right << std::setw(10) << x << std::setw(14) << "mse"
      << "\n";
  for (const auto& p : curve)
    out << std::left << std::setw(14) << sim::to_string(p.regime) << std::right << std::setw(10)
        << sim::format_number(p.x) << std::setw(14) << sim::format_number(p.mse) << "\n";
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig c;
  CLI::App app{"Extreme quantile treatment effects", "tiee"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--method", c.methods, "tiee, zhang_firpo, causal_hill, pickands (repeatable)");
    sub->add_option("--pu", c.p_u, "threshold level p_u")->check(CLI::Range(0.0, 1.0));
    sub->add_option("--grid-k", c.K, "quantile grid size K");
    sub->add_option("--alpha", c.alpha, "interval level is 1 - alpha")->check(CLI::Range(0.0, 1.0));
    sub->add_option("--out", c.out, "output directory");
    sub->add_option("--format", c.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  };
  auto add_campaign = [&](CLI::App* sub) {
    sub->add_option("--scenario", c.scenario, "M1H, M2H, M3H, M1L, M2L, M3L");
    sub->add_option("--regime", c.regimes, "5_over_n, 1_over_n, 5_over_nlogn (repeatable)");
    sub->add_option("--reps", c.reps, "replicates per cell");
    sub->add_option("--seed", c.seed, "base seed")->each([&](const std::string&) { c.seed_set = true; });
    sub->add_option("--n", c.n, "sample size per replicate");
    sub->add_option("--basis", c.basis, "propensity variant: true, polynomial, linear, logit, spurious");
  };

  CLI::App* est = app.add_subcommand("estimate", "estimate the EQTE on a CSV file");
  est->add_option("--input", c.input, "CSV file")->required();
  est->add_option("--y", c.y, "outcome column")->required();
  est->add_option("--d", c.d, "treatment column (0/1)")->required();
  est->add_option("--x", c.x, "covariate column (repeatable)");
  est->add_option("--tau", c.tau, "target quantile level")->required();
  est->add_option("--link", c.link, "propensity link")->check(CLI::IsMember({"logit", "identity"}));
  est->add_option("--basis", c.basis, "propensity basis, e.g. \"1,x,x^2\"; default linear");
  add_common(est);

  CLI::App* simu = app.add_subcommand("simulate", "run a Monte Carlo campaign");
  add_campaign(simu);
  simu->add_option("--study", c.study, "misspec: every propensity variant on M1H");
  add_common(simu);

  CLI::App* sens = app.add_subcommand("sensitivity", "sweep p_u or K");
  add_campaign(sens);
  sens->add_option("--sweep", c.sweep, "pu or k")->required();
  add_common(sens);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kOk;
  } catch (const CLI::Success&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    write_error(c, "usage", e.what(), kUsage);
    return kUsage;
  }

  if (c.methods.empty()) c.methods = {"tiee"};
  if (est->parsed()) c.command = "estimate";
  else if (simu->parsed()) c.command = "simulate";
  else c.command = "sensitivity";

  try {
    if (c.command == "estimate") return cmd_estimate(c, out, err);
    if (c.command == "simulate") return cmd_simulate(c, out, err);
    return cmd_sensitivity(c, out, err);
  } catch (const Error& e) {
    const bool input = is_input_error(e.kind());
    err << (input ? "input error: " : "estimation failed: ") << e.kind() << ": " << e.what() << "\n";
    const int code = input ? kUsage : kEstimation;
    write_error(c, e.kind(), e.what(), code);
    return code;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    write_error(c, "io", e.what(), kUsage);
    return kUsage;
  }
}

}  // namespace tiee::cli

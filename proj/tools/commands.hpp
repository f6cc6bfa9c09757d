#pragma once

// Batch commands behind the qdetect CLI. Each command returns rendered-ready
// tables and an exit code; parsing and I/O live in qdetect_cli.cpp.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <fmt/format.h>

#include "qdetect/qdetect.hpp"
#include "qdetect/report.hpp"

namespace qdetect::cli {

enum ExitCode : int { exit_ok = 0, exit_invariant_failure = 2, exit_inconclusive = 3, exit_config_error = 4 };

inline constexpr std::uint64_t builtin_seed = 20060601;
/// Truncated fraction above which table1 refuses to report.
inline constexpr double table_truncation_limit = 1e-6;
inline constexpr double equalizer_flag_sigmas = 5.0;
/// bayes-limit budget when --reps is not given: enough for the quadratic
/// intercept to separate the two predictions at A = 1.5, c* = 0.1.
inline constexpr std::uint64_t default_limit_budget = 650'000'000;

/// Seed used when --seed is absent: QDETECT_SEED if set and parseable.
inline std::uint64_t default_seed() {
  if (const char* env = std::getenv("QDETECT_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 0);
    if (end && *end == '\0') return v;
    throw config_error(fmt::format("QDETECT_SEED='{}' is not an unsigned integer", env));
  }
  return builtin_seed;
}

struct RunConfig {
  std::string command = "table1";
  std::vector<double> a_grid{1.5, 1.6, 1.7, 1.8, 1.9, 1.98};
  std::uint64_t reps = 1'000'000;
  std::uint64_t seed = builtin_seed;
  double c_star = 0.1;
  std::vector<double> p_grid{0.02, 0.01, 0.005};
  OutputFormat format = OutputFormat::csv;
  std::string output_path; ///< empty means standard output
  unsigned workers = 1;
  std::uint64_t max_steps = default_max_steps;
  /// "uniform" (uniform-product head start at each A) or "point:<r0>".
  std::string law = "uniform";
  std::uint64_t k_max = 10;
  unsigned degree = default_extrapolation_degree;
  bool allocate = false;      ///< bayes-limit: spread reps * |p_grid| to minimize intercept SE
  double headstart_p = 0.005; ///< bayes-limit: p for the conditional head-start check
  std::uint64_t reference_reps = 10'000'000; ///< bayes-limit: reps behind the closed-form predictions
  std::uint64_t headstart_reps = 1'000'000;  ///< bayes-limit: reps for the head-start check
  bool inject_unshifted = false; ///< oracles: use the unshifted p0 as the closed form

  EngineOptions engine() const { return EngineOptions{workers, max_steps}; }
};

struct CommandResult {
  std::vector<Table> tables;
  int exit_code = exit_ok;
  std::vector<std::string> messages; ///< warnings for standard error
};

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"table1", "bayes-limit", "equalizer", "props", "oracles"};
  return names;
}

inline HeadStartLaw make_law(const RunConfig& cfg, double a) {
  if (cfg.law == "uniform") return HeadStartLaw::uniform_product(a);
  if (cfg.law.rfind("point:", 0) == 0) {
    const std::string v = cfg.law.substr(6);
    char* end = nullptr;
    const double r0 = std::strtod(v.c_str(), &end);
    if (v.empty() || *end != '\0') throw config_error(fmt::format("bad point-mass head start '{}'", cfg.law));
    return HeadStartLaw::point_mass(r0);
  }
  throw config_error(fmt::format("unknown head start law '{}' (use 'uniform' or 'point:<r0>')", cfg.law));
}

/// Command-specific defaults applied when --reps was not given.
inline void apply_default_reps(RunConfig& cfg) {
  if (cfg.command == "bayes-limit" && !cfg.p_grid.empty()) {
    cfg.reps = default_limit_budget / cfg.p_grid.size();
    cfg.allocate = true;
  }
}

/// Rejects configurations before any simulation starts.
inline void validate(const RunConfig& cfg) {
  if (std::find(command_names().begin(), command_names().end(), cfg.command) == command_names().end())
    throw config_error(fmt::format("unknown command '{}'", cfg.command));
  if (cfg.reps == 0) throw config_error("reps must be >= 1");
  if (cfg.workers == 0) throw config_error("workers must be >= 1");
  if (cfg.max_steps == 0) throw config_error("max_steps must be >= 1");
  if (cfg.a_grid.empty()) throw config_error("a-grid must not be empty");
  for (double a : cfg.a_grid) {
    if (!(a > 0.0) || !std::isfinite(a)) throw config_error(fmt::format("threshold {} must be positive", a));
    (void)make_law(cfg, a);
  }
  if (!(cfg.c_star >= 0.0) || !std::isfinite(cfg.c_star)) throw config_error("c-star must be >= 0");
  if (cfg.command == "bayes-limit") {
    if (cfg.p_grid.empty()) throw config_error("p-grid must not be empty");
    for (std::size_t i = 0; i < cfg.p_grid.size(); ++i) {
      if (!(cfg.p_grid[i] > 0.0 && cfg.p_grid[i] < 1.0)) throw config_error("p-grid values must lie in (0, 1)");
      if (i > 0 && !(cfg.p_grid[i] < cfg.p_grid[i - 1])) throw config_error("p-grid must be strictly decreasing");
    }
    if (!(cfg.headstart_p > 0.0 && cfg.headstart_p < 1.0)) throw config_error("headstart-p must lie in (0, 1)");
    if (cfg.degree < 1) throw config_error("degree must be >= 1");
    if (cfg.reference_reps == 0 || cfg.headstart_reps == 0) throw config_error("reference/headstart reps must be >= 1");
  }
  if (cfg.command == "equalizer" && cfg.k_max == 0) throw config_error("k-max must be >= 1");
  if ((cfg.command == "props" || cfg.command == "oracles") && cfg.reps < 10'000)
    throw config_error("props/oracles need reps >= 10^4");
}

namespace detail {

inline std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += fmt::format("{}{}", i ? ";" : "", v[i]);
  return s;
}

inline Table make_table(const RunConfig& cfg, std::string title) {
  Table t;
  t.title = std::move(title);
  t.meta = {{"program", fmt::format("qdetect {}", version)},
            {"command", cfg.command},
            {"seed", fmt::format("{}", cfg.seed)},
            {"reps", fmt::format("{}", cfg.reps)},
            {"law", cfg.law},
            {"a_grid", join(cfg.a_grid)}};
  if (cfg.command == "bayes-limit") {
    t.meta.emplace_back("c_star", fmt::format("{}", cfg.c_star));
    t.meta.emplace_back("p_grid", join(cfg.p_grid));
    t.meta.emplace_back("degree", fmt::format("{}", cfg.degree));
    t.meta.emplace_back("allocate", cfg.allocate ? "true" : "false");
    t.meta.emplace_back("reference_reps", fmt::format("{}", cfg.reference_reps));
    t.meta.emplace_back("headstart_reps", fmt::format("{}", cfg.headstart_reps));
  }
  return t;
}

inline std::string num(double x) { return fixed4(x); }

/// Pass/fail suite rendered as one table.
class CheckSuite {
public:
  explicit CheckSuite(Table t) : table_(std::move(t)) {
    table_.columns = {"check", "observed", "expected", "tolerance", "result"};
  }

  void add(std::string name, bool passed, std::string observed, std::string expected, std::string tolerance) {
    table_.add_row({std::move(name), std::move(observed), std::move(expected), std::move(tolerance), passed ? "pass" : "FAIL"});
    failures_ += passed ? 0 : 1;
  }

  /// |observed - expected| <= sigmas * se
  void within(std::string name, double observed, double expected, double se, double sigmas) {
    const double z = se > 0.0 ? std::abs(observed - expected) / se : (observed == expected ? 0.0 : INFINITY);
    add(std::move(name), z <= sigmas, num(observed), num(expected), fmt::format("{}se (z={:.2f})", sigmas, z));
  }

  /// |observed - expected| > sigmas * se
  void apart(std::string name, double observed, double expected, double se, double sigmas) {
    const double z = se > 0.0 ? std::abs(observed - expected) / se : (observed == expected ? 0.0 : INFINITY);
    add(std::move(name), z > sigmas, num(observed), num(expected), fmt::format(">{}se (z={:.2f})", sigmas, z));
  }

  void absolute(std::string name, double observed, double expected, double tol) {
    const double d = std::abs(observed - expected);
    add(std::move(name), d <= tol, fmt::format("{:.12f}", observed), fmt::format("{:.12f}", expected),
        fmt::format("{:g} (diff={:.3g})", tol, d));
  }

  CommandResult finish() {
    table_.note("failures", fmt::format("{}", failures_));
    CommandResult r;
    r.exit_code = failures_ ? exit_invariant_failure : exit_ok;
    r.tables.push_back(std::move(table_));
    return r;
  }

private:
  Table table_;
  int failures_ = 0;
};

} // namespace detail

/// E_1 N_A per threshold: direct Monte Carlo, the cross-term formula fed by
/// the simulated E_1(R_0 N_A), and the factorized formula on exact p0, mu0.
inline CommandResult cmd_table1(const RunConfig& cfg) {
  Table t = detail::make_table(cfg, "Approximations for E_1 N_A");
  t.columns = {"A",       "monte_carlo",      "monte_carlo_se", "cross_term_formula", "cross_term_formula_se",
               "factorized_formula", "cross_term", "cross_term_se", "truncated"};
  CommandResult res;
  const auto opts = cfg.engine();
  for (std::size_t i = 0; i < cfg.a_grid.size(); ++i) {
    const double a = cfg.a_grid[i];
    const HeadStartLaw law = make_law(cfg, a);
    const auto j = estimate_e1_joint(a, law, cfg.reps, sub_seed(cfg.seed, i), opts);

    std::string with_cross = "nan", with_cross_se = "nan", factorized = "nan";
    const auto p0 = law.p0(a);
    std::optional<double> mu0;
    try {
      mu0 = law.mu0(a);
    } catch (const undefined_conditional&) {
      mu0 = 0.0; // point mass above A: mu0 is multiplied by 1 - p0 = 0
    }
    if (p0 && mu0) {
      with_cross = detail::num(e1_delay_with_cross_term(*p0, *mu0, j.cross.mean));
      with_cross_se = detail::num(*p0 * j.cross.std_error);
      factorized = detail::num(e1_delay_factorized(*p0, *mu0));
    }
    t.add_row({fmt::format("{}", a), detail::num(j.delay.mean), detail::num(j.delay.std_error), with_cross,
               with_cross_se, factorized, detail::num(j.cross.mean), detail::num(j.cross.std_error),
               fmt::format("{}", j.delay.truncation_count)});
    if (static_cast<double>(j.delay.truncation_count) > table_truncation_limit * static_cast<double>(cfg.reps)) {
      res.messages.push_back(fmt::format("A = {}: {} truncated runs exceed the reporting limit", a, j.delay.truncation_count));
      res.exit_code = exit_inconclusive;
    }
  }
  res.tables.push_back(std::move(t));
  return res;
}

/// Conditional delays E_k(N - k + 1 | N >= k - 1), k = 1..k_max, at the first threshold.
inline CommandResult cmd_equalizer(const RunConfig& cfg) {
  const double a = cfg.a_grid.front();
  const HeadStartLaw law = make_law(cfg, a);
  const auto profile = estimate_delay_profile(a, law, cfg.k_max, cfg.reps, cfg.seed, cfg.engine());

  Table t = detail::make_table(cfg, fmt::format("Conditional detection delay profile, A = {}", a));
  t.columns = {"k", "conditional_delay", "se", "effective_reps", "rejected", "z_vs_k1", "flag"};
  CommandResult res;
  const auto& first = profile.entries.front().estimate;
  int flags = 0;
  double max_z = 0.0;
  for (const auto& e : profile.entries) {
    if (!e.estimate) {
      t.add_row({fmt::format("{}", e.k), "missing", "missing", "0", fmt::format("{}", e.rejected), "", ""});
      continue;
    }
    std::string z_text, flag;
    if (first && e.k > 1) {
      const double se = combined_se({e.estimate->std_error, first->std_error});
      const double z = se > 0.0 ? (e.estimate->mean - first->mean) / se : (e.estimate->mean == first->mean ? 0.0 : INFINITY);
      z_text = fmt::format("{:.2f}", z);
      max_z = std::max(max_z, std::abs(z));
      if (std::abs(z) > equalizer_flag_sigmas) {
        flag = "FLAG";
        ++flags;
      }
    }
    t.add_row({fmt::format("{}", e.k), detail::num(e.estimate->mean), detail::num(e.estimate->std_error),
               fmt::format("{}", e.estimate->reps), fmt::format("{}", e.rejected), z_text, flag});
  }
  if (auto sup = profile.sup()) {
    t.note("grid_sup_delay", detail::num(sup->mean));
    t.note("grid_sup_delay_se", detail::num(sup->std_error));
  }
  t.note("max_abs_z_vs_k1", fmt::format("{:.2f}", max_z));
  t.note("flags", fmt::format("{} (threshold {} combined se)", flags, equalizer_flag_sigmas));
  if (flags > 0) {
    res.exit_code = exit_invariant_failure;
    res.messages.push_back(fmt::format("{} conditional delays differ from k = 1 by more than {} se", flags, equalizer_flag_sigmas));
  }
  res.tables.push_back(std::move(t));
  return res;
}

/// Small-p limit of (1 - R)/p against the two closed-form predictions.
inline CommandResult cmd_bayes_limit(const RunConfig& cfg) {
  const double a = cfg.a_grid.front();
  const HeadStartLaw law = make_law(cfg, a);
  const auto opts = cfg.engine();
  CommandResult res;

  std::vector<std::uint64_t> reps(cfg.p_grid.size(), cfg.reps);
  if (cfg.allocate) reps = intercept_allocation(cfg.p_grid, cfg.reps * cfg.p_grid.size(), cfg.degree);
  const auto ref = limit_reference(a, law, cfg.c_star, cfg.reference_reps, sub_seed(cfg.seed, 1), opts);
  const auto diag = limit_diagnostic(a, law, cfg.c_star, cfg.p_grid, reps, sub_seed(cfg.seed, 2), opts, cfg.degree);
  const auto verdict = judge_limit(diag, ref);

  Table t = detail::make_table(cfg, fmt::format("Small-p limit of (1 - R)/p, A = {}, c* = {}", a, cfg.c_star));
  t.columns = {"p", "reps", "gain", "gain_se", "hit_ratio", "hit_ratio_se", "conditional_delay", "conditional_delay_se",
               "decomposition_exact"};
  for (const auto& row : diag.rows) {
    t.add_row({fmt::format("{}", row.p), fmt::format("{}", row.reps), detail::num(row.scaled_gain.mean),
               detail::num(row.scaled_gain.std_error), detail::num(row.hit_ratio.mean), detail::num(row.hit_ratio.std_error),
               detail::num(row.conditional_delay.mean), detail::num(row.conditional_delay.std_error),
               risk_decomposition_exact(row) ? "yes" : "no"});
  }
  // value and standard error as separate entries
  auto pair_note = [](Table& tab, const std::string& key, double v, double se) {
    tab.note(key, detail::num(v));
    tab.note(key + "_se", detail::num(se));
  };
  if (diag.gain.enabled) {
    pair_note(t, "intercept", diag.gain.intercept, diag.gain.intercept_se);
    pair_note(t, "intercept_linear", diag.gain_linear.intercept, diag.gain_linear.intercept_se);
    t.note("intercept_linear_chi2", fmt::format("{:.2f} (dof {})", diag.gain_linear.chi2, diag.gain_linear.dof));
    pair_note(t, "hit_intercept", diag.hit.intercept, diag.hit.intercept_se);
  }
  pair_note(t, "hit_limit_prediction", ref.hit_limit, ref.hit_limit_se);
  pair_note(t, "cross_term_prediction", ref.with_cross_term, ref.with_cross_term_se);
  pair_note(t, "factorized_prediction", ref.factorized, ref.factorized_se);
  pair_note(t, "gap", ref.gap, ref.gap_se);
  t.note("z_cross_term", fmt::format("{:.2f}", verdict.z_cross_term));
  t.note("z_factorized", fmt::format("{:.2f}", verdict.z_factorized));
  pair_note(t, "conditional_delay_limit_prediction", ref.conditional_delay, ref.conditional_delay_se);
  for (const auto& w : diag.warnings) {
    t.note("warning", w);
    res.messages.push_back(w);
  }
  t.note("verdict", verdict.verdict);
  if (verdict.verdict == "inconclusive") res.exit_code = exit_inconclusive;
  res.tables.push_back(std::move(t));

  const auto ch = conditional_headstart_diagnostic(a, law, cfg.headstart_p, cfg.headstart_reps, sub_seed(cfg.seed, 3), opts);
  Table h = detail::make_table(cfg, fmt::format("Head start given nu = 1, p = {}", cfg.headstart_p));
  h.columns = {"quantity", "value", "value_se", "reference", "reference_se", "z"};
  const auto& cm = ch.conditional_mean;
  h.add_row({"mean_vs_size_biased", detail::num(cm.mean), detail::num(cm.std_error), detail::num(ch.size_biased_mean),
             detail::num(ch.size_biased_mean_se), fmt::format("{:.2f}", ch.z_size_biased)});
  h.add_row({"mean_vs_unconditional", detail::num(cm.mean), detail::num(cm.std_error), detail::num(ch.unconditional_mean),
             detail::num(ch.unconditional_mean_se), fmt::format("{:.2f}", ch.z_unconditional)});
  // for the L1 rows the reference is the distance an exact sample of this size would show
  h.add_row({"l1_vs_size_biased", detail::num(ch.l1_size_biased), "", detail::num(ch.l1_noise), "", ""});
  h.add_row({"l1_vs_unconditional", detail::num(ch.l1_unconditional), "", detail::num(ch.l1_noise), "", ""});
  h.add_row({"delay_given_nu1", detail::num(ch.nu1_delay.mean), detail::num(ch.nu1_delay.std_error),
             detail::num(ch.nu1_delay_limit), detail::num(ch.nu1_delay_limit_se), fmt::format("{:.2f}", ch.z_nu1_delay)});
  h.note("nu1_count", fmt::format("{}", ch.nu1_count));
  h.note("bins", fmt::format("{}", ch.bins));
  for (const auto& w : ch.warnings) {
    h.note("warning", w);
    res.messages.push_back(w);
  }
  res.tables.push_back(std::move(h));
  return res;
}

/// Closed forms for the head-start functionals against quadrature and Monte Carlo oracles.
inline CommandResult cmd_oracles(const RunConfig& cfg) {
  detail::CheckSuite suite(detail::make_table(cfg, "Head-start closed forms vs oracles"));
  const auto opts = cfg.engine();
  for (std::size_t i = 0; i < cfg.a_grid.size(); ++i) {
    const double a = cfg.a_grid[i];
    const HeadStartLaw law = make_law(cfg, a);
    const auto f = functionals_oracle(law, a, cfg.reps, sub_seed(cfg.seed, i), opts);
    const auto tag = [&](const char* what) { return fmt::format("{} A={}", what, a); };

    if (law.is_uniform_product()) {
      const double p0 = cfg.inject_unshifted ? p0_unshifted(a) : p0_exact(a);
      const double mu0 = mu0_exact(a);
      suite.absolute(tag("p0 closed form vs quadrature"), p0, quadrature_p0(a), 1e-10);
      suite.absolute(tag("mu0 closed form vs quadrature"), mu0, quadrature_mu0(a), 1e-10);
      suite.within(tag("p0 closed form vs monte carlo"), f.p0.mean, p0, f.p0.std_error, 4.0);
      suite.within(tag("mu0 closed form vs monte carlo"), f.mu0.mean, mu0, f.mu0.std_error, 4.0);
      suite.within(tag("E R0 = A/2 + 1 vs monte carlo"), f.mean.mean, *law.mean(), f.mean.std_error, 4.0);
      if (a == 1.5) suite.apart(tag("unshifted p0 rejected by monte carlo"), f.p0.mean, p0_unshifted(a), f.p0.std_error, 20.0);
    } else {
      if (auto p0 = law.p0(a)) suite.within(tag("p0 vs monte carlo"), f.p0.mean, *p0, f.p0.std_error, 4.0);
      if (auto m = law.mean()) suite.within(tag("E R0 vs monte carlo"), f.mean.mean, *m, f.mean.std_error, 4.0);
    }
  }
  return suite.finish();
}

/// Martingale and optional-stopping identities, path-wise orderings, exact
/// algebraic identities, SE calibration and scheduling independence.
inline CommandResult cmd_props(const RunConfig& cfg) {
  using boost::multiprecision::cpp_rational;
  detail::CheckSuite suite(detail::make_table(cfg, "Invariant suite"));
  const auto opts = cfg.engine();
  const double a = cfg.a_grid.front();
  const HeadStartLaw law = make_law(cfg, a);
  const ExponentialPair pair;

  // E_inf R_n = E R_0 + n for the unstopped statistic
  {
    const auto start = HeadStartLaw::point_mass(0.5);
    const auto drift = estimate_sr_drift(start, 20, ChangeScenario::never(), cfg.reps, sub_seed(cfg.seed, 1), opts);
    double worst = 0.0;
    std::size_t worst_n = 0;
    for (std::size_t n = 0; n < drift.size(); ++n) {
      const double z = std::abs(drift[n].mean - (0.5 + static_cast<double>(n + 1))) / drift[n].std_error;
      if (z > worst) {
        worst = z;
        worst_n = n + 1;
      }
    }
    suite.add("martingale drift E_inf R_n = r0 + n, n <= 20", worst <= 4.0, fmt::format("max z={:.2f} at n={}", worst, worst_n),
              "r0 + n", "4se");
  }

  // optional stopping: E_inf N = E_inf(R_N - R_0)
  {
    const auto arl = estimate_arl_false_joint(a, law, cfg.reps, sub_seed(cfg.seed, 2), opts);
    suite.within("optional stopping E_inf N vs E_inf(R_N - R_0)", arl.arl.mean, arl.increment.mean,
                 combined_se({arl.arl.std_error, arl.increment.std_error}), 4.0);
  }

  // path-wise monotonicity in A and domination by the zero head start
  {
    bool mono = true, dom = true;
    for (std::uint64_t i = 0; i < 10'000; ++i) {
      const auto base = derive_stream(sub_seed(cfg.seed, 3), i);
      std::uint64_t prev = 0;
      for (double thr : {0.5, 1.0, 1.5, 1.9, 3.0}) {
        Rng s = base;
        const auto rec = run_modified_sr(pair, 0.3, thr, ChangeScenario::never(), s, opts.max_steps);
        mono = mono && rec.n_stop >= prev;
        prev = rec.n_stop;
      }
      Rng head = derive_stream(sub_seed(cfg.seed, 4), i);
      const double r0 = law.sample(head);
      Rng s1 = base, s2 = base;
      const auto with_head = run_modified_sr(pair, r0, a, ChangeScenario::at(3), s1, opts.max_steps);
      const auto without = run_modified_sr(pair, 0.0, a, ChangeScenario::at(3), s2, opts.max_steps);
      dom = dom && with_head.n_stop <= without.n_stop;
    }
    suite.add("raising A never decreases N (coupled streams)", mono, mono ? "monotone" : "violated", "monotone", "path-wise");
    suite.add("head start N <= zero-start N (coupled streams)", dom, dom ? "dominated" : "violated", "dominated", "path-wise");
  }

  // risk decomposition on shared replications, exact
  {
    BayesConfig bc{0.01, cfg.c_star, a, law, opts.max_steps};
    const auto r = estimate_bayes_risk(bc, cfg.reps, sub_seed(cfg.seed, 5), opts);
    suite.add("(1-R)/p = hit ratio * (1 - c * conditional delay), exact rationals", risk_decomposition_exact(r),
              fmt::format("{:.12f}", r.gain_direct()), fmt::format("{:.12f}", r.gain_product()), "0");
  }

  // couple_pi0 round trip and the limit-gap identity on random inputs
  {
    Rng rng(sub_seed(cfg.seed, 6));
    bool exact = true;
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const double p = uniform(rng, 1e-4, 0.9), r0 = uniform(rng, 0.0, 10.0);
      const double back = bayes_start_statistic(p, couple_pi0(p, r0));
      worst = std::max(worst, std::abs(back - r0) / (1.0 + r0));
      const cpp_rational pr(p), rr(r0);
      exact = exact && bayes_start_statistic(pr, couple_pi0(pr, rr)) == rr;
    }
    suite.add("couple_pi0 round trip (exact rationals)", exact, exact ? "exact" : "mismatch", "exact", "0");
    suite.add("couple_pi0 round trip (double)", worst <= 64 * std::numeric_limits<double>::epsilon(),
              fmt::format("{:.3g}", worst), "0", "64 eps relative");

    bool identity = true;
    double worst_d = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const double er = uniform(rng, 0, 5), e1 = uniform(rng, 0, 5), arl = uniform(rng, 0, 50), cross = uniform(rng, 0, 5),
                   c = uniform(rng, 0, 1);
      const double lhs = bayes_limit_factorized(er, e1, arl, c) - bayes_limit_with_cross_term(er, e1, arl, cross, c);
      worst_d = std::max(worst_d, std::abs(lhs - bayes_limit_gap(er, e1, cross, c)));
      const cpp_rational R(er), E(e1), L(arl), X(cross), C(c);
      identity = identity && bayes_limit_factorized(R, E, L, C) - bayes_limit_with_cross_term(R, E, L, X, C) ==
                                 bayes_limit_gap(R, E, X, C);
    }
    suite.add("factorized - cross_term = c*(cross - e1 * E R0) (exact rationals)", identity, identity ? "exact" : "mismatch",
              "exact", "0");
    suite.add("factorized - cross_term = c*(cross - e1 * E R0) (double)", worst_d <= 1e-12, fmt::format("{:.3g}", worst_d), "0",
              "1e-12");
  }

  // batch means against the reported standard error
  {
    constexpr std::size_t batches = 10;
    struct Acc {
      std::array<ScalarAccumulator, batches> b;
      ScalarAccumulator all;
      void merge(const Acc& o) {
        for (std::size_t i = 0; i < batches; ++i) b[i].merge(o.b[i]);
        all.merge(o.all);
      }
    };
    const std::uint64_t per = cfg.reps / batches;
    const auto acc = run_replications<Acc>(per * batches, sub_seed(cfg.seed, 7), opts, [&](Rng& rng, std::uint64_t i, Acc& out) {
      const double r0 = law.sample(rng);
      const double n = static_cast<double>(run_modified_sr(pair, r0, a, ChangeScenario::at(1), rng, opts.max_steps).n_stop);
      out.b[i / per].add({n});
      out.all.add({n});
    });
    const double batch_se = acc.all.std_error() * std::sqrt(static_cast<double>(batches));
    double chi2 = 0.0;
    for (const auto& b : acc.b) chi2 += std::pow((b.mean() - acc.all.mean()) / batch_se, 2);
    // chi-square with 9 dof, central 99%
    const bool ok = chi2 >= 1.735 && chi2 <= 23.589;
    suite.add("batch-mean spread consistent with reported se", ok, fmt::format("chi2={:.2f}", chi2), "chi2(9)", "[1.735, 23.589]");
  }

  // common random numbers: cross <= max head start * mean delay
  {
    const auto j = estimate_e1_joint(a, law, cfg.reps, sub_seed(cfg.seed, 8), opts);
    suite.add("E_1(R0 N) <= max R0 * E_1 N on shared replications", j.cross.mean <= j.max_head_start * j.delay.mean,
              detail::num(j.cross.mean), detail::num(j.max_head_start * j.delay.mean), "<=");
  }

  // scheduling independence
  {
    const std::uint64_t n = std::min<std::uint64_t>(cfg.reps, 200'000);
    EngineOptions one = opts, many = opts;
    one.workers = 1;
    many.workers = 3;
    const auto e1 = estimate_e1_joint(a, law, n, sub_seed(cfg.seed, 9), one);
    const auto e3 = estimate_e1_joint(a, law, n, sub_seed(cfg.seed, 9), many);
    const bool same = e1.delay.mean == e3.delay.mean && e1.delay.std_error == e3.delay.std_error &&
                      e1.cross.mean == e3.cross.mean && e1.cross.std_error == e3.cross.std_error;
    suite.add("bit-identical results for 1 and 3 workers", same, fmt::format("{:a}", e3.delay.mean),
              fmt::format("{:a}", e1.delay.mean), "0");
  }
  return suite.finish();
}

inline CommandResult run_command(const RunConfig& cfg) {
  validate(cfg);
  if (cfg.command == "table1") return cmd_table1(cfg);
  if (cfg.command == "bayes-limit") return cmd_bayes_limit(cfg);
  if (cfg.command == "equalizer") return cmd_equalizer(cfg);
  if (cfg.command == "props") return cmd_props(cfg);
  return cmd_oracles(cfg);
}

inline std::string render_all(const CommandResult& r, OutputFormat f) {
  std::string out;
  for (std::size_t i = 0; i < r.tables.size(); ++i) {
    if (i) out += '\n';
    out += render(r.tables[i], f);
  }
  return out;
}

} // namespace qdetect::cli

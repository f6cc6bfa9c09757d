#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <fmt/format.h>

#include "qdetect/density.hpp"
#include "qdetect/detect.hpp"
#include "qdetect/engine.hpp"
#include "qdetect/errors.hpp"
#include "qdetect/formulas.hpp"
#include "qdetect/headstart.hpp"
#include "qdetect/montecarlo.hpp"
#include "qdetect/stats.hpp"

// Extended Bayes problem: pi0 ~ G, P(nu = 1) = pi0 and
// P(nu = n) = (1 - pi0) p (1 - p)^(n - 2) for n >= 2, risk
// P(N < nu - 1) + c E(N - nu + 1)^+. G is the push-forward of the head-start
// law under couple_pi0, so pi0 / p -> R_0 + 1 as p -> 0.

namespace qdetect {

struct BayesConfig {
  double p = 0.01;
  double c = 0.1;
  double a = 1.5;
  HeadStartLaw law = HeadStartLaw::uniform_product(1.5);
  std::uint64_t max_steps = default_max_steps;

  double q() const noexcept { return 1.0 - p; }

  void validate() const {
    if (!(p > 0.0 && p < 1.0)) throw config_error(fmt::format("Bayes problem needs 0 < p < 1, got {}", p));
    if (!(c >= 0.0) || !std::isfinite(c)) throw config_error(fmt::format("cost c = {} must be >= 0", c));
    detail::check_run_args(a, max_steps);
  }
};

struct BayesOutcome {
  std::uint64_t nu = 1;
  double pi0 = 0.0;
  std::uint64_t n_stop = 0;
  double r0 = 0.0;
  bool missed = false;          ///< N < nu - 1
  std::uint64_t delay_plus = 0; ///< (N - nu + 1)^+
  bool truncated = false;
};

/// The pi0 for which the Bayes statistic starts at r0:
/// pi0 = p (r0 + 1) / (q + p (r0 + 1)).
template <typename T>
T couple_pi0(const T& p, const T& r0) {
  const T w = p * (r0 + T(1));
  return w / ((T(1) - p) + w);
}

/// Starting value of the Bayes statistic, pi0 q / ((1 - pi0) p) - 1.
template <typename T>
T bayes_start_statistic(const T& p, const T& pi0) {
  return pi0 * (T(1) - p) / ((T(1) - pi0) * p) - T(1);
}

/// Prior of the change time given pi0: nu = 1 with probability pi0, otherwise
/// 2 + Geometric(p) failures.
class ChangeTimePrior {
public:
  explicit ChangeTimePrior(double p) : p_(p) {
    if (!(p > 0.0 && p <= 1.0)) throw config_error(fmt::format("p = {} must lie in (0, 1]", p));
    log_q_ = std::log1p(-p);
  }

  std::uint64_t sample(double pi0, Rng& rng) const {
    if (!(pi0 >= 0.0 && pi0 <= 1.0)) throw config_error(fmt::format("pi0 = {} must lie in [0, 1]", pi0));
    if (uniform_open(rng) < pi0) return 1;
    if (p_ >= 1.0) return 2;
    const double g = std::floor(std::log(uniform_open(rng)) / log_q_);
    return 2 + (g < 0x1.0p62 ? static_cast<std::uint64_t>(g) : std::uint64_t{1} << 62);
  }

  /// P(nu = n | pi0).
  double probability(double pi0, std::uint64_t n) const {
    if (n == 0) return 0.0;
    if (n == 1) return pi0;
    return (1.0 - pi0) * p_ * std::pow(1.0 - p_, static_cast<double>(n - 2));
  }

private:
  double p_;
  double log_q_ = 0.0;
};

inline std::uint64_t sample_change_time(double p, double pi0, Rng& rng) { return ChangeTimePrior(p).sample(pi0, rng); }

/// Bayes rule run with a given head start and change time on the remaining stream.
template <DensityPair P = ExponentialPair>
BayesOutcome run_bayes_rule_given(const BayesConfig& config, double r0, std::uint64_t nu, Rng& rng,
                                  const P& pair = {}) {
  BayesOutcome out;
  out.r0 = r0;
  out.pi0 = couple_pi0(config.p, r0);
  out.nu = nu;
  const auto rec = run_sr_rule(pair, r0, config.a, 1.0 / config.q(), ChangeScenario::at(nu), rng, config.max_steps);
  out.n_stop = rec.n_stop;
  out.truncated = rec.truncated;
  out.missed = rec.n_stop + 1 < nu;
  out.delay_plus = out.missed ? 0 : rec.n_stop + 1 - nu;
  return out;
}

/// One replication: r0 ~ law, pi0 = couple_pi0(p, r0), nu ~ prior(pi0), then
/// R_n = (R_{n-1} + 1) lr(X_n) / q from R_0 = r0 until R_n >= A.
template <DensityPair P = ExponentialPair>
BayesOutcome run_bayes_rule(const BayesConfig& config, Rng& rng, const P& pair = {}) {
  const double r0 = config.law.sample(rng);
  const std::uint64_t nu = sample_change_time(config.p, couple_pi0(config.p, r0), rng);
  return run_bayes_rule_given(config, r0, nu, rng, pair);
}

/// Plug-in risk estimate with its components. Integer totals are kept so the
/// decomposition (1 - R)/p = [P(N >= nu - 1)/p][1 - c E(N - nu + 1 | N >= nu - 1)]
/// can be checked exactly on the same replications.
struct BayesRiskEstimate {
  double p = 0.0;
  double c = 0.0;
  std::uint64_t reps = 0;
  std::uint64_t hits = 0;   ///< N >= nu - 1
  std::uint64_t misses = 0; ///< N < nu - 1
  std::uint64_t delay_sum = 0;
  std::uint64_t truncated = 0;
  McEstimate risk;
  McEstimate miss_probability;
  McEstimate delay_plus;
  McEstimate scaled_gain;       ///< (1 - R)/p
  McEstimate hit_ratio;         ///< P(N >= nu - 1)/p
  McEstimate conditional_delay; ///< E(N - nu + 1 | N >= nu - 1)

  /// (1 - R)/p from the risk.
  double gain_direct() const {
    return (1.0 - (static_cast<double>(misses) + c * static_cast<double>(delay_sum)) / static_cast<double>(reps)) / p;
  }

  /// The same quantity as hit ratio times one minus the cost-weighted conditional delay.
  double gain_product() const {
    if (hits == 0) return 0.0;
    const double hit = static_cast<double>(hits) / static_cast<double>(reps) / p;
    return hit * (1.0 - c * static_cast<double>(delay_sum) / static_cast<double>(hits));
  }
};

namespace detail {

// Every per-replication quantity is an integer, so exact integer totals
// suffice for means and (co)variances.
struct RiskAcc {
  std::uint64_t hits = 0, misses = 0, delay_sum = 0, truncated = 0;
  unsigned __int128 delay_sq_sum = 0;
  void merge(const RiskAcc& o) {
    hits += o.hits;
    misses += o.misses;
    delay_sum += o.delay_sum;
    delay_sq_sum += o.delay_sq_sum;
    truncated += o.truncated;
  }
};

} // namespace detail

template <DensityPair P = ExponentialPair>
BayesRiskEstimate estimate_bayes_risk(const BayesConfig& config, std::uint64_t reps, std::uint64_t seed,
                                      const EngineOptions& opts = {}, const P& pair = {}) {
  config.validate();
  detail::check_reps(reps);
  const ChangeTimePrior prior(config.p);
  const auto acc = run_replications<detail::RiskAcc>(reps, seed, opts, [&](Rng& rng, std::uint64_t, auto& out) {
    const double r0 = config.law.sample(rng);
    const std::uint64_t nu = prior.sample(couple_pi0(config.p, r0), rng);
    const auto o = run_bayes_rule_given(config, r0, nu, rng, pair);
    if (o.missed) {
      ++out.misses;
    } else {
      ++out.hits;
      out.delay_sum += o.delay_plus;
      out.delay_sq_sum += static_cast<unsigned __int128>(o.delay_plus) * o.delay_plus;
    }
    out.truncated += o.truncated ? 1 : 0;
  });

  BayesRiskEstimate r;
  r.p = config.p;
  r.c = config.c;
  r.reps = reps;
  r.hits = acc.hits;
  r.misses = acc.misses;
  r.delay_sum = acc.delay_sum;
  r.truncated = acc.truncated;

  // Per replication: miss m in {0, 1}, delay d >= 0 with d = 0 when m = 1, hit h = 1 - m.
  // A linear statistic u*m + v*d has mean u M/n + v S/n and second moment u^2 M/n + v^2 Q/n.
  const double n = static_cast<double>(reps);
  const double mean_m = static_cast<double>(acc.misses) / n;
  const double mean_d = static_cast<double>(acc.delay_sum) / n;
  const double mean_dd = static_cast<double>(acc.delay_sq_sum) / n;
  auto linear = [&](double offset, double u, double v) {
    McEstimate e;
    e.mean = offset + u * mean_m + v * mean_d;
    const double second = u * u * mean_m + v * v * mean_dd;
    const double centred = second - (u * mean_m + v * mean_d) * (u * mean_m + v * mean_d);
    e.std_error = reps > 1 ? std::sqrt(std::max(0.0, centred) * n / (n - 1.0) / n) : 0.0;
    e.reps = reps;
    e.seed = seed;
    detail::finish(e, acc.truncated, reps);
    return e;
  };
  r.risk = linear(0.0, 1.0, config.c);
  r.miss_probability = linear(0.0, 1.0, 0.0);
  r.delay_plus = linear(0.0, 0.0, 1.0);
  // hit = 1 - m
  r.scaled_gain = linear(1.0 / config.p, -1.0 / config.p, -config.c / config.p);
  r.hit_ratio = linear(1.0 / config.p, -1.0 / config.p, 0.0);

  r.conditional_delay.reps = acc.hits;
  r.conditional_delay.seed = seed;
  r.conditional_delay.rejected = acc.misses;
  if (acc.hits > 0) {
    const double h = static_cast<double>(acc.hits);
    const double md = static_cast<double>(acc.delay_sum) / h;
    const double vd = acc.hits > 1 ? std::max(0.0, static_cast<double>(acc.delay_sq_sum) / h - md * md) * h / (h - 1.0) : 0.0;
    r.conditional_delay.mean = md;
    r.conditional_delay.std_error = std::sqrt(vd / h);
  }
  detail::finish(r.conditional_delay, acc.truncated, reps);
  return r;
}

/// Checks the risk decomposition in exact rational arithmetic: the double
/// inputs p and c are converted without rounding and both sides are compared
/// for equality.
inline bool risk_decomposition_exact(const BayesRiskEstimate& r) {
  using boost::multiprecision::cpp_rational;
  if (r.hits == 0 || r.hits + r.misses != r.reps) return false;
  const cpp_rational p(r.p), c(r.c);
  const cpp_rational n(r.reps), hits(r.hits), misses(r.misses), delay(r.delay_sum);
  const cpp_rational direct = (cpp_rational(1) - (misses + c * delay) / n) / p;
  const cpp_rational product = (hits / n / p) * (cpp_rational(1) - c * (delay / hits));
  return direct == product;
}

/// Weighted least-squares polynomial in p (weights 1/se^2) evaluated at p = 0.
struct Extrapolation {
  bool enabled = false;
  unsigned degree = 0;
  double intercept = 0.0;
  double intercept_se = 0.0;
  std::vector<double> coefficients; ///< constant term first
  double chi2 = 0.0;                ///< weighted residual sum of squares
  std::size_t dof = 0;
};

/// Fits a polynomial of the given degree. Needs degree + 1 points and at
/// least 3 points overall; otherwise the result is disabled.
inline Extrapolation extrapolate_to_zero(const std::vector<double>& x, const std::vector<McEstimate>& y,
                                         unsigned degree = 1) {
  Extrapolation e;
  e.degree = degree;
  const std::size_t m = degree + 1;
  if (x.size() != y.size() || x.size() < 3 || x.size() < m) return e;

  // normal equations (X^T W X) beta = X^T W y, solved by Gauss-Jordan with the inverse kept for the SE
  std::vector<std::vector<double>> xtwx(m, std::vector<double>(m, 0.0)), inv(m, std::vector<double>(m, 0.0));
  std::vector<double> xtwy(m, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(y[i].std_error > 0.0)) return e;
    const double w = 1.0 / (y[i].std_error * y[i].std_error);
    std::vector<double> pw(m, 1.0);
    for (std::size_t j = 1; j < m; ++j) pw[j] = pw[j - 1] * x[i];
    for (std::size_t r = 0; r < m; ++r) {
      xtwy[r] += w * pw[r] * y[i].mean;
      for (std::size_t c = 0; c < m; ++c) xtwx[r][c] += w * pw[r] * pw[c];
    }
  }
  for (std::size_t r = 0; r < m; ++r) inv[r][r] = 1.0;
  for (std::size_t col = 0; col < m; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < m; ++r)
      if (std::abs(xtwx[r][col]) > std::abs(xtwx[piv][col])) piv = r;
    if (!(std::abs(xtwx[piv][col]) > 0.0)) return e;
    std::swap(xtwx[piv], xtwx[col]);
    std::swap(inv[piv], inv[col]);
    const double d = xtwx[col][col];
    for (std::size_t c = 0; c < m; ++c) {
      xtwx[col][c] /= d;
      inv[col][c] /= d;
    }
    for (std::size_t r = 0; r < m; ++r) {
      if (r == col) continue;
      const double f = xtwx[r][col];
      for (std::size_t c = 0; c < m; ++c) {
        xtwx[r][c] -= f * xtwx[col][c];
        inv[r][c] -= f * inv[col][c];
      }
    }
  }
  e.coefficients.assign(m, 0.0);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < m; ++c) e.coefficients[r] += inv[r][c] * xtwy[c];
  e.enabled = true;
  e.intercept = e.coefficients[0];
  e.intercept_se = std::sqrt(std::max(0.0, inv[0][0]));
  for (std::size_t i = 0; i < x.size(); ++i) {
    double fit = 0.0, pw = 1.0;
    for (std::size_t j = 0; j < m; ++j, pw *= x[i]) fit += e.coefficients[j] * pw;
    const double r = (y[i].mean - fit) / y[i].std_error;
    e.chi2 += r * r;
  }
  e.dof = x.size() - m;
  return e;
}

/// Replications per grid point minimizing the variance of a polynomial
/// intercept, assuming per-replication variance of (1 - R)/p proportional to
/// 1/p. Allocation is proportional to |l_i| / sqrt(p_i), where l_i are the
/// weights of the intercept as a linear function of the grid values.
inline std::vector<std::uint64_t> intercept_allocation(const std::vector<double>& p_grid, std::uint64_t total_reps,
                                                       unsigned degree) {
  const std::size_t k = p_grid.size();
  std::vector<std::uint64_t> out(k, k ? total_reps / k : 0);
  if (k < degree + 1 || k < 3) return out;
  // intercept weights: l = e_0^T (X^T W X)^{-1} X^T W with unit SEs scaled by sqrt(p)
  std::vector<McEstimate> unit(k);
  std::vector<double> l(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) unit[i].std_error = 1.0 / std::sqrt(p_grid[i]);
  for (std::size_t i = 0; i < k; ++i) {
    auto probe = unit;
    for (auto& u : probe) u.mean = 0.0;
    probe[i].mean = 1.0;
    l[i] = extrapolate_to_zero(p_grid, probe, degree).intercept;
  }
  double norm = 0.0;
  std::vector<double> share(k);
  for (std::size_t i = 0; i < k; ++i) norm += share[i] = std::abs(l[i]) / std::sqrt(p_grid[i]);
  for (std::size_t i = 0; i < k; ++i)
    out[i] = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(static_cast<double>(total_reps) * share[i] / norm)));
  return out;
}

/// (1 - R)/p and P(N >= nu - 1)/p along a decreasing p grid, extrapolated to p = 0.
/// `gain` and `hit` use the requested degree; the `_linear` fits are always
/// reported as a curvature diagnostic.
struct LimitDiagnostic {
  double a = 0.0;
  double c_star = 0.0;
  std::vector<BayesRiskEstimate> rows;
  Extrapolation gain;
  Extrapolation hit;
  Extrapolation gain_linear;
  Extrapolation hit_linear;
  std::vector<std::string> warnings;
};

inline constexpr unsigned default_extrapolation_degree = 2;

template <DensityPair P = ExponentialPair>
LimitDiagnostic limit_diagnostic(double a, const HeadStartLaw& law, double c_star, const std::vector<double>& p_grid,
                                 const std::vector<std::uint64_t>& reps, std::uint64_t seed,
                                 const EngineOptions& opts = {}, unsigned degree = default_extrapolation_degree,
                                 const P& pair = {}) {
  if (p_grid.empty()) throw config_error("limit diagnostic needs a nonempty p grid");
  if (reps.size() != p_grid.size()) throw config_error("limit diagnostic needs one replication count per grid point");
  for (std::size_t i = 0; i < p_grid.size(); ++i) {
    if (!(p_grid[i] > 0.0 && p_grid[i] < 1.0)) throw config_error(fmt::format("p grid value {} outside (0, 1)", p_grid[i]));
    if (i > 0 && !(p_grid[i] < p_grid[i - 1])) throw config_error("p grid must be strictly decreasing");
  }
  if (degree < 1) throw config_error("extrapolation degree must be >= 1");

  LimitDiagnostic d;
  d.a = a;
  d.c_star = c_star;
  std::vector<McEstimate> gains, hits;
  for (std::size_t i = 0; i < p_grid.size(); ++i) {
    BayesConfig cfg{p_grid[i], c_star, a, law, opts.max_steps};
    auto row = estimate_bayes_risk(cfg, reps[i], sub_seed(seed, 1000 + i), opts, pair);
    gains.push_back(row.scaled_gain);
    hits.push_back(row.hit_ratio);
    d.rows.push_back(row);
  }
  const unsigned used = p_grid.size() >= degree + 1 ? degree : 1;
  if (used != degree && p_grid.size() >= 3)
    d.warnings.push_back(fmt::format("degree {} needs {} grid points; fell back to a linear fit", degree, degree + 1));
  d.gain = extrapolate_to_zero(p_grid, gains, used);
  d.hit = extrapolate_to_zero(p_grid, hits, used);
  d.gain_linear = extrapolate_to_zero(p_grid, gains, 1);
  d.hit_linear = extrapolate_to_zero(p_grid, hits, 1);
  if (!d.gain.enabled) d.warnings.push_back("extrapolation disabled: needs at least 3 grid points; raw ratios only");
  for (const auto& row : d.rows)
    if (row.scaled_gain.flagged) d.warnings.push_back(fmt::format("p = {}: truncated fraction above threshold", row.p));
  return d;
}

/// Same replication count at every grid point.
template <DensityPair P = ExponentialPair>
LimitDiagnostic limit_diagnostic(double a, const HeadStartLaw& law, double c_star, const std::vector<double>& p_grid,
                                 std::uint64_t reps, std::uint64_t seed, const EngineOptions& opts = {},
                                 unsigned degree = default_extrapolation_degree, const P& pair = {}) {
  return limit_diagnostic(a, law, c_star, p_grid, std::vector<std::uint64_t>(p_grid.size(), reps), seed, opts, degree,
                          pair);
}

/// Closed-form predictions for the small-p limit, fed with Monte Carlo estimates
/// of E R_0, E_1 N, E_1(R_0 N) and E_inf N.
struct LimitReference {
  double e_r0 = 0.0;
  double e_r0_se = 0.0;
  E1Joint e1;
  ArlFalse arl;
  double hit_limit = 0.0, hit_limit_se = 0.0;
  double with_cross_term = 0.0, with_cross_term_se = 0.0;
  double factorized = 0.0, factorized_se = 0.0;
  double gap = 0.0, gap_se = 0.0; ///< factorized - with_cross_term
  double conditional_delay = 0.0, conditional_delay_se = 0.0;
  double nu1_delay = 0.0, nu1_delay_se = 0.0;
};

template <DensityPair P = ExponentialPair>
LimitReference limit_reference(double a, const HeadStartLaw& law, double c_star, std::uint64_t reps, std::uint64_t seed,
                               const EngineOptions& opts = {}, const P& pair = {}) {
  LimitReference ref;
  if (auto m = law.mean()) {
    ref.e_r0 = *m;
  } else {
    const auto f = functionals_oracle(law, a, std::max<std::uint64_t>(reps, 10'000), sub_seed(seed, 1), opts);
    ref.e_r0 = f.mean.mean;
    ref.e_r0_se = f.mean.std_error;
  }
  ref.arl = estimate_arl_false_joint(a, law, reps, sub_seed(seed, 2), opts, pair);
  ref.e1 = estimate_e1_joint(a, law, reps, sub_seed(seed, 3), opts, pair);

  const double er = ref.e_r0, arl = ref.arl.arl.mean, arl_se = ref.arl.arl.std_error;
  const double e1 = ref.e1.delay.mean, cross = ref.e1.cross.mean, c = c_star;
  const auto& m = ref.e1.moments; // (N, R_0 N)

  ref.hit_limit = bayes_hit_limit(er, arl);
  ref.hit_limit_se = combined_se({ref.e_r0_se, arl_se});

  ref.with_cross_term = bayes_limit_with_cross_term(er, e1, arl, cross, c);
  ref.with_cross_term_se = combined_se({ref.e_r0_se, (1.0 - c * e1) * arl_se, m.std_error_of({-c * (1.0 + arl), -c})});

  const double total = bayes_hit_limit(er, arl);
  ref.factorized = bayes_limit_factorized(er, e1, arl, c);
  ref.factorized_se = combined_se({(1.0 - c * e1) * ref.e_r0_se, (1.0 - c * e1) * arl_se, c * total * m.std_error(0)});

  ref.gap = bayes_limit_gap(er, e1, cross, c);
  ref.gap_se = combined_se({c * e1 * ref.e_r0_se, m.std_error_of({-c * er, c})});

  // mixture simplifies to (E_1(R_0 N) + E_1 N (1 + E_inf N)) / total
  ref.nu1_delay = nu1_delay_limit(er, e1, cross);
  ref.nu1_delay_se = m.std_error_of({1.0 / (er + 1.0), 1.0 / (er + 1.0)});
  ref.conditional_delay = bayes_conditional_delay_limit(er, e1, arl, ref.nu1_delay);
  const double num = cross + e1 * (1.0 + arl);
  ref.conditional_delay_se =
      combined_se({m.std_error_of({(1.0 + arl) / total, 1.0 / total}), (e1 * total - num) / (total * total) * arl_se});
  return ref;
}

/// Which prediction the extrapolated intercept supports.
struct LimitVerdict {
  std::string verdict; ///< "cross_term", "factorized", "coincide" or "inconclusive"
  double z_cross_term = 0.0;
  double z_factorized = 0.0;
  double se_cross_term = 0.0;
  double se_factorized = 0.0;
  bool resolvable = false; ///< gap larger than the extrapolation SE
};

inline constexpr double limit_match_sigmas = 4.0;

inline LimitVerdict judge_limit(const LimitDiagnostic& d, const LimitReference& ref) {
  LimitVerdict v;
  if (!d.gain.enabled) {
    v.verdict = d.c_star == 0.0 ? "coincide" : "inconclusive";
    return v;
  }
  v.se_cross_term = combined_se({d.gain.intercept_se, ref.with_cross_term_se});
  v.se_factorized = combined_se({d.gain.intercept_se, ref.factorized_se});
  v.z_cross_term = (d.gain.intercept - ref.with_cross_term) / v.se_cross_term;
  v.z_factorized = (d.gain.intercept - ref.factorized) / v.se_factorized;
  v.resolvable = std::abs(ref.gap) > d.gain.intercept_se;
  if (d.c_star == 0.0) {
    v.verdict = "coincide";
  } else if (!v.resolvable) {
    v.verdict = "inconclusive";
  } else {
    const bool cross_ok = std::abs(v.z_cross_term) <= limit_match_sigmas;
    const bool fact_ok = std::abs(v.z_factorized) <= limit_match_sigmas;
    v.verdict = cross_ok && !fact_ok ? "cross_term" : (fact_ok && !cross_ok ? "factorized" : "inconclusive");
  }
  return v;
}

/// Law of R_0 given {nu = 1} at a fixed small p, against the size-biased
/// transform (x + 1) dphi0(x) / (E R_0 + 1) and against phi0 itself. Also
/// compares E(N_A | nu = 1) with E_1(N_A (R_0 + 1)) / (E R_0 + 1).
struct ConditionalHeadStartReport {
  double p = 0.0;
  std::uint64_t reps = 0;
  std::uint64_t nu1_count = 0;
  McEstimate conditional_mean;   ///< E(R_0 | nu = 1)
  double size_biased_mean = 0.0; ///< E[R_0 (R_0 + 1)] / (E R_0 + 1)
  double size_biased_mean_se = 0.0;
  double unconditional_mean = 0.0;
  double unconditional_mean_se = 0.0;
  double z_size_biased = 0.0;
  double z_unconditional = 0.0;
  std::size_t bins = 0;
  double l1_size_biased = 0.0;
  double l1_unconditional = 0.0;
  double l1_noise = 0.0; ///< typical L1 distance of an exact sample of this size
  McEstimate nu1_delay;  ///< E(N_A | nu = 1), modified SR run under P_1
  double nu1_delay_limit = 0.0;
  double nu1_delay_limit_se = 0.0;
  double z_nu1_delay = 0.0;
  std::vector<std::string> warnings;
};

template <DensityPair P = ExponentialPair>
ConditionalHeadStartReport conditional_headstart_diagnostic(double a, const HeadStartLaw& law, double p,
                                                            std::uint64_t reps, std::uint64_t seed,
                                                            const EngineOptions& opts = {}, const P& pair = {}) {
  if (!(p > 0.0 && p < 1.0)) throw config_error(fmt::format("p = {} must lie in (0, 1)", p));
  detail::check_reps(reps);
  detail::check_run_args(a, opts.max_steps);

  ConditionalHeadStartReport rep;
  rep.p = p;
  rep.reps = reps;

  // Reference sample from phi0 fixes the histogram range and, for laws
  // without closed-form moments, the size-biased mean.
  struct RefAcc {
    MomentAccumulator<3> m; // x, x^2, x(x+1)
    double max = 0.0;
    void merge(const RefAcc& o) {
      m.merge(o.m);
      max = std::max(max, o.max);
    }
  };
  const auto ref = run_replications<RefAcc>(reps, sub_seed(seed, 11), opts, [&](Rng& rng, std::uint64_t, RefAcc& out) {
    const double x = law.sample(rng);
    out.m.add({x, x * x, x * (x + 1.0)});
    out.max = std::max(out.max, x);
  });
  const double upper = law.upper_bound().value_or(ref.max);

  rep.unconditional_mean = law.mean().value_or(ref.m.mean(0));
  rep.unconditional_mean_se = law.mean() ? 0.0 : ref.m.std_error(0);
  if (auto sb = law.size_biased_mean()) {
    rep.size_biased_mean = *sb;
  } else {
    const double m1 = ref.m.mean(0);
    rep.size_biased_mean = ref.m.mean(2) / (m1 + 1.0);
    // delta method on the ratio of means
    const double d2 = 1.0 / (m1 + 1.0), d1 = -ref.m.mean(2) / ((m1 + 1.0) * (m1 + 1.0));
    std::array<double, 3> w{d1, 0.0, d2};
    rep.size_biased_mean_se = ref.m.std_error_of(w);
  }

  // histogram bins need the conditional sample size, so collect it first
  struct CondAcc {
    ScalarAccumulator r0;
    ScalarAccumulator delay;
    std::vector<double> values;
    std::uint64_t truncated = 0;
    void merge(const CondAcc& o) {
      r0.merge(o.r0);
      delay.merge(o.delay);
      values.insert(values.end(), o.values.begin(), o.values.end());
      truncated += o.truncated;
    }
  };
  const auto cond = run_replications<CondAcc>(reps, seed, opts, [&](Rng& rng, std::uint64_t, CondAcc& out) {
    const double r0 = law.sample(rng);
    const double pi0 = couple_pi0(p, r0);
    if (sample_change_time(p, pi0, rng) != 1) return;
    out.r0.add({r0});
    out.values.push_back(r0);
    const auto rec = run_modified_sr(pair, r0, a, ChangeScenario::at(1), rng, opts.max_steps);
    out.delay.add({static_cast<double>(rec.n_stop)});
    out.truncated += rec.truncated ? 1 : 0;
  });

  rep.nu1_count = cond.r0.count();
  if (rep.nu1_count == 0) throw undefined_conditional("conditional head-start diagnostic: nu = 1 never occurred");
  rep.conditional_mean = cond.r0.estimate(0, seed);
  rep.conditional_mean.rejected = reps - rep.nu1_count;
  rep.z_size_biased = (rep.conditional_mean.mean - rep.size_biased_mean) /
                      combined_se({rep.conditional_mean.std_error, rep.size_biased_mean_se});
  rep.z_unconditional = (rep.conditional_mean.mean - rep.unconditional_mean) /
                        combined_se({rep.conditional_mean.std_error, rep.unconditional_mean_se});

  rep.bins = 20;
  constexpr std::uint64_t per_bin = 50;
  if (rep.nu1_count < rep.bins * per_bin) {
    rep.bins = static_cast<std::size_t>(std::max<std::uint64_t>(2, rep.nu1_count / per_bin));
    rep.warnings.push_back(fmt::format("only {} draws with nu = 1; histogram widened to {} bins", rep.nu1_count, rep.bins));
  }
  const double width = upper > 0.0 ? upper / static_cast<double>(rep.bins) : 1.0;
  auto bin_of = [&](double x) {
    return std::min<std::size_t>(rep.bins - 1, static_cast<std::size_t>(std::max(0.0, x / width)));
  };
  std::vector<double> empirical(rep.bins, 0.0), plain(rep.bins, 0.0), biased(rep.bins, 0.0);
  for (double x : cond.values) empirical[bin_of(x)] += 1.0;

  struct BinAcc {
    std::vector<double> plain, biased;
    void merge(const BinAcc& o) {
      if (plain.size() < o.plain.size()) {
        plain.resize(o.plain.size());
        biased.resize(o.biased.size());
      }
      for (std::size_t i = 0; i < o.plain.size(); ++i) {
        plain[i] += o.plain[i];
        biased[i] += o.biased[i];
      }
    }
  };
  const auto bins = run_replications<BinAcc>(reps, sub_seed(seed, 11), opts, [&](Rng& rng, std::uint64_t, BinAcc& out) {
    if (out.plain.empty()) {
      out.plain.assign(rep.bins, 0.0);
      out.biased.assign(rep.bins, 0.0);
    }
    const double x = law.sample(rng);
    out.plain[bin_of(x)] += 1.0;
    out.biased[bin_of(x)] += x + 1.0;
  });
  double sum_plain = 0, sum_biased = 0;
  for (std::size_t i = 0; i < rep.bins; ++i) {
    sum_plain += bins.plain[i];
    sum_biased += bins.biased[i];
  }
  const double n_cond = static_cast<double>(rep.nu1_count);
  for (std::size_t i = 0; i < rep.bins; ++i) {
    const double e = empirical[i] / n_cond;
    const double b = bins.biased[i] / sum_biased;
    rep.l1_size_biased += std::abs(e - b);
    rep.l1_unconditional += std::abs(e - bins.plain[i] / sum_plain);
    rep.l1_noise += std::sqrt(2.0 * b * (1.0 - b) / (3.14159265358979323846 * n_cond));
  }

  rep.nu1_delay = cond.delay.estimate(0, seed);
  detail::finish(rep.nu1_delay, cond.truncated, rep.nu1_count);
  const auto e1 = estimate_e1_joint(a, law, reps, sub_seed(seed, 12), opts, pair);
  const double er = rep.unconditional_mean;
  rep.nu1_delay_limit = nu1_delay_limit(er, e1.delay.mean, e1.cross.mean);
  rep.nu1_delay_limit_se = e1.moments.std_error_of({1.0 / (er + 1.0), 1.0 / (er + 1.0)});
  rep.z_nu1_delay =
      (rep.nu1_delay.mean - rep.nu1_delay_limit) / combined_se({rep.nu1_delay.std_error, rep.nu1_delay_limit_se});
  return rep;
}

} // namespace qdetect

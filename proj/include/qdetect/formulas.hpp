#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

#include "qdetect/errors.hpp"

// Closed-form expressions for the detection delay of the modified SR
// procedure and for the small-p limit of the extended Bayes risk.
//
// Two families appear side by side. The "cross term" family keeps
// E_1(R_0 N), the correlation between head start and stopping time under P_1.
// The "factorized" family replaces it by E R_0 * E_1 N, which is what one gets
// by treating the head start as if its law given {nu = 1} were the
// unconditional one. Both are templated on the number type so identities can
// be checked in exact rational arithmetic.

namespace qdetect {

/// Inputs to the limit expressions. e1_delay is E_1 N (or D(N)), arl_false is
/// E_inf N, cross_term is E_1(R_0 N), c_star the limiting cost.
template <typename T = double>
struct FormulaInputs {
  T p0{};
  T mu0{};
  T e_r0{};
  T e1_delay{};
  T arl_false{};
  T cross_term{};
  T c_star{};
};

namespace detail {

template <typename T>
void check_probability(const T& p, const char* what) {
  if (p < T(0) || p > T(1)) throw domain_error(fmt::format("{}: p0 must lie in [0, 1]", what));
}

template <typename T>
void check_nonnegative(const T& v, const char* what) {
  if (v < T(0)) throw domain_error(fmt::format("{}: expectations must be nonnegative", what));
}

} // namespace detail

/// E_1 N_A = (mu0 + 1)(1 - p0) / (p0 (mu0 + 1) + 1). Derived under the
/// factorization assumption; does not match simulation.
template <typename T>
T e1_delay_factorized(const T& p0, const T& mu0) {
  detail::check_probability(p0, "e1_delay_factorized");
  detail::check_nonnegative(mu0, "e1_delay_factorized");
  return (mu0 + T(1)) * (T(1) - p0) / (p0 * (mu0 + T(1)) + T(1));
}

/// E_1 N_A = (mu0 + 1)(1 - p0) - p0 E_1(R_0 N_A).
template <typename T>
T e1_delay_with_cross_term(const T& p0, const T& mu0, const T& cross_term) {
  detail::check_probability(p0, "e1_delay_with_cross_term");
  detail::check_nonnegative(mu0, "e1_delay_with_cross_term");
  detail::check_nonnegative(cross_term, "e1_delay_with_cross_term");
  return (mu0 + T(1)) * (T(1) - p0) - p0 * cross_term;
}

/// lim P(N >= nu - 1)/p = E R_0 + 1 + E_inf N.
template <typename T>
T bayes_hit_limit(const T& e_r0, const T& arl_false) {
  return e_r0 + T(1) + arl_false;
}

/// lim (1 - R(M))/p = [E R_0 + 1 + E_inf N] - c*[E_1(R_0 N) + E_1 N (1 + E_inf N)].
template <typename T>
T bayes_limit_with_cross_term(const T& e_r0, const T& e1_delay, const T& arl_false, const T& cross_term,
                              const T& c_star) {
  return bayes_hit_limit(e_r0, arl_false) - c_star * (cross_term + e1_delay * (T(1) + arl_false));
}

/// (1 - c* E_1 N)[E R_0 + 1 + E_inf N].
template <typename T>
T bayes_limit_factorized(const T& e_r0, const T& e1_delay, const T& arl_false, const T& c_star) {
  return (T(1) - c_star * e1_delay) * bayes_hit_limit(e_r0, arl_false);
}

/// factorized - with_cross_term, simplified: c* (E_1(R_0 N) - E_1 N * E R_0).
template <typename T>
T bayes_limit_gap(const T& e_r0, const T& e1_delay, const T& cross_term, const T& c_star) {
  return c_star * (cross_term - e1_delay * e_r0);
}

/// Lower bound on C(N) for an arbitrary stopping time N with E_inf N =
/// arl_false, E_1(R_0 N) = cross_term and worst conditional delay delay_sup.
/// Equality holds for an equalizer rule.
template <typename T>
T bayes_limit_lower_bound(const T& e_r0, const T& arl_false, const T& cross_term, const T& delay_sup,
                          const T& c_star) {
  return e_r0 + T(1) - c_star * cross_term + arl_false - c_star * delay_sup * (arl_false + T(1));
}

/// lim E(N | nu = 1) = E_1(N (R_0 + 1)) / (E R_0 + 1).
template <typename T>
T nu1_delay_limit(const T& e_r0, const T& e1_delay, const T& cross_term) {
  return (cross_term + e1_delay) / (e_r0 + T(1));
}

/// lim E(M - nu + 1 | M >= nu - 1) as the mixture of E_1 N and the {nu = 1} term.
template <typename T>
T bayes_conditional_delay_limit(const T& e_r0, const T& e1_delay, const T& arl_false, const T& nu1_delay) {
  const T total = bayes_hit_limit(e_r0, arl_false);
  return e1_delay * arl_false / total + (e_r0 + T(1)) / total * nu1_delay;
}

/// Rounds to `digits` decimals, ties to even.
inline double round_half_even(double x, int digits) {
  const double scale = std::pow(10.0, digits);
  const double scaled = x * scale;
  double r = std::nearbyint(scaled); // default rounding mode is round-to-nearest-even
  // nearbyint sees the binary value of x * scale; treat values within an ulp of .5 as ties
  const double frac = scaled - std::floor(scaled);
  if (std::abs(frac - 0.5) <= 4.0 * std::numeric_limits<double>::epsilon() * std::abs(scaled)) {
    const double lo = std::floor(scaled);
    r = std::fmod(lo, 2.0) == 0.0 ? lo : lo + 1.0;
  }
  return r / scale;
}

} // namespace qdetect

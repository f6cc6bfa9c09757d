#pragma once

#include <cmath>
#include <cstdint>
#include <algorithm>
#include <functional>
#include <type_traits>
#include <optional>
#include <string>
#include <utility>
#include <variant>

#include <fmt/format.h>

#include "qdetect/engine.hpp"
#include "qdetect/errors.hpp"
#include "qdetect/random.hpp"
#include "qdetect/stats.hpp"

namespace qdetect {

namespace detail {

inline void check_open_threshold(double a, const char* what) {
  if (!(a > 0.0 && a < 2.0)) throw domain_error(fmt::format("{}: A = {} must lie in (0, 2)", what, a));
}

} // namespace detail

/// P(R_0 >= A) for the uniform-product head start at its own threshold A.
inline double p0_exact(double a) {
  detail::check_open_threshold(a, "p0_exact");
  return 1.0 - std::log1p(a) / 2.0;
}

/// The unshifted variant 1 - log(A)/2 (log A in place of log(A + 1)). Kept so the oracle suite can show it is wrong.
inline double p0_unshifted(double a) {
  detail::check_open_threshold(a, "p0_unshifted");
  return 1.0 - std::log(a) / 2.0;
}

/// E(R_0 | R_0 < A) for the uniform-product head start.
inline double mu0_exact(double a) {
  detail::check_open_threshold(a, "mu0_exact");
  return a / 2.0;
}

/// Distribution of the randomized head start R_0 chosen by the statistician.
class HeadStartLaw {
public:
  struct PointMass {
    double r0;
  };
  /// R_0 = (R + 1) Z with R ~ U[0, A] and Z ~ U[0, 2] independent.
  struct UniformProduct {
    double a;
  };
  /// Arbitrary sampler. Moments may be declared; when absent only the Monte
  /// Carlo oracle path is available.
  struct Custom {
    std::function<double(Rng&)> sampler;
    std::string label;
    std::optional<double> mean;
    std::optional<double> second_moment;
  };

  static HeadStartLaw point_mass(double r0) {
    if (!(r0 >= 0.0) || !std::isfinite(r0)) throw config_error(fmt::format("point mass head start {} must be >= 0", r0));
    return HeadStartLaw(PointMass{r0});
  }

  static HeadStartLaw uniform_product(double a) {
    if (!(a > 0.0 && a < 2.0))
      throw config_error(fmt::format("uniform-product head start requires 0 < A < 2, got {}", a));
    return HeadStartLaw(UniformProduct{a});
  }

  static HeadStartLaw custom(Custom c) {
    if (!c.sampler) throw config_error("custom head start law needs a sampler");
    return HeadStartLaw(std::move(c));
  }

  double sample(Rng& rng) const {
    return std::visit(
        [&](const auto& law) -> double {
          using T = std::decay_t<decltype(law)>;
          if constexpr (std::is_same_v<T, PointMass>) {
            return law.r0;
          } else if constexpr (std::is_same_v<T, UniformProduct>) {
            const double r = uniform(rng, 0.0, law.a);
            const double z = uniform(rng, 0.0, 2.0);
            return (r + 1.0) * z;
          } else {
            const double v = law.sampler(rng);
            if (!(v >= 0.0)) throw domain_error(fmt::format("custom head start drew {} < 0", v));
            return v;
          }
        },
        kind_);
  }

  /// E R_0 when known in closed form.
  std::optional<double> mean() const {
    if (auto* pm = std::get_if<PointMass>(&kind_)) return pm->r0;
    if (auto* up = std::get_if<UniformProduct>(&kind_)) return up->a / 2.0 + 1.0;
    return std::get<Custom>(kind_).mean;
  }

  /// E R_0^2 when known in closed form.
  std::optional<double> second_moment() const {
    if (auto* pm = std::get_if<PointMass>(&kind_)) return pm->r0 * pm->r0;
    if (auto* up = std::get_if<UniformProduct>(&kind_)) {
      const double a = up->a;
      // E (R+1)^2 * E Z^2
      return ((a + 1.0) * (a + 1.0) * (a + 1.0) - 1.0) / (3.0 * a) * (4.0 / 3.0);
    }
    return std::get<Custom>(kind_).second_moment;
  }

  /// Mean of the size-biased law with density proportional to (x + 1) dphi0(x).
  std::optional<double> size_biased_mean() const {
    const auto m1 = mean();
    const auto m2 = second_moment();
    if (!m1 || !m2) return std::nullopt;
    return (*m2 + *m1) / (*m1 + 1.0);
  }

  /// Closed-form P(R_0 >= threshold), when one exists.
  std::optional<double> p0(double threshold) const {
    if (auto* pm = std::get_if<PointMass>(&kind_)) return pm->r0 >= threshold ? 1.0 : 0.0;
    if (auto* up = std::get_if<UniformProduct>(&kind_); up && up->a == threshold) return p0_exact(threshold);
    return std::nullopt;
  }

  /// Closed-form E(R_0 | R_0 < threshold), when one exists.
  std::optional<double> mu0(double threshold) const {
    if (auto* pm = std::get_if<PointMass>(&kind_)) {
      if (pm->r0 >= threshold) throw undefined_conditional("mu0: point mass never falls below the threshold");
      return pm->r0;
    }
    if (auto* up = std::get_if<UniformProduct>(&kind_); up && up->a == threshold) return mu0_exact(threshold);
    return std::nullopt;
  }

  bool is_point_mass() const noexcept { return std::holds_alternative<PointMass>(kind_); }
  bool is_uniform_product() const noexcept { return std::holds_alternative<UniformProduct>(kind_); }
  /// Largest value the law can produce, if bounded and known.
  std::optional<double> upper_bound() const {
    if (auto* pm = std::get_if<PointMass>(&kind_)) return pm->r0;
    if (auto* up = std::get_if<UniformProduct>(&kind_)) return 2.0 * (up->a + 1.0);
    return std::nullopt;
  }

  std::string label() const {
    if (auto* pm = std::get_if<PointMass>(&kind_)) return fmt::format("point_mass({})", pm->r0);
    if (auto* up = std::get_if<UniformProduct>(&kind_)) return fmt::format("uniform_product({})", up->a);
    return std::get<Custom>(kind_).label;
  }

private:
  using Kind = std::variant<PointMass, UniformProduct, Custom>;
  explicit HeadStartLaw(Kind k) : kind_(std::move(k)) {}
  Kind kind_;
};

inline double sample_headstart(const HeadStartLaw& law, Rng& rng) { return law.sample(rng); }

// Quadrature oracles for the uniform-product law. R ~ U[0, A] is integrated
// by composite Simpson; the inner expectation over Z ~ U[0, 2] is exact.

namespace detail {

template <typename F>
double simpson(F&& f, double lo, double hi, std::uint64_t intervals) {
  if (intervals % 2 == 1) ++intervals;
  const double h = (hi - lo) / static_cast<double>(intervals);
  double s = f(lo) + f(hi);
  for (std::uint64_t i = 1; i < intervals; ++i) s += f(lo + h * static_cast<double>(i)) * (i % 2 == 1 ? 4.0 : 2.0);
  return s * h / 3.0;
}

inline double clamp_z(double t) { return std::clamp(t, 0.0, 2.0); }

} // namespace detail

/// P((R + 1) Z >= A) by quadrature over R.
inline double quadrature_p0(double a, std::uint64_t nodes = 20'000) {
  detail::check_open_threshold(a, "quadrature_p0");
  auto inner = [a](double r) { return 1.0 - detail::clamp_z(a / (r + 1.0)) / 2.0; };
  return detail::simpson(inner, 0.0, a, nodes) / a;
}

/// E((R + 1) Z | (R + 1) Z < A) by quadrature over R.
inline double quadrature_mu0(double a, std::uint64_t nodes = 20'000) {
  detail::check_open_threshold(a, "quadrature_mu0");
  // E[(r+1) Z; Z < t] = (r+1) t^2 / 4 and P(Z < t) = t / 2 with t = A/(r+1)
  auto partial_mean = [a](double r) {
    const double t = detail::clamp_z(a / (r + 1.0));
    return (r + 1.0) * t * t / 4.0;
  };
  auto below = [a](double r) { return detail::clamp_z(a / (r + 1.0)) / 2.0; };
  return detail::simpson(partial_mean, 0.0, a, nodes) / detail::simpson(below, 0.0, a, nodes);
}

/// Brute-force Monte Carlo estimates of the head-start functionals.
struct HeadStartFunctionals {
  McEstimate p0;   ///< P(R_0 >= A)
  McEstimate mu0;  ///< E(R_0 | R_0 < A), by rejection
  McEstimate mean; ///< E R_0
  McEstimate second_moment;
};

namespace detail {

struct FunctionalAcc {
  MomentAccumulator<3> all; // indicator, value, value^2
  ScalarAccumulator below;  // values with R_0 < A
  void merge(const FunctionalAcc& o) {
    all.merge(o.all);
    below.merge(o.below);
  }
};

} // namespace detail

inline HeadStartFunctionals functionals_oracle(const HeadStartLaw& law, double a, std::uint64_t reps, std::uint64_t seed,
                                               const EngineOptions& opts = {}) {
  if (reps < 10'000) throw config_error(fmt::format("functionals_oracle needs reps >= 10^4, got {}", reps));
  if (!(a > 0.0)) throw config_error("functionals_oracle: threshold must be > 0");

  const auto acc = run_replications<detail::FunctionalAcc>(reps, seed, opts, [&](Rng& rng, std::uint64_t, auto& out) {
    const double r0 = law.sample(rng);
    out.all.add({r0 >= a ? 1.0 : 0.0, r0, r0 * r0});
    if (r0 < a) out.below.add({r0});
  });

  if (acc.below.count() == 0) throw undefined_conditional("functionals_oracle: no draw fell below the threshold");

  HeadStartFunctionals f;
  f.p0 = acc.all.estimate(0, seed);
  f.mean = acc.all.estimate(1, seed);
  f.second_moment = acc.all.estimate(2, seed);
  f.mu0 = acc.below.estimate(0, seed);
  f.mu0.rejected = reps - acc.below.count();
  return f;
}

} // namespace qdetect

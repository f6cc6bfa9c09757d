#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include <fmt/format.h>

#include "qdetect/density.hpp"
#include "qdetect/errors.hpp"
#include "qdetect/random.hpp"

namespace qdetect {

inline constexpr std::uint64_t default_max_steps = 10'000'000;

/// Change time k of the law P_k: observations n < k come from f0, n >= k from f1.
/// `never()` is P_infinity.
class ChangeScenario {
public:
  static constexpr std::uint64_t infinity = std::numeric_limits<std::uint64_t>::max();

  static ChangeScenario at(std::uint64_t k) {
    if (k == 0) throw config_error("change index must be >= 1");
    return ChangeScenario(k);
  }
  static constexpr ChangeScenario never() noexcept { return ChangeScenario(infinity); }

  constexpr std::uint64_t change_index() const noexcept { return k_; }
  constexpr bool is_never() const noexcept { return k_ == infinity; }
  constexpr bool post_change(std::uint64_t n) const noexcept { return n >= k_; }

  template <DensityPair P>
  double draw(const P& pair, std::uint64_t n, Rng& rng) const {
    return post_change(n) ? pair.sample_post(rng) : pair.sample_pre(rng);
  }

  /// lr(X_n) for the n-th observation.
  template <DensityPair P>
  double draw_lr(const P& pair, std::uint64_t n, Rng& rng) const {
    if constexpr (DirectRatioPair<P>) {
      return post_change(n) ? pair.lr_under_post(rng) : pair.lr_under_pre(rng);
    } else {
      return pair.lr(draw(pair, n, rng));
    }
  }

private:
  explicit constexpr ChangeScenario(std::uint64_t k) noexcept : k_(k) {}
  std::uint64_t k_;
};

/// Outcome of one detector run.
struct StoppingRecord {
  std::uint64_t n_stop = 0;
  double head_start = 0.0;
  double final_stat = 0.0;
  bool truncated = false;

  double overshoot(double threshold) const noexcept { return final_stat - threshold; }
};

/// One Shiryaev-Roberts step: (1 + r) * lr.
inline double sr_update(double r_prev, double lr_value) {
  if (!(r_prev >= 0.0)) throw contract_violation(fmt::format("sr_update: r_prev = {} must be >= 0", r_prev));
  if (!(lr_value > 0.0)) throw contract_violation(fmt::format("sr_update: lr = {} must be > 0", lr_value));
  return (1.0 + r_prev) * lr_value;
}

namespace detail {

inline void check_run_args(double threshold, std::uint64_t max_steps) {
  if (!(threshold > 0.0) || !std::isfinite(threshold))
    throw config_error(fmt::format("threshold A = {} must be positive and finite", threshold));
  if (max_steps == 0) throw config_error("max_steps must be >= 1");
}

} // namespace detail

/// Threshold rule on R_n = (1 + R_{n-1}) lr(X_n) * growth with R_0 = r0, stopping
/// at the first n >= 0 with R_n >= threshold. growth = 1 is the modified SR
/// procedure; growth = 1/q gives the Bayes rule of the geometric-prior problem.
template <DensityPair P>
StoppingRecord run_sr_rule(const P& pair, double r0, double threshold, double growth, ChangeScenario scenario,
                           Rng& rng, std::uint64_t max_steps = default_max_steps) {
  detail::check_run_args(threshold, max_steps);
  if (!(r0 >= 0.0)) throw config_error(fmt::format("head start r0 = {} must be >= 0", r0));

  StoppingRecord rec{0, r0, r0, false};
  double r = r0;
  std::uint64_t n = 0;
  while (r < threshold) {
    if (n == max_steps) {
      rec.truncated = true;
      break;
    }
    ++n;
    r = (1.0 + r) * scenario.draw_lr(pair, n, rng) * growth;
  }
  rec.n_stop = n;
  rec.final_stat = r;
  return rec;
}

/// Modified Shiryaev-Roberts procedure with head start r0.
template <DensityPair P>
StoppingRecord run_modified_sr(const P& pair, double r0, double threshold, ChangeScenario scenario, Rng& rng,
                               std::uint64_t max_steps = default_max_steps) {
  return run_sr_rule(pair, r0, threshold, 1.0, scenario, rng, max_steps);
}

/// Page's CUSUM with W_0 = 0 and W_n = max(0, W_{n-1} + log lr(X_n)), stopping
/// at the first n >= 1 with W_n >= log(threshold). final_stat holds W at stop.
template <DensityPair P>
StoppingRecord run_cusum(const P& pair, double threshold, ChangeScenario scenario, Rng& rng,
                         std::uint64_t max_steps = default_max_steps) {
  detail::check_run_args(threshold, max_steps);
  const double log_threshold = std::log(threshold);

  StoppingRecord rec{0, 0.0, 0.0, false};
  double w = 0.0;
  std::uint64_t n = 0;
  for (;;) {
    if (n == max_steps) {
      rec.truncated = true;
      break;
    }
    ++n;
    w = std::max(0.0, w + std::log(scenario.draw_lr(pair, n, rng)));
    if (w >= log_threshold) break;
  }
  rec.n_stop = n;
  rec.final_stat = w;
  return rec;
}

} // namespace qdetect

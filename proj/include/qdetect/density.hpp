#pragma once

#include <cmath>
#include <concepts>
#include <functional>
#include <string>
#include <string_view>
#include <utility>

#include "qdetect/errors.hpp"
#include "qdetect/random.hpp"

namespace qdetect {

/// A fully specified pre-/post-change pair: samplers for f0 and f1 and the
/// likelihood ratio f1(x)/f0(x).
template <typename P>
concept DensityPair = requires(const P& pair, Rng& rng, double x) {
  { pair.sample_pre(rng) } -> std::convertible_to<double>;
  { pair.sample_post(rng) } -> std::convertible_to<double>;
  { pair.lr(x) } -> std::convertible_to<double>;
  { pair.label() } -> std::convertible_to<std::string_view>;
};

/// f0(x) = exp(-x), f1(x) = 2 exp(-2x) on x > 0, so lr(x) = 2 exp(-x).
struct ExponentialPair {
  double sample_pre(Rng& rng) const noexcept { return exponential(rng, 1.0); }
  double sample_post(Rng& rng) const noexcept { return exponential(rng, 2.0); }

  double lr(double x) const {
    if (!(x > 0.0)) throw domain_error("exponential pair: observation must be > 0");
    return 2.0 * std::exp(-x);
  }

  // X = -log U gives lr = 2U; X = -log(U)/2 gives lr = 2 sqrt(U). Same
  // uniform draw as the samplers above.
  double lr_under_pre(Rng& rng) const noexcept { return 2.0 * uniform_open(rng); }
  double lr_under_post(Rng& rng) const noexcept { return 2.0 * std::sqrt(uniform_open(rng)); }

  static double pre_density(double x) noexcept { return x > 0.0 ? std::exp(-x) : 0.0; }
  static double post_density(double x) noexcept { return x > 0.0 ? 2.0 * std::exp(-2.0 * x) : 0.0; }

  std::string_view label() const noexcept { return "exp(1)->exp(2)"; }
};

/// Type-erased pair for tests and ad hoc models.
class CustomPair {
public:
  using Sampler = std::function<double(Rng&)>;
  using Ratio = std::function<double(double)>;

  CustomPair(Sampler pre, Sampler post, Ratio ratio, std::string label)
      : pre_(std::move(pre)), post_(std::move(post)), ratio_(std::move(ratio)), label_(std::move(label)) {
    if (!pre_ || !post_ || !ratio_) throw config_error("custom pair: all callables must be set");
  }

  double sample_pre(Rng& rng) const { return pre_(rng); }
  double sample_post(Rng& rng) const { return post_(rng); }

  double lr(double x) const {
    const double v = ratio_(x);
    if (!(v > 0.0) || !std::isfinite(v)) throw domain_error("custom pair: likelihood ratio must be positive and finite");
    return v;
  }

  std::string_view label() const noexcept { return label_; }

private:
  Sampler pre_;
  Sampler post_;
  Ratio ratio_;
  std::string label_;
};

/// Pairs that can draw lr(X) directly for X ~ f0 or X ~ f1, skipping the
/// observation itself. Detectors use this path when available.
template <typename P>
concept DirectRatioPair = DensityPair<P> && requires(const P& pair, Rng& rng) {
  { pair.lr_under_pre(rng) } -> std::convertible_to<double>;
  { pair.lr_under_post(rng) } -> std::convertible_to<double>;
};

template <DensityPair P>
double likelihood_ratio(const P& pair, double x) {
  return pair.lr(x);
}

} // namespace qdetect

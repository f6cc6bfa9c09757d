#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>

namespace qdetect {

/// Monte Carlo estimate of a mean. `reps` is the effective count after any
/// rejection; `rejected` counts replications excluded by a conditioning event.
struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::uint64_t reps = 0;
  std::uint64_t seed = 0;
  std::uint64_t truncation_count = 0;
  std::uint64_t rejected = 0;
  bool flagged = false;

  double z_score(double reference) const noexcept {
    return std_error > 0.0 ? (mean - reference) / std_error : (mean == reference ? 0.0 : INFINITY);
  }
};

/// Standard errors combined in quadrature.
inline double combined_se(std::initializer_list<double> errors) noexcept {
  double s = 0.0;
  for (double e : errors) s += e * e;
  return std::sqrt(s);
}

/// Running mean and co-moments of a D-dimensional sample (Welford). Merging
/// uses the pairwise update of Chan et al., so the result depends only on the
/// order in which partial accumulators are combined.
template <std::size_t D>
class MomentAccumulator {
public:
  void add(const std::array<double, D>& x) noexcept {
    ++n_;
    const double inv_n = 1.0 / static_cast<double>(n_);
    std::array<double, D> delta{};
    for (std::size_t i = 0; i < D; ++i) {
      delta[i] = x[i] - mean_[i];
      mean_[i] += delta[i] * inv_n;
    }
    for (std::size_t i = 0; i < D; ++i)
      for (std::size_t j = 0; j < D; ++j) m2_[i][j] += delta[i] * (x[j] - mean_[j]);
  }

  void merge(const MomentAccumulator& other) noexcept {
    if (other.n_ == 0) return;
    if (n_ == 0) {
      *this = other;
      return;
    }
    const double na = static_cast<double>(n_);
    const double nb = static_cast<double>(other.n_);
    const double n = na + nb;
    std::array<double, D> delta{};
    for (std::size_t i = 0; i < D; ++i) delta[i] = other.mean_[i] - mean_[i];
    for (std::size_t i = 0; i < D; ++i)
      for (std::size_t j = 0; j < D; ++j) m2_[i][j] += other.m2_[i][j] + delta[i] * delta[j] * na * nb / n;
    for (std::size_t i = 0; i < D; ++i) mean_[i] += delta[i] * nb / n;
    n_ += other.n_;
  }

  std::uint64_t count() const noexcept { return n_; }
  double mean(std::size_t i = 0) const noexcept { return mean_[i]; }

  /// Sample covariance with n - 1 denominator.
  double covariance(std::size_t i, std::size_t j) const noexcept {
    return n_ > 1 ? m2_[i][j] / static_cast<double>(n_ - 1) : 0.0;
  }
  double variance(std::size_t i = 0) const noexcept { return covariance(i, i); }

  /// Sample standard deviation over sqrt(n).
  double std_error(std::size_t i = 0) const noexcept {
    return n_ > 0 ? std::sqrt(variance(i) / static_cast<double>(n_)) : 0.0;
  }

  /// Standard error of the mean of sum_i w_i x_i.
  double std_error_of(const std::array<double, D>& w) const noexcept {
    if (n_ == 0) return 0.0;
    double v = 0.0;
    for (std::size_t i = 0; i < D; ++i)
      for (std::size_t j = 0; j < D; ++j) v += w[i] * w[j] * covariance(i, j);
    return std::sqrt(std::max(v, 0.0) / static_cast<double>(n_));
  }

  McEstimate estimate(std::size_t i, std::uint64_t seed) const noexcept {
    McEstimate e;
    e.mean = mean(i);
    e.std_error = std_error(i);
    e.reps = n_;
    e.seed = seed;
    return e;
  }

private:
  std::uint64_t n_ = 0;
  std::array<double, D> mean_{};
  std::array<std::array<double, D>, D> m2_{};
};

using ScalarAccumulator = MomentAccumulator<1>;

} // namespace qdetect

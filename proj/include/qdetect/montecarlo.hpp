#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include <fmt/format.h>

#include "qdetect/density.hpp"
#include "qdetect/detect.hpp"
#include "qdetect/engine.hpp"
#include "qdetect/errors.hpp"
#include "qdetect/headstart.hpp"
#include "qdetect/random.hpp"
#include "qdetect/stats.hpp"

namespace qdetect {

/// Estimates whose truncated fraction exceeds this are flagged.
inline constexpr double truncation_flag_fraction = 1e-4;

/// Independent sub-seed for a labelled sub-experiment.
inline std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t label) noexcept {
  SplitMix64 sm(seed ^ (label * 0x9e3779b97f4a7c15ULL));
  sm();
  return sm();
}

namespace detail {

inline void check_reps(std::uint64_t reps) {
  if (reps == 0) throw config_error("reps must be >= 1");
}

inline void finish(McEstimate& e, std::uint64_t truncated, std::uint64_t simulated) {
  e.truncation_count = truncated;
  e.flagged = simulated > 0 && static_cast<double>(truncated) > truncation_flag_fraction * static_cast<double>(simulated);
}

struct JointAcc {
  MomentAccumulator<2> m; // N, R_0 * N
  std::uint64_t truncated = 0;
  double max_head_start = 0.0;
  void merge(const JointAcc& o) {
    m.merge(o.m);
    truncated += o.truncated;
    max_head_start = std::max(max_head_start, o.max_head_start);
  }
};

struct ArlAcc {
  MomentAccumulator<2> m; // N, R_N - R_0
  std::uint64_t truncated = 0;
  void merge(const ArlAcc& o) {
    m.merge(o.m);
    truncated += o.truncated;
  }
};

struct ConditionalAcc {
  ScalarAccumulator m;
  std::uint64_t rejected = 0;
  std::uint64_t truncated = 0;
  void merge(const ConditionalAcc& o) {
    m.merge(o.m);
    rejected += o.rejected;
    truncated += o.truncated;
  }
};

} // namespace detail

/// E_1 N and E_1(R_0 N) estimated on the same replications.
struct E1Joint {
  McEstimate delay;
  McEstimate cross;
  MomentAccumulator<2> moments; ///< per-replication (N, R_0 N), for SEs of linear combinations
  double max_head_start = 0.0;
};

template <DensityPair P = ExponentialPair>
E1Joint estimate_e1_joint(double a, const HeadStartLaw& law, std::uint64_t reps, std::uint64_t seed,
                          const EngineOptions& opts = {}, const P& pair = {}) {
  detail::check_reps(reps);
  detail::check_run_args(a, opts.max_steps);
  const auto scenario = ChangeScenario::at(1);
  const auto acc = run_replications<detail::JointAcc>(reps, seed, opts, [&](Rng& rng, std::uint64_t, auto& out) {
    const double r0 = law.sample(rng);
    const auto rec = run_modified_sr(pair, r0, a, scenario, rng, opts.max_steps);
    const double n = static_cast<double>(rec.n_stop);
    out.m.add({n, r0 * n});
    out.truncated += rec.truncated ? 1 : 0;
    out.max_head_start = std::max(out.max_head_start, r0);
  });

  E1Joint j;
  j.delay = acc.m.estimate(0, seed);
  j.cross = acc.m.estimate(1, seed);
  detail::finish(j.delay, acc.truncated, reps);
  detail::finish(j.cross, acc.truncated, reps);
  j.moments = acc.m;
  j.max_head_start = acc.max_head_start;
  return j;
}

/// E_1 N_A: every observation is post-change, each replication draws a fresh R_0.
template <DensityPair P = ExponentialPair>
McEstimate estimate_e1_delay(double a, const HeadStartLaw& law, std::uint64_t reps, std::uint64_t seed,
                             const EngineOptions& opts = {}, const P& pair = {}) {
  return estimate_e1_joint(a, law, reps, seed, opts, pair).delay;
}

/// E_1(R_0 N_A).
template <DensityPair P = ExponentialPair>
McEstimate estimate_cross_term(double a, const HeadStartLaw& law, std::uint64_t reps, std::uint64_t seed,
                               const EngineOptions& opts = {}, const P& pair = {}) {
  return estimate_e1_joint(a, law, reps, seed, opts, pair).cross;
}

/// E_inf N_A together with E_inf(R_N - R_0) from the same runs. The two agree
/// in expectation because R_n - R_0 - n is a P_inf martingale.
struct ArlFalse {
  McEstimate arl;
  McEstimate increment;
  MomentAccumulator<2> moments;
};

template <DensityPair P = ExponentialPair>
ArlFalse estimate_arl_false_joint(double a, const HeadStartLaw& law, std::uint64_t reps, std::uint64_t seed,
                                  const EngineOptions& opts = {}, const P& pair = {}) {
  detail::check_reps(reps);
  detail::check_run_args(a, opts.max_steps);
  const auto scenario = ChangeScenario::never();
  const auto acc = run_replications<detail::ArlAcc>(reps, seed, opts, [&](Rng& rng, std::uint64_t, auto& out) {
    const double r0 = law.sample(rng);
    const auto rec = run_modified_sr(pair, r0, a, scenario, rng, opts.max_steps);
    out.m.add({static_cast<double>(rec.n_stop), rec.final_stat - r0});
    out.truncated += rec.truncated ? 1 : 0;
  });
  ArlFalse r;
  r.arl = acc.m.estimate(0, seed);
  r.increment = acc.m.estimate(1, seed);
  detail::finish(r.arl, acc.truncated, reps);
  detail::finish(r.increment, acc.truncated, reps);
  r.moments = acc.m;
  return r;
}

template <DensityPair P = ExponentialPair>
McEstimate estimate_arl_false(double a, const HeadStartLaw& law, std::uint64_t reps, std::uint64_t seed,
                              const EngineOptions& opts = {}, const P& pair = {}) {
  return estimate_arl_false_joint(a, law, reps, seed, opts, pair).arl;
}

/// E_k(N - k + 1 | N >= k - 1) by rejection: simulate under P_k and discard
/// replications that alarmed before k - 1. `rejected` reports the discards.
template <DensityPair P = ExponentialPair>
McEstimate estimate_conditional_delay(double a, const HeadStartLaw& law, std::uint64_t k, std::uint64_t reps,
                                      std::uint64_t seed, const EngineOptions& opts = {}, const P& pair = {}) {
  detail::check_reps(reps);
  detail::check_run_args(a, opts.max_steps);
  const auto scenario = ChangeScenario::at(k);
  const auto acc = run_replications<detail::ConditionalAcc>(reps, seed, opts, [&](Rng& rng, std::uint64_t, auto& out) {
    const double r0 = law.sample(rng);
    const auto rec = run_modified_sr(pair, r0, a, scenario, rng, opts.max_steps);
    out.truncated += rec.truncated ? 1 : 0;
    if (rec.n_stop + 1 < k) {
      ++out.rejected;
      return;
    }
    out.m.add({static_cast<double>(rec.n_stop + 1) - static_cast<double>(k)});
  });
  if (acc.m.count() == 0)
    throw undefined_conditional(fmt::format("conditional delay at k = {}: every replication alarmed before k - 1", k));
  McEstimate e = acc.m.estimate(0, seed);
  e.rejected = acc.rejected;
  detail::finish(e, acc.truncated, reps);
  return e;
}

/// Conditional delays for k = 1..K. Undefined entries stay empty.
struct DelayProfile {
  struct Entry {
    std::uint64_t k = 0;
    std::optional<McEstimate> estimate;
    std::uint64_t rejected = 0;
  };
  std::vector<Entry> entries;

  /// D(N) restricted to the grid: the largest defined entry.
  std::optional<McEstimate> sup() const {
    std::optional<McEstimate> best;
    for (const auto& e : entries)
      if (e.estimate && (!best || e.estimate->mean > best->mean)) best = e.estimate;
    return best;
  }
};

template <DensityPair P = ExponentialPair>
DelayProfile estimate_delay_profile(double a, const HeadStartLaw& law, std::uint64_t k_max, std::uint64_t reps,
                                    std::uint64_t seed, const EngineOptions& opts = {}, const P& pair = {}) {
  if (k_max == 0) throw config_error("delay profile needs k_max >= 1");
  DelayProfile profile;
  for (std::uint64_t k = 1; k <= k_max; ++k) {
    DelayProfile::Entry entry;
    entry.k = k;
    try {
      entry.estimate = estimate_conditional_delay(a, law, k, reps, sub_seed(seed, k), opts, pair);
      entry.rejected = entry.estimate->rejected;
    } catch (const undefined_conditional&) {
      entry.rejected = reps;
    }
    profile.entries.push_back(entry);
  }
  return profile;
}

/// Mean of the unstopped SR statistic R_n, n = 1..steps, under `scenario`.
template <DensityPair P = ExponentialPair>
std::vector<McEstimate> estimate_sr_drift(const HeadStartLaw& law, std::uint64_t steps, ChangeScenario scenario,
                                          std::uint64_t reps, std::uint64_t seed, const EngineOptions& opts = {},
                                          const P& pair = {}) {
  detail::check_reps(reps);
  struct Acc {
    std::vector<ScalarAccumulator> by_step;
    void merge(const Acc& o) {
      if (by_step.size() < o.by_step.size()) by_step.resize(o.by_step.size());
      for (std::size_t i = 0; i < o.by_step.size(); ++i) by_step[i].merge(o.by_step[i]);
    }
  };
  const auto acc = run_replications<Acc>(reps, seed, opts, [&](Rng& rng, std::uint64_t, Acc& out) {
    if (out.by_step.size() < steps) out.by_step.resize(steps);
    double r = law.sample(rng);
    for (std::uint64_t n = 1; n <= steps; ++n) {
      r = sr_update(r, scenario.draw_lr(pair, n, rng));
      out.by_step[n - 1].add({r});
    }
  });
  std::vector<McEstimate> out;
  out.reserve(steps);
  for (const auto& s : acc.by_step) out.push_back(s.estimate(0, seed));
  return out;
}

} // namespace qdetect

// End-to-end acceptance run: one PASS/FAIL line per criterion, nonzero exit
// if any criterion fails. Takes a few minutes on one core.

#include <array>
#include <chrono>
#include <cstring>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <fmt/format.h>

#include "commands.hpp"
#include "qdetect/qdetect.hpp"

using namespace qdetect;
using boost::multiprecision::cpp_rational;

namespace {

constexpr std::uint64_t seed = 20240417;
constexpr std::uint64_t reps = 1'000'000;
const std::array<double, 6> grid{1.5, 1.6, 1.7, 1.8, 1.9, 1.98};

// reference Monte Carlo column with its standard errors, and the factorized column
const std::array<double, 6> reference_mc{0.5799, 0.6194, 0.6589, 0.6993, 0.7417, 0.7739};
const std::array<double, 6> reference_mc_se{0.0007, 0.0008, 0.0008, 0.0008, 0.0008, 0.0009};
const std::array<double, 6> reference_factorized{0.4115, 0.4433, 0.4757, 0.5090, 0.5430, 0.5708};

int failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", id, ok ? "PASS" : "FAIL", what.c_str());
  std::printf("    %s\n", detail.c_str());
  std::fflush(stdout);
  failures += ok ? 0 : 1;
}

double z_of(double x, double y, double se) { return se > 0 ? (x - y) / se : (x == y ? 0.0 : INFINITY); }

struct Table1Cell {
  E1Joint joint;
  double with_cross = 0, with_cross_se = 0, factorized = 0;
};

std::vector<Table1Cell> table1(const EngineOptions& opts) {
  std::vector<Table1Cell> cells;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double a = grid[i];
    Table1Cell c;
    c.joint = estimate_e1_joint(a, HeadStartLaw::uniform_product(a), reps, sub_seed(seed, i), opts);
    c.with_cross = e1_delay_with_cross_term(p0_exact(a), mu0_exact(a), c.joint.cross.mean);
    c.with_cross_se = p0_exact(a) * c.joint.cross.std_error;
    c.factorized = e1_delay_factorized(p0_exact(a), mu0_exact(a));
    cells.push_back(c);
  }
  return cells;
}

bool same_bits(double x, double y) { return std::memcmp(&x, &y, sizeof x) == 0; }

} // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  const EngineOptions opts{1};
  std::printf("acceptance run: qdetect %s, seed %llu, reps %llu per cell\n", version,
              static_cast<unsigned long long>(seed), static_cast<unsigned long long>(reps));

  // 1-3: delay table
  const auto cells = table1(opts);
  {
    bool ok = true;
    std::string detail;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto& d = cells[i].joint.delay;
      const double z = z_of(d.mean, reference_mc[i], combined_se({d.std_error, reference_mc_se[i]}));
      ok = ok && std::abs(z) <= 4.0;
      detail += fmt::format("A={}: {:.4f}+-{:.4f} vs {:.4f} (z={:.2f})  ", grid[i], d.mean, d.std_error, reference_mc[i], z);
    }
    report(1, ok, "direct E_1 N_A within 4 combined SE of the reference Monte Carlo column", detail);
  }
  {
    bool ok = true;
    std::string detail;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto& c = cells[i];
      const double z = z_of(c.with_cross, c.joint.delay.mean, combined_se({c.with_cross_se, c.joint.delay.std_error}));
      ok = ok && std::abs(z) <= 4.0;
      detail += fmt::format("A={}: {:.4f} vs {:.4f} (z={:.2f})  ", grid[i], c.with_cross, c.joint.delay.mean, z);
    }
    report(2, ok, "cross-term formula fed by simulated E_1(R_0 N) agrees with direct E_1 N_A within 4 combined SE", detail);
  }
  {
    bool ok = true;
    std::string detail;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto& c = cells[i];
      const double rounded = round_half_even(c.factorized, 4);
      const double z = z_of(c.factorized, c.joint.delay.mean, c.joint.delay.std_error);
      ok = ok && rounded == reference_factorized[i] && std::abs(z) > 20.0;
      detail += fmt::format("A={}: {} (reference {:.4f}, z vs MC={:.1f})  ", grid[i], fixed4(c.factorized),
                            reference_factorized[i], z);
    }
    report(3, ok, "factorized formula reproduces the reference column exactly and misses Monte Carlo by > 20 SE", detail);
  }

  // 4: head-start closed forms
  {
    bool ok = true;
    std::string detail;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double a = grid[i];
      const auto f = functionals_oracle(HeadStartLaw::uniform_product(a), a, reps, sub_seed(seed, 100 + i), opts);
      const double dq = std::max(std::abs(p0_exact(a) - quadrature_p0(a)), std::abs(mu0_exact(a) - quadrature_mu0(a)));
      const double zp = z_of(f.p0.mean, p0_exact(a), f.p0.std_error), zm = z_of(f.mu0.mean, mu0_exact(a), f.mu0.std_error);
      ok = ok && dq <= 1e-10 && std::abs(zp) <= 4.0 && std::abs(zm) <= 4.0;
      detail += fmt::format("A={}: quad diff {:.1e}, z(p0)={:.2f}, z(mu0)={:.2f}  ", a, dq, zp, zm);
      if (a == 1.5) {
        const double ze = z_of(f.p0.mean, p0_unshifted(a), f.p0.std_error);
        ok = ok && std::abs(ze) > 20.0;
        detail += fmt::format("[unshifted p0 z={:.1f}]  ", ze);
      }
    }
    report(4, ok, "p0, mu0 closed forms match quadrature to 1e-10 and Monte Carlo within 4 SE; unshifted form rejected by > 20 SE",
           detail);
  }

  // 5: small-p limit
  {
    const double a = 1.5, c_star = 0.1;
    const auto law = HeadStartLaw::uniform_product(a);
    const std::vector<double> p_grid{0.02, 0.01, 0.005};
    const auto ref = limit_reference(a, law, c_star, 10'000'000, sub_seed(seed, 200), opts);
    const auto alloc = intercept_allocation(p_grid, 650'000'000, default_extrapolation_degree);
    const auto diag = limit_diagnostic(a, law, c_star, p_grid, alloc, sub_seed(seed, 201), opts);
    const auto v = judge_limit(diag, ref);
    const bool precise = diag.gain.enabled && diag.gain.intercept_se < std::abs(ref.gap) / 4.0;
    const bool ok = precise && std::abs(v.z_cross_term) <= 4.0 && std::abs(v.z_factorized) > 10.0;
    report(5, ok, "extrapolated small-p gain matches the cross-term limit (4 SE) and rejects the factorized one (> 10 SE)",
           fmt::format("gap={:.4f}+-{:.4f}; reps=({},{},{}); intercept={:.4f}+-{:.4f} (se/gap={:.3f}); "
                       "cross_term={:.4f}+-{:.4f} z={:.2f}; factorized={:.4f}+-{:.4f} z={:.2f}; verdict={}",
                       ref.gap, ref.gap_se, alloc[0], alloc[1], alloc[2], diag.gain.intercept, diag.gain.intercept_se,
                       diag.gain.intercept_se / std::abs(ref.gap), ref.with_cross_term, ref.with_cross_term_se,
                       v.z_cross_term, ref.factorized, ref.factorized_se, v.z_factorized, v.verdict));
  }

  // 6: head start given nu = 1
  {
    const auto law = HeadStartLaw::uniform_product(1.5);
    const auto ch = conditional_headstart_diagnostic(1.5, law, 0.005, reps, sub_seed(seed, 300), opts);
    const bool ok = std::abs(ch.z_size_biased) <= 4.0 && std::abs(ch.z_unconditional) > 4.0;
    report(6, ok, "E(R_0 | nu = 1) at p = 0.005 matches the size-biased mean and not the unconditional mean",
           fmt::format("n(nu=1)={}; conditional mean {:.4f}+-{:.4f}; size-biased {:.4f} (z={:.2f}); unconditional {:.4f} "
                       "(z={:.2f}); L1 to size-biased {:.3f}, to unconditional {:.3f}",
                       ch.nu1_count, ch.conditional_mean.mean, ch.conditional_mean.std_error, ch.size_biased_mean,
                       ch.z_size_biased, ch.unconditional_mean, ch.z_unconditional, ch.l1_size_biased, ch.l1_unconditional));
  }

  // 7: exact identities
  {
    BayesConfig bc{0.01, 0.1, 1.5, HeadStartLaw::uniform_product(1.5)};
    const auto r = estimate_bayes_risk(bc, reps, sub_seed(seed, 400), opts);
    const bool decomposition = risk_decomposition_exact(r);
    Rng rng(sub_seed(seed, 401));
    bool round_trip = true, gap = true;
    for (int i = 0; i < 2000; ++i) {
      const cpp_rational p(uniform(rng, 1e-4, 0.9)), r0(uniform(rng, 0, 10));
      round_trip = round_trip && bayes_start_statistic(p, couple_pi0(p, r0)) == r0;
      const cpp_rational er(uniform(rng, 0, 5)), e1(uniform(rng, 0, 5)), arl(uniform(rng, 0, 50)), x(uniform(rng, 0, 5)),
          c(uniform(rng, 0, 1));
      gap = gap && bayes_limit_factorized(er, e1, arl, c) - bayes_limit_with_cross_term(er, e1, arl, x, c) ==
                       bayes_limit_gap(er, e1, x, c);
    }
    report(7, decomposition && round_trip && gap, "exact identities in rational arithmetic",
           fmt::format("risk decomposition on {} shared replications: {}; couple_pi0 round trip (2000 inputs): {}; "
                       "factorized - cross_term gap identity (2000 inputs): {}",
                       r.reps, decomposition ? "exact" : "MISMATCH", round_trip ? "exact" : "MISMATCH",
                       gap ? "exact" : "MISMATCH"));
  }

  // 8: equalizer
  {
    const auto profile =
        estimate_delay_profile(1.5, HeadStartLaw::uniform_product(1.5), 10, reps, sub_seed(seed, 500), opts);
    const auto& first = *profile.entries.front().estimate;
    bool ok = true;
    std::string detail;
    for (const auto& e : profile.entries) {
      if (!e.estimate) {
        ok = false;
        detail += fmt::format("k={}: missing  ", e.k);
        continue;
      }
      const double z = z_of(e.estimate->mean, first.mean, combined_se({e.estimate->std_error, first.std_error}));
      if (e.k > 1) ok = ok && std::abs(z) <= 5.0;
      detail += fmt::format("k={}: {:.4f}+-{:.4f} n={} (z={:.2f})  ", e.k, e.estimate->mean, e.estimate->std_error,
                            e.estimate->reps, z);
    }
    report(8, ok, "conditional delays for k = 1..10 within 5 combined SE of k = 1", detail);
  }

  // 9: determinism across worker counts
  {
    EngineOptions three{3};
    const auto again = table1(three);
    bool ok = true;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      ok = ok && same_bits(cells[i].joint.delay.mean, again[i].joint.delay.mean) &&
           same_bits(cells[i].joint.delay.std_error, again[i].joint.delay.std_error) &&
           same_bits(cells[i].joint.cross.mean, again[i].joint.cross.mean) &&
           same_bits(cells[i].joint.cross.std_error, again[i].joint.cross.std_error);
    }
    BayesConfig bc{0.01, 0.1, 1.5, HeadStartLaw::uniform_product(1.5)};
    const auto r1 = estimate_bayes_risk(bc, reps, sub_seed(seed, 400), opts);
    const auto r3 = estimate_bayes_risk(bc, reps, sub_seed(seed, 400), three);
    ok = ok && r1.hits == r3.hits && r1.delay_sum == r3.delay_sum && same_bits(r1.scaled_gain.std_error, r3.scaled_gain.std_error);

    cli::RunConfig cfg;
    cfg.command = "equalizer";
    cfg.reps = 200'000;
    cfg.seed = seed;
    const auto out1 = cli::render_all(cli::run_command(cfg), OutputFormat::csv);
    cfg.workers = 3;
    const auto out3 = cli::render_all(cli::run_command(cfg), OutputFormat::csv);
    ok = ok && out1 == out3;
    report(9, ok, "bit-identical results with 1 and 3 workers",
           "delay table (6 cells, means and SEs), Bayes risk totals at p = 0.01, rendered equalizer CSV");
  }

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%d of 9 criteria failed (%.0f s)\n", failures, secs);
  return failures == 0 ? 0 : 1;
}

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "commands.hpp"

namespace {

using namespace qdetect;
using namespace qdetect::cli;

void add_common(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--a-grid", cfg.a_grid, "thresholds A")->delimiter(',');
  sub->add_option("--reps", cfg.reps, "replications per estimate");
  sub->add_option("--seed", cfg.seed, "master seed (default: $QDETECT_SEED or built-in)");
  sub->add_option("--workers", cfg.workers, "worker threads; results do not depend on it");
  sub->add_option("--max-steps", cfg.max_steps, "per-run observation cap");
  sub->add_option("--law", cfg.law, "head start: 'uniform' or 'point:<r0>'");
  sub->add_option("--format", cfg.format, "csv or md")
      ->transform(CLI::CheckedTransformer(std::map<std::string, OutputFormat>{{"csv", OutputFormat::csv},
                                                                              {"md", OutputFormat::markdown}}));
  sub->add_option("--out", cfg.output_path, "write the table here instead of stdout");
}

} // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  CLI::App app{"Change detection with a randomized Shiryaev-Roberts head start"};
  app.require_subcommand(1);

  try {
    cfg.seed = default_seed();
  } catch (const config_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_config_error;
  }

  auto* table1 = app.add_subcommand("table1", "E_1 N_A: Monte Carlo vs the two closed-form approximations");
  auto* limit = app.add_subcommand("bayes-limit", "small-p limit of the Bayes gain vs the two predictions");
  auto* equalizer = app.add_subcommand("equalizer", "conditional delay E_k(N - k + 1 | N >= k - 1) for k = 1..K");
  auto* props = app.add_subcommand("props", "martingale, ordering, exact-identity and determinism checks");
  auto* oracles = app.add_subcommand("oracles", "head-start closed forms vs quadrature and Monte Carlo");
  for (auto* sub : {table1, limit, equalizer, props, oracles}) add_common(sub, cfg);

  limit->add_option("--c-star", cfg.c_star, "delay cost per observation, scaled by p");
  limit->add_option("--p-grid", cfg.p_grid, "decreasing change probabilities")->delimiter(',');
  limit->add_option("--degree", cfg.degree, "polynomial degree of the extrapolation in p");
  limit->add_flag("--allocate", cfg.allocate, "spread reps * |p-grid| to minimize the intercept SE");
  limit->add_option("--headstart-p", cfg.headstart_p, "p for the head-start-given-nu=1 check");
  limit->add_option("--reference-reps", cfg.reference_reps, "reps behind the closed-form predictions");
  limit->add_option("--headstart-reps", cfg.headstart_reps, "reps for the head-start-given-nu=1 check");
  props->add_option("--c-star", cfg.c_star, "delay cost used by the exact decomposition check");
  equalizer->add_option("--k-max", cfg.k_max, "largest change time");
  oracles->add_flag("--inject-unshifted-p0", cfg.inject_unshifted, "use the unshifted p0 = 1 - ln(A)/2 (guard test)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_config_error;
  }
  for (auto* sub : app.get_subcommands()) {
    cfg.command = sub->get_name();
    if (sub->count("--reps") == 0) apply_default_reps(cfg);
  }

  CommandResult result;
  try {
    result = run_command(cfg);
  } catch (const config_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_config_error;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_config_error;
  } catch (const undefined_conditional& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_inconclusive;
  }

  for (const auto& m : result.messages) std::cerr << "warning: " << m << '\n';
  const std::string text = render_all(result, cfg.format);
  if (cfg.output_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(cfg.output_path, std::ios::binary);
    if (!out) {
      std::cerr << "error: cannot open " << cfg.output_path << '\n';
      return exit_config_error;
    }
    out << text;
  }
  return result.exit_code;
}

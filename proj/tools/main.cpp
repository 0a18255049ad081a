#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"
#include "uln/parallel.hpp"

int main(int argc, char** argv) {
  CLI::App app{"SGD dynamics under unbiased label noise"};
  app.set_version_flag("--version", uln::cli::kVersion);
  app.require_subcommand(1);

  uln::cli::RunOptions opts;
  opts.workers = uln::default_worker_count();
  std::uint64_t seed = 0;
  std::string out;

  const char* names[] = {"simulate", "dsm-compare", "stationary", "approx-order", "bounds", "distill"};
  const char* blurbs[] = {
      "paired noisy/noiseless SGD trajectories and stationary summary",
      "raw SGD against the two-diffusion model, side by side",
      "stationary covariance, OU covariance and anisotropy report",
      "strong approximation order of the two-diffusion iteration",
      "coverage of the generalization bounds",
      "noisy self-distillation grid",
  };
  std::vector<CLI::App*> subs;
  std::vector<CLI::Option*> seed_opts;
  for (int i = 0; i < 6; ++i) {
    auto* sub = app.add_subcommand(names[i], blurbs[i]);
    sub->add_option("--config", opts.config_path, "experiment config (INI)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory")->required();
    sub->add_option("--workers", opts.workers, "worker threads")->check(CLI::PositiveNumber);
    seed_opts.push_back(sub->add_option("--seed", seed, "override seeds.base_seed"));
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  for (int i = 0; i < 6; ++i) {
    if (!subs[i]->parsed()) continue;
    if (seed_opts[i]->count() > 0) opts.seed = seed;
    opts.out_dir = out;
    return uln::cli::run_command(uln::cli::parse_kind(names[i]), opts);
  }
  return 2;
}

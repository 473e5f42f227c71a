// Apache License, Version 2.0, refer to LICENSE.txt
//
// credglm: Bayesian credibility premiums for GLM rating classes.
//
//   credglm aggregate  --config model.conf          build the class table
//   credglm fit        --config model.conf          sample the posterior
//   credglm premiums   --config model.conf [draws]  entropic premium files
//   credglm dispersion --config model.conf [draws]  dispersion estimates
//   credglm all        --config model.conf          the full pipeline
//
// Exit codes: 0 ok, 2 data/config errors, 3 sampler initialization failure,
// 4 refit failure, 5 dispersion search stuck at the interval boundary.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cred/pipeline.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  long seed = -1;
  long chains = -1;
  long warmup = -1;
  long kept = -1;
  bool dry_run = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "model configuration file")
      ->required();
  cmd->add_option("--seed", flags.seed, "master RNG seed");
  cmd->add_option("--chains", flags.chains, "number of MCMC chains");
  cmd->add_option("--warmup", flags.warmup, "warmup iterations per chain");
  cmd->add_option("--kept", flags.kept, "kept iterations per chain");
  cmd->add_option("--out", flags.out_dir, "output directory");
  cmd->add_flag("--dry-run", flags.dry_run, "validate and report, write nothing");
}

cred::RunConfig load_config(const CommonFlags& flags) {
  std::vector<std::pair<std::string, std::string>> overrides;
  if (flags.seed >= 0) overrides.emplace_back("mcmc.seed", std::to_string(flags.seed));
  if (flags.chains > 0)
    overrides.emplace_back("mcmc.chains", std::to_string(flags.chains));
  if (flags.warmup >= 0)
    overrides.emplace_back("mcmc.warmup", std::to_string(flags.warmup));
  if (flags.kept > 0) overrides.emplace_back("mcmc.kept", std::to_string(flags.kept));
  if (!flags.out_dir.empty()) overrides.emplace_back("output.dir", flags.out_dir);
  cred::RunConfig cfg = cred::RunConfig::load(flags.config_path, overrides);
  cfg.dry_run = flags.dry_run;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian credibility premiums for GLM rating classes"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string draws_path;

  CLI::App* agg = app.add_subcommand("aggregate", "aggregate policies into risk classes");
  add_common(agg, flags);
  CLI::App* fit = app.add_subcommand("fit", "sample the posterior of (beta, phi)");
  add_common(fit, flags);
  CLI::App* prem = app.add_subcommand("premiums", "compute premium tables from draws");
  add_common(prem, flags);
  prem->add_option("draws", draws_path, "draws CSV (default: <out>/draws.csv)");
  CLI::App* disp = app.add_subcommand("dispersion", "estimate the dispersion");
  add_common(disp, flags);
  disp->add_option("draws", draws_path, "draws CSV (default: <out>/draws.csv)");
  CLI::App* all = app.add_subcommand("all", "aggregate, fit, premiums, dispersion");
  add_common(all, flags);

  CLI11_PARSE(app, argc, argv);

  cred::RunConfig cfg;
  try {
    cfg = load_config(flags);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cred::kExitData;
  }

  if (draws_path.empty()) draws_path = cfg.out_path("draws.csv");

  if (agg->parsed()) return cred::cmd_aggregate(cfg, std::cout, std::cerr);
  if (fit->parsed()) return cred::cmd_fit(cfg, std::cout, std::cerr);
  if (prem->parsed())
    return cred::cmd_premiums(cfg, draws_path, std::cout, std::cerr);
  if (disp->parsed())
    return cred::cmd_dispersion(cfg, draws_path, std::cout, std::cerr);
  return cred::cmd_all(cfg, std::cout, std::cerr);
}

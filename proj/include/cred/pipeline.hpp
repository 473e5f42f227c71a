// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "cred/config.hpp"
#include "cred/dataio.hpp"
#include "cred/entropic.hpp"
#include "cred/posterior.hpp"

namespace cred {

// Command exit codes. Argument/usage errors are handled by the CLI layer.
inline constexpr int kExitOk = 0;
inline constexpr int kExitData = 2;        // unreadable/invalid data or config
inline constexpr int kExitSampler = 3;     // sampler initialization failure
inline constexpr int kExitRefit = 4;       // IRLS over E[Y] failed
inline constexpr int kExitDispersion = 5;  // dispersion search hit endpoints

struct DispersionOptions {
  std::string method = "both";  // proper | general | both
  int replicates = 10000;
  double lo = 1e-6;
  double hi = 1000.0;
  int grid = 16;  // phi grid size for the stability diagnostic
};

// Fully resolved run settings: the parsed config file with command-line
// overrides already applied.
struct RunConfig {
  KeyValueConfig kv;
  std::string data_path;
  std::string response_col;
  std::string weight_col;
  std::vector<std::string> covariates;
  RecordSchema schema;
  TransformRules rules;
  std::map<std::string, std::string> references;
  Family family = Family::gamma();
  Link link = Link::Log;
  CoefPrior beta_prior;
  DispersionPrior phi_prior;
  McmcConfig mcmc;
  DispersionOptions dispersion;
  std::string out_dir = "out";
  bool dry_run = false;

  std::uint64_t config_hash() const { return kv.canonical_hash(); }
  std::string out_path(const std::string& filename) const;

  static RunConfig load(
      const std::string& path,
      const std::vector<std::pair<std::string, std::string>>& overrides = {});
};

// Data, design and priors assembled for one model run.
struct ModelData {
  RiskClassTable table;
  DesignInfo design;
  GlmSpec spec;
  Eigen::VectorXd y;
  PriorSpec prior;
  ReadReport read_report;
};

ModelData build_model(const RunConfig& cfg);

int cmd_aggregate(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_fit(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_premiums(const RunConfig& cfg, const std::string& draws_path,
                 std::ostream& out, std::ostream& err);
int cmd_dispersion(const RunConfig& cfg, const std::string& draws_path,
                   std::ostream& out, std::ostream& err);
int cmd_all(const RunConfig& cfg, std::ostream& out, std::ostream& err);

// Draw matrices as CSV: chain, iter, beta_0..beta_p, phi, full precision.
void write_draws_csv(const std::string& path, const PosteriorDraws& draws,
                     std::uint64_t config_hash);
PosteriorDraws read_draws_csv(const std::string& path);

}  // namespace cred

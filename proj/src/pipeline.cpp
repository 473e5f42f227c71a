// Apache License, Version 2.0, refer to LICENSE.txt
#include "cred/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "cred/rng.hpp"

namespace cred {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string quoted = "\"";
  for (char c : s) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  return quoted + "\"";
}

std::string header_comment(std::uint64_t hash, std::uint64_t seed) {
  char buf[80];
  std::snprintf(buf, sizeof(buf), "# config_hash=%016llx seed=%llu\n",
                static_cast<unsigned long long>(hash),
                static_cast<unsigned long long>(seed));
  return buf;
}

std::ofstream open_output(const std::string& path) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);  // binary: stable line endings
  if (!out) throw std::runtime_error("cannot write output file: " + path);
  return out;
}

Family family_from_name(const std::string& name) {
  if (name == "normal" || name == "gaussian") return Family::normal();
  if (name == "poisson") return Family::poisson();
  if (name == "gamma") return Family::gamma();
  if (name == "inverse_gaussian" || name == "inverse-gaussian")
    return Family::inverse_gaussian();
  throw std::runtime_error("config: unknown family '" + name + "'");
}

// "name(a,b)" -> {name, {a, b}}.
std::pair<std::string, std::vector<double>> parse_call(const std::string& text,
                                                       const std::string& key) {
  size_t open = text.find('(');
  size_t close = text.rfind(')');
  if (open == std::string::npos || close == std::string::npos || close < open)
    throw std::runtime_error("config: key '" + key +
                             "' expects name(arg,...), got '" + text + "'");
  std::string name = trim(text.substr(0, open));
  std::vector<double> args;
  for (const auto& tok : split_list(text.substr(open + 1, close - open - 1))) {
    try {
      args.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw std::runtime_error("config: bad numeric argument '" + tok +
                               "' in key '" + key + "'");
    }
  }
  return {name, args};
}

CoefPrior parse_beta_prior(const std::string& text, const std::string& key) {
  auto [name, args] = parse_call(text, key);
  if (args.size() != 2)
    throw std::runtime_error("config: key '" + key + "' expects two arguments");
  CoefPrior prior;
  if (name == "uniform") {
    prior.kind = CoefPrior::Kind::UniformBox;
  } else if (name == "normal") {
    prior.kind = CoefPrior::Kind::Normal;
  } else {
    throw std::runtime_error("config: key '" + key +
                             "' expects uniform(lo,hi) or normal(mean,sd)");
  }
  prior.a = args[0];
  prior.b = args[1];
  return prior;
}

DispersionPrior parse_phi_prior(const std::string& text,
                                const std::string& key) {
  auto [name, args] = parse_call(text, key);
  DispersionPrior prior;
  if (name == "uniform" && args.size() == 2) {
    prior.kind = DispersionPrior::Kind::UniformBox;
    prior.a = args[0];
    prior.b = args[1];
  } else if (name == "fixed" && args.size() == 1) {
    prior.kind = DispersionPrior::Kind::Fixed;
    prior.a = args[0];
  } else {
    throw std::runtime_error("config: key '" + key +
                             "' expects uniform(lo,hi) or fixed(value)");
  }
  return prior;
}

double parse_bound(const std::string& tok, const std::string& key) {
  if (tok == "inf" || tok == "+inf")
    return std::numeric_limits<double>::infinity();
  try {
    return std::stod(tok);
  } catch (const std::exception&) {
    throw std::runtime_error("config: bad interval bound '" + tok +
                             "' in key '" + key + "'");
  }
}

// "P1:[0,1.2) P2:[1.2,1.86) P3:[1.86,inf)"
TransformRules::Binning parse_binning(const std::string& column,
                                      const std::string& text,
                                      const std::string& key) {
  TransformRules::Binning bin;
  bin.column = column;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) {
    size_t colon = tok.find(':');
    if (colon == std::string::npos || colon + 1 >= tok.size())
      throw std::runtime_error("config: key '" + key +
                               "' expects label:[lo,hi) tokens");
    TransformRules::Binning::Interval iv;
    iv.label = tok.substr(0, colon);
    std::string range = tok.substr(colon + 1);
    size_t comma = range.find(',');
    if (range.size() < 5 || range.front() != '[' || range.back() != ')' ||
        comma == std::string::npos)
      throw std::runtime_error("config: key '" + key +
                               "' expects half-open intervals [lo,hi)");
    iv.lo = parse_bound(trim(range.substr(1, comma - 1)), key);
    iv.hi = parse_bound(trim(range.substr(comma + 1, range.size() - comma - 2)),
                        key);
    if (!(iv.lo < iv.hi))
      throw std::runtime_error("config: key '" + key +
                               "' has an empty interval for " + iv.label);
    bin.intervals.push_back(std::move(iv));
  }
  if (bin.intervals.empty())
    throw std::runtime_error("config: key '" + key + "' defines no intervals");
  return bin;
}

TransformRules::LevelMap parse_level_map(const std::string& column,
                                         const std::string& text,
                                         const std::string& key) {
  TransformRules::LevelMap lm;
  lm.column = column;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) {
    size_t colon = tok.find(':');
    if (colon == std::string::npos || colon + 1 >= tok.size())
      throw std::runtime_error("config: key '" + key +
                               "' expects from:to tokens");
    lm.mapping[tok.substr(0, colon)] = tok.substr(colon + 1);
  }
  if (lm.mapping.empty())
    throw std::runtime_error("config: key '" + key + "' defines no mappings");
  return lm;
}

}  // namespace

std::string RunConfig::out_path(const std::string& filename) const {
  return (std::filesystem::path(out_dir) / filename).string();
}

RunConfig RunConfig::load(
    const std::string& path,
    const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig cfg;
  cfg.kv = KeyValueConfig::parse_file(path);
  for (const auto& [key, value] : overrides) cfg.kv.set(key, value);

  cfg.data_path = cfg.kv.get("data.path");
  cfg.response_col = cfg.kv.get("data.response");
  cfg.weight_col = cfg.kv.get("data.weight");
  cfg.covariates = split_list(cfg.kv.get("model.covariates"));
  if (cfg.covariates.empty())
    throw std::runtime_error("config: model.covariates lists no columns");

  cfg.family = family_from_name(cfg.kv.get_or("model.family", "gamma"));
  cfg.link = cfg.kv.has("model.link")
                 ? link_from_name(cfg.kv.get("model.link"))
                 : default_link(cfg.family);

  for (const auto& [col, text] : cfg.kv.section("bins"))
    cfg.rules.bins.push_back(parse_binning(col, text, "bins." + col));
  for (const auto& [col, text] : cfg.kv.section("level_maps"))
    cfg.rules.maps.push_back(parse_level_map(col, text, "level_maps." + col));
  for (const auto& [col, level] : cfg.kv.section("references"))
    cfg.references[col] = level;

  // Column schema: explicit `columns.` entries first, then every used column
  // with its natural kind (binned covariates are numeric before transform).
  auto has_bin = [&cfg](const std::string& col) {
    for (const auto& b : cfg.rules.bins)
      if (b.column == col) return true;
    return false;
  };
  for (const auto& [col, kind] : cfg.kv.section("columns")) {
    if (kind == "number")
      cfg.schema.fields.emplace_back(col, ColumnKind::Number);
    else if (kind == "string" || kind == "label")
      cfg.schema.fields.emplace_back(col, ColumnKind::Label);
    else
      throw std::runtime_error("config: columns." + col +
                               " must be 'number' or 'string'");
  }
  auto ensure = [&cfg](const std::string& col, ColumnKind kind) {
    if (!cfg.schema.has(col)) cfg.schema.fields.emplace_back(col, kind);
  };
  ensure(cfg.response_col, ColumnKind::Number);
  ensure(cfg.weight_col, ColumnKind::Number);
  for (const auto& cov : cfg.covariates)
    ensure(cov, has_bin(cov) ? ColumnKind::Number : ColumnKind::Label);

  cfg.beta_prior =
      parse_beta_prior(cfg.kv.get_or("prior.beta", "uniform(-20,20)"),
                       "prior.beta");
  std::string phi_default =
      cfg.family.fixed_dispersion() ? "fixed(1)" : "uniform(0,1000)";
  cfg.phi_prior = parse_phi_prior(cfg.kv.get_or("prior.phi", phi_default),
                                  "prior.phi");

  cfg.mcmc.chains = static_cast<int>(cfg.kv.get_long_or("mcmc.chains", 3));
  cfg.mcmc.warmup = static_cast<int>(cfg.kv.get_long_or("mcmc.warmup", 2000));
  cfg.mcmc.kept = static_cast<int>(cfg.kv.get_long_or("mcmc.kept", 28000));
  cfg.mcmc.seed =
      static_cast<std::uint64_t>(cfg.kv.get_long_or("mcmc.seed", 1));
  cfg.mcmc.target_accept =
      cfg.kv.get_double_or("mcmc.target_accept", 0.234);

  cfg.dispersion.method = cfg.kv.get_or("dispersion.method", "both");
  if (cfg.dispersion.method != "proper" && cfg.dispersion.method != "general" &&
      cfg.dispersion.method != "both")
    throw std::runtime_error(
        "config: dispersion.method must be proper, general or both");
  cfg.dispersion.replicates =
      static_cast<int>(cfg.kv.get_long_or("dispersion.replicates", 10000));
  cfg.dispersion.lo = cfg.kv.get_double_or("dispersion.lo", 1e-6);
  double hi_default = cfg.phi_prior.kind == DispersionPrior::Kind::UniformBox
                          ? cfg.phi_prior.b
                          : 1000.0;
  cfg.dispersion.hi = cfg.kv.get_double_or("dispersion.hi", hi_default);
  cfg.dispersion.grid =
      static_cast<int>(cfg.kv.get_long_or("dispersion.grid", 16));

  cfg.out_dir = cfg.kv.get_or("output.dir", "out");
  return cfg;
}

ModelData build_model(const RunConfig& cfg) {
  ModelData model;
  PolicyFrame frame =
      read_policies(cfg.data_path, cfg.schema, &model.read_report);
  if (frame.records.empty())
    throw std::runtime_error(cfg.data_path + ": no usable data rows");
  transform_covariates(frame, cfg.rules);
  model.table = aggregate_classes(frame, cfg.response_col, cfg.weight_col,
                                  cfg.covariates, cfg.family);
  model.design = build_design(model.table, cfg.references);

  const Eigen::Index m = static_cast<Eigen::Index>(model.table.rows.size());
  model.spec.family = cfg.family;
  model.spec.link = cfg.link;
  model.spec.design = model.design.matrix;
  model.spec.weights.resize(m);
  model.y.resize(m);
  model.spec.class_labels.clear();
  for (Eigen::Index i = 0; i < m; ++i) {
    model.spec.weights[i] = model.table.rows[i].w;
    model.y[i] = model.table.rows[i].ybar;
    model.spec.class_labels.push_back(
        std::to_string(model.table.rows[i].class_id));
  }
  model.spec.validate();

  model.prior.coef.assign(static_cast<size_t>(model.spec.n_coef()),
                          cfg.beta_prior);
  model.prior.dispersion = cfg.phi_prior;
  model.prior.validate(cfg.family, model.spec.n_coef());
  return model;
}

namespace {

void report_read_problems(const ModelData& model, std::ostream& err) {
  for (const auto& bad : model.read_report.rejected)
    err << "note: skipped line " << bad.line << ": " << bad.message << "\n";
  for (const auto& notice : model.table.notices)
    err << "note: " << notice << "\n";
}

void write_classes_csv(const std::string& path, const RunConfig& cfg,
                       const RiskClassTable& table) {
  auto out = open_output(path);
  out << header_comment(cfg.config_hash(), cfg.mcmc.seed);
  out << "class_id";
  for (const auto& cov : table.covariates) out << "," << csv_field(cov);
  out << ",ybar,w\n";
  for (const auto& row : table.rows) {
    out << row.class_id;
    for (const auto& lvl : row.levels) out << "," << csv_field(lvl);
    out << "," << fmt(row.ybar) << "," << fmt(row.w) << "\n";
  }
}

struct PremiumOutputs {
  Eigen::VectorXd entropic;
  Eigen::VectorXd frequentist;
  EntropicFit efit;
};

}  // namespace

int cmd_aggregate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  ModelData model;
  try {
    model = build_model(cfg);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  report_read_problems(model, err);
  out << "policies read: " << model.read_report.rows_read
      << "  risk classes: " << model.table.rows.size() << "\n";
  if (cfg.dry_run) {
    out << "dry run: not writing " << cfg.out_path("classes.csv") << "\n";
    return kExitOk;
  }
  try {
    write_classes_csv(cfg.out_path("classes.csv"), cfg, model.table);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  out << "wrote " << cfg.out_path("classes.csv") << "\n";
  return kExitOk;
}

void write_draws_csv(const std::string& path, const PosteriorDraws& draws,
                     std::uint64_t config_hash) {
  auto out = open_output(path);
  out << header_comment(config_hash, draws.seed);
  const Eigen::Index width = draws.n_params();
  out << "chain,iter";
  for (Eigen::Index j = 0; j + 1 < width; ++j) out << ",beta_" << j;
  out << ",phi\n";
  for (size_t c = 0; c < draws.chains.size(); ++c) {
    const auto& chain = draws.chains[c];
    for (Eigen::Index r = 0; r < chain.rows(); ++r) {
      out << (c + 1) << "," << (r + 1);
      for (Eigen::Index j = 0; j < width; ++j) out << "," << fmt(chain(r, j));
      out << "\n";
    }
  }
}

PosteriorDraws read_draws_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open draws file: " + path);
  std::string line;
  PosteriorDraws draws;
  std::vector<std::vector<double>> rows;
  long width = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      size_t pos = line.find("seed=");
      if (pos != std::string::npos)
        draws.seed = std::strtoull(line.c_str() + pos + 5, nullptr, 10);
      continue;
    }
    if (line.rfind("chain,", 0) == 0) continue;  // header row
    std::vector<double> cells;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        cells.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw std::runtime_error(path + ": malformed draws row '" + line + "'");
      }
    }
    if (cells.size() < 4)
      throw std::runtime_error(path + ": draws rows need chain,iter,beta..,phi");
    if (width < 0) width = static_cast<long>(cells.size());
    if (static_cast<long>(cells.size()) != width)
      throw std::runtime_error(path + ": ragged draws rows");
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) throw std::runtime_error(path + ": no draws");

  const long params = width - 2;
  long n_chains = 0;
  for (const auto& r : rows)
    n_chains = std::max(n_chains, static_cast<long>(r[0]));
  if (n_chains < 1) throw std::runtime_error(path + ": bad chain indices");
  std::vector<long> counts(n_chains, 0);
  for (const auto& r : rows) {
    long c = static_cast<long>(r[0]);
    if (c < 1 || c > n_chains)
      throw std::runtime_error(path + ": bad chain index");
    ++counts[c - 1];
  }
  for (long c = 0; c < n_chains; ++c) {
    if (counts[c] == 0) throw std::runtime_error(path + ": empty chain");
    if (counts[c] != counts[0])
      throw std::runtime_error(path + ": chains have unequal lengths");
  }
  draws.chains.assign(n_chains, Eigen::MatrixXd(counts[0], params));
  std::vector<long> cursor(n_chains, 0);
  for (const auto& r : rows) {
    long c = static_cast<long>(r[0]) - 1;
    for (long j = 0; j < params; ++j)
      draws.chains[c](cursor[c], j) = r[2 + j];
    ++cursor[c];
  }
  return draws;
}

namespace {

void write_diagnostics(const std::string& path, const RunConfig& cfg,
                       const PosteriorDraws& draws) {
  auto out = open_output(path);
  out << header_comment(cfg.config_hash(), draws.seed);
  out << "chains: " << draws.chains.size() << "  warmup: " << draws.warmup
      << "  kept per chain: "
      << (draws.chains.empty() ? 0 : draws.chains.front().rows()) << "\n";
  out << "acceptance rates:";
  for (size_t c = 0; c < draws.acceptance_rates.size(); ++c)
    out << " chain" << (c + 1) << "=" << fmt(draws.acceptance_rates[c]);
  out << "\n";
  if (draws.rhat.size() == 0) {
    out << "split R-hat: unavailable (need at least two chains of 100+ draws)\n";
    return;
  }
  out << "parameter,rhat,ess\n";
  for (Eigen::Index j = 0; j < draws.rhat.size(); ++j) {
    std::string name = j + 1 < draws.rhat.size()
                           ? "beta_" + std::to_string(j)
                           : std::string("phi");
    out << name << "," << fmt(draws.rhat[j]) << "," << fmt(draws.ess[j])
        << "\n";
  }
  bool mixed = true;
  for (Eigen::Index j = 0; j < draws.rhat.size(); ++j)
    if (draws.rhat[j] > 1.05) mixed = false;
  out << (mixed ? "all split R-hat <= 1.05\n"
                : "warning: split R-hat above 1.05; inspect the chains\n");
}

}  // namespace

int cmd_fit(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  ModelData model;
  try {
    model = build_model(cfg);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  report_read_problems(model, err);
  out << "model: " << cfg.family.name() << " / " << link_name(cfg.link)
      << ", classes: " << model.table.rows.size()
      << ", coefficients: " << model.spec.n_coef() << "\n";
  if (cfg.dry_run) {
    out << "dry run: would sample " << cfg.mcmc.chains << " chains x ("
        << cfg.mcmc.warmup << " warmup + " << cfg.mcmc.kept << " kept)\n";
    return kExitOk;
  }
  PosteriorDraws draws;
  try {
    draws = run_mcmc(model.spec, model.prior, model.y, cfg.mcmc);
  } catch (const SamplerInitError& e) {
    err << "error: " << e.what() << "\n";
    return kExitSampler;
  }
  try {
    write_draws_csv(cfg.out_path("draws.csv"), draws, cfg.config_hash());
    write_diagnostics(cfg.out_path("diagnostics.txt"), cfg, draws);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  out << "wrote " << cfg.out_path("draws.csv") << " and "
      << cfg.out_path("diagnostics.txt") << "\n";
  if (draws.rhat.size() > 0) {
    double worst = draws.rhat.maxCoeff();
    out << "max split R-hat: " << fmt(worst) << "\n";
    if (worst > 1.05)
      err << "warning: split R-hat " << fmt(worst)
          << " exceeds 1.05; chains may not have mixed, consider a longer "
             "warmup\n";
  }
  return kExitOk;
}

namespace {

int compute_premiums(const ModelData& model, const PosteriorDraws& draws,
                     PremiumOutputs& result, std::ostream& err) {
  try {
    result.efit = entropic_beta(model.spec, draws);
    result.entropic = entropic_premium(model.spec, result.efit.beta_star);
  } catch (const EntropicRefitError& e) {
    err << "error: " << e.what() << "\n";
    return kExitRefit;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRefit;
  }
  try {
    GlmFit freq = fit_irls(model.spec, model.y);
    result.frequentist = freq.mu;
  } catch (const IrlsError& e) {
    err << "error: frequentist comparison fit failed: " << e.what() << "\n";
    return kExitRefit;
  }
  return kExitOk;
}

}  // namespace

int cmd_premiums(const RunConfig& cfg, const std::string& draws_path,
                 std::ostream& out, std::ostream& err) {
  ModelData model;
  PosteriorDraws draws;
  try {
    model = build_model(cfg);
    draws = read_draws_csv(draws_path);
    if (draws.n_params() != model.spec.n_coef() + 1)
      throw std::runtime_error(draws_path +
                               ": draw width does not match the design");
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  report_read_problems(model, err);
  if (cfg.dry_run) {
    out << "dry run: " << draws.total_draws() << " draws over "
        << model.table.rows.size() << " classes; not writing premium files\n";
    return kExitOk;
  }

  PremiumOutputs result;
  if (int rc = compute_premiums(model, draws, result, err); rc != kExitOk)
    return rc;

  try {
    {
      auto f = open_output(cfg.out_path("coefficients.csv"));
      f << header_comment(cfg.config_hash(), draws.seed);
      f << "term,estimate\n";
      for (Eigen::Index j = 0; j < result.efit.beta_star.size(); ++j)
        f << csv_field(model.design.column_names[j]) << ","
          << fmt(result.efit.beta_star[j]) << "\n";
    }
    {
      auto f = open_output(cfg.out_path("premiums.csv"));
      f << header_comment(cfg.config_hash(), draws.seed);
      f << "class_id";
      for (const auto& cov : model.table.covariates) f << "," << csv_field(cov);
      f << ",w,ybar,entropic_premium,glm_premium\n";
      for (size_t i = 0; i < model.table.rows.size(); ++i) {
        const auto& row = model.table.rows[i];
        f << row.class_id;
        for (const auto& lvl : row.levels) f << "," << csv_field(lvl);
        f << "," << fmt(row.w) << "," << fmt(row.ybar) << ","
          << fmt(result.entropic[i]) << "," << fmt(result.frequentist[i])
          << "\n";
      }
    }
    {
      std::vector<Eigen::Index> order(model.table.rows.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](Eigen::Index a, Eigen::Index b) {
                         return result.entropic[a] < result.entropic[b];
                       });
      auto f = open_output(cfg.out_path("comparison.csv"));
      f << header_comment(cfg.config_hash(), draws.seed);
      f << "rank,class_id,entropic,frequentist\n";
      for (size_t r = 0; r < order.size(); ++r) {
        Eigen::Index i = order[r];
        f << (r + 1) << "," << model.table.rows[i].class_id << ","
          << fmt(result.entropic[i]) << "," << fmt(result.frequentist[i])
          << "\n";
      }
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  out << "wrote " << cfg.out_path("coefficients.csv") << ", "
      << cfg.out_path("premiums.csv") << ", " << cfg.out_path("comparison.csv")
      << "\n";
  return kExitOk;
}

int cmd_dispersion(const RunConfig& cfg, const std::string& draws_path,
                   std::ostream& out, std::ostream& err) {
  ModelData model;
  PosteriorDraws draws;
  try {
    model = build_model(cfg);
    draws = read_draws_csv(draws_path);
    if (draws.n_params() != model.spec.n_coef() + 1)
      throw std::runtime_error(draws_path +
                               ": draw width does not match the design");
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  report_read_problems(model, err);

  std::ostringstream report;
  report << header_comment(cfg.config_hash(), draws.seed);

  if (cfg.family.fixed_dispersion() ||
      cfg.phi_prior.kind == DispersionPrior::Kind::Fixed) {
    double value = cfg.family.fixed_dispersion()
                       ? *cfg.family.fixed_dispersion()
                       : cfg.phi_prior.a;
    report << "dispersion fixed at " << fmt(value)
           << "; nothing to estimate\n";
    if (!cfg.dry_run) {
      auto f = open_output(cfg.out_path("dispersion.txt"));
      f << report.str();
      out << "wrote " << cfg.out_path("dispersion.txt") << "\n";
    } else {
      out << report.str();
    }
    return kExitOk;
  }

  if (cfg.dry_run) {
    out << "dry run: would draw " << 2 * cfg.dispersion.replicates
        << " predictive replicates and search phi in [" << cfg.dispersion.lo
        << ", " << cfg.dispersion.hi << "]\n";
    return kExitOk;
  }

  EntropicFit efit;
  try {
    efit = entropic_beta(model.spec, draws);
  } catch (const EntropicRefitError& e) {
    err << "error: " << e.what() << "\n";
    return kExitRefit;
  }
  Eigen::VectorXd mu_star = entropic_premium(model.spec, efit.beta_star);

  const int n = std::max(cfg.dispersion.replicates, 100);
  // 2N replicates: the first N feed both estimates, the full set feeds the
  // doubling diagnostic. Both paths share the same predictive sample.
  std::vector<Eigen::VectorXd> reps = predictive_draws(
      model.spec, draws, 2 * n, rng::derive_seed(cfg.mcmc.seed, 0xD15));
  std::vector<Eigen::VectorXd> head(reps.begin(), reps.begin() + n);

  double mean_dev = 0.0;
  for (const auto& rep : head)
    mean_dev += total_deviance(model.spec, rep, mu_star);
  mean_dev /= static_cast<double>(head.size());
  report << "replicates: " << n << " (plus " << n
         << " for the stability check)\n";
  report << "mean predictive deviance: " << fmt(mean_dev) << "\n";

  Interval interval{cfg.dispersion.lo, cfg.dispersion.hi};
  bool want_proper =
      cfg.dispersion.method == "proper" || cfg.dispersion.method == "both";
  bool want_general =
      cfg.dispersion.method == "general" || cfg.dispersion.method == "both";

  int attempted = 0, endpoint_failures = 0;
  double phi_proper = std::numeric_limits<double>::quiet_NaN();
  double phi_general = std::numeric_limits<double>::quiet_NaN();

  if (want_proper) {
    ++attempted;
    try {
      phi_proper = dispersion_proper(cfg.family, model.spec.weights, mean_dev,
                                     interval);
      report << "proper path phi: " << fmt(phi_proper) << "\n";
    } catch (const DispersionEndpointError& e) {
      ++endpoint_failures;
      report << "proper path failed: " << e.what() << "\n";
    }
  }
  if (want_general) {
    ++attempted;
    try {
      phi_general = dispersion_general(model.spec, head, mu_star, interval);
      report << "general path phi: " << fmt(phi_general) << "\n";
    } catch (const DispersionEndpointError& e) {
      ++endpoint_failures;
      report << "general path failed: " << e.what() << "\n";
    }
  }
  if (std::isfinite(phi_proper) && std::isfinite(phi_general))
    report << "relative gap between paths: "
           << fmt(std::fabs(phi_general - phi_proper) /
                  std::max(phi_proper, 1e-300))
           << "\n";

  // Doubling diagnostic on a log-spaced grid around the estimate.
  double center = std::isfinite(phi_general)
                      ? phi_general
                      : (std::isfinite(phi_proper)
                             ? phi_proper
                             : std::sqrt(interval.lo * interval.hi));
  std::vector<double> grid;
  int g = std::max(cfg.dispersion.grid, 2);
  double glo = std::max(interval.lo, center / 10.0);
  double ghi = std::min(interval.hi, center * 10.0);
  for (int i = 0; i < g; ++i)
    grid.push_back(glo * std::pow(ghi / glo, i / static_cast<double>(g - 1)));
  double stability = rn_stability(model.spec, reps, mu_star, grid);
  report << "objective stability across N doubling (max gap on phi grid): "
         << fmt(stability) << "\n";

  if (endpoint_failures == attempted && attempted > 0) {
    err << report.str();
    err << "error: every dispersion path ended at the search boundary\n";
    return kExitDispersion;
  }
  try {
    auto f = open_output(cfg.out_path("dispersion.txt"));
    f << report.str();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  out << "wrote " << cfg.out_path("dispersion.txt") << "\n";
  return kExitOk;
}

int cmd_all(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  if (int rc = cmd_aggregate(cfg, out, err); rc != kExitOk) return rc;
  if (int rc = cmd_fit(cfg, out, err); rc != kExitOk) return rc;
  if (cfg.dry_run) return kExitOk;
  std::string draws_path = cfg.out_path("draws.csv");
  if (int rc = cmd_premiums(cfg, draws_path, out, err); rc != kExitOk)
    return rc;
  return cmd_dispersion(cfg, draws_path, out, err);
}

}  // namespace cred

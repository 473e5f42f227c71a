// Apache License, Version 2.0, refer to LICENSE.txt
#include "cred/dataio.hpp"

#include <algorithm>

#include "cred/config.hpp"
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

namespace cred {

int RecordSchema::slot_of(const std::string& name, ColumnKind kind) const {
  int slot = 0;
  for (const auto& [fname, fkind] : fields) {
    if (fkind != kind) continue;
    if (fname == name) return slot;
    ++slot;
  }
  return -1;
}

ColumnKind RecordSchema::kind_of(const std::string& name) const {
  for (const auto& [fname, fkind] : fields)
    if (fname == name) return fkind;
  throw std::invalid_argument("schema: no column named '" + name + "'");
}

bool RecordSchema::has(const std::string& name) const {
  for (const auto& [fname, _] : fields)
    if (fname == name) return true;
  return false;
}

namespace {

// One CSV line into cells; handles quoted fields with embedded commas and
// doubled quotes.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell += c;
    }
  }
  cells.push_back(cell);
  return cells;
}

}  // namespace

PolicyFrame read_policies(const std::string& path, const RecordSchema& schema,
                          ReadReport* report) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open data file: " + path);

  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error(path + ": empty file, header row required");
  std::vector<std::string> header = split_csv_line(line);

  // Map schema fields onto file columns.
  std::vector<int> file_col(schema.fields.size(), -1);
  for (size_t f = 0; f < schema.fields.size(); ++f) {
    for (size_t h = 0; h < header.size(); ++h)
      if (trim(header[h]) == schema.fields[f].first) {
        file_col[f] = static_cast<int>(h);
        break;
      }
    if (file_col[f] < 0)
      throw std::runtime_error(path + ": missing column '" +
                               schema.fields[f].first + "'");
  }

  PolicyFrame frame;
  frame.schema = schema;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);
    if (report) ++report->rows_read;
    PolicyRecord rec;
    std::string problem;
    for (size_t f = 0; f < schema.fields.size() && problem.empty(); ++f) {
      if (file_col[f] >= static_cast<int>(cells.size())) {
        problem = "too few cells";
        break;
      }
      const std::string raw = trim(cells[file_col[f]]);
      if (schema.fields[f].second == ColumnKind::Number) {
        size_t pos = 0;
        double v = std::numeric_limits<double>::quiet_NaN();
        try {
          v = std::stod(raw, &pos);
        } catch (const std::exception&) {
          pos = std::string::npos;
        }
        if (pos != raw.size() || !std::isfinite(v))
          problem = "column '" + schema.fields[f].first +
                    "' is not numeric: '" + raw + "'";
        else
          rec.numbers.push_back(v);
      } else {
        rec.labels.push_back(raw);
      }
    }
    if (!problem.empty()) {
      if (report) report->rejected.push_back({lineno, problem});
      continue;
    }
    frame.records.push_back(std::move(rec));
  }
  return frame;
}

void transform_covariates(PolicyFrame& frame, const TransformRules& rules) {
  for (const auto& bin : rules.bins) {
    int src = frame.schema.slot_of(bin.column, ColumnKind::Number);
    if (src < 0)
      throw std::invalid_argument("binning: no numeric column '" + bin.column +
                                  "'");
    if (bin.intervals.empty())
      throw std::invalid_argument("binning: no intervals for '" + bin.column +
                                  "'");
    // The numeric column becomes a categorical one under the same name.
    std::vector<std::string> derived(frame.records.size());
    for (size_t r = 0; r < frame.records.size(); ++r) {
      double v = frame.records[r].numbers[src];
      const std::string* label = nullptr;
      for (const auto& iv : bin.intervals)
        if (v >= iv.lo && v < iv.hi) {
          label = &iv.label;
          break;
        }
      if (!label)
        throw std::domain_error("binning: value " + std::to_string(v) +
                                " of '" + bin.column +
                                "' falls outside every interval");
      derived[r] = *label;
    }
    for (size_t r = 0; r < frame.records.size(); ++r) {
      frame.records[r].numbers.erase(frame.records[r].numbers.begin() + src);
      frame.records[r].labels.push_back(derived[r]);
    }
    for (auto it = frame.schema.fields.begin(); it != frame.schema.fields.end();
         ++it)
      if (it->first == bin.column) {
        frame.schema.fields.erase(it);
        break;
      }
    frame.schema.fields.emplace_back(bin.column, ColumnKind::Label);
  }

  for (const auto& lmap : rules.maps) {
    int slot = frame.schema.slot_of(lmap.column, ColumnKind::Label);
    if (slot < 0)
      throw std::invalid_argument("level map: no categorical column '" +
                                  lmap.column + "'");
    for (auto& rec : frame.records) {
      auto it = lmap.mapping.find(rec.labels[slot]);
      if (it != lmap.mapping.end()) rec.labels[slot] = it->second;
    }
  }
}

RiskClassTable aggregate_classes(const PolicyFrame& frame,
                                 const std::string& response_col,
                                 const std::string& weight_col,
                                 const std::vector<std::string>& covariate_cols,
                                 const Family& family) {
  int resp = frame.schema.slot_of(response_col, ColumnKind::Number);
  int wcol = frame.schema.slot_of(weight_col, ColumnKind::Number);
  if (resp < 0)
    throw std::invalid_argument("aggregate: no numeric response column '" +
                                response_col + "'");
  if (wcol < 0)
    throw std::invalid_argument("aggregate: no numeric weight column '" +
                                weight_col + "'");
  if (covariate_cols.empty())
    throw std::invalid_argument("aggregate: no covariates given");
  std::vector<int> cov_slots;
  for (const auto& name : covariate_cols) {
    int slot = frame.schema.slot_of(name, ColumnKind::Label);
    if (slot < 0)
      throw std::invalid_argument("aggregate: no categorical column '" + name +
                                  "' (was it binned?)");
    cov_slots.push_back(slot);
  }

  struct Acc {
    double sum_response = 0.0;
    double sum_weight = 0.0;
  };
  std::map<std::vector<std::string>, Acc> groups;
  size_t dropped_zero_weight = 0;
  for (const auto& rec : frame.records) {
    double w = rec.numbers[wcol];
    if (!(w >= 0.0))
      throw std::domain_error("aggregate: negative weight encountered");
    if (w == 0.0) {
      ++dropped_zero_weight;
      continue;
    }
    std::vector<std::string> key;
    key.reserve(cov_slots.size());
    for (int slot : cov_slots) key.push_back(rec.labels[slot]);
    Acc& acc = groups[key];
    acc.sum_response += rec.numbers[resp];  // = w * (response per weight unit)
    acc.sum_weight += w;
  }
  if (groups.empty())
    throw std::runtime_error("aggregate: no rows with positive weight");

  RiskClassTable table;
  table.covariates = covariate_cols;
  if (dropped_zero_weight > 0)
    table.notices.push_back("dropped " + std::to_string(dropped_zero_weight) +
                            " zero-weight policies before aggregation");

  bool severity = family.kind() == FamilyKind::Gamma ||
                  family.kind() == FamilyKind::InverseGaussian;
  size_t dropped_classes = 0;
  int next_id = 1;
  for (const auto& [key, acc] : groups) {  // std::map: lexicographic order
    double ybar = acc.sum_response / acc.sum_weight;
    if (severity && !(ybar > 0.0)) {
      ++dropped_classes;
      continue;
    }
    if (!family.response_in_support(ybar))
      throw std::domain_error("aggregate: class mean outside the " +
                              std::string(family.name()) + " support");
    RiskClassTable::Row row;
    row.class_id = next_id++;
    row.levels = key;
    row.ybar = ybar;
    row.w = acc.sum_weight;
    table.rows.push_back(std::move(row));
  }
  if (dropped_classes > 0)
    table.notices.push_back(
        "excluded " + std::to_string(dropped_classes) +
        " classes with zero mean response from the severity likelihood");
  if (table.rows.empty())
    throw std::runtime_error("aggregate: every class was excluded");
  return table;
}

DesignInfo build_design(const RiskClassTable& table,
                        const std::map<std::string, std::string>& references) {
  if (table.rows.empty())
    throw std::invalid_argument("build_design: empty class table");
  const size_t n_cov = table.covariates.size();

  // Sorted observed levels per covariate; dummies for all but the reference.
  std::vector<std::vector<std::string>> dummy_levels(n_cov);
  for (size_t c = 0; c < n_cov; ++c) {
    std::set<std::string> levels;
    for (const auto& row : table.rows) levels.insert(row.levels[c]);
    auto ref = references.find(table.covariates[c]);
    if (ref == references.end())
      throw std::invalid_argument("build_design: no reference level for '" +
                                  table.covariates[c] + "'");
    if (!levels.count(ref->second))
      throw std::invalid_argument("build_design: reference level '" +
                                  ref->second + "' of '" + table.covariates[c] +
                                  "' not present in the data");
    for (const auto& lvl : levels)
      if (lvl != ref->second) dummy_levels[c].push_back(lvl);
  }

  DesignInfo info;
  info.column_names.push_back("(Intercept)");
  for (size_t c = 0; c < n_cov; ++c)
    for (const auto& lvl : dummy_levels[c])
      info.column_names.push_back(table.covariates[c] + lvl);

  const Eigen::Index m = static_cast<Eigen::Index>(table.rows.size());
  const Eigen::Index k = static_cast<Eigen::Index>(info.column_names.size());
  info.matrix = Eigen::MatrixXd::Zero(m, k);
  info.matrix.col(0).setOnes();
  for (Eigen::Index r = 0; r < m; ++r) {
    Eigen::Index col = 1;
    for (size_t c = 0; c < n_cov; ++c)
      for (const auto& lvl : dummy_levels[c]) {
        if (table.rows[r].levels[c] == lvl) info.matrix(r, col) = 1.0;
        ++col;
      }
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(info.matrix);
  if (qr.rank() < k) {
    // Columns pivoted past the numerical rank are the collinear ones.
    const auto& perm = qr.colsPermutation().indices();
    std::string names;
    for (Eigen::Index j = qr.rank(); j < k; ++j) {
      if (!names.empty()) names += ", ";
      names += info.column_names[perm[j]];
    }
    throw std::runtime_error("build_design: collinear columns: " + names);
  }
  return info;
}

}  // namespace cred

// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "cred/edf.hpp"

namespace cred {

enum class ColumnKind { Number, Label };

// Typed column layout of a policy file. Numbers index into
// PolicyRecord::numbers, labels into PolicyRecord::labels.
struct RecordSchema {
  std::vector<std::pair<std::string, ColumnKind>> fields;

  int slot_of(const std::string& name, ColumnKind kind) const;  // -1: absent
  ColumnKind kind_of(const std::string& name) const;  // throws when absent
  bool has(const std::string& name) const;
};

struct PolicyRecord {
  std::vector<double> numbers;
  std::vector<std::string> labels;
};

struct PolicyFrame {
  RecordSchema schema;
  std::vector<PolicyRecord> records;

  double number_at(const PolicyRecord& rec, int slot) const {
    return rec.numbers[slot];
  }
};

struct ReadReport {
  std::size_t rows_read = 0;
  struct BadRow {
    std::size_t line = 0;
    std::string message;
  };
  std::vector<BadRow> rejected;
};

// CSV reader: header row required, extra file columns ignored, schema
// columns must all be present. Malformed rows are reported per line and
// skipped; structural problems (missing file or column) throw.
PolicyFrame read_policies(const std::string& path, const RecordSchema& schema,
                          ReadReport* report = nullptr);

// Derivation rules applied before aggregation. Binnings replace a numeric
// column with labels over half-open intervals [lo, hi); level maps rename
// categories (unlisted levels pass through).
struct TransformRules {
  struct Binning {
    std::string column;
    struct Interval {
      std::string label;
      double lo = 0.0;
      double hi = 0.0;  // +inf allowed
    };
    std::vector<Interval> intervals;
  };
  struct LevelMap {
    std::string column;
    std::map<std::string, std::string> mapping;
  };
  std::vector<Binning> bins;
  std::vector<LevelMap> maps;
};

void transform_covariates(PolicyFrame& frame, const TransformRules& rules);

// Risk classes: one row per distinct covariate level tuple, ordered
// lexicographically, with the weighted response mean and total weight.
struct RiskClassTable {
  std::vector<std::string> covariates;
  struct Row {
    int class_id = 0;
    std::vector<std::string> levels;
    double ybar = 0.0;
    double w = 0.0;
  };
  std::vector<Row> rows;
  std::vector<std::string> notices;  // dropped rows/classes and similar
};

// Groups policies by covariate tuple. The per-policy response is
// response/weight (severity per claim, rate per exposure), each policy
// contributing its weight; zero-weight policies are dropped. For Gamma and
// InverseGaussian, classes with ybar = 0 are excluded with a notice.
RiskClassTable aggregate_classes(const PolicyFrame& frame,
                                 const std::string& response_col,
                                 const std::string& weight_col,
                                 const std::vector<std::string>& covariate_cols,
                                 const Family& family);

struct DesignInfo {
  Eigen::MatrixXd matrix;
  std::vector<std::string> column_names;  // "(Intercept)", then cov+level
};

// Dummy coding with an intercept: one indicator per non-reference level,
// covariates in table order, levels sorted. Verifies full column rank.
DesignInfo build_design(const RiskClassTable& table,
                        const std::map<std::string, std::string>& references);

}  // namespace cred

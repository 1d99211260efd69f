#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "bellatrex/core.hpp"
#include "bellatrex/survival.hpp"

namespace bellatrex {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

/// Tabular data with task-typed targets.
///
/// Raw datasets (straight from `load_csv`) may hold missing cells (NaN) and
/// categorical columns, stored as level indices into `categorical_levels`.
/// After `preprocess` neither remains.
struct Dataset {
  Task task;
  Matrix covariates;
  std::vector<std::string> covariate_names;
  /// Per covariate: level names for categorical columns, empty for numeric ones.
  std::vector<std::vector<std::string>> categorical_levels;
  /// n x task.outputs block for every task except Survival.
  Matrix targets;
  std::vector<std::string> target_names;
  /// Survival task only.
  std::vector<SurvivalSample> survival;

  std::size_t n() const { return covariates.rows(); }
  std::size_t p() const { return covariates.cols(); }

  bool is_categorical(std::size_t j) const {
    return j < categorical_levels.size() && !categorical_levels[j].empty();
  }

  Dataset subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.task = task;
    out.covariates = covariates.select_rows(rows);
    out.covariate_names = covariate_names;
    out.categorical_levels = categorical_levels;
    out.target_names = target_names;
    if (task.kind == TaskKind::Survival) {
      out.survival.reserve(rows.size());
      for (auto r : rows) out.survival.push_back(survival[r]);
    } else {
      out.targets = targets.select_rows(rows);
    }
    return out;
  }
};

/// Which columns are targets, and column-type overrides.
struct TargetSpec {
  std::vector<std::string> targets;  // all tasks except Survival
  std::string time_column;           // Survival
  std::string event_column;          // Survival
  std::vector<std::string> categorical;  // force these covariates categorical
  std::vector<std::string> ignore;       // columns to leave out entirely
};

/// Parsed key=value schema file.
struct Schema {
  std::optional<TaskKind> task;
  TargetSpec spec;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split_list(std::string_view s, char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto end = s.find(sep, start);
    if (end == std::string_view::npos) end = s.size();
    auto item = trim(s.substr(start, end - start));
    if (!item.empty()) out.emplace_back(item);
    start = end + 1;
  }
  return out;
}

/// Splits one CSV record. Supports double-quoted fields with "" escapes.
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.emplace_back(trim(cur));
  return fields;
}

inline bool is_missing_token(std::string_view s) { return s.empty() || s == "NA" || s == "?"; }

inline std::optional<double> parse_number(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

inline double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double hi = values[mid];
  if (values.size() % 2 == 1) return hi;
  const double lo = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Reads a line-oriented key=value schema file. Recognised keys: task,
/// target/targets, time, event, categorical, ignore. '#' starts a comment.
inline Schema parse_schema(std::istream& in) {
  Schema schema;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = detail::trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError("schema line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key(detail::trim(view.substr(0, eq)));
    const auto value = detail::trim(view.substr(eq + 1));
    if (key == "task") {
      schema.task = parse_task_kind(std::string(value));
    } else if (key == "target" || key == "targets") {
      schema.spec.targets = detail::split_list(value);
    } else if (key == "time") {
      schema.spec.time_column = std::string(value);
    } else if (key == "event") {
      schema.spec.event_column = std::string(value);
    } else if (key == "categorical") {
      schema.spec.categorical = detail::split_list(value);
    } else if (key == "ignore") {
      schema.spec.ignore = detail::split_list(value);
    } else {
      throw ParseError("schema line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  return schema;
}

inline Schema read_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open schema file '" + path + "'");
  return parse_schema(in);
}

/// Parses CSV text into a raw dataset. Missing cells are empty, "NA" or "?".
/// A covariate is categorical iff some cell is not a number, or it is listed
/// in `spec.categorical`.
inline Dataset load_csv(std::istream& in, const TargetSpec& spec, TaskKind kind) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("row 1: missing header");
  const auto header = detail::split_csv_line(line);

  std::vector<std::vector<std::string>> cells;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size()) {
      throw ParseError("row " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                       " fields, found " + std::to_string(fields.size()));
    }
    cells.push_back(std::move(fields));
  }

  auto column_of = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };

  std::vector<std::size_t> target_cols;
  std::vector<std::string> target_names;
  Task task;
  if (kind == TaskKind::Survival) {
    if (spec.time_column.empty() || spec.event_column.empty()) {
      throw SchemaError("survival task needs a time and an event column");
    }
    target_cols = {column_of(spec.time_column), column_of(spec.event_column)};
    task = Task::survival();
  } else {
    if (spec.targets.empty()) throw SchemaError("no target column given");
    for (const auto& t : spec.targets) target_cols.push_back(column_of(t));
    target_names = spec.targets;
    switch (kind) {
      case TaskKind::Binary:
      case TaskKind::Regression:
        if (target_cols.size() != 1) throw SchemaError(to_string(kind) + " task takes exactly one target");
        task = {kind, 1};
        break;
      case TaskKind::MultiTarget:
        if (target_cols.size() < 2) throw SchemaError("multitarget task needs at least 2 targets");
        task = Task::multi_target(target_cols.size());
        break;
      case TaskKind::MultiLabel:
        if (target_cols.size() < 2) throw SchemaError("multilabel task needs at least 2 labels");
        task = Task::multi_label(target_cols.size());
        break;
      case TaskKind::Survival: break;
    }
  }
  for (const auto& c : spec.categorical) column_of(c);

  std::vector<std::size_t> covariate_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (std::find(target_cols.begin(), target_cols.end(), c) != target_cols.end()) continue;
    if (detail::contains(spec.ignore, header[c])) continue;
    covariate_cols.push_back(c);
  }

  const std::size_t n = cells.size();
  Dataset ds;
  ds.task = task;
  ds.target_names = target_names;
  ds.covariates = Matrix(n, covariate_cols.size(), kMissing);
  ds.categorical_levels.resize(covariate_cols.size());
  for (std::size_t j = 0; j < covariate_cols.size(); ++j) {
    const std::size_t c = covariate_cols[j];
    ds.covariate_names.push_back(header[c]);
    bool categorical = detail::contains(spec.categorical, header[c]);
    if (!categorical) {
      for (std::size_t i = 0; i < n && !categorical; ++i) {
        if (!detail::is_missing_token(cells[i][c]) && !detail::parse_number(cells[i][c])) categorical = true;
      }
    }
    if (categorical) {
      std::vector<std::string> levels;
      for (std::size_t i = 0; i < n; ++i) {
        if (!detail::is_missing_token(cells[i][c])) levels.push_back(cells[i][c]);
      }
      std::sort(levels.begin(), levels.end());
      levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
      for (std::size_t i = 0; i < n; ++i) {
        if (detail::is_missing_token(cells[i][c])) continue;
        ds.covariates(i, j) = static_cast<double>(
            std::lower_bound(levels.begin(), levels.end(), cells[i][c]) - levels.begin());
      }
      ds.categorical_levels[j] = std::move(levels);
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        if (!detail::is_missing_token(cells[i][c])) ds.covariates(i, j) = *detail::parse_number(cells[i][c]);
      }
    }
  }

  auto numeric_target = [&](std::size_t i, std::size_t c) -> double {
    const auto& s = cells[i][c];
    if (detail::is_missing_token(s)) return kMissing;
    auto v = detail::parse_number(s);
    if (!v) {
      throw SchemaError("row " + std::to_string(i + 2) + ": target column '" + header[c] + "' is not numeric");
    }
    return *v;
  };

  if (task.kind == TaskKind::Survival) {
    ds.survival.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      ds.survival[i].time = numeric_target(i, target_cols[0]);
      const auto& ev = cells[i][target_cols[1]];
      if (ev == "true" || ev == "TRUE") {
        ds.survival[i].event = true;
      } else if (ev == "false" || ev == "FALSE") {
        ds.survival[i].event = false;
      } else {
        const double v = numeric_target(i, target_cols[1]);
        if (is_missing(v)) {
          ds.survival[i].time = kMissing;
        } else if (v != 0.0 && v != 1.0) {
          throw SchemaError("row " + std::to_string(i + 2) + ": event indicator must be 0/1");
        }
        ds.survival[i].event = v == 1.0;
      }
    }
  } else {
    ds.targets = Matrix(n, target_cols.size());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t t = 0; t < target_cols.size(); ++t) {
        const double v = numeric_target(i, target_cols[t]);
        if ((task.kind == TaskKind::Binary || task.kind == TaskKind::MultiLabel) && !is_missing(v) &&
            v != 0.0 && v != 1.0) {
          throw SchemaError("row " + std::to_string(i + 2) + ": label column '" + header[target_cols[t]] +
                            "' must hold 0/1");
        }
        ds.targets(i, t) = v;
      }
    }
  }
  return ds;
}

inline Dataset load_csv(const std::string& path, const TargetSpec& spec, TaskKind kind) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return load_csv(in, spec, kind);
}

/// Min-max target scaling fitted on one set of rows and applied to others.
struct TargetScaler {
  std::vector<double> lo;
  std::vector<double> hi;

  static TargetScaler fit(const Matrix& targets, std::span<const std::size_t> rows) {
    TargetScaler s;
    s.lo.assign(targets.cols(), std::numeric_limits<double>::infinity());
    s.hi.assign(targets.cols(), -std::numeric_limits<double>::infinity());
    for (auto r : rows) {
      for (std::size_t t = 0; t < targets.cols(); ++t) {
        s.lo[t] = std::min(s.lo[t], targets(r, t));
        s.hi[t] = std::max(s.hi[t], targets(r, t));
      }
    }
    return s;
  }

  /// Constant columns map to zero.
  void apply(Matrix& targets) const {
    for (std::size_t r = 0; r < targets.rows(); ++r) {
      for (std::size_t t = 0; t < targets.cols(); ++t) {
        const double range = hi[t] - lo[t];
        targets(r, t) = range > 0.0 ? (targets(r, t) - lo[t]) / range : 0.0;
      }
    }
  }
};

inline bool needs_target_scaling(const Task& task) {
  return task.kind == TaskKind::Regression || task.kind == TaskKind::MultiTarget;
}

struct PreprocessOptions {
  /// Columns with a missing fraction above this are dropped.
  double column_drop_threshold = 0.30;
  /// Rows with a missing fraction (over the kept columns) above this are dropped.
  double row_drop_threshold = 0.30;
};

struct PreprocessStats {
  std::size_t dropped_columns = 0;
  std::size_t dropped_rows = 0;
  std::size_t dropped_missing_target = 0;
  std::size_t imputed_cells = 0;
};

/// Drops sparse columns then sparse rows, imputes the rest (median for
/// numeric, mode for categorical), one-hot encodes categoricals and scales
/// regression targets to [0, 1]. Idempotent.
inline Dataset preprocess(const Dataset& raw, const PreprocessOptions& options,
                          PreprocessStats* stats = nullptr) {
  if (!(options.column_drop_threshold > 0.0 && options.column_drop_threshold <= 1.0) ||
      !(options.row_drop_threshold > 0.0 && options.row_drop_threshold <= 1.0)) {
    throw ArgumentError("preprocess: drop thresholds must lie in (0, 1]");
  }
  PreprocessStats local;
  const auto& X = raw.covariates;

  // Rows with a missing target cannot be used at all.
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < raw.n(); ++i) {
    bool ok = true;
    if (raw.task.kind == TaskKind::Survival) {
      ok = !is_missing(raw.survival[i].time);
      if (ok && raw.survival[i].time <= 0.0) {
        throw DataError("survival time must be positive (row " + std::to_string(i + 2) + ")");
      }
    } else {
      for (std::size_t t = 0; t < raw.targets.cols(); ++t) ok = ok && !is_missing(raw.targets(i, t));
    }
    if (ok) {
      rows.push_back(i);
    } else {
      ++local.dropped_missing_target;
    }
  }

  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < raw.p(); ++j) {
    std::size_t missing = 0;
    for (auto i : rows) missing += is_missing(X(i, j)) ? 1 : 0;
    const double frac = rows.empty() ? 0.0 : static_cast<double>(missing) / static_cast<double>(rows.size());
    if (frac > options.column_drop_threshold) {
      ++local.dropped_columns;
    } else {
      cols.push_back(j);
    }
  }

  std::vector<std::size_t> kept;
  for (auto i : rows) {
    std::size_t missing = 0;
    for (auto j : cols) missing += is_missing(X(i, j)) ? 1 : 0;
    const double frac = cols.empty() ? 0.0 : static_cast<double>(missing) / static_cast<double>(cols.size());
    if (frac > options.row_drop_threshold) {
      ++local.dropped_rows;
    } else {
      kept.push_back(i);
    }
  }
  if (kept.empty()) throw DataError("preprocess: every row was dropped");

  // Impute, then expand categoricals.
  std::size_t out_cols = 0;
  for (auto j : cols) out_cols += raw.is_categorical(j) ? raw.categorical_levels[j].size() : 1;

  Dataset out;
  out.task = raw.task;
  out.target_names = raw.target_names;
  out.covariates = Matrix(kept.size(), out_cols);
  out.categorical_levels.assign(out_cols, {});
  std::size_t dst = 0;
  for (auto j : cols) {
    double fill = 0.0;
    if (raw.is_categorical(j)) {
      std::vector<std::size_t> counts(raw.categorical_levels[j].size(), 0);
      for (auto i : kept) {
        if (!is_missing(X(i, j))) ++counts[static_cast<std::size_t>(X(i, j))];
      }
      fill = static_cast<double>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    } else {
      std::vector<double> present;
      for (auto i : kept) {
        if (!is_missing(X(i, j))) present.push_back(X(i, j));
      }
      fill = detail::median(std::move(present));
    }

    if (raw.is_categorical(j)) {
      const auto& levels = raw.categorical_levels[j];
      for (std::size_t l = 0; l < levels.size(); ++l) {
        out.covariate_names.push_back(raw.covariate_names[j] + "=" + levels[l]);
      }
      for (std::size_t r = 0; r < kept.size(); ++r) {
        double v = X(kept[r], j);
        if (is_missing(v)) {
          v = fill;
          ++local.imputed_cells;
        }
        out.covariates(r, dst + static_cast<std::size_t>(v)) = 1.0;
      }
      dst += levels.size();
    } else {
      out.covariate_names.push_back(raw.covariate_names[j]);
      for (std::size_t r = 0; r < kept.size(); ++r) {
        double v = X(kept[r], j);
        if (is_missing(v)) {
          v = fill;
          ++local.imputed_cells;
        }
        out.covariates(r, dst) = v;
      }
      ++dst;
    }
  }

  if (raw.task.kind == TaskKind::Survival) {
    for (auto i : kept) out.survival.push_back(raw.survival[i]);
  } else {
    out.targets = raw.targets.select_rows(kept);
    if (needs_target_scaling(raw.task)) {
      std::vector<std::size_t> all(kept.size());
      std::iota(all.begin(), all.end(), std::size_t{0});
      TargetScaler::fit(out.targets, all).apply(out.targets);
    }
  }
  if (stats) *stats = local;
  return out;
}

inline Dataset preprocess(const Dataset& raw, double drop_threshold = 0.30, PreprocessStats* stats = nullptr) {
  return preprocess(raw, PreprocessOptions{drop_threshold, drop_threshold}, stats);
}

/// Shuffled k-fold partition: fold sizes differ by at most one.
struct FoldPlan {
  std::size_t k = 0;
  std::vector<std::size_t> assignments;
  std::uint64_t seed = 0;

  std::vector<std::size_t> test_rows(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
      if (assignments[i] == fold) out.push_back(i);
    }
    return out;
  }

  std::vector<std::size_t> train_rows(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
      if (assignments[i] != fold) out.push_back(i);
    }
    return out;
  }
};

inline FoldPlan kfold(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2 || k > n) throw ArgumentError("kfold: need 2 <= k <= n");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  FoldPlan plan{k, std::vector<std::size_t>(n), seed};
  for (std::size_t pos = 0; pos < n; ++pos) plan.assignments[order[pos]] = pos % k;
  return plan;
}

}  // namespace bellatrex

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bellatrex/core.hpp"
#include "bellatrex/data.hpp"
#include "bellatrex/metrics.hpp"
#include "bellatrex/survival.hpp"
#include "bellatrex/tree.hpp"

namespace bellatrex {

struct ForestParams {
  std::size_t n_trees = 100;
  std::size_t min_samples_split = 5;
  /// Features tried per split; defaults to ceil(sqrt(p)) for binary,
  /// multi-label and survival tasks and ceil(p/3) for regression tasks.
  std::optional<std::size_t> mtry;
  std::uint64_t seed = 0;
  std::optional<std::size_t> max_depth;
  /// false grows every tree on the full training set (single-tree baseline).
  bool bootstrap = true;

  static ForestParams defaults_for(const Task& task) {
    ForestParams p;
    if (task.kind == TaskKind::Survival) p.min_samples_split = 10;
    return p;
  }

  std::size_t resolved_mtry(const Task& task, std::size_t p) const {
    std::size_t m = 0;
    if (mtry) {
      m = *mtry;
    } else if (task.classification_like()) {
      m = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(p))));
    } else {
      m = (p + 2) / 3;
    }
    return std::clamp<std::size_t>(m, 1, std::max<std::size_t>(p, 1));
  }

  void validate(std::size_t p) const {
    if (n_trees < 1) throw ArgumentError("forest needs at least one tree");
    if (min_samples_split < 2) throw ArgumentError("min_samples_split must be at least 2");
    if (mtry && (*mtry < 1 || *mtry > p)) throw ArgumentError("mtry must lie in [1, p]");
  }
};

struct Forest {
  Task task;
  std::size_t n_features = 0;
  ForestParams params;
  std::vector<Tree> trees;
  std::vector<std::string> feature_names;

  std::size_t size() const { return trees.size(); }
};

/// Trains a random forest. Tree t draws from its own stream seeded by
/// (params.seed, t), so the result does not depend on the thread count.
inline Forest fit_forest(const Dataset& train, const ForestParams& params) {
  params.validate(train.p());
  if (train.n() < 1) throw DataError("fit_forest: empty training set");
  Forest forest;
  forest.task = train.task;
  forest.n_features = train.p();
  forest.params = params;
  forest.params.mtry = params.resolved_mtry(train.task, train.p());
  forest.feature_names = train.covariate_names;
  forest.trees.resize(params.n_trees);

  const TrainingView view(train);
  const TreeParams tp{params.min_samples_split, *forest.params.mtry, params.max_depth};
  const std::size_t n = train.n();
  parallel_for(params.n_trees, [&](std::size_t t) {
    Rng rng(derive_seed(params.seed, t));
    std::vector<std::size_t> rows(n);
    std::vector<std::size_t> oob;
    if (params.bootstrap) {
      std::vector<char> drawn(n, 0);
      for (auto& r : rows) {
        r = static_cast<std::size_t>(rng.below(n));
        drawn[r] = 1;
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (!drawn[i]) oob.push_back(i);
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) rows[i] = i;
    }
    std::vector<std::size_t> bootstrap = rows;
    std::sort(bootstrap.begin(), bootstrap.end());
    Tree tree = grow_tree(view, std::move(rows), tp, rng);
    tree.bootstrap = std::move(bootstrap);
    tree.oob = std::move(oob);
    forest.trees[t] = std::move(tree);
  });
  return forest;
}

/// Component-wise mean. Each component is summed in sorted order, so the
/// result is independent of the order of `preds`.
inline Prediction mean_prediction(std::span<const Prediction> preds) {
  Prediction out;
  if (preds.empty()) return out;
  const std::size_t w = preds.front().values.size();
  out.values.resize(w);
  std::vector<double> column(preds.size());
  for (std::size_t o = 0; o < w; ++o) {
    for (std::size_t t = 0; t < preds.size(); ++t) column[t] = preds[t].values[o];
    std::sort(column.begin(), column.end());
    double s = 0.0;
    for (double v : column) s += v;
    out.values[o] = s / static_cast<double>(preds.size());
  }
  return out;
}

inline std::vector<Prediction> tree_predictions(const Forest& forest, std::span<const double> x) {
  std::vector<Prediction> preds;
  preds.reserve(forest.trees.size());
  for (const auto& t : forest.trees) preds.push_back(tree_predict(t, x));
  return preds;
}

inline Prediction forest_predict(const Forest& forest, std::span<const double> x) {
  return mean_prediction(tree_predictions(forest, x));
}

/// Task metric of a block of predictions against rows of `truth`: AUROC
/// (binary), MAE (regression tasks), weighted AUROC (multi-label) or
/// C-index (survival). Throws UndefinedMetric when the metric is undefined.
inline double performance_score(const Task& task, const Matrix& pred, const Dataset& truth,
                                std::span<const std::size_t> rows) {
  switch (task.kind) {
    case TaskKind::Binary: {
      std::vector<double> labels;
      for (auto r : rows) labels.push_back(truth.targets(r, 0));
      return auroc(pred.column(0), labels);
    }
    case TaskKind::Regression:
    case TaskKind::MultiTarget:
      return mae(pred, truth.targets.select_rows(rows));
    case TaskKind::MultiLabel:
      return weighted_auroc(pred, truth.targets.select_rows(rows));
    case TaskKind::Survival: {
      std::vector<SurvivalSample> s;
      for (auto r : rows) s.push_back(truth.survival[r]);
      return concordance_index(pred.column(0), s);
    }
  }
  throw ArgumentError("unknown task");
}

inline bool lower_is_better(const Task& task) {
  return task.kind == TaskKind::Regression || task.kind == TaskKind::MultiTarget;
}

/// Error form of performance_score (MAE, or 1 - score). Undefined metrics
/// count as the worst case, 1.
inline double prediction_error(const Task& task, const Matrix& pred, const Dataset& truth,
                               std::span<const std::size_t> rows) {
  try {
    const double score = performance_score(task, pred, truth, rows);
    return lower_is_better(task) ? score : 1.0 - score;
  } catch (const UndefinedMetric&) {
  }
  return 1.0;
}

/// Per-tree error over the tree's out-of-bag rows; 1.0 when a tree has none.
inline std::vector<double> oob_errors(const Forest& forest, const Dataset& train) {
  std::vector<double> errors(forest.trees.size(), 1.0);
  parallel_for(forest.trees.size(), [&](std::size_t t) {
    const auto& tree = forest.trees[t];
    if (tree.oob.empty()) return;
    Matrix pred(tree.oob.size(), forest.task.outputs);
    for (std::size_t i = 0; i < tree.oob.size(); ++i) {
      const auto p = tree_predict(tree, train.covariates.row(tree.oob[i]));
      std::copy(p.values.begin(), p.values.end(), pred.row(i).begin());
    }
    errors[t] = prediction_error(forest.task, pred, train, tree.oob);
  });
  return errors;
}

}  // namespace bellatrex

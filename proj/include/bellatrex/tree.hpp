#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "bellatrex/core.hpp"
#include "bellatrex/data.hpp"
#include "bellatrex/survival.hpp"

namespace bellatrex {

/// Task-typed prediction. Scalar tasks (binary probability, regression
/// value, survival risk) use one value; vector tasks use one per output.
struct Prediction {
  std::vector<double> values;
  /// Kaplan-Meier curve of the leaf, survival trees only.
  std::shared_ptr<const StepFunction> survival_curve;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
};

/// Euclidean distance between two predictions of the same width.
inline double prediction_distance(const Prediction& a, const Prediction& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    s += d * d;
  }
  return std::sqrt(s);
}

struct Node {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  /// Fraction of the tree's training sample that reaches this node.
  double weight = 1.0;
  std::size_t n_samples = 0;
  /// Prototype of the node's training sample (running estimate).
  std::vector<double> value;
  std::shared_ptr<const StepFunction> curve;

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  Task task;
  std::size_t n_features = 0;
  std::vector<Node> nodes;  // root is nodes[0]
  std::vector<std::size_t> bootstrap;
  std::vector<std::size_t> oob;

  std::size_t leaf_of(std::span<const double> x) const {
    std::size_t id = 0;
    while (!nodes[id].is_leaf()) {
      const auto& nd = nodes[id];
      id = static_cast<std::size_t>(x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right);
    }
    return id;
  }

  std::size_t depth() const {
    std::vector<std::size_t> d(nodes.size(), 0);
    std::size_t best = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i].is_leaf()) continue;
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
      best = std::max(best, d[i] + 1);
    }
    return best;
  }

  std::size_t leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const Node& n) { return n.is_leaf(); }));
  }
};

inline Prediction tree_predict(const Tree& tree, std::span<const double> x) {
  const auto& leaf = tree.nodes[tree.leaf_of(x)];
  return {leaf.value, leaf.curve};
}

struct PathStep {
  std::size_t node = 0;
  int feature = -1;  // -1 on the final (leaf) step
  double threshold = 0.0;
  bool went_left = false;
  double weight = 1.0;
  std::vector<double> value;

  bool is_leaf() const { return feature < 0; }
};

/// Root-to-leaf steps followed by x. The last entry is the leaf.
inline std::vector<PathStep> decision_path(const Tree& tree, std::span<const double> x) {
  std::vector<PathStep> path;
  std::size_t id = 0;
  for (;;) {
    const auto& nd = tree.nodes[id];
    PathStep step{id, nd.feature, nd.threshold, false, nd.weight, nd.value};
    if (nd.is_leaf()) {
      path.push_back(std::move(step));
      return path;
    }
    const bool left = x[static_cast<std::size_t>(nd.feature)] <= nd.threshold;
    step.went_left = left;
    path.push_back(std::move(step));
    id = static_cast<std::size_t>(left ? nd.left : nd.right);
  }
}

/// Number of split tests on x's path (the rule length).
inline std::size_t rule_length(const Tree& tree, std::span<const double> x) {
  std::size_t len = 0;
  std::size_t id = 0;
  while (!tree.nodes[id].is_leaf()) {
    const auto& nd = tree.nodes[id];
    id = static_cast<std::size_t>(x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right);
    ++len;
  }
  return len;
}

// ---------------------------------------------------------------------------
// Splitting criteria

/// Binary Gini impurity 2q(1-q) for positive fraction q.
inline double gini(std::span<const double> labels) {
  if (labels.empty()) throw ArgumentError("gini: empty label list");
  double pos = 0.0;
  for (double v : labels) pos += v;
  const double q = pos / static_cast<double>(labels.size());
  return 2.0 * q * (1.0 - q);
}

namespace detail {

inline double population_variance(const Matrix& block, std::size_t col) {
  const double n = static_cast<double>(block.rows());
  double mean = 0.0;
  for (std::size_t r = 0; r < block.rows(); ++r) mean += block(r, col);
  mean /= n;
  double ss = 0.0;
  for (std::size_t r = 0; r < block.rows(); ++r) ss += (block(r, col) - mean) * (block(r, col) - mean);
  return ss / n;
}

}  // namespace detail

/// Mean over target columns of Var(parent) - nL/n Var(left) - nR/n Var(right)
/// with population variances.
inline double variance_reduction(const Matrix& parent, const Matrix& left, const Matrix& right) {
  if (left.rows() + right.rows() != parent.rows() || left.cols() != parent.cols() ||
      right.cols() != parent.cols() || parent.rows() == 0) {
    throw ArgumentError("variance_reduction: left/right must partition parent");
  }
  const double n = static_cast<double>(parent.rows());
  double total = 0.0;
  for (std::size_t c = 0; c < parent.cols(); ++c) {
    double r = detail::population_variance(parent, c);
    if (left.rows() > 0) r -= static_cast<double>(left.rows()) / n * detail::population_variance(left, c);
    if (right.rows() > 0) r -= static_cast<double>(right.rows()) / n * detail::population_variance(right, c);
    total += r;
  }
  return total / static_cast<double>(parent.cols());
}

/// Read-only view of the training data a tree is grown on.
struct TrainingView {
  const Matrix* covariates = nullptr;
  Task task;
  const Matrix* targets = nullptr;                      // non-survival tasks
  std::span<const SurvivalSample> survival;             // survival task
  std::vector<double> event_grid;                       // survival task

  explicit TrainingView(const Dataset& ds)
      : covariates(&ds.covariates), task(ds.task), targets(&ds.targets), survival(ds.survival) {
    if (task.kind == TaskKind::Survival) event_grid = event_time_grid(survival);
  }
};

struct Split {
  std::size_t feature = 0;
  double threshold = 0.0;
  double score = 0.0;
};

namespace detail {

inline double split_point(double lo, double hi) {
  double mid = lo + (hi - lo) / 2.0;
  if (mid >= hi || mid < lo) mid = lo;
  return mid;
}

struct SortedFeature {
  std::vector<std::pair<double, std::size_t>> items;  // (value, row)
};

inline void sort_feature(const Matrix& X, std::span<const std::size_t> rows, std::size_t j,
                         std::vector<std::pair<double, std::size_t>>& items) {
  items.clear();
  for (auto r : rows) items.emplace_back(X(r, j), r);
  std::sort(items.begin(), items.end());
}

/// Gini (labels) or variance (real targets) sweep, averaged over outputs.
inline void sweep_impurity(const TrainingView& view, std::size_t j,
                           const std::vector<std::pair<double, std::size_t>>& items,
                           std::optional<Split>& best) {
  const Matrix& Y = *view.targets;
  const std::size_t w = Y.cols();
  const bool labels = view.task.kind == TaskKind::Binary || view.task.kind == TaskKind::MultiLabel;
  const std::size_t n = items.size();

  std::vector<double> sum(w, 0.0), sq(w, 0.0), lsum(w, 0.0), lsq(w, 0.0);
  for (const auto& it : items) {
    for (std::size_t o = 0; o < w; ++o) {
      const double y = Y(it.second, o);
      sum[o] += y;
      sq[o] += y * y;
    }
  }
  auto impurity = [labels](double s, double q, double cnt) {
    const double mean = s / cnt;
    if (labels) return 2.0 * mean * (1.0 - mean);
    return std::max(0.0, q / cnt - mean * mean);
  };
  const double nn = static_cast<double>(n);
  double parent = 0.0;
  for (std::size_t o = 0; o < w; ++o) parent += impurity(sum[o], sq[o], nn);

  for (std::size_t i = 0; i + 1 < n; ++i) {
    for (std::size_t o = 0; o < w; ++o) {
      const double y = Y(items[i].second, o);
      lsum[o] += y;
      lsq[o] += y * y;
    }
    if (items[i].first == items[i + 1].first) continue;
    const double nl = static_cast<double>(i + 1);
    const double nr = nn - nl;
    double children = 0.0;
    for (std::size_t o = 0; o < w; ++o) {
      children += nl / nn * impurity(lsum[o], lsq[o], nl) +
                  nr / nn * impurity(sum[o] - lsum[o], sq[o] - lsq[o], nr);
    }
    const double gain = (parent - children) / static_cast<double>(w);
    if (!best || gain > best->score) best = Split{j, split_point(items[i].first, items[i + 1].first), gain};
  }
}

/// Log-rank sweep. Node-level time table is shared across features.
struct NodeTimes {
  std::vector<double> times;
  std::vector<double> count;
  std::vector<double> events;
  std::vector<std::size_t> index_of_row;  // by position in `rows`
};

inline NodeTimes node_times(const TrainingView& view, std::span<const std::size_t> rows) {
  NodeTimes nt;
  for (auto r : rows) nt.times.push_back(view.survival[r].time);
  std::sort(nt.times.begin(), nt.times.end());
  nt.times.erase(std::unique(nt.times.begin(), nt.times.end()), nt.times.end());
  nt.count.assign(nt.times.size(), 0.0);
  nt.events.assign(nt.times.size(), 0.0);
  for (auto r : rows) {
    const auto k = static_cast<std::size_t>(
        std::lower_bound(nt.times.begin(), nt.times.end(), view.survival[r].time) - nt.times.begin());
    nt.count[k] += 1.0;
    if (view.survival[r].event) nt.events[k] += 1.0;
  }
  return nt;
}

inline void sweep_logrank(const TrainingView& view, std::size_t j, const NodeTimes& nt,
                          const std::vector<std::pair<double, std::size_t>>& items,
                          std::optional<Split>& best) {
  const std::size_t T = nt.times.size();
  std::vector<double> lcount(T, 0.0), levents(T, 0.0);
  const std::size_t n = items.size();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const auto& s = view.survival[items[i].second];
    const auto k = static_cast<std::size_t>(std::lower_bound(nt.times.begin(), nt.times.end(), s.time) - nt.times.begin());
    lcount[k] += 1.0;
    if (s.event) levents[k] += 1.0;
    if (items[i].first == items[i + 1].first) continue;

    LogRankAccumulator acc;
    double at_risk = 0.0, left_at_risk = 0.0;
    for (std::size_t t = T; t-- > 0;) {
      at_risk += nt.count[t];
      left_at_risk += lcount[t];
      acc.add(at_risk, nt.events[t], left_at_risk, levents[t]);
    }
    const double score = acc.score();
    if (!best || score > best->score) best = Split{j, split_point(items[i].first, items[i + 1].first), score};
  }
}

}  // namespace detail

/// Best (covariate, threshold) over the candidate covariates, with thresholds
/// at midpoints between consecutive distinct values. Ties go to the lowest
/// covariate index, then the lowest threshold. nullopt when no candidate
/// separates the rows.
inline std::optional<Split> best_split(const TrainingView& view, std::span<const std::size_t> rows,
                                       std::span<const std::size_t> candidates) {
  if (rows.size() < 2) return std::nullopt;
  std::vector<std::size_t> order(candidates.begin(), candidates.end());
  std::sort(order.begin(), order.end());

  std::optional<Split> best;
  std::optional<detail::NodeTimes> times;
  if (view.task.kind == TaskKind::Survival) times = detail::node_times(view, rows);
  std::vector<std::pair<double, std::size_t>> items;
  for (auto j : order) {
    detail::sort_feature(*view.covariates, rows, j, items);
    if (items.front().first == items.back().first) continue;
    if (view.task.kind == TaskKind::Survival) {
      detail::sweep_logrank(view, j, *times, items, best);
    } else {
      detail::sweep_impurity(view, j, items, best);
    }
  }
  return best;
}

struct TreeParams {
  std::size_t min_samples_split = 5;
  std::size_t mtry = 1;
  std::optional<std::size_t> max_depth;
};

namespace detail {

inline void fill_node_value(const TrainingView& view, std::span<const std::size_t> rows, bool leaf, Node& node) {
  if (view.task.kind == TaskKind::Survival) {
    std::vector<SurvivalSample> samples;
    samples.reserve(rows.size());
    for (auto r : rows) samples.push_back(view.survival[r]);
    node.value = {risk_score(samples, view.event_grid)};
    if (leaf) node.curve = std::make_shared<const StepFunction>(kaplan_meier(samples));
    return;
  }
  const Matrix& Y = *view.targets;
  node.value.assign(Y.cols(), 0.0);
  for (auto r : rows) {
    for (std::size_t o = 0; o < Y.cols(); ++o) node.value[o] += Y(r, o);
  }
  for (auto& v : node.value) v /= static_cast<double>(rows.size());
}

inline bool is_pure(const TrainingView& view, std::span<const std::size_t> rows) {
  if (view.task.kind == TaskKind::Survival) {
    const auto& first = view.survival[rows.front()];
    return std::all_of(rows.begin(), rows.end(), [&](std::size_t r) { return view.survival[r] == first; });
  }
  const Matrix& Y = *view.targets;
  for (auto r : rows) {
    for (std::size_t o = 0; o < Y.cols(); ++o) {
      if (Y(r, o) != Y(rows.front(), o)) return false;
    }
  }
  return true;
}

inline bool is_constant(const Matrix& X, std::span<const std::size_t> rows, std::size_t j) {
  const double v = X(rows.front(), j);
  return std::all_of(rows.begin(), rows.end(), [&](std::size_t r) { return X(r, j) == v; });
}

}  // namespace detail

/// Grows one unpruned tree on `rows` (a multiset: bootstrap duplicates count).
inline Tree grow_tree(const TrainingView& view, std::vector<std::size_t> rows, const TreeParams& params, Rng& rng) {
  const Matrix& X = *view.covariates;
  const std::size_t p = X.cols();
  Tree tree;
  tree.task = view.task;
  tree.n_features = p;
  const double root_size = static_cast<double>(rows.size());

  struct Pending {
    std::size_t node;
    std::vector<std::size_t> rows;
    std::size_t depth;
  };
  std::vector<Pending> stack;
  tree.nodes.emplace_back();
  stack.push_back({0, std::move(rows), 0});

  std::vector<std::size_t> features(p);
  while (!stack.empty()) {
    Pending cur = std::move(stack.back());
    stack.pop_back();
    Node& node = tree.nodes[cur.node];
    node.n_samples = cur.rows.size();
    node.weight = static_cast<double>(cur.rows.size()) / root_size;

    std::optional<Split> split;
    const bool may_split = cur.rows.size() >= params.min_samples_split &&
                           (!params.max_depth || cur.depth < *params.max_depth) &&
                           !detail::is_pure(view, cur.rows);
    if (may_split) {
      // Draw features without replacement until mtry non-constant ones are found.
      std::iota(features.begin(), features.end(), std::size_t{0});
      std::vector<std::size_t> candidates;
      for (std::size_t drawn = 0; drawn < p && candidates.size() < params.mtry; ++drawn) {
        std::swap(features[drawn], features[drawn + rng.below(p - drawn)]);
        if (!detail::is_constant(X, cur.rows, features[drawn])) candidates.push_back(features[drawn]);
      }
      split = best_split(view, cur.rows, candidates);
      if (split && !(split->score > 0.0)) split.reset();
    }

    detail::fill_node_value(view, cur.rows, !split, tree.nodes[cur.node]);
    if (!split) continue;

    std::vector<std::size_t> left, right;
    for (auto r : cur.rows) (X(r, split->feature) <= split->threshold ? left : right).push_back(r);
    const auto left_id = tree.nodes.size();
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    Node& parent = tree.nodes[cur.node];
    parent.feature = static_cast<int>(split->feature);
    parent.threshold = split->threshold;
    parent.left = static_cast<int>(left_id);
    parent.right = static_cast<int>(left_id + 1);
    // Right pushed first so the left subtree is numbered next.
    stack.push_back({left_id + 1, std::move(right), cur.depth + 1});
    stack.push_back({left_id, std::move(left), cur.depth + 1});
  }
  return tree;
}

}  // namespace bellatrex

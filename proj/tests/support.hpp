#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "bellatrex/bellatrex.hpp"

namespace support {

using namespace bellatrex;

/// Synthetic dataset of the given task. Covariates are uniform on [0, 1);
/// targets depend on the first few covariates plus noise.
inline Dataset make_dataset(TaskKind kind, std::size_t n, std::size_t p, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  switch (kind) {
    case TaskKind::Binary: d.task = Task::binary(); break;
    case TaskKind::Regression: d.task = Task::regression(); break;
    case TaskKind::MultiTarget: d.task = Task::multi_target(2); break;
    case TaskKind::MultiLabel: d.task = Task::multi_label(3); break;
    case TaskKind::Survival: d.task = Task::survival(); break;
  }
  d.covariates = Matrix(n, p);
  for (std::size_t j = 0; j < p; ++j) d.covariate_names.push_back("x" + std::to_string(j));
  d.categorical_levels.assign(p, {});
  if (kind != TaskKind::Survival) d.targets = Matrix(n, d.task.outputs);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) d.covariates(i, j) = rng.uniform();
    const double x0 = d.covariates(i, 0);
    const double x1 = p > 1 ? d.covariates(i, 1) : 0.5;
    const double x2 = p > 2 ? d.covariates(i, 2) : 0.5;
    const double noise = rng.uniform() - 0.5;
    switch (kind) {
      case TaskKind::Binary:
        d.targets(i, 0) = x0 + 0.6 * x1 - 0.4 * x2 + 0.5 * noise > 0.6 ? 1.0 : 0.0;
        break;
      case TaskKind::Regression:
        d.targets(i, 0) = std::sin(3.0 * x0) + x1 * x1 + 0.2 * noise;
        break;
      case TaskKind::MultiTarget:
        d.targets(i, 0) = x0 + 0.1 * noise;
        d.targets(i, 1) = x1 * x2 + 0.1 * noise;
        break;
      case TaskKind::MultiLabel:
        d.targets(i, 0) = x0 + 0.3 * noise > 0.5 ? 1.0 : 0.0;
        d.targets(i, 1) = x1 + 0.3 * noise > 0.6 ? 1.0 : 0.0;
        d.targets(i, 2) = x0 + x2 + 0.3 * noise > 1.0 ? 1.0 : 0.0;
        break;
      case TaskKind::Survival: {
        const double hazard = std::exp(2.0 * x0 - x1);
        const double t = std::round(-std::log(1.0 - rng.uniform()) / hazard * 20.0) / 10.0 + 0.1;
        const double c = std::round(rng.uniform() * 30.0) / 10.0 + 0.1;
        d.survival.push_back({std::min(t, c), t <= c});
        break;
      }
    }
  }
  if (kind != TaskKind::Survival) {
    for (std::size_t o = 0; o < d.task.outputs; ++o) d.target_names.push_back("y" + std::to_string(o));
  }
  return d;
}

inline Forest make_forest(const Dataset& d, std::size_t trees, std::uint64_t seed, std::size_t min_split = 0) {
  ForestParams p = ForestParams::defaults_for(d.task);
  p.n_trees = trees;
  p.seed = seed;
  if (min_split) p.min_samples_split = min_split;
  return fit_forest(d, p);
}

/// Depth-one binary tree: x[feature] <= threshold gives `left`, else `right`.
inline Tree stump(std::size_t p, int feature, double threshold, double left, double right) {
  Tree t;
  t.task = Task::binary();
  t.n_features = p;
  t.nodes.resize(3);
  t.nodes[0].feature = feature;
  t.nodes[0].threshold = threshold;
  t.nodes[0].left = 1;
  t.nodes[0].right = 2;
  t.nodes[0].value = {(left + right) / 2.0};
  t.nodes[0].n_samples = 10;
  for (int c = 1; c <= 2; ++c) {
    t.nodes[c].weight = 0.5;
    t.nodes[c].n_samples = 5;
    t.nodes[c].value = {c == 1 ? left : right};
  }
  return t;
}

inline Forest manual_forest(std::size_t p, std::vector<Tree> trees) {
  Forest f;
  f.task = Task::binary();
  f.n_features = p;
  f.params.n_trees = trees.size();
  f.params.mtry = 1;
  for (std::size_t j = 0; j < p; ++j) f.feature_names.push_back("x" + std::to_string(j));
  f.trees = std::move(trees);
  return f;
}

// ---------------------------------------------------------------------------
// Independent oracles

/// AUROC by enumerating every positive/negative pair.
inline double pair_auroc(std::span<const double> scores, std::span<const double> labels) {
  std::int64_t twice = 0;
  std::int64_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] < 0.5) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] > 0.5) continue;
      ++pairs;
      if (scores[i] > scores[j]) twice += 2;
      if (scores[i] == scores[j]) twice += 1;
    }
  }
  return static_cast<double>(twice) / static_cast<double>(2 * pairs);
}

/// Harrell's C by enumerating every ordered pair.
inline double pair_cindex(std::span<const double> risks, std::span<const SurvivalSample> s) {
  std::int64_t twice = 0;
  std::int64_t comparable = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!s[i].event) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!(s[i].time < s[j].time)) continue;
      ++comparable;
      if (risks[i] > risks[j]) twice += 2;
      if (risks[i] == risks[j]) twice += 1;
    }
  }
  return static_cast<double>(twice) / static_cast<double>(2 * comparable);
}

/// Selection by repeated minimum scan: smallest distance, then lowest index.
inline std::vector<std::size_t> brute_preselect(const Forest& forest, std::span<const double> x, std::size_t tau) {
  const Prediction yhat = forest_predict(forest, x);
  std::vector<double> dist;
  for (const auto& t : forest.trees) {
    const auto v = tree_predict(t, x).values;
    double s = 0.0;
    for (std::size_t o = 0; o < v.size(); ++o) s += (v[o] - yhat.values[o]) * (v[o] - yhat.values[o]);
    dist.push_back(std::sqrt(s));
  }
  std::vector<bool> taken(dist.size(), false);
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < tau; ++k) {
    std::size_t best = dist.size();
    for (std::size_t t = 0; t < dist.size(); ++t) {
      if (taken[t]) continue;
      if (best == dist.size() || dist[t] < dist[best]) best = t;
    }
    taken[best] = true;
    out.push_back(best);
  }
  return out;
}

inline std::size_t linear_nearest(const Matrix& X, std::span<const double> target) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < X.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < X.cols(); ++j) s += (X(i, j) - target[j]) * (X(i, j) - target[j]);
    if (s < best_d) {
      best_d = s;
      best = i;
    }
  }
  return best;
}

/// Highest fidelity over every grid cell, each evaluated independently
/// with explain_fixed.
inline double exhaustive_best_fidelity(const Forest& forest, std::span<const double> x, const TuningGrid& grid,
                                       VectorMode mode, std::uint64_t seed) {
  double best = -std::numeric_limits<double>::infinity();
  std::size_t cell = 0;
  for (auto tau : grid.taus) {
    for (const auto& dim : grid.dims) {
      for (auto K : grid.ks) {
        const auto e = explain_fixed(forest, x, tau, dim, K, mode, cell_seed(seed, cell++));
        best = std::max(best, e.fidelity);
      }
    }
  }
  return best;
}

}  // namespace support

#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "bellatrex/core.hpp"
#include "bellatrex/forest.hpp"
#include "bellatrex/numeric.hpp"
#include "bellatrex/tree.hpp"

namespace bellatrex {

enum class VectorMode { Simple, Weighted };

inline std::string to_string(VectorMode mode) { return mode == VectorMode::Simple ? "simple" : "weighted"; }

inline VectorMode parse_vector_mode(const std::string& s) {
  if (s == "simple") return VectorMode::Simple;
  if (s == "weighted") return VectorMode::Weighted;
  throw ArgumentError("unknown vectorization mode '" + s + "'");
}

/// Path-based representation of the rule a tree applies to one instance.
struct RuleVector {
  std::vector<double> values;
  VectorMode mode = VectorMode::Weighted;
  std::size_t tree_index = 0;
};

/// Simple: number of splits on each covariate along x's path.
/// Weighted: the same count with each split weighted by its node's sample
/// fraction (the root split weighs 1).
inline RuleVector vectorize(const Tree& tree, std::span<const double> x, VectorMode mode, std::size_t tree_index = 0) {
  RuleVector rv{std::vector<double>(tree.n_features, 0.0), mode, tree_index};
  std::size_t id = 0;
  while (!tree.nodes[id].is_leaf()) {
    const auto& nd = tree.nodes[id];
    rv.values[static_cast<std::size_t>(nd.feature)] += mode == VectorMode::Simple ? 1.0 : nd.weight;
    id = static_cast<std::size_t>(x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right);
  }
  return rv;
}

/// Target dimension of the projection step: a PCA dimension or the identity
/// (no projection). Orders numerically, with the identity last.
class ProjectionDim {
 public:
  static ProjectionDim pca(std::size_t d) {
    if (d == 0) throw ArgumentError("projection dimension must be positive");
    return ProjectionDim(d);
  }
  static ProjectionDim identity() { return ProjectionDim(0); }

  bool is_identity() const { return d_ == 0; }
  std::size_t value() const { return d_; }
  std::string label() const { return is_identity() ? "none" : std::to_string(d_); }

  static ProjectionDim parse(const std::string& s) {
    if (s == "none" || s == "nopca" || s == "no-pca" || s == "identity") return identity();
    std::size_t pos = 0;
    const auto v = std::stoul(s, &pos);
    if (pos != s.size()) throw ArgumentError("bad projection dimension '" + s + "'");
    return pca(v);
  }

  std::strong_ordering operator<=>(const ProjectionDim& o) const {
    if (is_identity() != o.is_identity()) return is_identity() ? std::strong_ordering::greater : std::strong_ordering::less;
    return d_ <=> o.d_;
  }
  bool operator==(const ProjectionDim&) const = default;

 private:
  explicit ProjectionDim(std::size_t d) : d_(d) {}
  std::size_t d_;
};

struct TuningGrid {
  std::vector<std::size_t> taus{20, 50, 80};
  std::vector<ProjectionDim> dims{ProjectionDim::pca(2), ProjectionDim::pca(5), ProjectionDim::identity()};
  std::vector<std::size_t> ks{1, 2, 3};

  void validate(std::size_t n_trees) const {
    if (taus.empty() || dims.empty() || ks.empty()) throw ArgumentError("tuning grid lists must be non-empty");
    for (auto t : taus) {
      if (t < 1 || t > n_trees) {
        throw ArgumentError("tau " + std::to_string(t) + " outside [1, " + std::to_string(n_trees) + "]");
      }
    }
    const auto min_tau = *std::min_element(taus.begin(), taus.end());
    for (auto k : ks) {
      if (k < 1 || k > min_tau) throw ArgumentError("K " + std::to_string(k) + " must lie in [1, min tau]");
    }
  }

  std::size_t cell_count() const { return taus.size() * dims.size() * ks.size(); }
};

/// Switches for the ablation study.
struct AblationFlags {
  bool skip_preselection = false;  // tau := number of trees
  bool skip_projection = false;    // identity projection only
};

/// The grid actually searched once the ablation flags are applied.
inline TuningGrid effective_grid(const TuningGrid& grid, const AblationFlags& flags, std::size_t n_trees) {
  TuningGrid g = grid;
  if (flags.skip_preselection) g.taus = {n_trees};
  if (flags.skip_projection) g.dims = {ProjectionDim::identity()};
  return g;
}

/// K-Means seed of grid cell `cell` (row-major over tau, d, K).
inline std::uint64_t cell_seed(std::uint64_t seed, std::size_t cell) { return derive_seed(seed, cell); }

/// Trees ranked by |T_i(x) - y_hat| (Euclidean for vector outputs), ties by
/// tree index.
inline std::vector<std::size_t> rank_trees(std::span<const Prediction> tree_preds, const Prediction& forest_pred) {
  std::vector<double> dist(tree_preds.size());
  for (std::size_t t = 0; t < tree_preds.size(); ++t) dist[t] = prediction_distance(tree_preds[t], forest_pred);
  std::vector<std::size_t> order(tree_preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  return order;
}

inline std::vector<std::size_t> preselect(std::span<const Prediction> tree_preds, const Prediction& forest_pred, std::size_t tau) {
  if (tau < 1 || tau > tree_preds.size()) throw ArgumentError("preselect: tau outside [1, m]");
  auto order = rank_trees(tree_preds, forest_pred);
  order.resize(tau);
  return order;
}

/// Indices of the tau trees whose predictions for x are closest to the forest's.
inline std::vector<std::size_t> preselect(const Forest& forest, std::span<const double> x, std::size_t tau) {
  const auto preds = tree_predictions(forest, x);
  return preselect(preds, mean_prediction(preds), tau);
}

struct FinalRule {
  std::size_t tree_index = 0;
  std::vector<PathStep> path;
  double weight = 0.0;
  std::size_t cluster_size = 0;
  Prediction prediction;
  RuleVector vector;

  std::size_t length() const { return path.empty() ? 0 : path.size() - 1; }
};

struct Explanation {
  std::vector<double> instance;
  std::size_t tau = 0;
  ProjectionDim dim = ProjectionDim::identity();
  std::size_t d_effective = 0;
  std::size_t k_requested = 0;
  VectorMode mode = VectorMode::Weighted;

  /// Representatives, by decreasing weight (ties by tree index).
  std::vector<FinalRule> rules;
  Prediction surrogate;
  Prediction forest_prediction;
  double fidelity = 0.0;

  /// Per pre-selected tree, in proximity order.
  std::vector<std::size_t> preselected;
  std::vector<std::array<double, 2>> projected_points;
  std::vector<std::size_t> clusters;  // index into `rules`
  std::vector<bool> is_representative;
  std::vector<Prediction> rule_predictions;

  std::size_t k() const { return rules.size(); }
  bool k_clamped() const { return rules.size() < k_requested; }
};

/// Per-instance quantities shared by every grid cell: tree predictions, the
/// forest prediction, the proximity ranking and every tree's rule vector.
class InstanceRules {
 public:
  InstanceRules(const Forest& forest, std::span<const double> x, VectorMode mode)
      : forest_(&forest), x_(x.begin(), x.end()), mode_(mode) {
    if (x.size() != forest.n_features) throw ArgumentError("instance width does not match the forest");
    tree_preds_ = tree_predictions(forest, x_);
    forest_pred_ = mean_prediction(tree_preds_);
    ranking_ = rank_trees(tree_preds_, forest_pred_);
    vectors_.reserve(forest.trees.size());
    for (std::size_t t = 0; t < forest.trees.size(); ++t) vectors_.push_back(vectorize(forest.trees[t], x_, mode, t));
  }

  const Forest& forest() const { return *forest_; }
  std::span<const double> instance() const { return x_; }
  VectorMode mode() const { return mode_; }
  const Prediction& forest_prediction() const { return forest_pred_; }
  std::span<const Prediction> tree_predictions_view() const { return tree_preds_; }
  std::span<const std::size_t> ranking() const { return ranking_; }
  const RuleVector& vector(std::size_t tree) const { return vectors_[tree]; }

  /// Rule vectors of the tau best-ranked trees, one per row.
  Matrix selected_vectors(std::size_t tau) const {
    Matrix V(tau, forest_->n_features);
    for (std::size_t i = 0; i < tau; ++i) {
      const auto& v = vectors_[ranking_[i]].values;
      std::copy(v.begin(), v.end(), V.row(i).begin());
    }
    return V;
  }

 private:
  const Forest* forest_;
  std::vector<double> x_;
  VectorMode mode_;
  std::vector<Prediction> tree_preds_;
  Prediction forest_pred_;
  std::vector<std::size_t> ranking_;
  std::vector<RuleVector> vectors_;
};

namespace detail {

inline Projection truncate_projection(const Projection& full, std::size_t d) {
  const std::size_t keep = std::min(d, full.output_dim());
  Projection out;
  out.mean = full.mean;
  out.components = Matrix(keep, full.input_dim());
  for (std::size_t k = 0; k < keep; ++k) {
    std::copy(full.components.row(k).begin(), full.components.row(k).end(), out.components.row(k).begin());
  }
  out.explained_variance.assign(full.explained_variance.begin(), full.explained_variance.begin() + static_cast<std::ptrdiff_t>(keep));
  return out;
}

/// Clustering and extraction on already-projected points.
inline Explanation explain_projected(const InstanceRules& ctx, std::size_t tau, ProjectionDim dim, const Matrix& points,
                                     std::size_t K, std::uint64_t seed) {
  const Forest& forest = ctx.forest();
  Explanation e;
  e.instance.assign(ctx.instance().begin(), ctx.instance().end());
  e.tau = tau;
  e.dim = dim;
  e.d_effective = points.cols();
  e.k_requested = K;
  e.mode = ctx.mode();
  e.forest_prediction = ctx.forest_prediction();
  e.preselected.assign(ctx.ranking().begin(), ctx.ranking().begin() + static_cast<std::ptrdiff_t>(tau));

  const Clustering cl = kmeans_pp(points, K, seed);

  // Representative of each cluster: the member nearest to the centroid.
  struct Rep {
    std::size_t cluster;
    std::size_t position;  // in the pre-selection
    std::size_t tree;
  };
  std::vector<Rep> reps;
  for (std::size_t c = 0; c < cl.k; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < tau; ++i) {
      if (cl.assignments[i] == c) members.push_back(i);
    }
    const Matrix sub = points.select_rows(members);
    const std::size_t pos = members[nearest_point(sub, cl.centroids.row(c))];
    reps.push_back({c, pos, e.preselected[pos]});
  }
  std::sort(reps.begin(), reps.end(), [&](const Rep& a, const Rep& b) {
    if (cl.sizes[a.cluster] != cl.sizes[b.cluster]) return cl.sizes[a.cluster] > cl.sizes[b.cluster];
    return a.tree < b.tree;
  });

  std::vector<std::size_t> rule_of_cluster(cl.k);
  const auto preds = ctx.tree_predictions_view();
  e.surrogate.values.assign(e.forest_prediction.values.size(), 0.0);
  for (std::size_t r = 0; r < reps.size(); ++r) {
    rule_of_cluster[reps[r].cluster] = r;
    FinalRule rule;
    rule.tree_index = reps[r].tree;
    rule.path = decision_path(forest.trees[rule.tree_index], e.instance);
    rule.cluster_size = cl.sizes[reps[r].cluster];
    rule.weight = static_cast<double>(rule.cluster_size) / static_cast<double>(tau);
    rule.prediction = preds[rule.tree_index];
    rule.vector = ctx.vector(rule.tree_index);
    for (std::size_t o = 0; o < e.surrogate.values.size(); ++o) e.surrogate.values[o] += rule.weight * rule.prediction.values[o];
    e.rules.push_back(std::move(rule));
  }
  e.fidelity = 1.0 - prediction_distance(e.forest_prediction, e.surrogate);

  e.projected_points.resize(tau);
  e.clusters.resize(tau);
  e.is_representative.assign(tau, false);
  e.rule_predictions.resize(tau);
  for (std::size_t i = 0; i < tau; ++i) {
    e.projected_points[i] = {points.cols() > 0 ? points(i, 0) : 0.0, points.cols() > 1 ? points(i, 1) : 0.0};
    e.clusters[i] = rule_of_cluster[cl.assignments[i]];
    e.rule_predictions[i] = preds[e.preselected[i]];
  }
  for (const auto& rep : reps) e.is_representative[rep.position] = true;
  return e;
}

}  // namespace detail

/// One grid cell of the pipeline: pre-select tau trees, vectorise their
/// rules, project to `dim`, cluster into K groups and keep the rule nearest
/// each centroid. The surrogate is the cluster-size weighted mean of the
/// representatives' predictions.
inline Explanation explain_fixed(const InstanceRules& ctx, std::size_t tau, ProjectionDim dim, std::size_t K,
                                 std::uint64_t seed) {
  if (tau < 1 || tau > ctx.forest().size()) throw ArgumentError("explain: tau outside [1, m]");
  if (K < 1) throw ArgumentError("explain: K must be positive");
  const Matrix V = ctx.selected_vectors(tau);
  if (dim.is_identity()) return detail::explain_projected(ctx, tau, dim, V, K, seed);
  const Projection proj = pca_fit(V, dim.value());
  return detail::explain_projected(ctx, tau, dim, pca_transform(proj, V), K, seed);
}

inline Explanation explain_fixed(const Forest& forest, std::span<const double> x, std::size_t tau, ProjectionDim dim,
                                 std::size_t K, VectorMode mode, std::uint64_t seed) {
  return explain_fixed(InstanceRules(forest, x, mode), tau, dim, K, seed);
}

/// Orders explanations for selection: higher fidelity first, then fewer
/// rules, lower d, lower tau.
inline bool better_explanation(const Explanation& a, const Explanation& b) {
  if (a.fidelity != b.fidelity) return a.fidelity > b.fidelity;
  return std::tuple(a.k(), a.k_requested, a.dim, a.tau) < std::tuple(b.k(), b.k_requested, b.dim, b.tau);
}

/// Searches the full grid and keeps the explanation of highest fidelity.
/// Cell i uses K-Means seed cell_seed(seed, i).
inline Explanation tune_and_explain(const InstanceRules& ctx, const TuningGrid& grid, const AblationFlags& flags,
                                    std::uint64_t seed) {
  const std::size_t m = ctx.forest().size();
  const TuningGrid g = effective_grid(grid, flags, m);
  g.validate(m);

  std::size_t max_dim = 0;
  for (const auto& d : g.dims) {
    if (!d.is_identity()) max_dim = std::max(max_dim, d.value());
  }

  std::optional<Explanation> best;
  std::size_t cell = 0;
  for (auto tau : g.taus) {
    const Matrix V = ctx.selected_vectors(tau);
    // Truncating one decomposition gives the same projection as fitting each d.
    std::optional<Projection> full;
    if (max_dim > 0) full = pca_fit(V, max_dim);
    for (const auto& dim : g.dims) {
      const Matrix points = dim.is_identity() ? V : pca_transform(detail::truncate_projection(*full, dim.value()), V);
      for (auto K : g.ks) {
        Explanation e = detail::explain_projected(ctx, tau, dim, points, K, cell_seed(seed, cell++));
        if (!best || better_explanation(e, *best)) best = std::move(e);
      }
    }
  }
  return std::move(*best);
}

inline Explanation tune_and_explain(const Forest& forest, std::span<const double> x, const TuningGrid& grid,
                                    VectorMode mode, const AblationFlags& flags, std::uint64_t seed) {
  return tune_and_explain(InstanceRules(forest, x, mode), grid, flags, seed);
}

}  // namespace bellatrex

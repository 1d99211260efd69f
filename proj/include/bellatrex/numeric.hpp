#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bellatrex/core.hpp"

namespace bellatrex {

/// Linear projection onto principal directions.
struct Projection {
  std::vector<double> mean;                 // length p
  Matrix components;                        // d x p, orthonormal rows
  std::vector<double> explained_variance;   // length d, descending

  std::size_t input_dim() const { return mean.size(); }
  std::size_t output_dim() const { return components.rows(); }
};

namespace detail {

using EigenMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const EigenMatrix> as_eigen(const Matrix& m) {
  return {m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

/// Flip so the largest-magnitude coordinate is positive (first one on ties).
inline void canonical_sign(Eigen::Ref<Eigen::VectorXd> v) {
  Eigen::Index arg = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
  }
  if (v[arg] < 0) v = -v;
}

}  // namespace detail

/// Principal component analysis of the rows of X, keeping min(d, p)
/// components. Eigen-decomposes the p x p covariance when p <= n and the
/// n x n Gram matrix otherwise; directions the data does not span are
/// completed to an orthonormal basis with zero variance.
inline Projection pca_fit(const Matrix& X, std::size_t d) {
  const std::size_t n = X.rows();
  const std::size_t p = X.cols();
  if (n == 0) throw ArgumentError("pca_fit: no rows");
  const std::size_t keep = std::min(d, p);

  const auto Xe = detail::as_eigen(X);
  const Eigen::RowVectorXd mean = Xe.colwise().mean();
  const Eigen::MatrixXd centered = Xe.rowwise() - mean;
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;

  Eigen::MatrixXd basis(p, p);  // columns are principal directions
  Eigen::VectorXd variance = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  std::size_t found = 0;

  if (p <= n) {
    const Eigen::MatrixXd cov = centered.transpose() * centered / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    for (std::size_t k = 0; k < p; ++k) {
      const auto src = static_cast<Eigen::Index>(p - 1 - k);
      basis.col(static_cast<Eigen::Index>(k)) = solver.eigenvectors().col(src);
      variance[static_cast<Eigen::Index>(k)] = std::max(0.0, solver.eigenvalues()[src]);
    }
    found = p;
  } else {
    const Eigen::MatrixXd gram = centered * centered.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
    const double top = std::max(solver.eigenvalues().maxCoeff(), 0.0);
    const double tol = 1e-12 * std::max(1.0, top);
    for (std::size_t k = 0; k < n; ++k) {
      const auto src = static_cast<Eigen::Index>(n - 1 - k);
      const double lambda = solver.eigenvalues()[src];
      if (lambda <= tol) break;
      Eigen::VectorXd v = centered.transpose() * solver.eigenvectors().col(src) / std::sqrt(lambda);
      basis.col(static_cast<Eigen::Index>(found)) = v.normalized();
      variance[static_cast<Eigen::Index>(found)] = lambda / denom;
      ++found;
    }
    // Complete with standard basis vectors (modified Gram-Schmidt, twice).
    for (std::size_t e = 0; e < p && found < p; ++e) {
      Eigen::VectorXd v = Eigen::VectorXd::Unit(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(e));
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t k = 0; k < found; ++k) {
          const auto col = basis.col(static_cast<Eigen::Index>(k));
          v -= col.dot(v) * col;
        }
      }
      const double norm = v.norm();
      if (norm < 1e-8) continue;
      basis.col(static_cast<Eigen::Index>(found++)) = v / norm;
    }
  }

  Projection proj;
  proj.mean.assign(mean.data(), mean.data() + p);
  proj.components = Matrix(keep, p);
  proj.explained_variance.resize(keep);
  for (std::size_t k = 0; k < keep; ++k) {
    Eigen::VectorXd v = basis.col(static_cast<Eigen::Index>(k));
    detail::canonical_sign(v);
    for (std::size_t j = 0; j < p; ++j) proj.components(k, j) = v[static_cast<Eigen::Index>(j)];
    proj.explained_variance[k] = variance[static_cast<Eigen::Index>(k)];
  }
  return proj;
}

/// (X - mean) * components^T
inline Matrix pca_transform(const Projection& proj, const Matrix& X) {
  if (X.cols() != proj.input_dim()) throw ArgumentError("pca_transform: dimension mismatch");
  const std::size_t d = proj.output_dim();
  Matrix out(X.rows(), d);
  std::vector<double> centered(X.cols());
  for (std::size_t i = 0; i < X.rows(); ++i) {
    for (std::size_t j = 0; j < X.cols(); ++j) centered[j] = X(i, j) - proj.mean[j];
    for (std::size_t k = 0; k < d; ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < X.cols(); ++j) s += centered[j] * proj.components(k, j);
      out(i, k) = s;
    }
  }
  return out;
}

/// Maps projected coordinates back to the input space.
inline Matrix pca_inverse_transform(const Projection& proj, const Matrix& Y) {
  if (Y.cols() != proj.output_dim()) throw ArgumentError("pca_inverse_transform: dimension mismatch");
  const std::size_t p = proj.input_dim();
  Matrix out(Y.rows(), p);
  for (std::size_t i = 0; i < Y.rows(); ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      double s = proj.mean[j];
      for (std::size_t k = 0; k < Y.cols(); ++k) s += Y(i, k) * proj.components(k, j);
      out(i, j) = s;
    }
  }
  return out;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

/// Index of the row closest to target (Euclidean); lowest index on ties.
inline std::size_t nearest_point(const Matrix& X, std::span<const double> target) {
  if (X.rows() == 0) throw ArgumentError("nearest_point: no rows");
  if (target.size() != X.cols()) throw ArgumentError("nearest_point: dimension mismatch");
  std::size_t best = 0;
  double best_d = squared_distance(X.row(0), target);
  for (std::size_t i = 1; i < X.rows(); ++i) {
    const double d = squared_distance(X.row(i), target);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

struct KMeansOptions {
  std::size_t max_iterations = 100;
};

struct Clustering {
  std::size_t k = 0;
  Matrix centroids;                     // k x d
  std::vector<std::size_t> assignments;  // per input row
  std::vector<std::size_t> sizes;
  double inertia = 0.0;
  /// Inertia after each assignment pass.
  std::vector<double> inertia_history;
  std::size_t iterations = 0;
};

/// Number of distinct rows.
inline std::size_t distinct_rows(const Matrix& X) {
  std::vector<std::size_t> idx(X.rows());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto less = [&](std::size_t a, std::size_t b) {
    auto ra = X.row(a), rb = X.row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  };
  std::sort(idx.begin(), idx.end(), less);
  std::size_t count = idx.empty() ? 0 : 1;
  for (std::size_t i = 1; i < idx.size(); ++i) count += less(idx[i - 1], idx[i]) ? 1 : 0;
  return count;
}

/// K-Means++ seeding (D^2 sampling) followed by Lloyd iterations until the
/// assignment is a fixpoint or the iteration cap is hit. K is clamped to the
/// number of distinct rows. Rows are processed in lexicographic order, so the
/// partition does not depend on the input row order.
inline Clustering kmeans_pp(const Matrix& X, std::size_t K, std::uint64_t seed, const KMeansOptions& options = {}) {
  const std::size_t n = X.rows();
  const std::size_t d = X.cols();
  if (n == 0) throw ArgumentError("kmeans_pp: no rows");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    auto ra = X.row(a), rb = X.row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  });
  Matrix pts = X.select_rows(order);
  K = std::clamp<std::size_t>(K, 1, distinct_rows(pts));

  Rng rng(seed);
  Matrix centers(K, d);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  auto set_center = [&](std::size_t c, std::size_t i) {
    std::copy(pts.row(i).begin(), pts.row(i).end(), centers.row(c).begin());
    for (std::size_t j = 0; j < n; ++j) nearest[j] = std::min(nearest[j], squared_distance(pts.row(j), centers.row(c)));
  };
  set_center(0, static_cast<std::size_t>(rng.below(n)));
  for (std::size_t c = 1; c < K; ++c) {
    const double total = std::accumulate(nearest.begin(), nearest.end(), 0.0);
    const double target = rng.uniform() * total;
    double acc = 0.0;
    std::size_t pick = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (nearest[j] <= 0.0) continue;
      acc += nearest[j];
      if (acc > target) {
        pick = j;
        break;
      }
    }
    if (pick == n) {  // rounding at the top end: take the last candidate
      for (std::size_t j = n; j-- > 0;) {
        if (nearest[j] > 0.0) {
          pick = j;
          break;
        }
      }
    }
    set_center(c, pick);
  }

  std::vector<std::size_t> assign(n, 0);
  std::vector<double> cost(n, 0.0);
  auto assign_all = [&]() {
    bool changed = false;
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = squared_distance(pts.row(i), centers.row(0));
      for (std::size_t c = 1; c < K; ++c) {
        const double dd = squared_distance(pts.row(i), centers.row(c));
        if (dd < best_d) {
          best_d = dd;
          best = c;
        }
      }
      changed = changed || assign[i] != best;
      assign[i] = best;
      cost[i] = best_d;
      inertia += best_d;
    }
    return std::pair{changed, inertia};
  };

  Clustering out;
  auto [changed0, inertia0] = assign_all();
  (void)changed0;
  out.inertia_history.push_back(inertia0);
  out.inertia = inertia0;

  std::size_t iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    std::vector<std::size_t> count(K, 0);
    for (auto a : assign) ++count[a];
    // Reseed empty clusters at the point farthest from its centroid.
    for (std::size_t c = 0; c < K; ++c) {
      if (count[c] > 0) continue;
      std::size_t far = 0;
      for (std::size_t i = 1; i < n; ++i) {
        if (cost[i] > cost[far] && count[assign[i]] > 1) far = i;
      }
      if (count[assign[far]] <= 1) continue;
      --count[assign[far]];
      assign[far] = c;
      cost[far] = 0.0;
      count[c] = 1;
    }
    centers = Matrix(K, d);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) centers(assign[i], j) += pts(i, j);
    }
    for (std::size_t c = 0; c < K; ++c) {
      if (count[c] == 0) continue;
      for (std::size_t j = 0; j < d; ++j) centers(c, j) /= static_cast<double>(count[c]);
    }
    auto [changed, inertia] = assign_all();
    out.inertia_history.push_back(inertia);
    out.inertia = inertia;
    if (!changed) break;
  }
  out.iterations = iter;

  // Drop clusters left empty after the final pass (only possible at the cap).
  std::vector<std::size_t> count(K, 0);
  for (auto a : assign) ++count[a];
  std::vector<std::size_t> relabel(K, 0);
  std::size_t kept = 0;
  for (std::size_t c = 0; c < K; ++c) {
    if (count[c] > 0) relabel[c] = kept++;
  }
  out.k = kept;
  out.centroids = Matrix(kept, d);
  out.sizes.assign(kept, 0);
  for (std::size_t c = 0; c < K; ++c) {
    if (count[c] == 0) continue;
    std::copy(centers.row(c).begin(), centers.row(c).end(), out.centroids.row(relabel[c]).begin());
    out.sizes[relabel[c]] = count[c];
  }
  out.assignments.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) out.assignments[order[i]] = relabel[assign[i]];
  return out;
}

}  // namespace bellatrex

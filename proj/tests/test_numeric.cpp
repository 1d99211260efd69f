#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "bellatrex/numeric.hpp"
#include "support.hpp"

using namespace bellatrex;

namespace {

Matrix random_matrix(std::size_t n, std::size_t p, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(n, p);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) m(i, j) = rng.uniform() * static_cast<double>(j + 1);
  }
  return m;
}

double dot_rows(const Matrix& m, std::size_t a, std::size_t b) {
  double s = 0.0;
  for (std::size_t j = 0; j < m.cols(); ++j) s += m(a, j) * m(b, j);
  return s;
}

void expect_orthonormal(const Matrix& comps, double tol) {
  for (std::size_t a = 0; a < comps.rows(); ++a) {
    for (std::size_t b = 0; b < comps.rows(); ++b) EXPECT_NEAR(dot_rows(comps, a, b), a == b ? 1.0 : 0.0, tol);
  }
}

std::vector<std::set<std::size_t>> partition(const Clustering& c) {
  std::vector<std::set<std::size_t>> groups(c.k);
  for (std::size_t i = 0; i < c.assignments.size(); ++i) groups[c.assignments[i]].insert(i);
  std::sort(groups.begin(), groups.end());
  return groups;
}

}  // namespace

TEST(Pca, IdenticalRowsGiveZeroCoordinates) {
  const Matrix X = Matrix::from_rows({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}});
  const auto proj = pca_fit(X, 2);
  const auto Y = pca_transform(proj, X);
  for (double v : Y.data()) EXPECT_EQ(v, 0.0);
  for (double v : proj.explained_variance) EXPECT_EQ(v, 0.0);
  expect_orthonormal(proj.components, 1e-12);
}

TEST(Pca, PointsOnDiagonalLine) {
  const Matrix X = Matrix::from_rows({{0, 0}, {1, 1}, {2, 2}, {3, 3}});
  const auto proj = pca_fit(X, 1);
  EXPECT_NEAR(proj.components(0, 0), 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(proj.components(0, 1), 1.0 / std::sqrt(2.0), 1e-12);
  const auto full = pca_fit(X, 2);
  EXPECT_NEAR(full.explained_variance[1], 0.0, 1e-12);
}

TEST(Pca, DimensionClampedToInputWidth) {
  const auto X = random_matrix(20, 3, 1);
  const auto proj = pca_fit(X, 10);
  EXPECT_EQ(proj.output_dim(), 3u);
  EXPECT_THROW(pca_fit(Matrix(0, 3), 2), ArgumentError);
}

TEST(Pca, TransformMatchesDirectFormula) {
  const auto X = random_matrix(3, 3, 2);
  const auto proj = pca_fit(X, 3);
  const auto Y = pca_transform(proj, X);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < 3; ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < 3; ++j) s += (X(i, j) - proj.mean[j]) * proj.components(k, j);
      EXPECT_NEAR(Y(i, k), s, 1e-12);
    }
  }
}

TEST(Pca, ComponentsOrthonormalAndVarianceDescending) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto X = random_matrix(30, 6, seed);
    const auto proj = pca_fit(X, 6);
    expect_orthonormal(proj.components, 1e-10);
    for (std::size_t k = 1; k < proj.explained_variance.size(); ++k) {
      EXPECT_GE(proj.explained_variance[k - 1], proj.explained_variance[k]);
    }
  }
}

TEST(Pca, ExplainedVarianceIsProjectedVariance) {
  const auto X = random_matrix(40, 5, 3);
  const auto proj = pca_fit(X, 5);
  const auto Y = pca_transform(proj, X);
  for (std::size_t k = 0; k < 5; ++k) {
    double ss = 0.0;
    for (std::size_t i = 0; i < Y.rows(); ++i) ss += Y(i, k) * Y(i, k);
    EXPECT_NEAR(proj.explained_variance[k], ss / 39.0, 1e-10);
  }
}

TEST(Pca, FullRankReconstructionAndTotalVariance) {
  const auto X = random_matrix(50, 10, 4);
  const auto proj = pca_fit(X, 10);
  const auto back = pca_inverse_transform(proj, pca_transform(proj, X));
  for (std::size_t i = 0; i < X.data().size(); ++i) EXPECT_NEAR(back.data()[i], X.data()[i], 1e-8);
  double total = 0.0;
  for (std::size_t j = 0; j < 10; ++j) {
    double mean = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < 50; ++i) mean += X(i, j);
    mean /= 50.0;
    for (std::size_t i = 0; i < 50; ++i) ss += (X(i, j) - mean) * (X(i, j) - mean);
    total += ss / 49.0;
  }
  double sum = 0.0;
  for (double v : proj.explained_variance) sum += v;
  EXPECT_NEAR(sum, total, 1e-6);
}

TEST(Pca, WideMatrixUsesGramRouteConsistently) {
  const auto X = random_matrix(6, 15, 5);
  const auto proj = pca_fit(X, 15);
  EXPECT_EQ(proj.output_dim(), 15u);
  expect_orthonormal(proj.components, 1e-9);
  const auto back = pca_inverse_transform(proj, pca_transform(proj, X));
  for (std::size_t i = 0; i < X.data().size(); ++i) EXPECT_NEAR(back.data()[i], X.data()[i], 1e-9);
  for (std::size_t k = 5; k < 15; ++k) EXPECT_EQ(proj.explained_variance[k], 0.0);

  // Stacking the rows three times forces the covariance route; the spanned
  // directions must agree, with variances rescaled by 3 (n - 1) / (3n - 1).
  std::vector<std::size_t> rows;
  for (int r = 0; r < 3; ++r) {
    for (std::size_t i = 0; i < 6; ++i) rows.push_back(i);
  }
  const auto tall = pca_fit(X.select_rows(rows), 5);
  for (std::size_t k = 0; k < 5; ++k) {
    for (std::size_t j = 0; j < 15; ++j) EXPECT_NEAR(tall.components(k, j), proj.components(k, j), 1e-8);
    EXPECT_NEAR(tall.explained_variance[k], proj.explained_variance[k] * 15.0 / 17.0, 1e-10);
  }
}

TEST(NearestPoint, TiesGoToLowestIndex) {
  const Matrix X = Matrix::from_rows({{1, 0}, {0, 1}, {-1, 0}});
  const std::vector<double> origin{0, 0};
  EXPECT_EQ(nearest_point(X, origin), 0u);
  EXPECT_EQ(nearest_point(X, std::vector<double>{-0.9, 0.0}), 2u);
  EXPECT_THROW(nearest_point(Matrix(0, 2), origin), ArgumentError);
}

TEST(NearestPoint, MatchesLinearScan) {
  Rng rng(6);
  for (int rep = 0; rep < 200; ++rep) {
    const auto X = random_matrix(1 + rng.below(30), 3, rng.next());
    std::vector<double> t{rng.uniform(), rng.uniform() * 2, rng.uniform() * 3};
    EXPECT_EQ(nearest_point(X, t), support::linear_nearest(X, t));
  }
}

TEST(KMeans, SingleClusterCentroidIsMean) {
  const auto X = random_matrix(25, 3, 7);
  const auto c = kmeans_pp(X, 1, 1);
  ASSERT_EQ(c.k, 1u);
  for (std::size_t j = 0; j < 3; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < 25; ++i) s += X(i, j);
    EXPECT_NEAR(c.centroids(0, j), s / 25.0, 1e-12);
  }
  EXPECT_EQ(c.sizes, (std::vector<std::size_t>{25}));
}

TEST(KMeans, SeparatedBlobsRecovered) {
  Rng rng(8);
  Matrix X(60, 2);
  for (std::size_t i = 0; i < 60; ++i) {
    const double cx = (i % 3) * 10.0;
    X(i, 0) = cx + rng.uniform();
    X(i, 1) = -cx + rng.uniform();
  }
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto c = kmeans_pp(X, 3, seed);
    ASSERT_EQ(c.k, 3u);
    for (std::size_t i = 3; i < 60; ++i) EXPECT_EQ(c.assignments[i], c.assignments[i % 3]);
    EXPECT_EQ(c.sizes, (std::vector<std::size_t>{20, 20, 20}));
  }
}

TEST(KMeans, KClampedToDistinctRows) {
  const Matrix X = Matrix::from_rows({{0, 0}, {0, 0}, {1, 1}});
  const auto c = kmeans_pp(X, 5, 3);
  EXPECT_EQ(c.k, 2u);
  EXPECT_EQ(c.assignments[0], c.assignments[1]);
  EXPECT_NE(c.assignments[0], c.assignments[2]);
  EXPECT_EQ(c.inertia, 0.0);
  const auto same = kmeans_pp(Matrix::from_rows({{2, 2}, {2, 2}}), 2, 3);
  EXPECT_EQ(same.k, 1u);
}

TEST(KMeans, InertiaNonIncreasing) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto X = random_matrix(40, 3, 100 + seed);
    const auto c = kmeans_pp(X, 4, seed);
    for (std::size_t i = 1; i < c.inertia_history.size(); ++i) {
      EXPECT_LE(c.inertia_history[i], c.inertia_history[i - 1] + 1e-12);
    }
    std::size_t total = 0;
    for (auto s : c.sizes) total += s;
    EXPECT_EQ(total, 40u);
  }
}

TEST(KMeans, DeterministicForSeed) {
  const auto X = random_matrix(30, 2, 9);
  EXPECT_EQ(kmeans_pp(X, 3, 4).assignments, kmeans_pp(X, 3, 4).assignments);
}

TEST(KMeans, PartitionInvariantToRowOrder) {
  Rng rng(10);
  for (int rep = 0; rep < 30; ++rep) {
    const auto X = random_matrix(25, 3, 200 + rep);
    std::vector<std::size_t> perm(25);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm);
    const auto a = kmeans_pp(X, 3, rep);
    const auto b = kmeans_pp(X.select_rows(perm), 3, rep);
    std::vector<std::size_t> back(25);
    for (std::size_t i = 0; i < 25; ++i) back[perm[i]] = b.assignments[i];
    Clustering mapped = b;
    mapped.assignments = back;
    EXPECT_EQ(partition(a), partition(mapped));
  }
}

TEST(KMeans, ClusterRepresentativeIsNearestMember) {
  const auto X = random_matrix(40, 2, 11);
  const auto c = kmeans_pp(X, 3, 2);
  for (std::size_t k = 0; k < c.k; ++k) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < 40; ++i) {
      if (c.assignments[i] == k) members.push_back(i);
    }
    const auto sub = X.select_rows(members);
    EXPECT_EQ(nearest_point(sub, c.centroids.row(k)), support::linear_nearest(sub, c.centroids.row(k)));
  }
}

#include <gtest/gtest.h>

#include "bellatrex/tree.hpp"
#include "support.hpp"

using namespace bellatrex;

namespace {

Dataset binary_rows(const std::vector<double>& x, const std::vector<double>& y) {
  Dataset d;
  d.task = Task::binary();
  d.covariates = Matrix(x.size(), 1);
  d.targets = Matrix(x.size(), 1);
  for (std::size_t i = 0; i < x.size(); ++i) {
    d.covariates(i, 0) = x[i];
    d.targets(i, 0) = y[i];
  }
  d.covariate_names = {"x"};
  d.categorical_levels.assign(1, {});
  return d;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  std::iota(r.begin(), r.end(), std::size_t{0});
  return r;
}

}  // namespace

TEST(Gini, Examples) {
  EXPECT_EQ(gini(std::vector<double>{1, 1, 1}), 0.0);
  EXPECT_EQ(gini(std::vector<double>{1, 0}), 0.5);
  EXPECT_EQ(gini(std::vector<double>{1, 0, 0, 0}), 0.375);
}

TEST(VarianceReduction, Examples) {
  const auto parent = Matrix::from_rows({{0}, {0}, {1}, {1}});
  EXPECT_DOUBLE_EQ(variance_reduction(parent, Matrix::from_rows({{0}, {0}}), Matrix::from_rows({{1}, {1}})), 0.25);
  const auto halves = Matrix::from_rows({{0}, {1}});
  EXPECT_DOUBLE_EQ(variance_reduction(parent, halves, halves), 0.0);
  const auto p2 = Matrix::from_rows({{0, 5}, {0, 5}, {1, 5}, {1, 5}});
  EXPECT_DOUBLE_EQ(variance_reduction(p2, Matrix::from_rows({{0, 5}, {0, 5}}), Matrix::from_rows({{1, 5}, {1, 5}})),
                   0.125);
  EXPECT_THROW(variance_reduction(parent, halves, Matrix::from_rows({{1}})), ArgumentError);
}

TEST(BestSplit, FourPointBinary) {
  const auto d = binary_rows({1, 2, 3, 4}, {0, 0, 1, 1});
  const TrainingView view(d);
  const auto rows = all_rows(4);
  const std::size_t cand[] = {0};
  const auto s = best_split(view, rows, cand);
  ASSERT_TRUE(s.has_value());
  EXPECT_EQ(s->feature, 0u);
  EXPECT_EQ(s->threshold, 2.5);
  EXPECT_DOUBLE_EQ(s->score, 0.5);
}

TEST(BestSplit, ConstantCovariateHasNoSplit) {
  const auto d = binary_rows({3, 3, 3}, {0, 1, 0});
  const TrainingView view(d);
  const auto rows = all_rows(3);
  const std::size_t cand[] = {0};
  EXPECT_FALSE(best_split(view, rows, cand).has_value());
}

TEST(BestSplit, TiesGoToLowestFeatureThenThreshold) {
  Dataset d = binary_rows({1, 2, 3, 4}, {0, 0, 1, 1});
  d.covariates = Matrix::from_rows({{1, 1}, {2, 2}, {3, 3}, {4, 4}});
  d.covariate_names = {"a", "b"};
  d.categorical_levels.assign(2, {});
  const TrainingView view(d);
  const auto rows = all_rows(4);
  const std::size_t cand[] = {1, 0};
  EXPECT_EQ(best_split(view, rows, cand)->feature, 0u);
  // Symmetric labels: thresholds 1.5 and 3.5 give the same gain.
  const auto e = binary_rows({1, 2, 3, 4}, {0, 1, 1, 0});
  const TrainingView ev(e);
  const std::size_t c0[] = {0};
  EXPECT_EQ(best_split(ev, rows, c0)->threshold, 1.5);
}

TEST(BestSplit, DuplicatedTargetColumnMatchesSingleTarget) {
  auto single = support::make_dataset(TaskKind::Regression, 40, 3, 2);
  Dataset twin = single;
  twin.task = Task::multi_target(2);
  twin.targets = Matrix(40, 2);
  for (std::size_t i = 0; i < 40; ++i) twin.targets(i, 0) = twin.targets(i, 1) = single.targets(i, 0);
  const auto rows = all_rows(40);
  const std::size_t cand[] = {0, 1, 2};
  const auto a = best_split(TrainingView(single), rows, cand);
  const auto b = best_split(TrainingView(twin), rows, cand);
  ASSERT_TRUE(a && b);
  EXPECT_EQ(a->feature, b->feature);
  EXPECT_EQ(a->threshold, b->threshold);
}

TEST(BestSplit, SurvivalUsesLogRank) {
  Dataset d;
  d.task = Task::survival();
  d.covariates = Matrix::from_rows({{0}, {0}, {0}, {0}, {1}, {1}, {1}, {1}});
  d.covariate_names = {"x"};
  d.categorical_levels.assign(1, {});
  for (int i = 0; i < 4; ++i) d.survival.push_back({1, true});
  for (int i = 0; i < 4; ++i) d.survival.push_back({10, true});
  const auto rows = all_rows(8);
  const std::size_t cand[] = {0};
  const auto s = best_split(TrainingView(d), rows, cand);
  ASSERT_TRUE(s);
  EXPECT_EQ(s->threshold, 0.5);
  EXPECT_NEAR(s->score, std::sqrt(7.0), 1e-12);
}

TEST(GrowTree, PureDataGivesSingleLeaf) {
  const auto d = binary_rows({1, 2, 3, 4, 5}, {1, 1, 1, 1, 1});
  Rng rng(1);
  const auto t = grow_tree(TrainingView(d), all_rows(5), {5, 1, std::nullopt}, rng);
  EXPECT_EQ(t.nodes.size(), 1u);
  EXPECT_EQ(tree_predict(t, std::vector<double>{9.0}).values, (std::vector<double>{1.0}));
}

TEST(GrowTree, MinSamplesSplitStopsGrowth) {
  const auto d = binary_rows({1, 2, 3, 4}, {0, 0, 1, 1});
  Rng rng(1);
  EXPECT_EQ(grow_tree(TrainingView(d), all_rows(4), {5, 1, std::nullopt}, rng).nodes.size(), 1u);
  EXPECT_EQ(grow_tree(TrainingView(d), all_rows(4), {4, 1, std::nullopt}, rng).nodes.size(), 3u);
}

TEST(GrowTree, LeafProportionsAndBoundaryRouting) {
  const auto d = binary_rows({1, 2, 3, 4, 5, 6, 7, 8}, {0, 0, 0, 0, 1, 1, 1, 0});
  Rng rng(1);
  const auto t = grow_tree(TrainingView(d), all_rows(8), {5, 1, 1}, rng);
  ASSERT_EQ(t.nodes.size(), 3u);
  EXPECT_EQ(t.nodes[0].threshold, 4.5);
  EXPECT_EQ(tree_predict(t, std::vector<double>{4.5}).values[0], 0.0);  // x == threshold goes left
  EXPECT_EQ(tree_predict(t, std::vector<double>{6.0}).values[0], 0.75);
  EXPECT_EQ(t.nodes[0].value[0], 3.0 / 8.0);
  EXPECT_EQ(t.nodes[1].weight, 0.5);
}

TEST(DecisionPath, SingleLeafAndWeights) {
  const auto d = binary_rows({1, 2, 3, 4, 5}, {1, 1, 1, 1, 1});
  Rng rng(1);
  const auto leaf = grow_tree(TrainingView(d), all_rows(5), {2, 1, std::nullopt}, rng);
  EXPECT_EQ(decision_path(leaf, std::vector<double>{0.0}).size(), 1u);

  const auto data = support::make_dataset(TaskKind::Binary, 200, 4, 3);
  const auto forest = support::make_forest(data, 5, 3);
  for (const auto& tree : forest.trees) {
    for (std::size_t i = 0; i < 20; ++i) {
      const auto x = data.covariates.row(i);
      const auto path = decision_path(tree, x);
      EXPECT_EQ(path.front().weight, 1.0);
      for (std::size_t s = 1; s < path.size(); ++s) EXPECT_LE(path[s].weight, path[s - 1].weight);
      EXPECT_TRUE(path.back().is_leaf());
      EXPECT_EQ(path.back().value, tree_predict(tree, x).values);
      EXPECT_EQ(path.size() - 1, rule_length(tree, x));
    }
  }
}

TEST(DecisionPath, StepsFollowSplitTests) {
  const auto data = support::make_dataset(TaskKind::Regression, 100, 3, 8);
  const auto forest = support::make_forest(data, 3, 8);
  const auto x = data.covariates.row(7);
  for (const auto& tree : forest.trees) {
    const auto path = decision_path(tree, x);
    for (std::size_t s = 0; s + 1 < path.size(); ++s) {
      const auto& step = path[s];
      EXPECT_EQ(step.went_left, x[static_cast<std::size_t>(step.feature)] <= step.threshold);
      const auto& nd = tree.nodes[step.node];
      EXPECT_EQ(path[s + 1].node, static_cast<std::size_t>(step.went_left ? nd.left : nd.right));
    }
  }
}

#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "bellatrex/eval.hpp"
#include "support.hpp"

using namespace bellatrex;

namespace {

BenchmarkConfig small_config() {
  BenchmarkConfig c;
  c.forest.n_trees = 30;
  c.folds = 3;
  c.max_test = 10;
  c.grid.taus = {10, 20};
  c.grid.dims = {ProjectionDim::pca(2), ProjectionDim::identity()};
  c.grid.ks = {1, 2, 3};
  c.seed = 5;
  return c;
}

std::string tsv(const std::vector<MetricReport>& rows) {
  std::ostringstream out;
  write_reports_tsv(out, rows);
  return out.str();
}

}  // namespace

TEST(OobTrees, LowestErrorsFirst) {
  const std::vector<double> errs{0.1, 0.3, 0.2};
  EXPECT_EQ(lowest_oob_trees(errs, 2), (std::vector<std::size_t>{0, 2}));
  const std::vector<double> tied{0.2, 0.1, 0.2, 0.1};
  EXPECT_EQ(lowest_oob_trees(tied, 3), (std::vector<std::size_t>{1, 3, 0}));
  EXPECT_THROW(lowest_oob_trees(errs, 0), ArgumentError);
  EXPECT_THROW(lowest_oob_trees(errs, 4), ArgumentError);
}

TEST(OobTrees, AllTreesEqualForestPrediction) {
  const auto d = support::make_dataset(TaskKind::Regression, 100, 4, 51);
  const auto f = support::make_forest(d, 15, 51);
  const auto errs = oob_errors(f, d);
  for (std::size_t i = 0; i < 10; ++i) {
    const auto x = d.covariates.row(i);
    EXPECT_EQ(baseline_oob_trees(f, errs, x, 15).values, forest_predict(f, x).values);
  }
}

TEST(SmallForest, DeterministicPerK) {
  const auto d = support::make_dataset(TaskKind::Binary, 80, 4, 52);
  ForestParams p;
  p.seed = 9;
  const auto x = d.covariates.row(0);
  EXPECT_EQ(baseline_small_rf(d, x, 3, p).values, baseline_small_rf(d, x, 3, p).values);
  const auto q = small_forest_params(p, 3);
  EXPECT_EQ(q.n_trees, 3u);
  EXPECT_TRUE(q.bootstrap);
  EXPECT_NE(q.seed, small_forest_params(p, 2).seed);
}

TEST(SingleTree, UsesAllFeaturesWithoutBootstrap) {
  ForestParams p;
  p.mtry = 2;
  const auto q = single_tree_params(p, 7);
  EXPECT_EQ(q.n_trees, 1u);
  EXPECT_FALSE(q.bootstrap);
  EXPECT_EQ(q.mtry, 7u);
}

TEST(CapRows, SeededSortedSubset) {
  std::vector<std::size_t> rows(50);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const auto a = detail::cap_rows(rows, 10, 3);
  EXPECT_EQ(a.size(), 10u);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_EQ(a, detail::cap_rows(rows, 10, 3));
  EXPECT_EQ(detail::cap_rows(rows, 0, 3), rows);
  EXPECT_EQ(detail::cap_rows(rows, 80, 3), rows);
}

TEST(Benchmark, RowStructure) {
  const auto d = support::make_dataset(TaskKind::Binary, 90, 4, 53);
  const auto rows = run_benchmark("synthetic", d, small_config());
  ASSERT_EQ(rows.size(), 6u * 4u);
  for (std::size_t m = 0; m < 6; ++m) {
    for (std::size_t f = 0; f < 4; ++f) {
      const auto& r = rows[m * 4 + f];
      EXPECT_EQ(r.method, to_string(kAllMethods[m]));
      EXPECT_EQ(r.fold, f < 3 ? std::to_string(f) : "all");
      EXPECT_EQ(r.dataset, "synthetic");
      EXPECT_TRUE(r.performance.has_value());
    }
    const auto& all = rows[m * 4 + 3];
    EXPECT_EQ(all.folds, 3u);
    EXPECT_EQ(all.instances, 30u);
  }
  for (const auto& r : rows) {
    if (r.method == "rf") {
      EXPECT_FALSE(r.complexity.has_value());
    }
    if (r.method == "dt") {
      EXPECT_FALSE(r.dissimilarity.has_value());
    }
    if (r.method.starts_with("bellatrex")) {
      EXPECT_GE(*r.mean_rules, 1.0);
      EXPECT_LE(*r.mean_rules, 3.0);
      EXPECT_TRUE(r.mean_tau.has_value());
    }
  }
}

TEST(Benchmark, RerunIsIdentical) {
  const auto d = support::make_dataset(TaskKind::Survival, 90, 4, 54);
  const auto cfg = small_config();
  EXPECT_EQ(tsv(run_benchmark("s", d, cfg)), tsv(run_benchmark("s", d, cfg)));
}

TEST(Benchmark, ThreadCountDoesNotChangeResults) {
  const auto d = support::make_dataset(TaskKind::MultiLabel, 90, 4, 55);
  const auto cfg = small_config();
  setenv("BELLATREX_THREADS", "1", 1);
  const auto one = tsv(run_benchmark("m", d, cfg));
  setenv("BELLATREX_THREADS", "3", 1);
  const auto three = tsv(run_benchmark("m", d, cfg));
  unsetenv("BELLATREX_THREADS");
  EXPECT_EQ(one, three);
}

TEST(Benchmark, SmallForestRuleCountMatchesBellatrex) {
  const auto d = support::make_dataset(TaskKind::Regression, 90, 4, 56);
  const auto rows = run_benchmark("r", d, small_config());
  std::map<std::string, double> rules;
  for (const auto& r : rows) {
    if (r.fold == "all") rules[r.method] = r.mean_rules.value_or(-1);
  }
  EXPECT_DOUBLE_EQ(rules["small_rf"], rules["bellatrex_weighted"]);
  EXPECT_DOUBLE_EQ(rules["oob_trees"], rules["bellatrex_weighted"]);
  EXPECT_EQ(rules["dt"], 1.0);
}

TEST(Ablation, ArmsAndDimensions) {
  const auto d = support::make_dataset(TaskKind::Binary, 90, 5, 57);
  auto cfg = small_config();
  const auto rows = run_ablation("a", d, cfg);
  ASSERT_EQ(rows.size(), 4u * 4u);
  std::map<std::string, MetricReport> all;
  for (const auto& r : rows) {
    if (r.fold == "all") all[r.method] = r;
  }
  EXPECT_EQ(*all["no_pca"].mean_d, 5.0);
  EXPECT_EQ(*all["neither"].mean_d, 5.0);
  EXPECT_EQ(*all["no_preselect"].mean_tau, 30.0);
  EXPECT_EQ(*all["neither"].mean_tau, 30.0);
  EXPECT_LE(*all["full"].mean_tau, 20.0);
}

TEST(Reports, AverageAndWriters) {
  MetricReport a{"d1", "rf", "all", 0.8, std::nullopt, std::nullopt, std::nullopt, std::nullopt, std::nullopt, 5, 100};
  MetricReport b{"d2", "rf", "all", 0.6, std::nullopt, std::nullopt, std::nullopt, std::nullopt, std::nullopt, 5, 50};
  MetricReport fold{"d2", "rf", "0", 0.1, std::nullopt, std::nullopt, std::nullopt, std::nullopt, std::nullopt, 1, 10};
  const auto avg = average_rows({a, b, fold});
  ASSERT_EQ(avg.size(), 1u);
  EXPECT_EQ(avg[0].dataset, "average");
  EXPECT_DOUBLE_EQ(*avg[0].performance, 0.7);
  EXPECT_EQ(avg[0].instances, 150u);

  const auto text = tsv({a});
  EXPECT_EQ(text,
            "dataset\tmethod\tfold\tperformance\tcomplexity\tdissimilarity\tmean_rules\tmean_tau\tmean_d\tfolds\tinstances\n"
            "d1\trf\tall\t0.800000\tNA\tNA\tNA\tNA\tNA\t5\t100\n");
  const auto j = reports_json({a});
  EXPECT_TRUE(j[0]["complexity"].is_null());
  EXPECT_EQ(j[0]["performance"], 0.8);

  std::ostringstream table;
  write_performance_table(table, {a, b, avg[0]}, {"rf", "dt"});
  EXPECT_EQ(table.str(), "dataset\trf\tdt\nd1\t0.800000\tNA\nd2\t0.600000\tNA\naverage\t0.700000\tNA\n");
}

TEST(Reports, UndefinedFoldSkippedWithWarning) {
  // A single positive row: every other fold has one class only.
  Dataset d = support::make_dataset(TaskKind::Binary, 30, 3, 58);
  for (std::size_t i = 0; i < d.n(); ++i) d.targets(i, 0) = i == 0 ? 1.0 : 0.0;
  auto cfg = small_config();
  cfg.grid.taus = {10};
  cfg.grid.ks = {1};
  std::vector<std::string> warnings;
  const auto rows = run_benchmark("u", d, cfg, &warnings);
  EXPECT_FALSE(warnings.empty());
  for (const auto& w : warnings) EXPECT_NE(w.find("fold skipped"), std::string::npos);
  for (const auto& r : rows) {
    if (r.fold == "all") {
      EXPECT_EQ(r.folds, 1u);
    }
  }
}

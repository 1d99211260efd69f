#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bellatrex/core.hpp"
#include "bellatrex/data.hpp"
#include "bellatrex/explain.hpp"
#include "bellatrex/forest.hpp"
#include "bellatrex/metrics.hpp"
#include "bellatrex/tree.hpp"

namespace bellatrex {

/// One row of a benchmark report. `fold` is a fold index or "all" for the
/// mean over folds; the cross-dataset rows use dataset "average".
struct MetricReport {
  std::string dataset;
  std::string method;
  std::string fold;
  std::optional<double> performance;
  std::optional<double> complexity;
  std::optional<double> dissimilarity;  // K = 1 instances excluded
  std::optional<double> mean_rules;
  std::optional<double> mean_tau;
  std::optional<double> mean_d;
  std::size_t folds = 0;
  std::size_t instances = 0;
};

struct BenchmarkConfig {
  ForestParams forest;
  std::size_t folds = 5;
  /// Test instances evaluated per fold; 0 keeps the whole fold.
  std::size_t max_test = 100;
  TuningGrid grid;
  AblationFlags flags;
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Baselines

/// Parameters of the K-tree forest that stands in for a K-rule explanation.
inline ForestParams small_forest_params(ForestParams params, std::size_t K) {
  params.n_trees = K;
  params.bootstrap = true;
  params.seed = derive_seed(params.seed, K);
  return params;
}

inline Prediction baseline_small_rf(const Dataset& train, std::span<const double> x, std::size_t K,
                                    const ForestParams& params) {
  return forest_predict(fit_forest(train, small_forest_params(params, K)), x);
}

/// Indices of the K trees with the lowest OOB error, ties by tree index.
inline std::vector<std::size_t> lowest_oob_trees(std::span<const double> oob_errs, std::size_t K) {
  if (K < 1 || K > oob_errs.size()) throw ArgumentError("oob trees: K outside [1, m]");
  std::vector<std::size_t> order(oob_errs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return oob_errs[a] < oob_errs[b]; });
  order.resize(K);
  return order;
}

inline Prediction baseline_oob_trees(const Forest& forest, std::span<const double> oob_errs, std::span<const double> x,
                                     std::size_t K) {
  std::vector<Prediction> preds;
  for (auto t : lowest_oob_trees(oob_errs, K)) preds.push_back(tree_predict(forest.trees[t], x));
  return mean_prediction(preds);
}

/// Single fully grown tree on the whole training set, all features per split.
inline ForestParams single_tree_params(ForestParams params, std::size_t p) {
  params.n_trees = 1;
  params.bootstrap = false;
  params.mtry = std::max<std::size_t>(p, 1);
  return params;
}

// ---------------------------------------------------------------------------
// Benchmark harness

enum class Method { RandomForest, BellatrexWeighted, BellatrexSimple, SingleTree, SmallForest, OobTrees };

inline constexpr std::array<Method, 6> kAllMethods{Method::RandomForest, Method::BellatrexWeighted,
                                                   Method::BellatrexSimple, Method::SingleTree,
                                                   Method::SmallForest,  Method::OobTrees};

inline std::string to_string(Method m) {
  switch (m) {
    case Method::RandomForest: return "rf";
    case Method::BellatrexWeighted: return "bellatrex_weighted";
    case Method::BellatrexSimple: return "bellatrex_simple";
    case Method::SingleTree: return "dt";
    case Method::SmallForest: return "small_rf";
    case Method::OobTrees: return "oob_trees";
  }
  return "?";
}

/// The four arms of the ablation study.
inline const std::array<std::pair<std::string, AblationFlags>, 4>& ablation_arms() {
  static const std::array<std::pair<std::string, AblationFlags>, 4> arms{{
      {"full", {false, false}},
      {"no_preselect", {true, false}},
      {"no_pca", {false, true}},
      {"neither", {true, true}},
  }};
  return arms;
}

/// What one method produced for one test instance.
struct InstanceResult {
  Prediction prediction;
  std::optional<double> complexity;
  std::optional<double> dissimilarity;
  std::optional<double> rules;
  std::optional<double> tau;
  std::optional<double> d;
};

namespace detail {

struct FoldData {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  Dataset train;
  Dataset test;
  std::vector<std::size_t> test_ids;  // rows of the full dataset
};

/// Seeded subset of at most `cap` rows, returned in ascending order.
inline std::vector<std::size_t> cap_rows(std::vector<std::size_t> rows, std::size_t cap, std::uint64_t seed) {
  if (cap == 0 || rows.size() <= cap) return rows;
  Rng rng(seed);
  rng.shuffle(rows);
  rows.resize(cap);
  std::sort(rows.begin(), rows.end());
  return rows;
}

inline FoldData make_fold(const Dataset& data, const FoldPlan& plan, std::size_t f, const BenchmarkConfig& config) {
  FoldData fd;
  fd.index = f;
  fd.seed = derive_seed(config.seed, 1 + f);
  const auto train_rows = plan.train_rows(f);
  fd.test_ids = cap_rows(plan.test_rows(f), config.max_test, derive_seed(fd.seed, 1));
  fd.train = data.subset(train_rows);
  fd.test = data.subset(fd.test_ids);
  if (needs_target_scaling(data.task)) {
    std::vector<std::size_t> all(fd.train.n());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const auto scaler = TargetScaler::fit(fd.train.targets, all);
    scaler.apply(fd.train.targets);
    scaler.apply(fd.test.targets);
  }
  return fd;
}

inline ForestParams fold_forest_params(const BenchmarkConfig& config, const FoldData& fd) {
  ForestParams p = config.forest;
  p.seed = derive_seed(fd.seed, 0);
  return p;
}

inline std::uint64_t instance_seed(const FoldData& fd, std::size_t i) {
  return derive_seed(derive_seed(fd.seed, 2), fd.test_ids[i]);
}

inline std::optional<double> mean_of(const std::vector<std::optional<double>>& values) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& v : values) {
    if (v) {
      s += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

inline std::string fold_label(std::size_t f) { return std::to_string(f); }

/// Fold row of one method from its per-instance results.
inline MetricReport fold_report(const std::string& dataset, const std::string& method, const FoldData& fd,
                                const std::vector<InstanceResult>& results, std::vector<std::string>* warnings) {
  MetricReport r;
  r.dataset = dataset;
  r.method = method;
  r.fold = fold_label(fd.index);
  r.instances = results.size();
  const std::size_t w = fd.test.task.outputs;
  Matrix pred(results.size(), w);
  for (std::size_t i = 0; i < results.size(); ++i) {
    std::copy(results[i].prediction.values.begin(), results[i].prediction.values.end(), pred.row(i).begin());
  }
  std::vector<std::size_t> rows(results.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  try {
    r.performance = performance_score(fd.test.task, pred, fd.test, rows);
    r.folds = 1;
  } catch (const UndefinedMetric& e) {
    if (warnings) {
      warnings->push_back(dataset + " fold " + r.fold + " " + method + ": performance undefined (" + e.what() +
                          "), fold skipped");
    }
  }
  auto collect = [&](auto member) {
    std::vector<std::optional<double>> v;
    for (const auto& res : results) v.push_back(res.*member);
    return mean_of(v);
  };
  r.complexity = collect(&InstanceResult::complexity);
  r.dissimilarity = collect(&InstanceResult::dissimilarity);
  r.mean_rules = collect(&InstanceResult::rules);
  r.mean_tau = collect(&InstanceResult::tau);
  r.mean_d = collect(&InstanceResult::d);
  return r;
}

/// Mean over the given rows of every metric, skipping undefined entries.
inline MetricReport summary_row(const std::string& dataset, const std::string& method, const std::string& fold,
                                const std::vector<MetricReport>& rows) {
  MetricReport out;
  out.dataset = dataset;
  out.method = method;
  out.fold = fold;
  std::vector<std::optional<double>> perf, comp, dis, rules, tau, d;
  for (const auto& r : rows) {
    perf.push_back(r.performance);
    comp.push_back(r.complexity);
    dis.push_back(r.dissimilarity);
    rules.push_back(r.mean_rules);
    tau.push_back(r.mean_tau);
    d.push_back(r.mean_d);
    out.folds += r.folds;
    out.instances += r.instances;
  }
  out.performance = mean_of(perf);
  out.complexity = mean_of(comp);
  out.dissimilarity = mean_of(dis);
  out.mean_rules = mean_of(rules);
  out.mean_tau = mean_of(tau);
  out.mean_d = mean_of(d);
  return out;
}

inline InstanceResult bellatrex_result(const Explanation& e) {
  InstanceResult r;
  r.prediction = e.surrogate;
  std::vector<std::size_t> lengths;
  std::vector<std::vector<double>> vectors;
  for (const auto& rule : e.rules) {
    lengths.push_back(rule.length());
    vectors.push_back(rule.vector.values);
  }
  r.complexity = static_cast<double>(complexity(lengths, RuleContext::RuleCollection));
  r.dissimilarity = dissimilarity(vectors);
  r.rules = static_cast<double>(e.k());
  r.tau = static_cast<double>(e.tau);
  r.d = static_cast<double>(e.d_effective);
  return r;
}

/// Tree-based baselines: the explanation is the set of paths the instance
/// activates. Dissimilarity compares the paths' weighted vectors.
inline InstanceResult tree_set_result(const Forest& forest, std::span<const std::size_t> trees, std::span<const double> x) {
  InstanceResult r;
  std::vector<Prediction> preds;
  std::vector<std::size_t> lengths;
  std::vector<std::vector<double>> vectors;
  for (auto t : trees) {
    preds.push_back(tree_predict(forest.trees[t], x));
    lengths.push_back(rule_length(forest.trees[t], x));
    vectors.push_back(vectorize(forest.trees[t], x, VectorMode::Weighted, t).values);
  }
  r.prediction = mean_prediction(preds);
  r.complexity = static_cast<double>(complexity(lengths, RuleContext::TreePaths));
  r.dissimilarity = dissimilarity(vectors);
  r.rules = static_cast<double>(trees.size());
  return r;
}

template <class Fn>
std::vector<MetricReport> cross_validate(const std::string& dataset, const Dataset& data, const BenchmarkConfig& config,
                                         const std::vector<std::string>& methods, Fn&& per_fold,
                                         std::vector<std::string>* warnings) {
  if (data.n() < config.folds) throw DataError(dataset + ": fewer rows than folds");
  const FoldPlan plan = kfold(data.n(), config.folds, derive_seed(config.seed, 0));
  // by_method[m][f]
  std::vector<std::vector<MetricReport>> by_method(methods.size());
  for (std::size_t f = 0; f < config.folds; ++f) {
    const FoldData fd = make_fold(data, plan, f, config);
    // results[m][i]
    const std::vector<std::vector<InstanceResult>> results = per_fold(fd);
    for (std::size_t m = 0; m < methods.size(); ++m) {
      by_method[m].push_back(fold_report(dataset, methods[m], fd, results[m], warnings));
    }
  }
  std::vector<MetricReport> out;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    for (const auto& r : by_method[m]) out.push_back(r);
    out.push_back(summary_row(dataset, methods[m], "all", by_method[m]));
  }
  return out;
}

}  // namespace detail

/// K-fold evaluation of the forest, both Bellatrex variants and the
/// single-tree, Small RF and OOB-trees baselines on a preprocessed dataset.
/// The baselines use the K chosen by weighted Bellatrex for each instance.
/// Rows are ordered by method, then fold, each method closing with "all".
inline std::vector<MetricReport> run_benchmark(const std::string& dataset, const Dataset& data,
                                               const BenchmarkConfig& config,
                                               std::vector<std::string>* warnings = nullptr) {
  std::vector<std::string> methods;
  for (auto m : kAllMethods) methods.push_back(to_string(m));

  auto per_fold = [&](const detail::FoldData& fd) {
    const Forest forest = fit_forest(fd.train, detail::fold_forest_params(config, fd));
    const TuningGrid grid = effective_grid(config.grid, config.flags, forest.size());
    grid.validate(forest.size());
    const std::size_t max_k = *std::max_element(grid.ks.begin(), grid.ks.end());

    const ForestParams base = detail::fold_forest_params(config, fd);
    const Forest single = fit_forest(fd.train, single_tree_params(base, fd.train.p()));
    std::vector<Forest> small(max_k + 1);
    for (std::size_t K = 1; K <= max_k; ++K) small[K] = fit_forest(fd.train, small_forest_params(base, K));
    const auto oob = oob_errors(forest, fd.train);

    const std::size_t n = fd.test.n();
    std::vector<std::vector<InstanceResult>> results(kAllMethods.size(), std::vector<InstanceResult>(n));
    parallel_for(n, [&](std::size_t i) {
      const auto x = fd.test.covariates.row(i);
      const auto seed = detail::instance_seed(fd, i);
      const InstanceRules weighted_ctx(forest, x, VectorMode::Weighted);
      const Explanation weighted = tune_and_explain(weighted_ctx, config.grid, config.flags, seed);
      const Explanation simple =
          tune_and_explain(InstanceRules(forest, x, VectorMode::Simple), config.grid, config.flags, seed);
      const std::size_t K = weighted.k();

      InstanceResult rf;
      rf.prediction = weighted.forest_prediction;
      results[0][i] = std::move(rf);
      results[1][i] = detail::bellatrex_result(weighted);
      results[2][i] = detail::bellatrex_result(simple);
      const std::size_t only_tree[] = {0};
      results[3][i] = detail::tree_set_result(single, only_tree, x);
      results[3][i].dissimilarity.reset();
      std::vector<std::size_t> all_small(K);
      std::iota(all_small.begin(), all_small.end(), std::size_t{0});
      results[4][i] = detail::tree_set_result(small[K], all_small, x);
      results[5][i] = detail::tree_set_result(forest, lowest_oob_trees(oob, K), x);
    });
    return results;
  };
  return detail::cross_validate(dataset, data, config, methods, per_fold, warnings);
}

/// Weighted Bellatrex under the four ablation arms, on the folds and test
/// instances run_benchmark uses.
inline std::vector<MetricReport> run_ablation(const std::string& dataset, const Dataset& data,
                                              const BenchmarkConfig& config,
                                              std::vector<std::string>* warnings = nullptr) {
  const auto& arms = ablation_arms();
  std::vector<std::string> methods;
  for (const auto& arm : arms) methods.push_back(arm.first);

  auto per_fold = [&](const detail::FoldData& fd) {
    const Forest forest = fit_forest(fd.train, detail::fold_forest_params(config, fd));
    for (const auto& arm : arms) effective_grid(config.grid, arm.second, forest.size()).validate(forest.size());
    const std::size_t n = fd.test.n();
    std::vector<std::vector<InstanceResult>> results(arms.size(), std::vector<InstanceResult>(n));
    parallel_for(n, [&](std::size_t i) {
      const InstanceRules ctx(forest, fd.test.covariates.row(i), VectorMode::Weighted);
      const auto seed = detail::instance_seed(fd, i);
      for (std::size_t a = 0; a < arms.size(); ++a) {
        results[a][i] = detail::bellatrex_result(tune_and_explain(ctx, config.grid, arms[a].second, seed));
      }
    });
    return results;
  };
  return detail::cross_validate(dataset, data, config, methods, per_fold, warnings);
}

/// Unweighted mean over datasets of each method's "all" row, labelled
/// dataset "average". Methods keep their first-seen order.
inline std::vector<MetricReport> average_rows(const std::vector<MetricReport>& reports) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<MetricReport>> per_method;
  for (const auto& r : reports) {
    if (r.fold != "all" || r.dataset == "average") continue;
    if (!per_method.count(r.method)) order.push_back(r.method);
    per_method[r.method].push_back(r);
  }
  std::vector<MetricReport> out;
  for (const auto& m : order) out.push_back(detail::summary_row("average", m, "all", per_method[m]));
  return out;
}

// ---------------------------------------------------------------------------
// Report writers

namespace detail {

inline std::string cell(const std::optional<double>& v) {
  if (!v) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", *v);
  return buf;
}

inline nlohmann::json json_cell(const std::optional<double>& v) {
  if (!v) return nullptr;
  return *v;
}

}  // namespace detail

inline void write_reports_tsv(std::ostream& out, const std::vector<MetricReport>& reports) {
  out << "dataset\tmethod\tfold\tperformance\tcomplexity\tdissimilarity\tmean_rules\tmean_tau\tmean_d\tfolds\tinstances\n";
  for (const auto& r : reports) {
    out << r.dataset << '\t' << r.method << '\t' << r.fold << '\t' << detail::cell(r.performance) << '\t'
        << detail::cell(r.complexity) << '\t' << detail::cell(r.dissimilarity) << '\t' << detail::cell(r.mean_rules)
        << '\t' << detail::cell(r.mean_tau) << '\t' << detail::cell(r.mean_d) << '\t' << r.folds << '\t'
        << r.instances << '\n';
  }
}

inline nlohmann::json reports_json(const std::vector<MetricReport>& reports) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : reports) {
    rows.push_back({{"dataset", r.dataset},
                    {"method", r.method},
                    {"fold", r.fold},
                    {"performance", detail::json_cell(r.performance)},
                    {"complexity", detail::json_cell(r.complexity)},
                    {"dissimilarity", detail::json_cell(r.dissimilarity)},
                    {"mean_rules", detail::json_cell(r.mean_rules)},
                    {"mean_tau", detail::json_cell(r.mean_tau)},
                    {"mean_d", detail::json_cell(r.mean_d)},
                    {"folds", r.folds},
                    {"instances", r.instances}});
  }
  return rows;
}

inline void write_reports_json(std::ostream& out, const std::vector<MetricReport>& reports) {
  out << reports_json(reports).dump(2) << '\n';
}

/// Wide table: one row per dataset (plus "average"), one performance column
/// per method, in the order given.
inline void write_performance_table(std::ostream& out, const std::vector<MetricReport>& reports,
                                    const std::vector<std::string>& methods) {
  std::vector<std::string> datasets;
  std::map<std::pair<std::string, std::string>, std::optional<double>> perf;
  for (const auto& r : reports) {
    if (r.fold != "all") continue;
    if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end()) datasets.push_back(r.dataset);
    perf[{r.dataset, r.method}] = r.performance;
  }
  out << "dataset";
  for (const auto& m : methods) out << '\t' << m;
  out << '\n';
  for (const auto& d : datasets) {
    out << d;
    for (const auto& m : methods) {
      const auto it = perf.find({d, m});
      out << '\t' << detail::cell(it == perf.end() ? std::nullopt : it->second);
    }
    out << '\n';
  }
}

}  // namespace bellatrex

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bellatrex/bellatrex.hpp"

namespace fs = std::filesystem;
using namespace bellatrex;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kDataError = 3, kInternal = 4 };

struct Options {
  std::vector<std::string> data;
  std::string schema;
  std::string task;
  std::vector<std::string> targets;
  std::string time_column;
  std::string event_column;
  double drop_threshold = 0.30;

  std::size_t trees = 100;
  std::optional<std::size_t> min_split;
  std::optional<std::size_t> mtry;
  std::optional<std::size_t> max_depth;
  std::uint64_t seed = 0;

  std::string mode = "weighted";
  std::string grid_tau = "20,50,80";
  std::string grid_d = "2,5,none";
  std::string grid_k = "1,2,3";
  std::optional<std::size_t> k_fixed;
  bool no_preselect = false;
  bool no_pca = false;

  std::size_t folds = 5;
  std::size_t max_test = 100;
  std::string out = ".";

  std::string forest;
  std::string rows;
  std::optional<std::size_t> test_fold;
};

std::string dataset_name(const std::string& path) { return fs::path(path).stem().string(); }

Dataset load_dataset(const Options& o, const std::string& path) {
  Schema schema;
  if (!o.schema.empty()) schema = read_schema(o.schema);
  if (!o.task.empty()) schema.task = parse_task_kind(o.task);
  if (!schema.task) throw ArgumentError("--task is required (or task= in the schema file)");
  if (!o.targets.empty()) schema.spec.targets = o.targets;
  if (!o.time_column.empty()) schema.spec.time_column = o.time_column;
  if (!o.event_column.empty()) schema.spec.event_column = o.event_column;

  const Dataset raw = load_csv(path, schema.spec, *schema.task);
  PreprocessStats stats;
  Dataset data = preprocess(raw, o.drop_threshold, &stats);
  std::fprintf(stderr,
               "%s: %zu rows, %zu covariates after preprocessing (dropped %zu columns, %zu rows, %zu rows with "
               "missing target; imputed %zu cells)\n",
               dataset_name(path).c_str(), data.n(), data.p(), stats.dropped_columns, stats.dropped_rows,
               stats.dropped_missing_target, stats.imputed_cells);
  return data;
}

const Dataset& single_dataset(const Options& o, std::optional<Dataset>& holder) {
  if (o.data.size() != 1) throw ArgumentError("exactly one --data file expected");
  holder = load_dataset(o, o.data.front());
  return *holder;
}

ForestParams forest_params(const Options& o, const Task& task) {
  ForestParams p = ForestParams::defaults_for(task);
  p.n_trees = o.trees;
  if (o.min_split) p.min_samples_split = *o.min_split;
  p.mtry = o.mtry;
  p.max_depth = o.max_depth;
  p.seed = o.seed;
  return p;
}

template <class T, class Parse>
std::vector<T> parse_list(const std::string& text, const char* flag, Parse parse) {
  std::vector<T> out;
  for (const auto& item : detail::split_list(text)) {
    try {
      out.push_back(parse(item));
    } catch (const ArgumentError&) {
      throw;
    } catch (const std::exception&) {
      throw ArgumentError(std::string("bad value '") + item + "' for " + flag);
    }
  }
  return out;
}

std::size_t parse_count(const std::string& s) {
  std::size_t pos = 0;
  const auto v = std::stoul(s, &pos);
  if (pos != s.size()) throw ArgumentError("bad count '" + s + "'");
  return v;
}

TuningGrid tuning_grid(const Options& o) {
  TuningGrid g;
  g.taus = parse_list<std::size_t>(o.grid_tau, "--grid-tau", parse_count);
  g.dims = parse_list<ProjectionDim>(o.grid_d, "--grid-d", [](const std::string& s) { return ProjectionDim::parse(s); });
  g.ks = parse_list<std::size_t>(o.grid_k, "--grid-k", parse_count);
  if (o.k_fixed) g.ks = {*o.k_fixed};
  return g;
}

AblationFlags ablation_flags(const Options& o) { return {o.no_preselect, o.no_pca}; }

BenchmarkConfig benchmark_config(const Options& o, const Task& task) {
  BenchmarkConfig c;
  c.forest = forest_params(o, task);
  c.folds = o.folds;
  c.max_test = o.max_test;
  c.grid = tuning_grid(o);
  c.flags = ablation_flags(o);
  c.seed = o.seed;
  return c;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  return out;
}

fs::path output_dir(const Options& o) {
  fs::path dir(o.out);
  fs::create_directories(dir);
  return dir;
}

int cmd_train(const Options& o) {
  std::optional<Dataset> holder;
  const Dataset& data = single_dataset(o, holder);
  const Forest forest = fit_forest(data, forest_params(o, data.task));
  const auto dir = output_dir(o);
  save_forest((dir / "forest.txt").string(), forest);

  const auto errors = oob_errors(forest, data);
  auto log = open_output(dir / "train_log.tsv");
  log << "tree\toob_size\toob_error\tdepth\tleaves\n";
  for (std::size_t t = 0; t < forest.size(); ++t) {
    const auto& tree = forest.trees[t];
    char err[32];
    std::snprintf(err, sizeof(err), "%.6f", errors[t]);
    log << t << '\t' << tree.oob.size() << '\t' << err << '\t' << tree.depth() << '\t' << tree.leaf_count() << '\n';
  }
  std::fprintf(stderr, "trained %zu trees (mtry %zu, min split %zu) -> %s\n", forest.size(), *forest.params.mtry,
               forest.params.min_samples_split, (dir / "forest.txt").c_str());
  return kOk;
}

int cmd_explain(const Options& o) {
  std::optional<Dataset> holder;
  const Dataset& data = single_dataset(o, holder);

  std::vector<std::size_t> rows;
  Forest forest;
  if (o.test_fold) {
    const FoldPlan plan = kfold(data.n(), o.folds, derive_seed(o.seed, 0));
    if (*o.test_fold >= o.folds) throw ArgumentError("--test-fold must be below --folds");
    rows = plan.test_rows(*o.test_fold);
    if (o.forest.empty()) {
      const auto train_rows = plan.train_rows(*o.test_fold);
      forest = fit_forest(data.subset(train_rows), forest_params(o, data.task));
    }
  }
  if (!o.rows.empty()) rows = parse_list<std::size_t>(o.rows, "--rows", parse_count);
  if (rows.empty()) throw ArgumentError("select instances with --rows or --test-fold");
  if (!o.forest.empty()) {
    forest = load_forest(o.forest);
    if (forest.feature_names != data.covariate_names) {
      throw SchemaError("forest covariates do not match the preprocessed dataset");
    }
    if (forest.task.kind != data.task.kind) throw SchemaError("forest task does not match --task");
  } else if (!o.test_fold) {
    throw ArgumentError("--forest is required unless --test-fold trains one");
  }
  for (auto r : rows) {
    if (r >= data.n()) throw ArgumentError("row " + std::to_string(r) + " out of range");
  }

  const TuningGrid grid = tuning_grid(o);
  effective_grid(grid, ablation_flags(o), forest.size()).validate(forest.size());
  const VectorMode mode = parse_vector_mode(o.mode);
  const auto dir = output_dir(o);

  std::vector<Explanation> explanations(rows.size());
  parallel_for(rows.size(), [&](std::size_t i) {
    explanations[i] = tune_and_explain(forest, data.covariates.row(rows[i]), grid, mode, ablation_flags(o),
                                       derive_seed(o.seed, rows[i]));
  });
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto stem = "instance_" + std::to_string(rows[i]);
    const auto& e = explanations[i];
    open_output(dir / (stem + ".txt")) << render_explanation(e, forest.feature_names, RenderFormat::Text);
    open_output(dir / (stem + ".json")) << render_explanation(e, forest.feature_names, RenderFormat::Json);
    open_output(dir / (stem + "_plot.tsv")) << plot_tsv(e);
  }
  std::fprintf(stderr, "explained %zu instances -> %s\n", rows.size(), dir.c_str());
  return kOk;
}

template <class Run>
int run_cv_command(const Options& o, const std::string& stem, const std::vector<std::string>& table_methods, Run run) {
  if (o.data.empty()) throw ArgumentError("at least one --data file expected");
  std::vector<MetricReport> reports;
  for (const auto& path : o.data) {
    const Dataset data = load_dataset(o, path);
    std::vector<std::string> warnings;
    const auto rows = run(dataset_name(path), data, benchmark_config(o, data.task), &warnings);
    for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    reports.insert(reports.end(), rows.begin(), rows.end());
  }
  if (o.data.size() > 1) {
    const auto avg = average_rows(reports);
    reports.insert(reports.end(), avg.begin(), avg.end());
  }
  const auto dir = output_dir(o);
  {
    auto out = open_output(dir / (stem + ".tsv"));
    write_reports_tsv(out, reports);
  }
  {
    auto out = open_output(dir / (stem + ".json"));
    write_reports_json(out, reports);
  }
  {
    auto out = open_output(dir / (stem + "_table.tsv"));
    write_performance_table(out, reports, table_methods);
  }
  std::fprintf(stderr, "wrote %s.tsv, %s.json, %s_table.tsv in %s\n", stem.c_str(), stem.c_str(), stem.c_str(),
               dir.c_str());
  return kOk;
}

int cmd_benchmark(const Options& o) {
  std::vector<std::string> methods;
  for (auto m : kAllMethods) methods.push_back(to_string(m));
  return run_cv_command(o, "benchmark", methods, [](auto&&... args) { return run_benchmark(args...); });
}

int cmd_ablate(const Options& o) {
  std::vector<std::string> arms;
  for (const auto& arm : ablation_arms()) arms.push_back(arm.first);
  return run_cv_command(o, "ablation", arms, [](auto&&... args) { return run_ablation(args...); });
}

void add_data_options(CLI::App* cmd, Options& o, bool many) {
  if (many) {
    cmd->add_option("--data", o.data, "CSV dataset (repeatable)")->required();
  } else {
    cmd->add_option("--data", o.data, "CSV dataset")->required()->expected(1);
  }
  cmd->add_option("--schema", o.schema, "key=value schema file (task, target, time, event, categorical, ignore)");
  cmd->add_option("--task", o.task, "binary | regression | multitarget | multilabel | survival");
  cmd->add_option("--target", o.targets, "target column(s)")->delimiter(',');
  cmd->add_option("--time", o.time_column, "survival time column");
  cmd->add_option("--event", o.event_column, "survival event column");
  cmd->add_option("--drop-threshold", o.drop_threshold, "missing fraction above which columns/rows are dropped");
}

void add_forest_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--trees", o.trees, "number of trees")->check(CLI::PositiveNumber);
  cmd->add_option("--min-split", o.min_split, "minimum node size to split (default 5, survival 10)");
  cmd->add_option("--mtry", o.mtry, "features tried per split");
  cmd->add_option("--max-depth", o.max_depth, "maximum tree depth");
  cmd->add_option("--seed", o.seed, "random seed");
}

void add_explain_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--mode", o.mode, "rule vectorization")->check(CLI::IsMember({"simple", "weighted"}));
  cmd->add_option("--grid-tau", o.grid_tau, "pre-selection sizes");
  cmd->add_option("--grid-d", o.grid_d, "projection dimensions ('none' = no projection)");
  cmd->add_option("--grid-k", o.grid_k, "cluster counts");
  cmd->add_option("--k-fixed", o.k_fixed, "use this cluster count only");
  cmd->add_flag("--no-preselect", o.no_preselect, "keep every tree (tau = number of trees)");
  cmd->add_flag("--no-pca", o.no_pca, "cluster the rule vectors without projecting");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bellatrex: local explanations of random forests through representative rules"};
  app.require_subcommand(1);
  Options o;

  auto* train = app.add_subcommand("train", "fit a forest and write it with a per-tree log");
  add_data_options(train, o, false);
  add_forest_options(train, o);
  train->add_option("--out", o.out, "output directory");

  auto* explain = app.add_subcommand("explain", "explain instances: text, JSON and plot data per instance");
  add_data_options(explain, o, false);
  add_forest_options(explain, o);
  add_explain_options(explain, o);
  explain->add_option("--forest", o.forest, "forest file from 'train'");
  explain->add_option("--rows", o.rows, "comma-separated row indices");
  explain->add_option("--test-fold", o.test_fold, "explain every row of this cross-validation test fold");
  explain->add_option("--folds", o.folds, "number of folds for --test-fold");
  explain->add_option("--out", o.out, "output directory");

  auto* benchmark = app.add_subcommand("benchmark", "cross-validated comparison against the baselines");
  auto* ablate = app.add_subcommand("ablate", "pre-selection / projection ablation");
  for (auto* cmd : {benchmark, ablate}) {
    add_data_options(cmd, o, true);
    add_forest_options(cmd, o);
    add_explain_options(cmd, o);
    cmd->add_option("--folds", o.folds, "number of folds")->check(CLI::Range(2, 1000));
    cmd->add_option("--max-test", o.max_test, "test instances per fold (0 = all)");
    cmd->add_option("--out", o.out, "output directory");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*train) return cmd_train(o);
    if (*explain) return cmd_explain(o);
    if (*benchmark) return cmd_benchmark(o);
    if (*ablate) return cmd_ablate(o);
  } catch (const ArgumentError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const UndefinedMetric& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kInternal;
  } catch (const Error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kDataError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kInternal;
  }
  return kUsage;
}

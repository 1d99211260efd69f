#pragma once

#include <charconv>
#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "bellatrex/core.hpp"
#include "bellatrex/forest.hpp"

// Line-oriented forest format, one record per line:
//
//   bellatrex-forest 1
//   task <kind> <outputs>
//   features <p>
//   <p lines, one covariate name each>
//   params <n_trees> <min_samples_split> <mtry> <seed> <max_depth|-> <bootstrap 0|1>
//   tree <index> <node count>
//   bootstrap <count> <row ids...>
//   oob <count> <row ids...>
//   node <feature> <threshold> <left> <right> <weight> <n_samples> <w> <values...> <curve>
//   ...
//   end
//
// <curve> is `-` or `<initial> <count> <t v>...`. Reals are written in
// shortest round-trip form, so reading back reproduces every bit.

namespace bellatrex {

namespace detail {

inline void write_real(std::ostream& out, double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, ptr - buf);
}

class TokenReader {
 public:
  explicit TokenReader(std::istream& in) : in_(in) {}

  std::istringstream& line(const std::string& expected_tag) {
    std::string text;
    do {
      if (!std::getline(in_, text)) throw ParseError("forest file: unexpected end, wanted '" + expected_tag + "'");
      ++line_no_;
    } while (text.empty());
    current_.clear();
    current_.str(text);
    std::string tag;
    current_ >> tag;
    if (tag != expected_tag) {
      throw ParseError("forest file line " + std::to_string(line_no_) + ": expected '" + expected_tag + "', found '" + tag + "'");
    }
    return current_;
  }

  std::string raw_line() {
    std::string text;
    if (!std::getline(in_, text)) throw ParseError("forest file: unexpected end");
    ++line_no_;
    return text;
  }

  double real() {
    std::string tok = word();
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) fail("bad real '" + tok + "'");
    return v;
  }

  long long integer() {
    std::string tok = word();
    long long v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) fail("bad integer '" + tok + "'");
    return v;
  }

  std::string word() {
    std::string tok;
    if (!(current_ >> tok)) fail("truncated record");
    return tok;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("forest file line " + std::to_string(line_no_) + ": " + what);
  }

  std::istream& in_;
  std::istringstream current_;
  std::size_t line_no_ = 0;
};

}  // namespace detail

inline void write_forest(std::ostream& out, const Forest& forest) {
  out << "bellatrex-forest 1\n";
  out << "task " << to_string(forest.task.kind) << ' ' << forest.task.outputs << '\n';
  out << "features " << forest.n_features << '\n';
  for (std::size_t j = 0; j < forest.n_features; ++j) {
    out << (j < forest.feature_names.size() ? forest.feature_names[j] : "x" + std::to_string(j)) << '\n';
  }
  const auto& p = forest.params;
  out << "params " << p.n_trees << ' ' << p.min_samples_split << ' ' << p.mtry.value_or(0) << ' ' << p.seed << ' ';
  if (p.max_depth) {
    out << *p.max_depth;
  } else {
    out << '-';
  }
  out << ' ' << (p.bootstrap ? 1 : 0) << '\n';

  for (std::size_t t = 0; t < forest.trees.size(); ++t) {
    const auto& tree = forest.trees[t];
    out << "tree " << t << ' ' << tree.nodes.size() << '\n';
    out << "bootstrap " << tree.bootstrap.size();
    for (auto r : tree.bootstrap) out << ' ' << r;
    out << "\noob " << tree.oob.size();
    for (auto r : tree.oob) out << ' ' << r;
    out << '\n';
    for (const auto& nd : tree.nodes) {
      out << "node " << nd.feature << ' ';
      detail::write_real(out, nd.threshold);
      out << ' ' << nd.left << ' ' << nd.right << ' ';
      detail::write_real(out, nd.weight);
      out << ' ' << nd.n_samples << ' ' << nd.value.size();
      for (double v : nd.value) {
        out << ' ';
        detail::write_real(out, v);
      }
      if (nd.curve) {
        out << ' ';
        detail::write_real(out, nd.curve->initial);
        out << ' ' << nd.curve->times.size();
        for (std::size_t i = 0; i < nd.curve->times.size(); ++i) {
          out << ' ';
          detail::write_real(out, nd.curve->times[i]);
          out << ' ';
          detail::write_real(out, nd.curve->values[i]);
        }
      } else {
        out << " -";
      }
      out << '\n';
    }
  }
  out << "end\n";
}

inline Forest read_forest(std::istream& in) {
  detail::TokenReader rd(in);
  Forest forest;
  {
    auto& header = rd.line("bellatrex-forest");
    (void)header;
    if (rd.integer() != 1) throw ParseError("forest file: unsupported version");
  }
  rd.line("task");
  forest.task.kind = parse_task_kind(rd.word());
  forest.task.outputs = static_cast<std::size_t>(rd.integer());
  rd.line("features");
  forest.n_features = static_cast<std::size_t>(rd.integer());
  for (std::size_t j = 0; j < forest.n_features; ++j) forest.feature_names.push_back(rd.raw_line());

  rd.line("params");
  auto& p = forest.params;
  p.n_trees = static_cast<std::size_t>(rd.integer());
  p.min_samples_split = static_cast<std::size_t>(rd.integer());
  p.mtry = static_cast<std::size_t>(rd.integer());
  p.seed = static_cast<std::uint64_t>(std::stoull(rd.word()));
  if (auto depth = rd.word(); depth != "-") p.max_depth = static_cast<std::size_t>(std::stoull(depth));
  p.bootstrap = rd.integer() != 0;

  forest.trees.resize(p.n_trees);
  for (std::size_t t = 0; t < p.n_trees; ++t) {
    rd.line("tree");
    if (static_cast<std::size_t>(rd.integer()) != t) throw ParseError("forest file: trees out of order");
    const auto n_nodes = static_cast<std::size_t>(rd.integer());
    Tree& tree = forest.trees[t];
    tree.task = forest.task;
    tree.n_features = forest.n_features;
    rd.line("bootstrap");
    tree.bootstrap.resize(static_cast<std::size_t>(rd.integer()));
    for (auto& r : tree.bootstrap) r = static_cast<std::size_t>(rd.integer());
    rd.line("oob");
    tree.oob.resize(static_cast<std::size_t>(rd.integer()));
    for (auto& r : tree.oob) r = static_cast<std::size_t>(rd.integer());
    tree.nodes.resize(n_nodes);
    for (auto& nd : tree.nodes) {
      rd.line("node");
      nd.feature = static_cast<int>(rd.integer());
      nd.threshold = rd.real();
      nd.left = static_cast<int>(rd.integer());
      nd.right = static_cast<int>(rd.integer());
      nd.weight = rd.real();
      nd.n_samples = static_cast<std::size_t>(rd.integer());
      nd.value.resize(static_cast<std::size_t>(rd.integer()));
      for (auto& v : nd.value) v = rd.real();
      auto curve_tok = rd.word();
      if (curve_tok != "-") {
        auto curve = std::make_shared<StepFunction>();
        double initial = 0.0;
        std::from_chars(curve_tok.data(), curve_tok.data() + curve_tok.size(), initial);
        curve->initial = initial;
        const auto count = static_cast<std::size_t>(rd.integer());
        for (std::size_t i = 0; i < count; ++i) {
          curve->times.push_back(rd.real());
          curve->values.push_back(rd.real());
        }
        nd.curve = std::move(curve);
      }
      const auto limit = static_cast<int>(n_nodes);
      if (nd.feature >= static_cast<int>(forest.n_features) ||
          (!nd.is_leaf() && (nd.left <= 0 || nd.right <= 0 || nd.left >= limit || nd.right >= limit))) {
        throw ParseError("forest file: node references out of range");
      }
    }
  }
  rd.line("end");
  return forest;
}

inline void save_forest(const std::string& path, const Forest& forest) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  write_forest(out, forest);
}

inline Forest load_forest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_forest(in);
}

}  // namespace bellatrex

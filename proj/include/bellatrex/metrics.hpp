#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "bellatrex/core.hpp"

namespace bellatrex {

/// Area under the ROC curve in Mann-Whitney form, ties counting one half.
/// Computed from mid-ranks (kept in half units so the result is exact).
inline double auroc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw ArgumentError("auroc: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  std::int64_t positives = 0;
  std::int64_t twice_rank_sum = 0;
  for (std::size_t start = 0; start < n;) {
    std::size_t stop = start;
    while (stop < n && scores[order[stop]] == scores[order[start]]) ++stop;
    // Ranks start+1 .. stop share the mid-rank (start + 1 + stop) / 2.
    const auto twice_mid = static_cast<std::int64_t>(start + 1 + stop);
    for (std::size_t k = start; k < stop; ++k) {
      if (labels[order[k]] > 0.5) {
        ++positives;
        twice_rank_sum += twice_mid;
      }
    }
    start = stop;
  }
  const std::int64_t negatives = static_cast<std::int64_t>(n) - positives;
  if (positives == 0 || negatives == 0) throw UndefinedMetric("auroc: both classes required");
  const std::int64_t twice_u = twice_rank_sum - positives * (positives + 1);
  return static_cast<double>(twice_u) / static_cast<double>(2 * positives * negatives);
}

/// Multi-label AUROC: per-label AUROC weighted by the label's positive
/// count. Labels with a single class in `labels` are dropped.
inline double weighted_auroc(const Matrix& scores, const Matrix& labels) {
  if (scores.rows() != labels.rows() || scores.cols() != labels.cols()) {
    throw ArgumentError("weighted_auroc: shape mismatch");
  }
  double weighted = 0.0;
  double total = 0.0;
  for (std::size_t l = 0; l < labels.cols(); ++l) {
    const auto y = labels.column(l);
    const double pos = static_cast<double>(std::count_if(y.begin(), y.end(), [](double v) { return v > 0.5; }));
    if (pos == 0.0 || pos == static_cast<double>(y.size())) continue;
    weighted += pos * auroc(scores.column(l), y);
    total += pos;
  }
  if (total == 0.0) throw UndefinedMetric("weighted_auroc: every label is single-class");
  return weighted / total;
}

/// Mean absolute error over all cells; for multi-target blocks this equals
/// the mean of the per-target errors.
inline double mae(const Matrix& pred, const Matrix& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
    throw ArgumentError("mae: shape mismatch");
  }
  if (pred.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.data().size(); ++i) sum += std::abs(pred.data()[i] - truth.data()[i]);
  return sum / static_cast<double>(pred.data().size());
}

inline double mae(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw ArgumentError("mae: length mismatch");
  if (pred.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += std::abs(pred[i] - truth[i]);
  return sum / static_cast<double>(pred.size());
}

/// Generalised Jaccard similarity of two non-negative vectors. Two all-zero
/// vectors are identical (empty) rules and get similarity 1.
inline double jaccard_similarity(std::span<const double> v, std::span<const double> w) {
  if (v.size() != w.size()) throw ArgumentError("jaccard_similarity: length mismatch");
  double lo = 0.0;
  double hi = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    lo += std::min(v[i], w[i]);
    hi += std::max(v[i], w[i]);
  }
  if (hi == 0.0) return 1.0;
  return lo / hi;
}

/// Mean pairwise (1 - similarity) over ordered pairs. Undefined for a single rule.
inline std::optional<double> dissimilarity(const std::vector<std::vector<double>>& vectors) {
  const std::size_t k = vectors.size();
  if (k < 2) return std::nullopt;
  double sum = 0.0;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) {
      if (a != b) sum += 1.0 - jaccard_similarity(vectors[a], vectors[b]);
    }
  }
  return sum / static_cast<double>(k * (k - 1));
}

/// Which rules count toward an explanation's complexity.
enum class RuleContext {
  RuleCollection,  // every rule shown (Bellatrex, rule sets)
  TreePaths,       // activated root-to-leaf paths of the trees shown
  DecisionList,    // ordered list whose last rule is the else clause
};

/// Total number of split tests across the rules that make up an explanation.
/// For decision lists `activated` selects the fired rule; firing the else
/// clause means the whole list is needed.
inline std::size_t complexity(std::span<const std::size_t> rule_lengths, RuleContext context,
                              std::optional<std::size_t> activated = std::nullopt) {
  if (context == RuleContext::DecisionList) {
    if (!activated || *activated >= rule_lengths.size()) {
      throw ArgumentError("complexity: decision list needs a valid activated rule");
    }
    if (*activated + 1 < rule_lengths.size()) return rule_lengths[*activated];
  }
  return std::accumulate(rule_lengths.begin(), rule_lengths.end(), std::size_t{0});
}

}  // namespace bellatrex

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "bellatrex/core.hpp"

namespace bellatrex {

/// Right-censored observation. event == false means censored at `time`.
struct SurvivalSample {
  double time = 0.0;
  bool event = false;

  bool operator==(const SurvivalSample&) const = default;
};

/// Right-continuous piecewise-constant function. Evaluates to `initial`
/// before the first jump and to values[i] on [times[i], times[i+1]).
struct StepFunction {
  std::vector<double> times;
  std::vector<double> values;
  double initial = 0.0;

  double operator()(double t) const {
    auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return initial;
    return values[static_cast<std::size_t>(it - times.begin()) - 1];
  }

  bool operator==(const StepFunction&) const = default;
};

namespace detail {

/// Per distinct time: number of samples and number of events, ascending.
struct TimeTable {
  std::vector<double> times;
  std::vector<std::size_t> count;
  std::vector<std::size_t> events;
};

inline TimeTable tabulate(std::span<const SurvivalSample> samples) {
  std::vector<SurvivalSample> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const SurvivalSample& a, const SurvivalSample& b) { return a.time < b.time; });
  TimeTable table;
  for (const auto& s : sorted) {
    if (table.times.empty() || table.times.back() != s.time) {
      table.times.push_back(s.time);
      table.count.push_back(0);
      table.events.push_back(0);
    }
    ++table.count.back();
    if (s.event) ++table.events.back();
  }
  return table;
}

}  // namespace detail

/// Product-limit survival estimate. Jumps only at event times; censorings
/// tied with an event time are still at risk at that time.
///
/// Between censorings the product telescopes, so each censoring-free run is
/// evaluated as one ratio of at-risk counts.
inline StepFunction kaplan_meier(std::span<const SurvivalSample> samples) {
  StepFunction out;
  out.initial = 1.0;
  const auto table = detail::tabulate(samples);
  std::size_t at_risk = samples.size();
  double anchor = 1.0;  // survival at the start of the current run
  std::size_t anchor_risk = at_risk;
  for (std::size_t i = 0; i < table.times.size(); ++i) {
    const std::size_t survivors = at_risk - table.events[i];
    if (table.events[i] > 0) {
      out.times.push_back(table.times[i]);
      out.values.push_back(anchor * (static_cast<double>(survivors) / static_cast<double>(anchor_risk)));
    }
    at_risk -= table.count[i];
    if (table.count[i] > table.events[i]) {
      anchor = out.values.empty() ? 1.0 : out.values.back();
      anchor_risk = at_risk;
    }
  }
  return out;
}

/// Nelson-Aalen cumulative hazard estimate.
inline StepFunction nelson_aalen(std::span<const SurvivalSample> samples) {
  StepFunction out;
  out.initial = 0.0;
  const auto table = detail::tabulate(samples);
  std::size_t at_risk = samples.size();
  double hazard = 0.0;
  for (std::size_t i = 0; i < table.times.size(); ++i) {
    if (table.events[i] > 0) {
      hazard += static_cast<double>(table.events[i]) / static_cast<double>(at_risk);
      out.times.push_back(table.times[i]);
      out.values.push_back(hazard);
    }
    at_risk -= table.count[i];
  }
  return out;
}

/// Accumulates the two-sample log-rank statistic one distinct time at a
/// time, from the latest time to the earliest. Shared by the split search.
class LogRankAccumulator {
 public:
  /// `total_at_risk` / `left_at_risk` are the numbers still at risk at the
  /// time being added (i.e. with time >= it).
  void add(double total_at_risk, double total_events, double left_at_risk, double left_events) {
    if (total_events <= 0.0 || total_at_risk <= 0.0) return;
    const double frac = left_at_risk / total_at_risk;
    observed_minus_expected_ += left_events - total_events * frac;
    if (total_at_risk > 1.0) {
      variance_ += frac * (1.0 - frac) * (total_at_risk - total_events) / (total_at_risk - 1.0) *
                   total_events;
    }
  }

  /// |O - E| / sqrt(V); zero when the variance vanishes.
  double score() const {
    if (variance_ <= 0.0) return 0.0;
    return std::abs(observed_minus_expected_) / std::sqrt(variance_);
  }

 private:
  double observed_minus_expected_ = 0.0;
  double variance_ = 0.0;
};

/// Absolute two-group log-rank statistic. Larger means better separated.
inline double logrank_score(std::span<const SurvivalSample> left,
                            std::span<const SurvivalSample> right) {
  std::vector<SurvivalSample> all(left.begin(), left.end());
  all.insert(all.end(), right.begin(), right.end());
  const auto total = detail::tabulate(all);
  const auto lt = detail::tabulate(left);

  // Left-group counts aligned to the pooled time table.
  std::vector<double> left_count(total.times.size(), 0.0);
  std::vector<double> left_events(total.times.size(), 0.0);
  for (std::size_t i = 0, j = 0; i < lt.times.size(); ++i) {
    while (total.times[j] != lt.times[i]) ++j;
    left_count[j] = static_cast<double>(lt.count[i]);
    left_events[j] = static_cast<double>(lt.events[i]);
  }

  LogRankAccumulator acc;
  double at_risk = 0.0;
  double left_at_risk = 0.0;
  for (std::size_t k = total.times.size(); k-- > 0;) {
    at_risk += static_cast<double>(total.count[k]);
    left_at_risk += left_count[k];
    acc.add(at_risk, static_cast<double>(total.events[k]), left_at_risk, left_events[k]);
  }
  return acc.score();
}

/// Sorted distinct event times, the grid used for risk scores.
inline std::vector<double> event_time_grid(std::span<const SurvivalSample> samples) {
  std::vector<double> grid;
  for (const auto& s : samples) {
    if (s.event) grid.push_back(s.time);
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

/// Sum of a cumulative hazard over a time grid.
inline double risk_from_hazard(const StepFunction& hazard, std::span<const double> grid) {
  double risk = 0.0;
  std::size_t j = 0;
  double current = hazard.initial;
  for (double t : grid) {
    while (j < hazard.times.size() && hazard.times[j] <= t) current = hazard.values[j++];
    risk += current;
  }
  return risk;
}

/// Ensemble-mortality style scalar risk: the leaf's Nelson-Aalen cumulative
/// hazard summed over the training event-time grid.
inline double risk_score(std::span<const SurvivalSample> leaf, std::span<const double> event_grid) {
  return risk_from_hazard(nelson_aalen(leaf), event_grid);
}

namespace detail {

class FenwickTree {
 public:
  explicit FenwickTree(std::size_t n) : tree_(n + 1, 0) {}
  void add(std::size_t i, std::int64_t v) {
    for (++i; i < tree_.size(); i += i & (~i + 1)) tree_[i] += v;
  }
  /// Sum over [0, i).
  std::int64_t prefix(std::size_t i) const {
    std::int64_t s = 0;
    for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

 private:
  std::vector<std::int64_t> tree_;
};

/// Dense ranks (0-based) of values; equal values share a rank.
inline std::vector<std::size_t> dense_ranks(std::span<const double> values, std::size_t* levels) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<std::size_t> ranks(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    ranks[i] = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), values[i]) -
                                        sorted.begin());
  }
  *levels = sorted.size();
  return ranks;
}

}  // namespace detail

/// Harrell's concordance index. Comparable pairs are (i, j) with
/// time_i < time_j and an event at i; the pair is concordant when
/// risk_i > risk_j and counts one half on tied risks.
///
/// O(n log n): samples are visited by decreasing time, and a Fenwick tree
/// over risk ranks counts how many later samples each event outranks.
inline double concordance_index(std::span<const double> risks,
                                std::span<const SurvivalSample> samples) {
  if (risks.size() != samples.size()) throw ArgumentError("concordance_index: length mismatch");
  const std::size_t n = samples.size();
  std::size_t levels = 0;
  const auto rank = detail::dense_ranks(risks, &levels);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return samples[a].time > samples[b].time;
  });

  detail::FenwickTree later(levels);
  std::int64_t later_total = 0;
  std::int64_t twice_concordant = 0;  // 2 * concordant + ties
  std::int64_t comparable = 0;
  for (std::size_t start = 0; start < n;) {
    std::size_t stop = start;
    while (stop < n && samples[order[stop]].time == samples[order[start]].time) ++stop;
    for (std::size_t k = start; k < stop; ++k) {
      const std::size_t i = order[k];
      if (!samples[i].event) continue;
      const std::int64_t below = later.prefix(rank[i]);
      const std::int64_t at_or_below = later.prefix(rank[i] + 1);
      twice_concordant += 2 * below + (at_or_below - below);
      comparable += later_total;
    }
    for (std::size_t k = start; k < stop; ++k) {
      later.add(rank[order[k]], 1);
      ++later_total;
    }
    start = stop;
  }
  if (comparable == 0) throw UndefinedMetric("concordance_index: no comparable pairs");
  return static_cast<double>(twice_concordant) / static_cast<double>(2 * comparable);
}

}  // namespace bellatrex

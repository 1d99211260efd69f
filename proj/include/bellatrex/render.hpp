#pragma once

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bellatrex/explain.hpp"

namespace bellatrex {

enum class RenderFormat { Text, Json };

namespace detail {

inline std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

inline std::string fmt_prediction(const std::vector<double>& values, const char* spec = "%.3f") {
  if (values.size() == 1) return fmt(spec, values[0]);
  std::string s = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ", ";
    s += fmt(spec, values[i]);
  }
  return s + "]";
}

inline nlohmann::json json_prediction(const std::vector<double>& values) {
  if (values.size() == 1) return values[0];
  return values;
}

inline std::string feature_name(const std::vector<std::string>& names, int j) {
  const auto idx = static_cast<std::size_t>(j);
  return idx < names.size() ? names[idx] : "x" + std::to_string(j);
}

}  // namespace detail

/// Human-readable rendering: one block per rule with its weight and the
/// root estimate, then one line per split test with the updated estimate.
inline std::string render_text(const Explanation& e, const std::vector<std::string>& names) {
  std::ostringstream out;
  out << "forest prediction: " << detail::fmt_prediction(e.forest_prediction.values)
      << "   surrogate: " << detail::fmt_prediction(e.surrogate.values)
      << "   fidelity: " << detail::fmt("%.4f", e.fidelity) << '\n';
  out << "tau=" << e.tau << "  d=" << e.d_effective << (e.dim.is_identity() ? " (no projection)" : "")
      << "  K=" << e.k() << "  mode=" << to_string(e.mode) << '\n';

  for (std::size_t r = 0; r < e.rules.size(); ++r) {
    const auto& rule = e.rules[r];
    out << '\n';
    if (e.rules.size() == 1) {
      out << "rule (weight=1)";
    } else {
      out << "rule " << r + 1 << " (w" << r + 1 << "=" << detail::fmt("%.2f", rule.weight) << ")";
    }
    out << "   tree " << rule.tree_index << "   initial estimate = " << detail::fmt_prediction(rule.path.front().value)
        << '\n';
    for (std::size_t s = 0; s + 1 < rule.path.size(); ++s) {
      const auto& step = rule.path[s];
      const auto name = detail::feature_name(names, step.feature);
      const double value = e.instance[static_cast<std::size_t>(step.feature)];
      const auto& next = rule.path[s + 1];
      out << "  (" << name << " = " << detail::fmt("%.4g", value) << ")   " << name
          << (step.went_left ? " <= " : " > ") << detail::fmt("%.4g", step.threshold) << "   -> "
          << detail::fmt_prediction(next.value);
      if (next.is_leaf()) out << " (leaf)";
      out << '\n';
    }
    if (rule.prediction.survival_curve) {
      const auto& curve = *rule.prediction.survival_curve;
      out << "  leaf survival curve:";
      const std::size_t n = curve.times.size();
      const std::size_t stride = n > 8 ? (n + 7) / 8 : 1;
      for (std::size_t i = 0; i < n; i += stride) {
        out << ' ' << detail::fmt("%.4g", curve.times[i]) << ':' << detail::fmt("%.3f", curve.values[i]);
      }
      if (n == 0) out << " no events";
      out << '\n';
    }
  }
  return out.str();
}

inline nlohmann::json explanation_json(const Explanation& e, const std::vector<std::string>& names) {
  nlohmann::json j;
  j["chosen_tau"] = e.tau;
  j["chosen_d"] = e.d_effective;
  j["chosen_k"] = e.k();
  j["requested_k"] = e.k_requested;
  j["projection"] = e.dim.is_identity() ? "identity" : "pca";
  j["mode"] = to_string(e.mode);
  j["forest_prediction"] = detail::json_prediction(e.forest_prediction.values);
  j["surrogate"] = detail::json_prediction(e.surrogate.values);
  j["fidelity"] = e.fidelity;

  nlohmann::json weights = nlohmann::json::array();
  nlohmann::json rules = nlohmann::json::array();
  for (const auto& rule : e.rules) {
    weights.push_back(rule.weight);
    nlohmann::json r;
    r["tree"] = rule.tree_index;
    r["weight"] = rule.weight;
    r["cluster_size"] = rule.cluster_size;
    r["length"] = rule.length();
    r["prediction"] = detail::json_prediction(rule.prediction.values);
    r["initial_estimate"] = detail::json_prediction(rule.path.front().value);
    nlohmann::json steps = nlohmann::json::array();
    for (std::size_t s = 0; s + 1 < rule.path.size(); ++s) {
      const auto& step = rule.path[s];
      const auto& next = rule.path[s + 1];
      steps.push_back({{"feature", step.feature},
                       {"name", detail::feature_name(names, step.feature)},
                       {"value", e.instance[static_cast<std::size_t>(step.feature)]},
                       {"op", step.went_left ? "<=" : ">"},
                       {"threshold", step.threshold},
                       {"weight", step.weight},
                       {"prediction", detail::json_prediction(next.value)},
                       {"leaf", next.is_leaf()}});
    }
    r["steps"] = std::move(steps);
    r["vector"] = rule.vector.values;
    if (rule.prediction.survival_curve) {
      r["survival_curve"] = {{"times", rule.prediction.survival_curve->times},
                             {"values", rule.prediction.survival_curve->values}};
    }
    rules.push_back(std::move(r));
  }
  j["weights"] = std::move(weights);
  j["rules"] = std::move(rules);

  nlohmann::json points = nlohmann::json::array();
  for (std::size_t i = 0; i < e.preselected.size(); ++i) {
    points.push_back({{"tree", e.preselected[i]},
                      {"x", e.projected_points[i][0]},
                      {"y", e.projected_points[i][1]},
                      {"cluster", e.clusters[i]},
                      {"is_representative", static_cast<bool>(e.is_representative[i])},
                      {"rule_prediction", detail::json_prediction(e.rule_predictions[i].values)}});
  }
  j["projected_points"] = std::move(points);
  return j;
}

inline std::string render_explanation(const Explanation& e, const std::vector<std::string>& names, RenderFormat format) {
  if (format == RenderFormat::Json) return explanation_json(e, names).dump(2) + "\n";
  return render_text(e, names);
}

/// One row per pre-selected rule: its 2-D projected position, cluster,
/// whether it was extracted, and its prediction.
inline std::string plot_tsv(const Explanation& e) {
  std::ostringstream out;
  out << "tree\tx\ty\tcluster\tis_representative\trule_prediction\n";
  for (std::size_t i = 0; i < e.preselected.size(); ++i) {
    out << e.preselected[i] << '\t' << detail::fmt("%.10g", e.projected_points[i][0]) << '\t'
        << detail::fmt("%.10g", e.projected_points[i][1]) << '\t' << e.clusters[i] << '\t'
        << (e.is_representative[i] ? 1 : 0) << '\t';
    const auto& v = e.rule_predictions[i].values;
    for (std::size_t o = 0; o < v.size(); ++o) {
      if (o) out << ',';
      out << detail::fmt("%.10g", v[o]);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace bellatrex

#include "cairl/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace cairl {

namespace {

struct Term {
  double truth;
  double model;
  double weight;
};

const FeatureShape* find_feature(const ShapeGraph& graph, const std::string& name) {
  for (const auto& f : graph.features)
    if (f.name == name) return &f;
  return nullptr;
}

// Pairs (truth, model, weight) over the shared feature/value support.
std::vector<Term> matched_terms(const ShapeGraph& model, const ShapeGraph& truth,
                                const ScalingOptions& options) {
  std::vector<Term> terms;
  for (const auto& tf : truth.features) {
    const FeatureShape* mf = find_feature(model, tf.name);
    if (!mf) continue;
    for (const auto& tp : tf.points) {
      const double weight = options.uniform_weights ? 1.0 : tp.count;
      if (!(weight > 0)) continue;
      for (const auto& mp : mf->points) {
        if (std::abs(mp.value - tp.value) <= 1e-9 * std::max(1.0, std::abs(tp.value))) {
          terms.push_back({tp.contribution, mp.contribution, weight});
          break;
        }
      }
    }
  }
  return terms;
}

// Minimizes sum_k |y_k - a x_k| w_k over a in [lo, hi]; returns (a, degenerate).
std::pair<double, bool> l1_scale(const std::vector<Term>& terms, double lo, double hi) {
  std::vector<std::pair<double, double>> points;
  for (const auto& t : terms)
    if (t.model != 0.0) points.emplace_back(t.truth / t.model, t.weight * std::abs(t.model));
  if (points.empty()) return {std::clamp(0.0, lo, hi), true};
  return {std::clamp(weighted_median(std::move(points)), lo, hi), false};
}

double l1_objective(const std::vector<Term>& terms, double a) {
  double total = 0.0;
  for (const auto& t : terms) total += t.weight * std::abs(t.truth - a * t.model);
  return total;
}

struct Range {
  double min_a, max_a, min_b, max_b;
};

std::vector<Range> feature_ranges(const ShapeGraph& graph_a, const ShapeGraph& graph_b) {
  std::vector<Range> out;
  for (const auto& fa : graph_a.features) {
    const FeatureShape* fb = find_feature(graph_b, fa.name);
    if (!fb || fa.points.empty() || fb->points.empty()) continue;
    auto [amin, amax] = std::minmax_element(fa.points.begin(), fa.points.end(),
                                            [](const auto& x, const auto& y) { return x.contribution < y.contribution; });
    auto [bmin, bmax] = std::minmax_element(fb->points.begin(), fb->points.end(),
                                            [](const auto& x, const auto& y) { return x.contribution < y.contribution; });
    out.push_back({amin->contribution, amax->contribution, bmin->contribution, bmax->contribution});
  }
  return out;
}

// Display objective restricted to one sign of a, written as an l1 fit.
std::vector<Term> display_terms(const std::vector<Range>& ranges, bool negative) {
  std::vector<Term> terms;
  for (const auto& r : ranges) {
    terms.push_back({r.min_a, negative ? r.max_b : r.min_b, 1.0});
    terms.push_back({r.max_a, negative ? r.min_b : r.max_b, 1.0});
  }
  return terms;
}

}  // namespace

double weighted_median(std::vector<std::pair<double, double>> points) {
  if (points.empty()) return 0.0;
  std::sort(points.begin(), points.end());
  double total = 0.0;
  for (const auto& p : points) total += p.second;
  double cumulative = 0.0;
  for (const auto& p : points) {
    cumulative += p.second;
    if (cumulative >= 0.5 * total) return p.first;
  }
  return points.back().first;
}

double scaling_objective(const ShapeGraph& model, const ShapeGraph& truth, double scale,
                         const ScalingOptions& options) {
  return l1_objective(matched_terms(model, truth, options), scale);
}

ScalingResult scale_to_ground_truth(const ShapeGraph& model, const ShapeGraph& truth,
                                    const ScalingOptions& options) {
  const auto terms = matched_terms(model, truth, options);
  const double lo = options.positive_only ? 0.0 : -std::numeric_limits<double>::infinity();
  auto [a, degenerate] = l1_scale(terms, lo, std::numeric_limits<double>::infinity());
  return {a, l1_objective(terms, a), degenerate};
}

double display_objective(const ShapeGraph& graph_a, const ShapeGraph& graph_b, double scale) {
  const auto ranges = feature_ranges(graph_a, graph_b);
  return l1_objective(display_terms(ranges, scale < 0), scale);
}

ScalingResult scale_for_display(const ShapeGraph& graph_a, const ShapeGraph& graph_b,
                                const ScalingOptions& options) {
  const auto ranges = feature_ranges(graph_a, graph_b);
  constexpr double inf = std::numeric_limits<double>::infinity();
  const auto pos_terms = display_terms(ranges, false);
  auto [a_pos, degenerate] = l1_scale(pos_terms, 0.0, inf);
  ScalingResult best{a_pos, l1_objective(pos_terms, a_pos), degenerate};
  if (!options.positive_only) {
    const auto neg_terms = display_terms(ranges, true);
    auto [a_neg, neg_degenerate] = l1_scale(neg_terms, -inf, 0.0);
    const double obj = l1_objective(neg_terms, a_neg);
    if (!neg_degenerate && obj < best.objective) best = {a_neg, obj, false};
  }
  return best;
}

double shape_distance(const ShapeGraph& model, const ShapeGraph& truth, const ScalingResult& scaling,
                      const ScalingOptions& options) {
  const auto terms = matched_terms(model, truth, options);
  double weight = 0.0;
  for (const auto& t : terms) weight += t.weight;
  if (!(weight > 0)) return 0.0;
  return l1_objective(terms, scaling.scale) / weight;
}

ShapeGraph scaled(ShapeGraph graph, double k) {
  for (auto& f : graph.features)
    for (auto& p : f.points) p.contribution *= k;
  return graph;
}

double action_match_accuracy(const TabularPolicy& policy, const TrajectoryBatch& expert) {
  std::size_t total = 0, matched = 0;
  for (const auto& traj : expert)
    for (const auto& step : traj.steps) {
      ++total;
      if (policy.argmax(step.state) == step.action) ++matched;
    }
  return total == 0 ? 0.0 : static_cast<double>(matched) / static_cast<double>(total);
}

std::string format_result_row(const ResultRow& row) {
  char buffer[256];
  std::snprintf(buffer, sizeof(buffer), "%s,%s,%.3g,%.6f,%.6f,%.6f,%llu", row.method.c_str(),
                row.mdp.c_str(), row.gamma, row.ret, row.dist, row.accuracy,
                static_cast<unsigned long long>(row.seed));
  return buffer;
}

void append_result_row(const std::string& path, const ResultRow& row) {
  bool fresh = true;
  {
    std::ifstream probe(path);
    fresh = !probe.good() || probe.peek() == std::ifstream::traits_type::eof();
  }
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot open " + path + " for appending");
  if (fresh) out << kResultsHeader << '\n';
  out << format_result_row(row) << '\n';
}

}  // namespace cairl

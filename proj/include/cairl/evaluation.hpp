#pragma once

#include <string>
#include <vector>

#include "cairl/mdp.hpp"
#include "cairl/shape_graph.hpp"

namespace cairl {

struct ScalingResult {
  double scale = 0.0;
  double objective = 0.0;
  /// True when the model graph is identically zero, so every scale is optimal.
  bool degenerate = false;
};

struct ScalingOptions {
  /// Restrict the scale to a >= 0.
  bool positive_only = false;
  /// Ignore value counts: every (feature, value) pair weighs 1.
  bool uniform_weights = false;
};

/**
 * Exact minimizer of sum_j sum_v c(v) |f_G(v) - a f_M(v)| over the scale a.
 * The objective is convex and piecewise linear with breakpoints f_G / f_M, so
 * the minimizer is a weighted median of the breakpoints with weights c |f_M|.
 * Values absent from either graph or with zero count are dropped.
 */
ScalingResult scale_to_ground_truth(const ShapeGraph& model, const ShapeGraph& truth,
                                    const ScalingOptions& options = {});

/**
 * Scale a that best aligns each feature's range of `a * graph_b` with the range
 * of `graph_a`: minimizes sum_j |min f_A - min(a f_B)| + |max f_A - max(a f_B)|.
 * For a < 0 the scaled minimum and maximum swap roles, so a negated graph maps
 * back with a = -1.
 */
ScalingResult scale_for_display(const ShapeGraph& graph_a, const ShapeGraph& graph_b,
                                const ScalingOptions& options = {});

/// Count-weighted mean absolute error between truth and the scaled model graph.
double shape_distance(const ShapeGraph& model, const ShapeGraph& truth, const ScalingResult& scaling,
                      const ScalingOptions& options = {});

/// Objective of scale_to_ground_truth at an arbitrary scale (for oracles and witnesses).
double scaling_objective(const ShapeGraph& model, const ShapeGraph& truth, double scale,
                         const ScalingOptions& options = {});
double display_objective(const ShapeGraph& graph_a, const ShapeGraph& graph_b, double scale);

/// Multiplies every contribution by k.
ShapeGraph scaled(ShapeGraph graph, double k);

/// Fraction of logged transitions whose action equals argmax_a policy(a|s)
/// (ties resolved to the lowest action id).
double action_match_accuracy(const TabularPolicy& policy, const TrajectoryBatch& expert);

/// Lower weighted median of (value, weight) pairs: a minimizer of sum_k w_k |x_k - a|.
double weighted_median(std::vector<std::pair<double, double>> points);

/// (G_expert - G_learned) / (G_expert - G_uniform).
inline double normalized_regret(double expert, double learned, double uniform) {
  return (expert - learned) / (expert - uniform);
}

struct ResultRow {
  std::string method;
  std::string mdp;
  double gamma = 0.0;
  double ret = 0.0;
  double dist = 0.0;
  double accuracy = 0.0;
  std::uint64_t seed = 0;
};

inline constexpr const char* kResultsHeader = "method,mdp,gamma,return,dist,accuracy,seed";
std::string format_result_row(const ResultRow& row);
void append_result_row(const std::string& path, const ResultRow& row);

}  // namespace cairl

#pragma once

#include <string>
#include <vector>

namespace cairl {

struct ShapePoint {
  double value = 0.0;
  double contribution = 0.0;
  double count = 0.0;
};

struct FeatureShape {
  std::string name;
  std::vector<ShapePoint> points;
};

/// Per-feature (value, contribution, count) curves of an additive reward.
struct ShapeGraph {
  std::vector<FeatureShape> features;

  double total_count() const {
    double n = 0.0;
    for (const auto& f : features)
      for (const auto& p : f.points) n += p.count;
    return n;
  }
};

/// Subtracts the count-weighted mean from each feature (plain mean when a
/// feature has no counts), so the count-weighted total contribution is zero.
inline ShapeGraph center(ShapeGraph graph) {
  for (auto& feature : graph.features) {
    double weighted = 0.0, total = 0.0, plain = 0.0;
    for (const auto& p : feature.points) {
      weighted += p.count * p.contribution;
      total += p.count;
      plain += p.contribution;
    }
    const double mean = total > 0 ? weighted / total
                                  : (feature.points.empty() ? 0.0 : plain / static_cast<double>(feature.points.size()));
    for (auto& p : feature.points) p.contribution -= mean;
  }
  return graph;
}

}  // namespace cairl

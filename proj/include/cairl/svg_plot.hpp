#pragma once

#include <string>
#include <vector>

#include "cairl/shape_graph.hpp"

namespace cairl {

struct PlotSeries {
  std::string label;
  ShapeGraph graph;
};

/// One line series of a single feature panel.
struct PanelSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Standalone SVG document of one feature panel.
std::string render_feature_svg(const std::string& feature, const std::vector<PanelSeries>& series);

/**
 * Writes `<out_dir>/<feature>.svg` for every feature of `truth`, overlaying the
 * ground truth and each model after display scaling against the truth.
 * Returns the written paths.
 */
std::vector<std::string> plot_shape_graphs(const ShapeGraph& truth, const std::vector<PlotSeries>& models,
                                           const std::string& out_dir);

}  // namespace cairl

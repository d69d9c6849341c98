#include "cairl/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cairl/errors.hpp"
#include "cairl/evaluation.hpp"

namespace cairl {

namespace {

constexpr double kWidth = 420, kHeight = 300;
constexpr double kLeft = 56, kRight = 130, kTop = 32, kBottom = 44;
constexpr const char* kPalette[] = {"#000000", "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::string tick_label(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

const FeatureShape* find_feature(const ShapeGraph& graph, const std::string& name) {
  for (const auto& f : graph.features)
    if (f.name == name) return &f;
  return nullptr;
}

}  // namespace

std::string render_feature_svg(const std::string& feature, const std::vector<PanelSeries>& series) {
  double x_lo = INFINITY, x_hi = -INFINITY, y_lo = INFINITY, y_hi = -INFINITY;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw ShapeError("plot series '" + s.label + "' has mismatched x and y");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x_lo = std::min(x_lo, s.x[i]);
      x_hi = std::max(x_hi, s.x[i]);
      y_lo = std::min(y_lo, s.y[i]);
      y_hi = std::max(y_hi, s.y[i]);
    }
  }
  if (!(x_lo <= x_hi)) x_lo = 0, x_hi = 1, y_lo = -1, y_hi = 1;
  if (x_hi - x_lo < 1e-12) x_lo -= 0.5, x_hi += 0.5;
  const double pad = std::max(0.05 * (y_hi - y_lo), 1e-3);
  y_lo -= pad;
  y_hi += pad;

  const double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * plot_w; };
  auto py = [&](double y) { return kTop + (y_hi - y) / (y_hi - y_lo) * plot_h; };

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << num(kLeft + plot_w / 2) << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">"
      << escape(feature) << "</text>\n";

  // Axes, zero line and ticks.
  svg << "<g stroke=\"#444\" fill=\"none\">\n"
      << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\"" << num(plot_w) << "\" height=\""
      << num(plot_h) << "\"/>\n";
  if (y_lo < 0 && y_hi > 0)
    svg << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(py(0)) << "\" x2=\"" << num(kLeft + plot_w) << "\" y2=\""
        << num(py(0)) << "\" stroke-dasharray=\"3,3\" stroke=\"#aaa\"/>\n";
  svg << "</g>\n<g fill=\"#222\">\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = y_lo + (y_hi - y_lo) * i / 4.0;
    svg << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(py(y) + 4) << "\" text-anchor=\"end\">" << tick_label(y)
        << "</text>\n";
  }
  std::vector<double> xs;
  for (const auto& s : series) xs.insert(xs.end(), s.x.begin(), s.x.end());
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  const std::size_t stride = std::max<std::size_t>(1, (xs.size() + 7) / 8);
  for (std::size_t i = 0; i < xs.size(); i += stride)
    svg << "<text x=\"" << num(px(xs[i])) << "\" y=\"" << num(kTop + plot_h + 16) << "\" text-anchor=\"middle\">"
        << tick_label(xs[i]) << "</text>\n";
  svg << "<text x=\"" << num(kLeft + plot_w / 2) << "\" y=\"" << num(kHeight - 8)
      << "\" text-anchor=\"middle\">value</text>\n"
      << "<text x=\"14\" y=\"" << num(kTop + plot_h / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
      << num(kTop + plot_h / 2) << ")\">contribution</text>\n</g>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    svg << "<g class=\"series\" data-label=\"" << escape(s.label) << "\">\n<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"" << (k == 0 ? 2.5 : 1.5) << "\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) svg << (i ? " " : "") << num(px(s.x[i])) << ',' << num(py(s.y[i]));
    svg << "\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      svg << "<circle cx=\"" << num(px(s.x[i])) << "\" cy=\"" << num(py(s.y[i])) << "\" r=\"3\" fill=\"" << color
          << "\"/>\n";
    svg << "</g>\n";
    const double ly = kTop + 10 + 16.0 * static_cast<double>(k);
    svg << "<line x1=\"" << num(kLeft + plot_w + 10) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(kLeft + plot_w + 28)
        << "\" y2=\"" << num(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << num(kLeft + plot_w + 32) << "\" y=\"" << num(ly + 4) << "\">" << escape(s.label)
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<std::string> plot_shape_graphs(const ShapeGraph& truth, const std::vector<PlotSeries>& models,
                                           const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create plot directory " + out_dir + ": " + ec.message());

  std::vector<double> scales;
  for (const auto& m : models) {
    const ScalingResult s = scale_for_display(truth, m.graph);
    scales.push_back(s.degenerate ? 1.0 : s.scale);
  }

  std::vector<std::string> written;
  for (const auto& feature : truth.features) {
    std::vector<PanelSeries> panel;
    PanelSeries gt{"Ground truth", {}, {}};
    for (const auto& p : feature.points) {
      gt.x.push_back(p.value);
      gt.y.push_back(p.contribution);
    }
    panel.push_back(std::move(gt));
    for (std::size_t k = 0; k < models.size(); ++k) {
      const FeatureShape* f = find_feature(models[k].graph, feature.name);
      if (!f) continue;
      PanelSeries s{models[k].label, {}, {}};
      for (const auto& p : f->points) {
        s.x.push_back(p.value);
        s.y.push_back(scales[k] * p.contribution);
      }
      panel.push_back(std::move(s));
    }
    const std::string path = (std::filesystem::path(out_dir) / (feature.name + ".svg")).string();
    std::ofstream file(path);
    if (!file) throw IoError("cannot write " + path);
    file << render_feature_svg(feature.name, panel);
    if (!file) throw IoError("failed writing " + path);
    written.push_back(path);
  }
  return written;
}

}  // namespace cairl

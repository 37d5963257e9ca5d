#pragma once

#include <string>
#include <vector>

#include "remeanflow/metrics.hpp"
#include "remeanflow/tensor.hpp"

namespace rmf {

// Minimal self-contained SVG writers; no external renderer.

struct ScatterSeries {
  std::string label;
  std::string color;  // e.g. "#d62728"
  const Tensor* points = nullptr;  // (n, 2)
};

void write_scatter_svg(const std::string& path,
                       const std::vector<ScatterSeries>& series,
                       const std::string& title);

void write_heatmap_svg(const std::string& path, const LossHeatmap& hm,
                       const std::string& title);

// Simple polyline chart; x and y per series, log-x friendly values expected
// to be positive if the caller wants a log feel (plotted linearly).
struct CurveSeries {
  std::string label;
  std::string color;
  std::vector<double> x, y;
};

void write_curve_svg(const std::string& path,
                     const std::vector<CurveSeries>& series,
                     const std::string& title, const std::string& x_label,
                     const std::string& y_label);

}  // namespace rmf

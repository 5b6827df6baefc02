#pragma once

#include <string>
#include <vector>

namespace dtp {

// One named curve or point cloud. x and y must be the same length; NaN
// y-values break a line into segments and are dropped from scatters.
struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Self-contained SVG writers (axes, ticks, legend, no external assets).
// Throws std::invalid_argument on empty/ragged input, std::runtime_error if
// the file cannot be written.
void write_line_svg(const std::string& path, const std::string& title,
                    const std::string& x_label, const std::string& y_label,
                    const std::vector<PlotSeries>& series);
void write_scatter_svg(const std::string& path, const std::string& title,
                       const std::string& x_label, const std::string& y_label,
                       const std::vector<PlotSeries>& series);

}  // namespace dtp

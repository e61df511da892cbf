#pragma once

#include <string>
#include <vector>

namespace airid {

struct PlotSeries {
  std::string name;
  std::vector<double> xs;
  std::vector<double> ys;
};

struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 640;
  int height = 400;
  bool log_x = false;  // zero and negative x values are drawn at the left edge
};

/// Static SVG line chart with axes, ticks and a legend.
std::string line_plot_svg(const std::vector<PlotSeries>& series, const PlotOptions& options);

}  // namespace airid

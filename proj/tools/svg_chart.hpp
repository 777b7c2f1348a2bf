// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace m3s::tools {

struct Series {
  std::string label;
  std::vector<double> x, y;
  std::string color;
};

struct Chart {
  std::string title, x_label, y_label;
  std::vector<Series> series;
};

/// Standalone SVG line chart with axes, ticks and a legend.
std::string render_svg(const Chart& chart, int width = 720, int height = 420);

}  // namespace m3s::tools

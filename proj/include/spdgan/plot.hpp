#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "spdgan/image.hpp"

namespace spdgan {

struct Series {
  std::string label;  // digits, letters and '-' render in the legend
  std::vector<double> y;
  std::array<std::uint8_t, 3> color{0, 0, 0};
};

/// Line chart of the series against their index (1-based), with y tick
/// labels and a legend. Non-finite points break the line.
ImageRGB render_line_plot(const std::vector<Series>& series, int width = 640, int height = 400);

}  // namespace spdgan

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spdgan/errors.hpp"

namespace spdgan {

/// 8-bit RGB, interleaved row-major (HWC).
struct ImageRGB {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  ImageRGB() = default;
  ImageRGB(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {
    if (w < 1 || h < 1) throw DimensionError("image dimensions must be positive");
  }

  std::size_t count() const { return static_cast<std::size_t>(width) * height; }
  std::uint8_t& at(int x, int y, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int x, int y, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  bool operator==(const ImageRGB&) const = default;
};

/// L in [0,100], a and b in [-110,110], interleaved HWC.
struct ImageLab {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  ImageLab() = default;
  ImageLab(int w, int h) : width(w), height(h), values(static_cast<std::size_t>(w) * h * 3, 0.0) {
    if (w < 1 || h < 1) throw DimensionError("image dimensions must be positive");
  }
  double& at(int x, int y, int c) { return values[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  double at(int x, int y, int c) const { return values[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

ImageRGB read_png(const std::string& path);
void write_png(const std::string& path, const ImageRGB& img);

}  // namespace spdgan

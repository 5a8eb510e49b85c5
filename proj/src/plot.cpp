#include "spdgan/plot.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

namespace spdgan {

namespace {

// 3x5 glyphs, one row per string, '#' = ink
const std::map<char, std::array<const char*, 5>>& glyphs() {
  static const std::map<char, std::array<const char*, 5>> g{
      {'0', {"###", "#.#", "#.#", "#.#", "###"}}, {'1', {".#.", "##.", ".#.", ".#.", "###"}},
      {'2', {"###", "..#", "###", "#..", "###"}}, {'3', {"###", "..#", ".##", "..#", "###"}},
      {'4', {"#.#", "#.#", "###", "..#", "..#"}}, {'5', {"###", "#..", "###", "..#", "###"}},
      {'6', {"###", "#..", "###", "#.#", "###"}}, {'7', {"###", "..#", ".#.", ".#.", ".#."}},
      {'8', {"###", "#.#", "###", "#.#", "###"}}, {'9', {"###", "#.#", "###", "..#", "###"}},
      {'.', {"...", "...", "...", "...", ".#."}}, {'-', {"...", "...", "###", "...", "..."}},
      {'e', {"...", "###", "##.", "#..", "###"}}, {'+', {"...", ".#.", "###", ".#.", "..."}},
      {'A', {".#.", "#.#", "###", "#.#", "#.#"}}, {'B', {"##.", "#.#", "##.", "#.#", "##."}},
      {'C', {"###", "#..", "#..", "#..", "###"}}, {'D', {"##.", "#.#", "#.#", "#.#", "##."}},
      {'E', {"###", "#..", "##.", "#..", "###"}}, {'G', {"###", "#..", "#.#", "#.#", "###"}},
      {'I', {"###", ".#.", ".#.", ".#.", "###"}}, {'K', {"#.#", "#.#", "##.", "#.#", "#.#"}},
      {'L', {"#..", "#..", "#..", "#..", "###"}}, {'N', {"##.", "#.#", "#.#", "#.#", "#.#"}},
      {'O', {"###", "#.#", "#.#", "#.#", "###"}}, {'P', {"###", "#.#", "###", "#..", "#.."}},
      {'R', {"##.", "#.#", "##.", "#.#", "#.#"}}, {'S', {"###", "#..", "###", "..#", "###"}},
      {'T', {"###", ".#.", ".#.", ".#.", ".#."}}, {'U', {"#.#", "#.#", "#.#", "#.#", "###"}},
  };
  return g;
}

struct Canvas {
  ImageRGB img;
  void set(int x, int y, const std::array<std::uint8_t, 3>& c) {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
    for (int k = 0; k < 3; ++k) img.pixels[3 * (static_cast<std::size_t>(y) * img.width + x) + k] = c[k];
  }
  void line(int x0, int y0, int x1, int y1, const std::array<std::uint8_t, 3>& c, int thick = 1) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      for (int t = 0; t < thick; ++t) {
        set(x0, y0 + t, c);
        set(x0 + t, y0, c);
      }
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }
  void text(int x, int y, const std::string& s, const std::array<std::uint8_t, 3>& c, int scale = 2) {
    for (char ch : s) {
      const char key = ch == 'e' ? 'e' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
      const auto it = glyphs().find(key);
      if (it != glyphs().end())
        for (int r = 0; r < 5; ++r)
          for (int q = 0; q < 3; ++q)
            if (it->second[r][q] == '#')
              for (int a = 0; a < scale; ++a)
                for (int b = 0; b < scale; ++b) set(x + q * scale + a, y + r * scale + b, c);
      x += 4 * scale;
    }
  }
};

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

}  // namespace

ImageRGB render_line_plot(const std::vector<Series>& series, int width, int height) {
  Canvas cv{ImageRGB(width, height)};
  std::fill(cv.img.pixels.begin(), cv.img.pixels.end(), std::uint8_t{255});
  const int left = 70, right = width - 20, top = 20, bottom = height - 30;
  const std::array<std::uint8_t, 3> black{0, 0, 0}, grid{225, 225, 225};

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::size_t n = 0;
  for (const auto& s : series) {
    n = std::max(n, s.y.size());
    for (double v : s.y)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  }
  if (!std::isfinite(lo)) lo = 0, hi = 1;
  if (hi - lo < 1e-12) hi = lo + 1;
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  auto px = [&](std::size_t i) {
    return left + static_cast<int>(std::lround(n > 1 ? double(i) / double(n - 1) * (right - left) : 0.0));
  };
  auto py = [&](double v) { return bottom - static_cast<int>(std::lround((v - lo) / (hi - lo) * (bottom - top))); };

  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    cv.line(left, py(v), right, py(v), grid);
    cv.text(4, py(v) - 5, tick_label(v), black);
  }
  cv.line(left, top, left, bottom, black);
  cv.line(left, bottom, right, bottom, black);
  cv.text(left, bottom + 8, "1", black);
  if (n > 1) cv.text(right - 8 * static_cast<int>(std::to_string(n).size()), bottom + 8, std::to_string(n), black);

  for (const auto& s : series)
    for (std::size_t i = 1; i < s.y.size(); ++i)
      if (std::isfinite(s.y[i - 1]) && std::isfinite(s.y[i]))
        cv.line(px(i - 1), py(s.y[i - 1]), px(i), py(s.y[i]), s.color, 2);

  int ly = top + 6;
  for (const auto& s : series) {
    for (int a = 0; a < 12; ++a)
      for (int b = 0; b < 8; ++b) cv.set(right - 150 + a, ly + b, s.color);
    cv.text(right - 132, ly - 1, s.label, black);
    ly += 16;
  }
  return cv.img;
}

}  // namespace spdgan

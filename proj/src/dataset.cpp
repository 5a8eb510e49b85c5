#include "spdgan/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "spdgan/color.hpp"
#include "spdgan/networks.hpp"
#include "spdgan/rng.hpp"

namespace spdgan {

namespace {

using RGB = std::array<double, 3>;

// hue families per shape kind: disc, box, triangle, ring
constexpr RGB kShapeBase[4] = {{220, 40, 35}, {40, 90, 210}, {50, 175, 60}, {235, 190, 30}};
// background palette: sky, sand, dusk, grass
constexpr RGB kBackTop[4] = {{110, 170, 235}, {235, 215, 160}, {90, 60, 130}, {150, 200, 110}};
constexpr RGB kBackBottom[4] = {{200, 225, 250}, {190, 150, 90}, {240, 140, 90}, {60, 120, 50}};

RGB jitter(const RGB& c, Rng& rng, double amount) {
  RGB out;
  for (int i = 0; i < 3; ++i) out[i] = std::clamp(c[i] + rng.uniform(-amount, amount), 0.0, 255.0);
  return out;
}

double edge(double px, double py, double ax, double ay, double bx, double by) {
  return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

}  // namespace

ImageRGB SyntheticDataset::image(Split split, int index) const {
  Rng rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(split) * 0x100000000ULL +
                                       static_cast<std::uint64_t>(index))));
  const int n = size;
  std::vector<RGB> px(static_cast<std::size_t>(n * n));

  const int bg = rng.uniform_int(0, 3);
  const RGB top = jitter(kBackTop[bg], rng, 20), bottom = jitter(kBackBottom[bg], rng, 20);
  const double tilt = rng.uniform(-0.4, 0.4);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double t = std::clamp((y + tilt * (x - n / 2.0)) / (n - 1), 0.0, 1.0);
      for (int c = 0; c < 3; ++c) px[static_cast<std::size_t>(y * n + x)][c] = (1 - t) * top[c] + t * bottom[c];
    }

  const int shapes = rng.uniform_int(1, 4);
  for (int s = 0; s < shapes; ++s) {
    const int kind = rng.uniform_int(0, 3);
    const RGB col = jitter(kShapeBase[kind], rng, 25);
    const double cx = rng.uniform(0.15, 0.85) * n, cy = rng.uniform(0.15, 0.85) * n;
    const double r = rng.uniform(0.08, 0.22) * n;
    const double shade = rng.uniform(0.0, 0.5);  // light from the top left
    const double ang = rng.uniform(0, 2 * std::acos(-1.0));
    double tx[3], ty[3];
    for (int k = 0; k < 3; ++k) {
      tx[k] = cx + r * 1.3 * std::cos(ang + k * 2.0943951023931953);
      ty[k] = cy + r * 1.3 * std::sin(ang + k * 2.0943951023931953);
    }
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        const double d = std::sqrt(dx * dx + dy * dy);
        bool inside = false;
        switch (kind) {
          case 0: inside = d <= r; break;
          case 1: inside = std::abs(dx) <= r && std::abs(dy) <= 0.7 * r; break;
          case 2: {
            const double e0 = edge(x + 0.5, y + 0.5, tx[0], ty[0], tx[1], ty[1]);
            const double e1 = edge(x + 0.5, y + 0.5, tx[1], ty[1], tx[2], ty[2]);
            const double e2 = edge(x + 0.5, y + 0.5, tx[2], ty[2], tx[0], ty[0]);
            inside = (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
            break;
          }
          default: inside = d <= r && d >= 0.55 * r;
        }
        if (!inside) continue;
        const double light = 1.0 - shade * std::clamp((dx + dy) / (2.8 * r) + 0.5, 0.0, 1.0);
        for (int c = 0; c < 3; ++c) px[static_cast<std::size_t>(y * n + x)][c] = col[c] * light;
      }
  }

  ImageRGB img(n, n);
  for (std::size_t i = 0; i < px.size(); ++i)
    for (int c = 0; c < 3; ++c)
      img.pixels[3 * i + static_cast<std::size_t>(c)] =
          static_cast<std::uint8_t>(std::lround(std::clamp(px[i][c], 0.0, 255.0)));
  return img;
}

std::vector<ImageRGB> SyntheticDataset::images(Split split, int count) const {
  std::vector<ImageRGB> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(image(split, i));
  return out;
}

Batch make_batch(const std::vector<ImageRGB>& images, const std::vector<int>& indices) {
  std::vector<Tensor4<float>> grays, colors;
  for (int i : indices) {
    const ImageRGB& img = images.at(static_cast<std::size_t>(i));
    grays.push_back(gray_tensor(img));
    colors.push_back(encode_lab(lab_tensor(rgb_to_lab(img))));
  }
  return {stack(grays), stack(colors)};
}

}  // namespace spdgan

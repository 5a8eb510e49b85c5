#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <limits>

#include "spdgan/color.hpp"

using namespace spdgan;

namespace {

ImageRGB random_image(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  ImageRGB img(w, h);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  return img;
}

ImageRGB constant_image(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  ImageRGB img(w, h);
  for (std::size_t i = 0; i < img.count(); ++i) {
    img.pixels[3 * i] = r;
    img.pixels[3 * i + 1] = g;
    img.pixels[3 * i + 2] = b;
  }
  return img;
}

// Brute-force SSIM: explicit 2-D Gaussian window at every valid position.
double ssim_oracle(const std::vector<double>& x, const std::vector<double>& y, int W, int H) {
  double w[11][11], s = 0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) {
      w[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
      s += w[i][j];
    }
  const double C1 = std::pow(2.55, 2), C2 = std::pow(7.65, 2);
  double total = 0;
  int count = 0;
  for (int r = 0; r + 11 <= H; ++r)
    for (int c = 0; c + 11 <= W; ++c) {
      double mx = 0, my = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          mx += w[i][j] / s * x[(r + i) * W + c + j];
          my += w[i][j] / s * y[(r + i) * W + c + j];
        }
      double vx = 0, vy = 0, cxy = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double dx = x[(r + i) * W + c + j] - mx, dy = y[(r + i) * W + c + j] - my;
          vx += w[i][j] / s * dx * dx;
          vy += w[i][j] / s * dy * dy;
          cxy += w[i][j] / s * dx * dy;
        }
      total += (2 * mx * my + C1) * (2 * cxy + C2) / ((mx * mx + my * my + C1) * (vx + vy + C2));
      ++count;
    }
  return total / count;
}

}  // namespace

TEST_CASE("Lab conversion reference points") {
  const Lab white = rgb_to_lab(255, 255, 255);
  CHECK(white.L == doctest::Approx(100.0).epsilon(1e-6));
  CHECK(std::abs(white.a) < 0.5);
  CHECK(std::abs(white.b) < 0.5);
  CHECK(std::abs(rgb_to_lab(0, 0, 0).L) < 1e-12);

  // values from an independent implementation (scikit-image rgb2lab)
  const Lab gray = rgb_to_lab(119, 119, 119);
  CHECK(gray.L == doctest::Approx(50.034438792538225).epsilon(1e-6));
  CHECK(std::abs(gray.a) < 0.01);
  CHECK(std::abs(gray.b) < 0.01);
  const Lab red = rgb_to_lab(255, 0, 0);
  CHECK(red.L == doctest::Approx(53.2405879437449).epsilon(1e-6));
  CHECK(red.a == doctest::Approx(80.0923082256922).epsilon(1e-6));
  CHECK(red.b == doctest::Approx(67.2027510444287).epsilon(1e-6));
  const Lab mixed = rgb_to_lab(12, 200, 77);
  CHECK(mixed.L == doctest::Approx(70.81574459957646).epsilon(1e-6));
  CHECK(mixed.a == doctest::Approx(-66.54354423065129).epsilon(1e-6));
  CHECK(mixed.b == doctest::Approx(48.873178449783275).epsilon(1e-6));
}

TEST_CASE("Lab round trip over a stride-17 colour sweep") {
  int worst = 0;
  bool clipped = false;
  for (int r = 0; r <= 255; r += 17)
    for (int g = 0; g <= 255; g += 17)
      for (int b = 0; b <= 255; b += 17) {
        bool c = false;
        const auto back = lab_to_rgb(rgb_to_lab(r, g, b), &c);
        clipped = clipped || c;
        worst = std::max({worst, std::abs(back[0] - r), std::abs(back[1] - g), std::abs(back[2] - b)});
      }
  CHECK(worst <= 1);
  CHECK_FALSE(clipped);

  bool c = false;
  lab_to_rgb(Lab{50, 110, -110}, &c);
  CHECK(c);
}

TEST_CASE("psnr") {
  const ImageRGB a = random_image(20, 17, 1), b = random_image(20, 17, 2);
  CHECK(psnr(a, a) == std::numeric_limits<double>::infinity());
  ImageRGB shifted = constant_image(8, 8, 100, 100, 100), base = constant_image(8, 8, 90, 90, 90);
  CHECK(psnr(shifted, base) == doctest::Approx(10 * std::log10(255.0 * 255.0 / 100.0)).epsilon(1e-12));
  CHECK(std::abs(psnr(shifted, base) - 28.1308) < 1e-4);
  double se = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) se += std::pow(double(a.pixels[i]) - b.pixels[i], 2);
  CHECK(std::abs(psnr(a, b) - 10 * std::log10(255.0 * 255.0 / (se / a.pixels.size()))) < 1e-9);
  CHECK(psnr(a, b) == psnr(b, a));
  CHECK_THROWS_AS(psnr(a, random_image(5, 5, 1)), DimensionError);
}

TEST_CASE("ssim") {
  const ImageRGB a = random_image(24, 19, 3), b = random_image(24, 19, 4);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ssim(constant_image(16, 16, 7, 7, 7), constant_image(16, 16, 7, 7, 7)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-12);
  double oracle = 0;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> x(a.count()), y(a.count());
    for (std::size_t i = 0; i < a.count(); ++i) {
      x[i] = a.pixels[3 * i + c];
      y[i] = b.pixels[3 * i + c];
    }
    CHECK(std::abs(ssim_plane(x, y, 24, 19) - ssim_oracle(x, y, 24, 19)) < 1e-6);
    oracle += ssim_oracle(x, y, 24, 19) / 3;
  }
  CHECK(std::abs(ssim(a, b) - oracle) < 1e-6);
  CHECK(ssim(a, b) < 0.5);
  CHECK_THROWS_AS(ssim(random_image(8, 8, 1), random_image(8, 8, 2)), DimensionError);
}

TEST_CASE("fid") {
  EmbedStats p{Eigen::Vector2d(0, 0), Eigen::Matrix2d::Identity(), "e"};
  EmbedStats q{Eigen::Vector2d(1, 0), Eigen::Matrix2d::Identity(), "e"};
  CHECK(std::abs(fid(p, p)) < 1e-8);
  CHECK(fid(p, q) == doctest::Approx(1.0).epsilon(1e-12));

  EmbedStats one{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 4.0), "e"};
  EmbedStats two{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 1.0), "e"};
  CHECK(std::abs(fid(one, two) - 1.0) < 1e-6);

  Rng rng(5);
  Eigen::MatrixXd E1(30, 6), E2(30, 6);
  for (int i = 0; i < 30; ++i)
    for (int j = 0; j < 6; ++j) {
      E1(i, j) = rng.normal();
      E2(i, j) = rng.normal() * 1.5 + 0.2;
    }
  const EmbedStats s1 = embed_stats(E1, "e"), s2 = embed_stats(E2, "e");
  CHECK(std::abs(fid(s1, s1)) < 1e-8);
  CHECK(std::abs(fid(s1, s2) - fid(s2, s1)) < 1e-8);
  CHECK(fid(s1, s2) > 0.0);
  // rank-deficient covariances (fewer samples than dimensions) stay finite and non-negative
  const EmbedStats t1 = embed_stats(E1.topRows(3), "e"), t2 = embed_stats(E2.topRows(4), "e");
  CHECK(fid(t1, t2) >= -1e-8);
  q.embedder = "other";
  CHECK_THROWS_AS(fid(p, q), ConfigError);
}

TEST_CASE("colorfulness") {
  ImageRGB gray = random_image(10, 10, 6);
  for (std::size_t i = 0; i < gray.count(); ++i) gray.pixels[3 * i + 1] = gray.pixels[3 * i + 2] = gray.pixels[3 * i];
  CHECK(colorfulness(gray) == 0.0);
  const double red = colorfulness(constant_image(4, 4, 255, 0, 0));
  CHECK(red == doctest::Approx(0.3 * std::sqrt(255.0 * 255.0 + 127.5 * 127.5)).epsilon(1e-12));
  CHECK(red == doctest::Approx(85.5296).epsilon(1e-5));

  const ImageRGB img = random_image(9, 7, 7);
  ImageRGB perm = img;
  Rng rng(1);
  for (std::size_t i = perm.count() - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i)));
    for (int c = 0; c < 3; ++c) std::swap(perm.pixels[3 * i + c], perm.pixels[3 * j + c]);
  }
  CHECK(colorfulness(perm) == doctest::Approx(colorfulness(img)).epsilon(1e-12));
  CHECK(colorfulness(img) > 0.0);
}

TEST_CASE("embedding statistics") {
  Eigen::MatrixXd onehot(2, 2);
  onehot << 1, 0, 0, 1;
  const EmbedStats s = embed_stats(onehot, "e");
  CHECK(s.mu.isApprox(Eigen::Vector2d(0.5, 0.5)));
  Eigen::Matrix2d expect;
  expect << 0.5, -0.5, -0.5, 0.5;
  CHECK((s.C - expect).norm() < 1e-15);
  CHECK_THROWS_AS(embed_stats(onehot.topRows(1), "e"), InvalidInput);

  SurrogateExtractor<double> ex;
  const ImageRGB a = random_image(16, 16, 8);
  const EmbedStats same = embed_set({a, a, a}, ex);
  CHECK(same.C.norm() < 1e-20);
  CHECK(same.mu.size() == 32);
  const EmbedStats r1 = embed_set({a, random_image(16, 16, 9)}, ex), r2 = embed_set({a, random_image(16, 16, 9)}, ex);
  CHECK(r1.mu == r2.mu);
  CHECK(r1.C == r2.C);
  CHECK_THROWS_AS(embed_set({a}, ex), InvalidInput);
}

TEST_CASE("grayscale and tensor helpers") {
  CHECK(luma601(255, 255, 255) == doctest::Approx(255.0));
  const ImageRGB img = random_image(8, 4, 10);
  const ImageRGB g = gray_replicated(img);
  CHECK(g.at(3, 2, 0) == g.at(3, 2, 2));
  CHECK(std::abs(g.at(3, 2, 0) - luma601(img.at(3, 2, 0), img.at(3, 2, 1), img.at(3, 2, 2))) <= 0.5);
  const Tensor4<float> t = gray_tensor(img);
  CHECK(t.shape() == Shape4{1, 1, 4, 8});
  CHECK(t.array().abs().maxCoeff() <= 1.0f);
  const ImageLab lab = rgb_to_lab(img);
  const ImageLab back = lab_image(lab_tensor(lab), 0);
  CHECK(std::abs(back.at(5, 1, 1) - lab.at(5, 1, 1)) < 1e-4);
  CHECK(stack({t, t}).shape() == Shape4{2, 1, 4, 8});
}

TEST_CASE("png round trip") {
  const ImageRGB img = random_image(13, 7, 11);
  write_png("test_colormetrics.png", img);
  CHECK(read_png("test_colormetrics.png") == img);
  std::remove("test_colormetrics.png");
  CHECK_THROWS_AS(read_png("missing.png"), IoError);
}

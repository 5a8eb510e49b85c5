#include "spdgan/color.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>

#include "spdgan/networks.hpp"

namespace spdgan {

namespace {

constexpr double kWhite[3] = {0.95047, 1.0, 1.08883};
// linear sRGB -> XYZ
constexpr double kM[3][3] = {{0.412453, 0.357580, 0.180423},
                             {0.212671, 0.715160, 0.072169},
                             {0.019334, 0.119193, 0.950227}};

double srgb_to_linear(double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); }
double linear_to_srgb(double c) { return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055; }

constexpr double kDelta = 6.0 / 29.0;
double f_lab(double t) {
  return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3 * kDelta * kDelta) + 4.0 / 29.0;
}
double f_lab_inv(double t) { return t > kDelta ? t * t * t : 3 * kDelta * kDelta * (t - 4.0 / 29.0); }

const Eigen::Matrix3d& xyz_to_rgb() {
  static const Eigen::Matrix3d inv = [] {
    Eigen::Matrix3d m;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m(i, j) = kM[i][j];
    return Eigen::Matrix3d(m.inverse());
  }();
  return inv;
}

void require_same_size(const ImageRGB& a, const ImageRGB& b, const char* what) {
  if (a.width != b.width || a.height != b.height)
    throw DimensionError(std::string(what) + ": image sizes differ");
  if (a.count() == 0) throw DimensionError(std::string(what) + ": empty image");
}

}  // namespace

Lab rgb_to_lab(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const double lin[3] = {srgb_to_linear(r / 255.0), srgb_to_linear(g / 255.0), srgb_to_linear(b / 255.0)};
  double xyz[3];
  for (int i = 0; i < 3; ++i) xyz[i] = (kM[i][0] * lin[0] + kM[i][1] * lin[1] + kM[i][2] * lin[2]) / kWhite[i];
  const double fx = f_lab(xyz[0]), fy = f_lab(xyz[1]), fz = f_lab(xyz[2]);
  return Lab{116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

std::array<std::uint8_t, 3> lab_to_rgb(const Lab& lab, bool* clipped) {
  const double fy = (lab.L + 16.0) / 116.0;
  const double fx = fy + lab.a / 500.0;
  const double fz = fy - lab.b / 200.0;
  const Eigen::Vector3d xyz(kWhite[0] * f_lab_inv(fx), kWhite[1] * f_lab_inv(fy), kWhite[2] * f_lab_inv(fz));
  const Eigen::Vector3d lin = xyz_to_rgb() * xyz;
  std::array<std::uint8_t, 3> out{};
  bool clip = false;
  for (int i = 0; i < 3; ++i) {
    double v = linear_to_srgb(std::max(0.0, lin[i])) * 255.0;
    if (lin[i] < -1e-6 || v > 255.5) clip = true;
    v = std::clamp(v, 0.0, 255.0);
    out[i] = static_cast<std::uint8_t>(std::lround(v));
  }
  if (clipped) *clipped = clip;
  return out;
}

ImageLab rgb_to_lab(const ImageRGB& img) {
  ImageLab out(img.width, img.height);
  for (std::size_t i = 0; i < img.count(); ++i) {
    const Lab l = rgb_to_lab(img.pixels[3 * i], img.pixels[3 * i + 1], img.pixels[3 * i + 2]);
    out.values[3 * i] = l.L;
    out.values[3 * i + 1] = l.a;
    out.values[3 * i + 2] = l.b;
  }
  return out;
}

ImageRGB lab_to_rgb(const ImageLab& img, std::size_t* clipped_pixels) {
  ImageRGB out(img.width, img.height);
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < out.count(); ++i) {
    bool c = false;
    const auto rgb = lab_to_rgb(Lab{img.values[3 * i], img.values[3 * i + 1], img.values[3 * i + 2]}, &c);
    clipped += c;
    std::copy(rgb.begin(), rgb.end(), out.pixels.begin() + 3 * i);
  }
  if (clipped_pixels) *clipped_pixels = clipped;
  return out;
}

double luma601(std::uint8_t r, std::uint8_t g, std::uint8_t b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

ImageRGB gray_replicated(const ImageRGB& img) {
  ImageRGB out(img.width, img.height);
  for (std::size_t i = 0; i < img.count(); ++i) {
    const auto y = static_cast<std::uint8_t>(
        std::lround(std::clamp(luma601(img.pixels[3 * i], img.pixels[3 * i + 1], img.pixels[3 * i + 2]), 0.0, 255.0)));
    out.pixels[3 * i] = out.pixels[3 * i + 1] = out.pixels[3 * i + 2] = y;
  }
  return out;
}

Tensor4<float> gray_tensor(const ImageRGB& img) {
  Tensor4<float> t(Shape4{1, 1, img.height, img.width});
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      t(0, 0, y, x) = static_cast<float>(luma601(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2)) / 127.5 - 1.0);
  return t;
}

Tensor4<float> lab_tensor(const ImageLab& img) {
  Tensor4<float> t(Shape4{1, 3, img.height, img.width});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) t(0, c, y, x) = static_cast<float>(img.at(x, y, c));
  return t;
}

ImageLab lab_image(const Tensor4<float>& lab, int n) {
  if (lab.c() != 3) throw DimensionError("lab_image expects 3 channels");
  ImageLab img(lab.w(), lab.h());
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < lab.h(); ++y)
      for (int x = 0; x < lab.w(); ++x) img.at(x, y, c) = lab(n, c, y, x);
  return img;
}

Tensor4<float> stack(const std::vector<Tensor4<float>>& items) {
  if (items.empty()) throw InvalidInput("stack of no tensors");
  const Shape4 s = items.front().shape();
  Tensor4<float> out(Shape4{static_cast<int>(items.size()) * s.n, s.c, s.h, s.w});
  std::size_t off = 0;
  for (const auto& t : items) {
    if (t.shape() != s) throw DimensionError("stack: shapes differ");
    std::copy_n(t.data(), t.size(), out.data() + off);
    off += t.size();
  }
  return out;
}

double psnr(const ImageRGB& a, const ImageRGB& b, double peak) {
  require_same_size(a, b, "psnr");
  double se = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
    se += d * d;
  }
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = se / static_cast<double>(a.pixels.size());
  return 10.0 * std::log10(peak * peak / mse);
}

namespace {

std::vector<double> gaussian_window() {
  std::vector<double> w(11);
  double s = 0;
  for (int i = 0; i < 11; ++i) {
    w[i] = std::exp(-((i - 5) * (i - 5)) / (2 * 1.5 * 1.5));
    s += w[i];
  }
  for (auto& v : w) v /= s;
  return w;
}

// Separable valid-mode filtering with the 11-tap window.
Eigen::MatrixXd filter_valid(const Eigen::MatrixXd& img, const std::vector<double>& w) {
  const Eigen::Index H = img.rows(), W = img.cols(), k = static_cast<Eigen::Index>(w.size());
  Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(H, W - k + 1);
  for (Eigen::Index t = 0; t < k; ++t) rows += w[t] * img.middleCols(t, W - k + 1);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(H - k + 1, W - k + 1);
  for (Eigen::Index t = 0; t < k; ++t) out += w[t] * rows.middleRows(t, H - k + 1);
  return out;
}

}  // namespace

double ssim_plane(const std::vector<double>& x, const std::vector<double>& y, int width, int height) {
  if (width < 11 || height < 11) throw DimensionError("ssim needs images of at least 11x11");
  if (x.size() != static_cast<std::size_t>(width) * height || y.size() != x.size())
    throw DimensionError("ssim: plane sizes do not match");
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::MatrixXd X = Eigen::Map<const RowMat>(x.data(), height, width);
  const Eigen::MatrixXd Y = Eigen::Map<const RowMat>(y.data(), height, width);
  const auto w = gaussian_window();
  const Eigen::MatrixXd mx = filter_valid(X, w), my = filter_valid(Y, w);
  const Eigen::MatrixXd sxx = filter_valid(X.cwiseProduct(X), w) - mx.cwiseProduct(mx);
  const Eigen::MatrixXd syy = filter_valid(Y.cwiseProduct(Y), w) - my.cwiseProduct(my);
  const Eigen::MatrixXd sxy = filter_valid(X.cwiseProduct(Y), w) - mx.cwiseProduct(my);
  const double C1 = std::pow(0.01 * 255, 2), C2 = std::pow(0.03 * 255, 2);
  const Eigen::ArrayXXd num = (2 * mx.array() * my.array() + C1) * (2 * sxy.array() + C2);
  const Eigen::ArrayXXd den = (mx.array().square() + my.array().square() + C1) * (sxx.array() + syy.array() + C2);
  return (num / den).mean();
}

double ssim(const ImageRGB& a, const ImageRGB& b) {
  require_same_size(a, b, "ssim");
  double total = 0;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> x(a.count()), y(a.count());
    for (std::size_t i = 0; i < a.count(); ++i) {
      x[i] = a.pixels[3 * i + c];
      y[i] = b.pixels[3 * i + c];
    }
    total += ssim_plane(x, y, a.width, a.height);
  }
  return total / 3.0;
}

double colorfulness(const ImageRGB& img) {
  const std::size_t n = img.count();
  if (n == 0) throw DimensionError("colorfulness of an empty image");
  Eigen::ArrayXd rg(n), yb(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double R = img.pixels[3 * i], G = img.pixels[3 * i + 1], B = img.pixels[3 * i + 2];
    rg[i] = R - G;
    yb[i] = 0.5 * (R + G) - B;
  }
  const double mrg = rg.mean(), myb = yb.mean();
  const double vrg = (rg - mrg).square().mean(), vyb = (yb - myb).square().mean();
  return std::sqrt(vrg + vyb) + 0.3 * std::sqrt(mrg * mrg + myb * myb);
}

EmbedStats embed_stats(const Eigen::MatrixXd& E, std::string embedder) {
  if (E.rows() < 2) throw InvalidInput("covariance needs at least 2 embedded images");
  EmbedStats s;
  s.mu = E.colwise().mean().transpose();
  const Eigen::MatrixXd centered = E.rowwise() - s.mu.transpose();
  s.C = linalg::symmetrize(centered.transpose() * centered / static_cast<double>(E.rows() - 1));
  s.embedder = std::move(embedder);
  return s;
}

Eigen::MatrixXd embed_images(const std::vector<ImageRGB>& images, const SurrogateExtractor<double>& extractor) {
  if (images.empty()) throw InvalidInput("embedding an empty image set");
  Eigen::MatrixXd E;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Tensor4<double> coded = encode_lab(lab_tensor(rgb_to_lab(images[i])).cast<double>());
    const Tensor4<double> F = extractor.extract(coded, LayerTag::stage3);
    if (i == 0) E.resize(static_cast<Eigen::Index>(images.size()), F.c());
    for (int c = 0; c < F.c(); ++c) E(static_cast<Eigen::Index>(i), c) = F.matrix(0, c).mean();
  }
  return E;
}

EmbedStats embed_set(const std::vector<ImageRGB>& images, const SurrogateExtractor<double>& extractor) {
  return embed_stats(embed_images(images, extractor), "surrogate-stage3");
}

double fid(const EmbedStats& p, const EmbedStats& q) {
  if (p.embedder != q.embedder) throw ConfigError("fid: statistics come from different embedders");
  if (p.mu.size() != q.mu.size() || p.C.rows() != q.C.rows()) throw DimensionError("fid: dimension mismatch");
  const double mean_term = (p.mu - q.mu).squaredNorm();
  // eigenvalues inside rounding noise of the largest one are treated as 0,
  // otherwise rank-deficient covariances leak sqrt(eps)-sized terms
  auto clipped_values = [](const linalg::EigPair& e) {
    const double top = e.values.size() ? std::max(0.0, e.values.maxCoeff()) : 0.0;
    const double tol = static_cast<double>(e.values.size()) * 1e-15 * top;
    return e.values.unaryExpr([tol](double v) { return v > tol ? v : 0.0; }).eval();
  };
  const linalg::SPDMatrix c1(linalg::symmetrize(p.C));
  const Eigen::VectorXd r1 = clipped_values(c1.eig()).cwiseSqrt();
  const Eigen::MatrixXd s1 = c1.eig().U * r1.asDiagonal() * c1.eig().U.transpose();
  const linalg::SPDMatrix inner(linalg::symmetrize(s1 * q.C * s1));
  const double tr_sqrt = clipped_values(inner.eig()).cwiseSqrt().sum();
  return mean_term + p.C.trace() + q.C.trace() - 2.0 * tr_sqrt;
}

}  // namespace spdgan

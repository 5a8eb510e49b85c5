#pragma once

#include <array>
#include <limits>
#include <string>
#include <vector>

#include "spdgan/features.hpp"
#include "spdgan/image.hpp"

namespace spdgan {

// ---------------------------------------------------------------------------
// Colour conversion (sRGB, D65)

struct Lab {
  double L = 0, a = 0, b = 0;
};

Lab rgb_to_lab(std::uint8_t r, std::uint8_t g, std::uint8_t b);

/// Returns 8-bit sRGB; `clipped` is set when the colour was outside the gamut.
std::array<std::uint8_t, 3> lab_to_rgb(const Lab& lab, bool* clipped = nullptr);

ImageLab rgb_to_lab(const ImageRGB& img);
/// Out-of-gamut values are clipped; `clipped_pixels` counts them.
ImageRGB lab_to_rgb(const ImageLab& img, std::size_t* clipped_pixels = nullptr);

/// ITU-R 601 luma, 0.299 R + 0.587 G + 0.114 B.
double luma601(std::uint8_t r, std::uint8_t g, std::uint8_t b);
ImageRGB gray_replicated(const ImageRGB& img);

// Tensor views used by the networks.
/// (1,1,H,W), luma / 127.5 - 1.
Tensor4<float> gray_tensor(const ImageRGB& img);
/// (1,3,H,W) Lab, in Lab units.
Tensor4<float> lab_tensor(const ImageLab& img);
ImageLab lab_image(const Tensor4<float>& lab, int n);

/// Stacks single-sample tensors along the batch axis.
Tensor4<float> stack(const std::vector<Tensor4<float>>& items);

// ---------------------------------------------------------------------------
// Metrics

/// Identical images give +infinity.
double psnr(const ImageRGB& a, const ImageRGB& b, double peak = 255.0);

/// Mean SSIM of one channel plane (11x11 Gaussian window, sigma 1.5,
/// K1 = 0.01, K2 = 0.03, dynamic range 255), over valid window positions.
double ssim_plane(const std::vector<double>& x, const std::vector<double>& y, int width, int height);
/// Average of the per-channel SSIM.
double ssim(const ImageRGB& a, const ImageRGB& b);

/// Hasler-Suesstrunk colourfulness, sigma_rgyb + 0.3 mu_rgyb.
double colorfulness(const ImageRGB& img);

struct EmbedStats {
  Eigen::VectorXd mu;
  Eigen::MatrixXd C;
  std::string embedder;
};

/// Mean and unbiased covariance of a set of embedding vectors (rows).
EmbedStats embed_stats(const Eigen::MatrixXd& embeddings, std::string embedder);

/// Spatially mean-pooled stage-3 surrogate features of each image (Lab
/// coded input).
Eigen::MatrixXd embed_images(const std::vector<ImageRGB>& images, const SurrogateExtractor<double>& extractor);
EmbedStats embed_set(const std::vector<ImageRGB>& images, const SurrogateExtractor<double>& extractor);

double fid(const EmbedStats& real, const EmbedStats& fake);

}  // namespace spdgan

#pragma once

#include <cstdint>
#include <vector>

#include "spdgan/image.hpp"
#include "spdgan/tensor.hpp"

namespace spdgan {

enum class Split : std::uint64_t { train = 1, heldout = 2 };

/// Coloured geometric shapes on gradient backgrounds. Each shape kind has
/// its own hue family so colour is partly predictable from structure.
/// Image i of a split depends only on (seed, split, i, size).
struct SyntheticDataset {
  std::uint64_t seed = 2024;
  int size = 64;

  ImageRGB image(Split split, int index) const;
  std::vector<ImageRGB> images(Split split, int count) const;
};

/// Network tensors for a list of images: gray (N,1,H,W) coded luma and
/// colour (N,3,H,W) coded Lab.
struct Batch {
  Tensor4<float> gray;
  Tensor4<float> color;
};

Batch make_batch(const std::vector<ImageRGB>& images, const std::vector<int>& indices);

}  // namespace spdgan

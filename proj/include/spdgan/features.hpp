#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>

#include "spdgan/linalg.hpp"
#include "spdgan/ops.hpp"

namespace spdgan {

// ---------------------------------------------------------------------------
// Gram matrices

/// Ridge added to a normalised Gram matrix: delta = absolute + relative * tr(G) / C.
struct GramOptions {
  double relative_ridge = 1e-5;
  double absolute_ridge = 1e-8;
};

/// A Gram matrix with the record of how it was normalised.
struct GramDescriptor {
  linalg::SPDMatrix G;
  std::string layer_tag;
  double divisor = 1.0;  // spatial positions H*W
  double ridge = 0.0;    // delta actually added
};

/// Number of Gram matrices built so far in this process (all paths).
std::uint64_t gram_constructions();
void count_gram_constructions(std::uint64_t n);

/// Single-sample Gram descriptor of channel map `n` of F (computed in double).
template <typename Scalar>
GramDescriptor gram_descriptor(const Tensor4<Scalar>& F, int n, const GramOptions& opt, std::string tag = "") {
  const int C = F.c();
  const auto P = static_cast<Eigen::Index>(F.shape().plane());
  const Eigen::MatrixXd M =
      Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(F.plane(n, 0), C, P)
          .template cast<double>();
  Eigen::MatrixXd G = M * M.transpose() / static_cast<double>(P);
  G = linalg::symmetrize(G);
  const double delta = opt.absolute_ridge + opt.relative_ridge * G.trace() / C;
  G.diagonal().array() += delta;
  count_gram_constructions(1);
  return GramDescriptor{linalg::SPDMatrix(std::move(G)), std::move(tag), static_cast<double>(P), delta};
}

/// Batched Gram op: (N,C,H,W) -> (N,1,C,C). The ridge depends on tr(G), and
/// that dependence is part of the gradient.
template <typename Scalar>
Var<Scalar> gram(Var<Scalar> F, const GramOptions& opt) {
  const auto& fv = F.value();
  const int N = fv.n(), C = fv.c();
  const auto P = static_cast<Eigen::Index>(fv.shape().plane());
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Tensor4<Scalar> out(Shape4{N, 1, C, C});
  for (int n = 0; n < N; ++n) {
    const Eigen::MatrixXd M = Eigen::Map<const Mat>(fv.plane(n, 0), C, P).template cast<double>();
    Eigen::MatrixXd G = linalg::symmetrize(M * M.transpose() / static_cast<double>(P));
    G.diagonal().array() += opt.absolute_ridge + opt.relative_ridge * G.trace() / C;
    out.matrix(n, 0) = G.cast<Scalar>();
  }
  count_gram_constructions(static_cast<std::uint64_t>(N));
  auto* graph = F.graph();
  const double rel = opt.relative_ridge;
  return graph->record(std::move(out), {F}, [graph, F, C, P, rel](const Tensor4<Scalar>& gout) {
    auto& gf = graph->grad_buffer(F);
    for (int n = 0; n < gout.n(); ++n) {
      Eigen::MatrixXd Gs = linalg::symmetrize(gout.matrix(n, 0).template cast<double>());
      Gs.diagonal().array() += rel / C * Gs.trace();
      const Eigen::MatrixXd M = Eigen::Map<const Mat>(F.value().plane(n, 0), C, P).template cast<double>();
      Eigen::Map<Mat>(gf.plane(n, 0), C, P) += (2.0 / static_cast<double>(P) * Gs * M).template cast<Scalar>();
    }
  });
}

// ---------------------------------------------------------------------------
// Feature extraction

enum class LayerTag { stage1 = 1, stage2 = 2, stage3 = 3 };

LayerTag parse_layer_tag(const std::string& s);
std::string to_string(LayerTag t);

/// Channel count at a tag of the surrogate stack.
inline int surrogate_channels(LayerTag t) { return 4 << static_cast<int>(t); }

/// Frozen three-stage convolution stack: 3x3 bias-free convolutions
/// 3->8 (stride 1), 8->16 (stride 2), 16->32 (stride 2), each followed by
/// ReLU. Weights come from a fixed seed and are never trained.
template <typename Scalar>
class SurrogateExtractor {
 public:
  explicit SurrogateExtractor(std::uint64_t seed = 0x5eed) {
    Rng rng(seed);
    const int chans[4] = {3, 8, 16, 32};
    for (int s = 0; s < 3; ++s) {
      const Shape4 shape{chans[s + 1], chans[s], 3, 3};
      const double he = std::sqrt(2.0 / (chans[s] * 9));
      weights_.add("extractor.conv" + std::to_string(s + 1), Tensor4<double>::randn(shape, rng, he).template cast<Scalar>(),
                   false);
    }
  }

  /// x: (N,1,H,W) or (N,3,H,W). Single-channel input is replicated to three.
  Var<Scalar> forward(Var<Scalar> x, LayerTag tag) const {
    if (x.value().c() == 1) x = replicate_channels(x, 3);
    if (x.value().c() != 3) throw DimensionError("extractor expects 1 or 3 input channels, got " + x.shape().str());
    auto* graph = x.graph();
    Var<Scalar> h = x;
    int s = 0;
    for (const auto& p : weights_) {
      h = relu(conv2d(h, graph->frozen(*p), s == 0 ? 1 : 2, 1));
      if (++s == static_cast<int>(tag)) break;
    }
    return h;
  }

  Tensor4<Scalar> extract(const Tensor4<Scalar>& x, LayerTag tag) const {
    Graph<Scalar> g;
    return forward(g.input(x), tag).value();
  }

 private:
  ParamStore<Scalar> weights_;
};

// ---------------------------------------------------------------------------
// Precomputed feature maps ("FMAP" files)
//
// layout (little endian): "FMAP", u32 version (1), u32 N, C, H, W, then
// N*C*H*W float32 values in NCHW order.

void write_fmap(const std::string& path, const Tensor4<float>& features);
Tensor4<float> read_fmap(const std::string& path);

/// Serves precomputed maps for a fixed, ordered image set.
class ImportedFeatures {
 public:
  explicit ImportedFeatures(const std::string& path) : maps_(read_fmap(path)) {}
  explicit ImportedFeatures(Tensor4<float> maps) : maps_(std::move(maps)) {}

  int count() const { return maps_.n(); }
  int channels() const { return maps_.c(); }
  const Tensor4<float>& all() const { return maps_; }

  /// Maps of images [first, first + n).
  Tensor4<float> slice(int first, int n) const;

 private:
  Tensor4<float> maps_;
};

}  // namespace spdgan

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "spdgan/adam.hpp"
#include "spdgan/features.hpp"
#include "spdgan/norm.hpp"
#include "spdgan/spdnet.hpp"

namespace spdgan {

// ---------------------------------------------------------------------------
// Lab coding of network tensors
//
// Generator output t in (-1,1) per channel decodes as L = (t+1)*50,
// a = t*110, b = t*110. Grayscale input is luma/127.5 - 1.

inline const std::vector<double>& lab_scales() {
  static const std::vector<double> s{50.0, 110.0, 110.0};
  return s;
}
inline const std::vector<double>& lab_shifts() {
  static const std::vector<double> s{50.0, 0.0, 0.0};
  return s;
}

template <typename Scalar>
Var<Scalar> decode_lab(Var<Scalar> coded) {
  std::vector<Scalar> sc, sh;
  for (int c = 0; c < 3; ++c) {
    sc.push_back(static_cast<Scalar>(lab_scales()[c]));
    sh.push_back(static_cast<Scalar>(lab_shifts()[c]));
  }
  return channel_affine(coded, sc, sh);
}

template <typename Scalar>
Tensor4<Scalar> decode_lab(const Tensor4<Scalar>& coded) {
  Graph<Scalar> g;
  return decode_lab(g.input(coded)).value();
}

template <typename Scalar>
Tensor4<Scalar> encode_lab(const Tensor4<Scalar>& lab) {
  if (lab.c() != 3) throw DimensionError("encode_lab expects 3 channels, got " + lab.shape().str());
  Tensor4<Scalar> out(lab.shape());
  for (int n = 0; n < lab.n(); ++n)
    for (int c = 0; c < 3; ++c)
      out.matrix(n, c) = ((lab.matrix(n, c).array() - static_cast<Scalar>(lab_shifts()[c])) /
                          static_cast<Scalar>(lab_scales()[c])).matrix();
  return out;
}

// ---------------------------------------------------------------------------
// Building blocks

enum class NetMode { train, eval };

namespace detail {

inline Shape4 channel_shape(int c) { return Shape4{1, c, 1, 1}; }

/// Convolution (or transposed convolution) with optional bias and one of
/// the normalisations.
template <typename Scalar>
struct ConvUnit {
  Param<Scalar>* w = nullptr;
  Param<Scalar>* b = nullptr;
  Param<Scalar>* gamma = nullptr;
  Param<Scalar>* beta = nullptr;
  BatchStats<Scalar> stats;
  SpectralNorm<Scalar> sn;
  NormSpec norm;
  int stride = 1;
  int pad = 0;
  bool transposed = false;

  ConvUnit() = default;

  ConvUnit(ParamStore<Scalar>& store, const std::string& name, int cin, int cout, int k, int stride_, int pad_,
           bool transposed_, NormSpec norm_, bool bias, double init_sd, Rng& rng)
      : norm(norm_), stride(stride_), pad(pad_), transposed(transposed_) {
    const Shape4 ws = transposed ? Shape4{cin, cout, k, k} : Shape4{cout, cin, k, k};
    w = &store.add(name + ".w", Tensor4<double>::randn(ws, rng, init_sd).template cast<Scalar>());
    if (bias) b = &store.add(name + ".b", Tensor4<Scalar>(channel_shape(cout)));
    switch (norm.kind) {
      case NormKind::batch:
        stats.mean = &store.add(name + ".bn.running_mean", Tensor4<Scalar>(channel_shape(cout)), false);
        stats.var = &store.add(name + ".bn.running_var", Tensor4<Scalar>(channel_shape(cout), Scalar(1)), false);
        [[fallthrough]];
      case NormKind::instance:
        gamma = &store.add(name + ".norm.gamma", Tensor4<Scalar>(channel_shape(cout), Scalar(1)));
        beta = &store.add(name + ".norm.beta", Tensor4<Scalar>(channel_shape(cout)));
        break;
      case NormKind::spectral:
        if (transposed) throw ConfigError("spectral normalisation is only supported on convolutions");
        sn = SpectralNorm<Scalar>(store, name, *w, rng);
        break;
      case NormKind::none:
        break;
    }
  }

  /// Weight actually applied (after spectral normalisation, if any).
  Var<Scalar> weight(Graph<Scalar>& g, bool trainable, bool update_sn) {
    Var<Scalar> wv = trainable ? g.param(*w) : g.frozen(*w);
    if (norm.kind == NormKind::spectral) return sn.apply(wv, update_sn);
    return wv;
  }

  Var<Scalar> forward(Var<Scalar> x, NetMode mode, bool trainable, bool update_sn) {
    auto& g = *x.graph();
    const Var<Scalar> wv = weight(g, trainable, update_sn);
    Var<Scalar> y = transposed ? deconv2d(x, wv, stride, pad) : conv2d(x, wv, stride, pad);
    if (b) y = add_channel_bias(y, trainable ? g.param(*b) : g.frozen(*b));
    auto affine = [&](Param<Scalar>* p) { return trainable ? g.param(*p) : g.frozen(*p); };
    if (norm.kind == NormKind::batch)
      y = batch_norm(y, affine(gamma), affine(beta), stats, mode == NetMode::train ? NormMode::train : NormMode::eval,
                     norm.eps, norm.momentum);
    else if (norm.kind == NormKind::instance)
      y = instance_norm(y, affine(gamma), affine(beta), norm.eps);
    return y;
  }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Generator

struct GeneratorConfig {
  int base_width = 32;
  int residual_blocks = 9;
  NormSpec norm{NormKind::instance};
};

/// Two stride-2 encoding convolutions, residual blocks at quarter
/// resolution, two stride-2 transposed convolutions, a 1x1 head and tanh.
template <typename Scalar>
class Generator {
 public:
  Generator(const GeneratorConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.norm.kind == NormKind::spectral)
      throw ConfigError("the generator supports batch, instance or no normalisation");
    if (cfg.base_width < 1 || cfg.residual_blocks < 0) throw ConfigError("invalid generator size");
    const int w = cfg.base_width;
    const bool bias = cfg.norm.kind == NormKind::none;
    auto he = [](int fan_in) { return std::sqrt(2.0 / fan_in); };
    enc1_ = detail::ConvUnit<Scalar>(store_, "gen.enc1", 1, w, 4, 2, 1, false, cfg.norm, bias, he(16), rng);
    enc2_ = detail::ConvUnit<Scalar>(store_, "gen.enc2", w, 2 * w, 4, 2, 1, false, cfg.norm, bias, he(16 * w), rng);
    for (int r = 0; r < cfg.residual_blocks; ++r) {
      const std::string name = "gen.res" + std::to_string(r);
      res_.push_back({detail::ConvUnit<Scalar>(store_, name + ".conv1", 2 * w, 2 * w, 3, 1, 1, false, cfg.norm, bias,
                                               he(18 * w), rng),
                      detail::ConvUnit<Scalar>(store_, name + ".conv2", 2 * w, 2 * w, 3, 1, 1, false, cfg.norm, bias,
                                               he(18 * w), rng)});
    }
    // a stride-2 transposed 4x4 kernel reaches each output from 4 inputs
    dec1_ = detail::ConvUnit<Scalar>(store_, "gen.dec1", 2 * w, w, 4, 2, 1, true, cfg.norm, bias, he(8 * w), rng);
    dec2_ = detail::ConvUnit<Scalar>(store_, "gen.dec2", w, w, 4, 2, 1, true, cfg.norm, bias, he(4 * w), rng);
    head_ = detail::ConvUnit<Scalar>(store_, "gen.head", w, 3, 1, 1, 0, false, NormSpec{}, true, 0.02, rng);
  }

  /// gray: (N,1,H,W), coded to [-1,1]. Returns coded Lab in (-1,1).
  Var<Scalar> forward(Var<Scalar> gray, NetMode mode, bool trainable = true) {
    const auto& s = gray.value().shape();
    if (s.c != 1) throw DimensionError("generator expects a single-channel input, got " + s.str());
    if (s.h % 4 != 0 || s.w % 4 != 0)
      throw ConfigError("generator input height and width must be divisible by 4, got " + s.str());
    auto h = relu(enc1_.forward(gray, mode, trainable, false));
    h = relu(enc2_.forward(h, mode, trainable, false));
    for (auto& [c1, c2] : res_) {
      auto r = relu(c1.forward(h, mode, trainable, false));
      h = add(h, c2.forward(r, mode, trainable, false));
    }
    h = relu(dec1_.forward(h, mode, trainable, false));
    h = relu(dec2_.forward(h, mode, trainable, false));
    return tanh(head_.forward(h, mode, trainable, false));
  }

  Tensor4<Scalar> infer(const Tensor4<Scalar>& gray) {
    Graph<Scalar> g;
    return forward(g.input(gray), NetMode::eval, false).value();
  }

  ParamStore<Scalar>& params() { return store_; }
  const ParamStore<Scalar>& params() const { return store_; }
  const GeneratorConfig& config() const { return cfg_; }

 private:
  GeneratorConfig cfg_;
  ParamStore<Scalar> store_;
  detail::ConvUnit<Scalar> enc1_, enc2_, dec1_, dec2_, head_;
  std::vector<std::pair<detail::ConvUnit<Scalar>, detail::ConvUnit<Scalar>>> res_;
};

// ---------------------------------------------------------------------------
// Patch discriminator

struct PatchDiscConfig {
  std::vector<int> channels{64, 128, 256, 512, 1};
  std::vector<int> strides{2, 2, 2, 1, 1};
  int kernel = 4;
  int pad = 1;
  int input_channels = 4;  // grayscale condition + 3 colour channels
  double leaky_slope = 0.2;
  NormSpec norm{NormKind::spectral};
};

/// Score-map side length for an input side, from the layer schedule.
int patch_map_size(int input, const PatchDiscConfig& cfg);

/// Conditional patch discriminator. With spectral normalisation every layer
/// is normalised; with batch or instance normalisation the three inner
/// layers are normalised.
template <typename Scalar>
class PatchDiscriminator {
 public:
  PatchDiscriminator(const PatchDiscConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.channels.size() != cfg.strides.size() || cfg.channels.empty())
      throw ConfigError("patch discriminator channel and stride lists differ in length");
    int cin = cfg.input_channels;
    const std::size_t L = cfg.channels.size();
    for (std::size_t i = 0; i < L; ++i) {
      NormSpec ns = cfg.norm;
      const bool inner = i > 0 && i + 1 < L;
      if ((ns.kind == NormKind::batch || ns.kind == NormKind::instance) && !inner) ns.kind = NormKind::none;
      layers_.emplace_back(store_, "pdisc.conv" + std::to_string(i + 1), cin, cfg.channels[i], cfg.kernel,
                           cfg.strides[i], cfg.pad, false, ns, true, 0.02, rng);
      cin = cfg.channels[i];
    }
  }

  /// Pre-sigmoid score map. `update_sn` refreshes the spectral estimates
  /// (once per discriminator step).
  Var<Scalar> logits(Var<Scalar> gray, Var<Scalar> color, NetMode mode, bool trainable, bool update_sn) {
    Var<Scalar> h = concat_channels(gray, color);
    if (h.value().c() != cfg_.input_channels)
      throw DimensionError("patch discriminator expects " + std::to_string(cfg_.input_channels) + " channels");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      h = layers_[i].forward(h, mode, trainable, update_sn);
      if (i + 1 < layers_.size()) h = leaky_relu(h, static_cast<Scalar>(cfg_.leaky_slope));
    }
    return h;
  }

  Var<Scalar> forward(Var<Scalar> gray, Var<Scalar> color, NetMode mode, bool trainable, bool update_sn) {
    return sigmoid(logits(gray, color, mode, trainable, update_sn));
  }

  std::size_t layer_count() const { return layers_.size(); }
  int layer_stride(std::size_t i) const { return layers_.at(i).stride; }

  /// Weight of layer i as applied in the forward pass.
  Tensor4<Scalar> effective_weight(std::size_t i) {
    Graph<Scalar> g;
    return layers_.at(i).weight(g, false, false).value();
  }

  /// Refreshes layer i's spectral estimate with extra power iterations.
  void refresh_spectral(std::size_t i, int iterations) {
    auto& l = layers_.at(i);
    if (l.norm.kind == NormKind::spectral) l.sn.refresh(l.w->value, iterations);
  }

  /// Re-estimates every spectral sigma on the current weights; call after
  /// each optimiser step.
  void renormalize() {
    for (auto& l : layers_)
      if (l.norm.kind == NormKind::spectral) l.sn.track(l.w->value);
  }

  ParamStore<Scalar>& params() { return store_; }
  const PatchDiscConfig& config() const { return cfg_; }

 private:
  PatchDiscConfig cfg_;
  ParamStore<Scalar> store_;
  std::vector<detail::ConvUnit<Scalar>> layers_;
};

// ---------------------------------------------------------------------------
// SPD discriminator (double precision throughout)

struct SPDDiscConfig {
  std::vector<int> dims{32, 16, 8, 4};
  double reeig_eps = 1e-4;
  double head_init_sd = 0.01;
  GramOptions gram;
};

/// SPD bloc stack, LogEig, and the head sigmoid(<S, log X>_F + b).
class SPDDiscriminator {
 public:
  SPDDiscriminator(const SPDDiscConfig& cfg, Rng& rng);

  /// grams: (N,1,d,d) -> logits (N,1,1,1).
  Var<double> logits_from_gram(Var<double> grams, bool trainable);
  /// Feature maps (N,C,H,W) with C == input dimension -> logits.
  Var<double> logits_from_features(Var<double> features, bool trainable);

  double score(const GramDescriptor& g);

  /// One discriminator update from the accumulated gradients: Stiefel steps
  /// for the bloc weights and Adam for the head. Returns true when a
  /// retraction had to reseed rows.
  bool step(double lr, const AdamOptions& head_opt);

  ParamStore<double>& params() { return store_; }
  spd::SPDNetStack& stack() { return stack_; }
  Param<double>& head_S() { return *S_; }
  Param<double>& head_b() { return *b_; }
  const SPDDiscConfig& config() const { return cfg_; }

 private:
  SPDDiscConfig cfg_;
  ParamStore<double> store_;
  spd::SPDNetStack stack_;
  Param<double>* S_ = nullptr;
  Param<double>* b_ = nullptr;
};

}  // namespace spdgan

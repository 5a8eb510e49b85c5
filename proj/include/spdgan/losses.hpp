#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "spdgan/networks.hpp"

namespace spdgan {

struct LossWeights {
  double lambda_i = 0.01;
  double lambda_spd = 0.01;
  double lambda_l1 = 0.99;
  double lambda_color = 0.001;
};

enum class PatchReduction {
  log_then_mean,  // mean over patches of the per-patch log term
  mean_then_log   // log of the mean patch score
};

struct LossOptions {
  double log_floor = 1e-12;
  bool literal_generator_loss = false;  // minimise log(1 - D(fake)) instead of -log D(fake)
  PatchReduction reduction = PatchReduction::mean_then_log;
  bool normalize_blur = false;
};

// ---------------------------------------------------------------------------
// Elementwise helpers

/// log(max(x, floor)); gradient 1/x above the floor and 0 below it.
template <typename Scalar>
Var<Scalar> clamped_log(Var<Scalar> x, double floor) {
  const auto f = static_cast<Scalar>(floor);
  return elementwise(
      x, [f](Scalar v) { return std::log(std::max(v, f)); },
      [f](Scalar v, Scalar) { return v > f ? Scalar(1) / v : Scalar(0); });
}

template <typename Scalar>
Var<Scalar> one_minus(Var<Scalar> x) {
  return elementwise(
      x, [](Scalar v) { return Scalar(1) - v; }, [](Scalar, Scalar) { return Scalar(-1); });
}

template <typename Scalar>
Var<Scalar> abs(Var<Scalar> x) {
  return elementwise(
      x, [](Scalar v) { return std::abs(v); },
      [](Scalar v, Scalar) { return v > 0 ? Scalar(1) : (v < 0 ? Scalar(-1) : Scalar(0)); });
}

template <typename Scalar>
Var<Scalar> reshape(Var<Scalar> x, const Shape4& shape) {
  auto* graph = x.graph();
  return graph->record(x.value().reshaped(shape), {x}, [graph, x](const Tensor4<Scalar>& gout) {
    graph->grad_buffer(x).array() += gout.array();
  });
}

/// Reflect padding (edge sample not repeated) on the two spatial axes.
template <typename Scalar>
Var<Scalar> reflect_pad(Var<Scalar> x, int pad) {
  const auto& xv = x.value();
  if (pad < 0 || pad >= xv.h() || pad >= xv.w())
    throw DimensionError("reflect_pad: padding " + std::to_string(pad) + " needs images larger than " + xv.shape().str());
  const int H = xv.h(), W = xv.w();
  auto src = [](int i, int n) { return i < 0 ? -i : (i >= n ? 2 * (n - 1) - i : i); };
  Tensor4<Scalar> out(Shape4{xv.n(), xv.c(), H + 2 * pad, W + 2 * pad});
  for (int n = 0; n < xv.n(); ++n)
    for (int c = 0; c < xv.c(); ++c)
      for (int i = 0; i < out.h(); ++i)
        for (int j = 0; j < out.w(); ++j) out(n, c, i, j) = xv(n, c, src(i - pad, H), src(j - pad, W));
  auto* graph = x.graph();
  return graph->record(std::move(out), {x}, [graph, x, pad, H, W, src](const Tensor4<Scalar>& gout) {
    auto& gx = graph->grad_buffer(x);
    for (int n = 0; n < gout.n(); ++n)
      for (int c = 0; c < gout.c(); ++c)
        for (int i = 0; i < gout.h(); ++i)
          for (int j = 0; j < gout.w(); ++j) gx(n, c, src(i - pad, H), src(j - pad, W)) += gout(n, c, i, j);
  });
}

// ---------------------------------------------------------------------------
// Blur

constexpr int kBlurSize = 21;
constexpr double kBlurAmplitude = 0.053;
constexpr double kBlurSigma = 3.0;

/// 21x21 weights A * exp(-x^2/(2 s^2) - y^2/(2 s^2)) over offsets -10..10,
/// A = 0.053, s = 3. Entry (i, j) holds offset (i - 10, j - 10).
struct BlurKernel {
  Eigen::MatrixXd weights;
  int radius() const { return static_cast<int>(weights.rows()) / 2; }
  double at(int x, int y) const { return weights(x + radius(), y + radius()); }
};

BlurKernel build_blur_kernel(bool normalize = false);

/// Depthwise blur with reflect padding; output has the input's shape.
template <typename Scalar>
Var<Scalar> blur(Var<Scalar> x, const BlurKernel& k) {
  const Shape4 s = x.value().shape();
  auto* graph = x.graph();
  Tensor4<Scalar> w(Shape4{1, 1, static_cast<int>(k.weights.rows()), static_cast<int>(k.weights.cols())});
  w.matrix(0, 0) = k.weights.cast<Scalar>();
  auto planes = reshape(x, Shape4{s.n * s.c, 1, s.h, s.w});
  auto y = conv2d(reflect_pad(planes, k.radius()), graph->input(w), 1, 0);
  return reshape(y, s);
}

// ---------------------------------------------------------------------------
// Losses

/// -mean log D(real) - mean log(1 - D(fake)) on sigmoid-domain scores.
template <typename Scalar>
Var<Scalar> gan_loss_d(Var<Scalar> real_scores, Var<Scalar> fake_scores, const LossOptions& opt = {}) {
  if (opt.reduction == PatchReduction::mean_then_log) {
    real_scores = mean(real_scores);
    fake_scores = mean(fake_scores);
  }
  auto lr = mean(clamped_log(real_scores, opt.log_floor));
  auto lf = mean(clamped_log(one_minus(fake_scores), opt.log_floor));
  return weighted_sum<Scalar>({{Scalar(-1), lr}, {Scalar(-1), lf}});
}

/// Generator adversarial loss: -mean log D(fake), or mean log(1 - D(fake))
/// in the literal minimax form.
template <typename Scalar>
Var<Scalar> gan_loss_g(Var<Scalar> fake_scores, const LossOptions& opt = {}) {
  if (opt.reduction == PatchReduction::mean_then_log) fake_scores = mean(fake_scores);
  if (opt.literal_generator_loss) return mean(clamped_log(one_minus(fake_scores), opt.log_floor));
  return scale(mean(clamped_log(fake_scores, opt.log_floor)), Scalar(-1));
}

template <typename Scalar>
Var<Scalar> l1_loss(Var<Scalar> target, Var<Scalar> output) {
  return mean(abs(sub(target, output)));
}

/// Mean squared difference of the blurred Lab images.
template <typename Scalar>
Var<Scalar> color_loss(Var<Scalar> target_lab, Var<Scalar> output_lab, const BlurKernel& k) {
  auto d = blur(sub(target_lab, output_lab), k);
  return mean(mul(d, d));
}

template <typename Scalar>
Var<Scalar> multi_dis_loss(Var<Scalar> pixel_g, Var<Scalar> spd_g, const LossWeights& w) {
  return weighted_sum<Scalar>({{static_cast<Scalar>(w.lambda_i), pixel_g}, {static_cast<Scalar>(w.lambda_spd), spd_g}});
}

inline double multi_dis_loss(double pixel_g, double spd_g, const LossWeights& w) {
  return w.lambda_i * pixel_g + w.lambda_spd * spd_g;
}

inline double full_objective(double l1, double color, double multi_dis, const LossWeights& w) {
  return multi_dis + w.lambda_l1 * l1 + w.lambda_color * color;
}

/// Component values of one generator objective evaluation.
struct LossBreakdown {
  double gan_pixel = 0.0;
  double gan_spd = 0.0;
  double l1 = 0.0;
  double color = 0.0;
  double multi_dis = 0.0;
  double total = 0.0;
  bool spd_term = false;
  bool color_term = false;
};

/// Ablation switches.
struct ObjectiveFlags {
  bool enable_spd_disc = true;
  bool enable_color_loss = true;
};

/// Generator objective multi_dis + l1 + color with disabled terms omitted
/// (equivalently weighted by zero). `spd_g` / `color` may be invalid handles
/// when their term is disabled.
template <typename Scalar>
Var<Scalar> full_objective(Var<Scalar> pixel_g, Var<Scalar> spd_g, Var<Scalar> l1, Var<Scalar> color,
                           const LossWeights& w, const ObjectiveFlags& flags, LossBreakdown* out = nullptr) {
  std::vector<std::pair<Scalar, Var<Scalar>>> terms{{static_cast<Scalar>(w.lambda_i), pixel_g},
                                                    {static_cast<Scalar>(w.lambda_l1), l1}};
  LossBreakdown b;
  b.gan_pixel = static_cast<double>(pixel_g.item());
  b.l1 = static_cast<double>(l1.item());
  b.multi_dis = w.lambda_i * b.gan_pixel;
  if (flags.enable_spd_disc) {
    if (!spd_g.valid()) throw InternalError("objective: SPD term enabled but not computed");
    terms.push_back({static_cast<Scalar>(w.lambda_spd), spd_g});
    b.gan_spd = static_cast<double>(spd_g.item());
    b.multi_dis += w.lambda_spd * b.gan_spd;
    b.spd_term = true;
  }
  if (flags.enable_color_loss) {
    if (!color.valid()) throw InternalError("objective: colour term enabled but not computed");
    terms.push_back({static_cast<Scalar>(w.lambda_color), color});
    b.color = static_cast<double>(color.item());
    b.color_term = true;
  }
  auto total = weighted_sum(terms);
  b.total = static_cast<double>(total.item());
  if (out) *out = b;
  return total;
}

/// Discriminator and generator adversarial losses of the SPD discriminator
/// on one real / fake Gram pair.
std::pair<double, double> spd_gan_loss(const GramDescriptor& real, const GramDescriptor& fake, SPDDiscriminator& disc,
                                       const LossOptions& opt = {});

}  // namespace spdgan

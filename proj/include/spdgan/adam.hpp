#pragma once

#include <cmath>

#include "spdgan/param.hpp"

namespace spdgan {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update. Clears the gradient. Returns false (and
/// leaves value and moments untouched) when the gradient is not finite.
template <typename Scalar>
bool adam_step(Param<Scalar>& p, const AdamOptions& opt) {
  if (!p.trainable) return true;
  if (!p.grad.all_finite()) {
    p.zero_grad();
    return false;
  }
  if (p.adam_m.empty()) {
    p.adam_m = Tensor4<Scalar>(p.value.shape());
    p.adam_v = Tensor4<Scalar>(p.value.shape());
  }
  ++p.adam_step;
  const auto b1 = static_cast<Scalar>(opt.beta1);
  const auto b2 = static_cast<Scalar>(opt.beta2);
  const auto c1 = static_cast<Scalar>(1.0 - std::pow(opt.beta1, static_cast<double>(p.adam_step)));
  const auto c2 = static_cast<Scalar>(1.0 - std::pow(opt.beta2, static_cast<double>(p.adam_step)));
  const auto lr = static_cast<Scalar>(opt.lr);
  const auto eps = static_cast<Scalar>(opt.eps);
  auto& m = p.adam_m.array();
  auto& v = p.adam_v.array();
  const auto& g = p.grad.array();
  m = b1 * m + (Scalar(1) - b1) * g;
  v = b2 * v + (Scalar(1) - b2) * g.square();
  p.value.array() -= lr * (m / c1) / ((v / c2).sqrt() + eps);
  p.zero_grad();
  return true;
}

}  // namespace spdgan

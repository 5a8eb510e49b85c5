#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <type_traits>
#include <vector>

#include "spdgan/graph.hpp"

namespace spdgan {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Spatial output size of a strided, zero-padded correlation.
inline int conv_out_size(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

/// Spatial output size of the transposed correlation.
inline int deconv_out_size(int in, int kernel, int stride, int pad) {
  return (in - 1) * stride - 2 * pad + kernel;
}

namespace detail {

struct ConvGeometry {
  int n, c, h, w;   // input
  int k, stride, pad;
  int ho, wo;       // output
  int rows() const { return c * k * k; }
  int cols() const { return n * ho * wo; }
};

/// Unfolds every k x k receptive field into a column:
/// cols(c*k*k + ki*k + kj, n*ho*wo + oh*wo + ow).
template <typename Scalar>
RowMatrix<Scalar> im2col(const Scalar* x, const ConvGeometry& g) {
  RowMatrix<Scalar> cols = RowMatrix<Scalar>::Zero(g.rows(), g.cols());
  const int plane_out = g.ho * g.wo;
  for (int c = 0; c < g.c; ++c)
    for (int ki = 0; ki < g.k; ++ki)
      for (int kj = 0; kj < g.k; ++kj) {
        Scalar* row = cols.row((c * g.k + ki) * g.k + kj).data();
        for (int n = 0; n < g.n; ++n) {
          const Scalar* src = x + (static_cast<std::size_t>(n) * g.c + c) * g.h * g.w;
          Scalar* dst = row + static_cast<std::size_t>(n) * plane_out;
          for (int oh = 0; oh < g.ho; ++oh) {
            const int ih = oh * g.stride - g.pad + ki;
            if (ih < 0 || ih >= g.h) continue;
            const Scalar* src_row = src + static_cast<std::size_t>(ih) * g.w;
            Scalar* dst_row = dst + static_cast<std::size_t>(oh) * g.wo;
            for (int ow = 0; ow < g.wo; ++ow) {
              const int iw = ow * g.stride - g.pad + kj;
              if (iw >= 0 && iw < g.w) dst_row[ow] = src_row[iw];
            }
          }
        }
      }
  return cols;
}

/// Adjoint of im2col: scatters columns back, summing overlaps, into x.
template <typename Scalar>
void col2im(const RowMatrix<Scalar>& cols, const ConvGeometry& g, Scalar* x) {
  const int plane_out = g.ho * g.wo;
  for (int c = 0; c < g.c; ++c)
    for (int ki = 0; ki < g.k; ++ki)
      for (int kj = 0; kj < g.k; ++kj) {
        const Scalar* row = cols.row((c * g.k + ki) * g.k + kj).data();
        for (int n = 0; n < g.n; ++n) {
          Scalar* dst = x + (static_cast<std::size_t>(n) * g.c + c) * g.h * g.w;
          const Scalar* src = row + static_cast<std::size_t>(n) * plane_out;
          for (int oh = 0; oh < g.ho; ++oh) {
            const int ih = oh * g.stride - g.pad + ki;
            if (ih < 0 || ih >= g.h) continue;
            Scalar* dst_row = dst + static_cast<std::size_t>(ih) * g.w;
            const Scalar* src_row = src + static_cast<std::size_t>(oh) * g.wo;
            for (int ow = 0; ow < g.wo; ++ow) {
              const int iw = ow * g.stride - g.pad + kj;
              if (iw >= 0 && iw < g.w) dst_row[iw] += src_row[ow];
            }
          }
        }
      }
}

/// NCHW tensor -> (C x N*H*W) matrix.
template <typename Scalar>
RowMatrix<Scalar> channels_to_rows(const Tensor4<Scalar>& t) {
  const auto& s = t.shape();
  const auto plane = static_cast<Eigen::Index>(s.plane());
  RowMatrix<Scalar> m(s.c, static_cast<Eigen::Index>(s.n) * plane);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      m.row(c).segment(n * plane, plane) =
          Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(t.plane(n, c), plane);
  return m;
}

/// Inverse of channels_to_rows.
template <typename Scalar>
Tensor4<Scalar> rows_to_channels(const RowMatrix<Scalar>& m, const Shape4& s) {
  Tensor4<Scalar> t(s);
  const auto plane = static_cast<Eigen::Index>(s.plane());
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(t.plane(n, c), plane) =
          m.row(c).segment(n * plane, plane);
  return t;
}

template <typename Scalar>
auto weight_matrix(const Tensor4<Scalar>& w) {
  return Eigen::Map<const RowMatrix<Scalar>>(w.data(), w.n(), static_cast<Eigen::Index>(w.c()) * w.h() * w.w());
}

}  // namespace detail

/// Cross-correlation of x (N,C,H,W) with w (O,C,k,k), zero padding.
template <typename Scalar>
Tensor4<Scalar> conv2d_forward(const Tensor4<Scalar>& x, const Tensor4<Scalar>& w, int stride,
                               int pad) {
  if (w.c() != x.c())
    throw DimensionError("conv2d: kernel expects " + std::to_string(w.c()) +
                         " input channels, got " + std::to_string(x.c()));
  if (w.h() != w.w()) throw DimensionError("conv2d: kernel must be square");
  if (stride < 1 || pad < 0) throw DimensionError("conv2d: invalid stride/padding");
  const int k = w.h();
  const int ho = conv_out_size(x.h(), k, stride, pad);
  const int wo = conv_out_size(x.w(), k, stride, pad);
  if (ho < 1 || wo < 1) throw DimensionError("conv2d: output would be empty for input " + x.shape().str());
  detail::ConvGeometry g{x.n(), x.c(), x.h(), x.w(), k, stride, pad, ho, wo};
  const RowMatrix<Scalar> cols = detail::im2col(x.data(), g);
  RowMatrix<Scalar> out = detail::weight_matrix(w) * cols;
  return detail::rows_to_channels(out, Shape4{x.n(), w.n(), ho, wo});
}

/// Transposed correlation: the exact adjoint of conv2d_forward with the same
/// kernel. x has w.n() channels; the output has w.c() channels.
template <typename Scalar>
Tensor4<Scalar> deconv2d_forward(const Tensor4<Scalar>& x, const Tensor4<Scalar>& w, int stride,
                                 int pad) {
  if (w.n() != x.c())
    throw DimensionError("deconv2d: kernel expects " + std::to_string(w.n()) +
                         " input channels, got " + std::to_string(x.c()));
  if (w.h() != w.w()) throw DimensionError("deconv2d: kernel must be square");
  if (stride < 1 || pad < 0) throw DimensionError("deconv2d: invalid stride/padding");
  const int k = w.h();
  const int ho = deconv_out_size(x.h(), k, stride, pad);
  const int wo = deconv_out_size(x.w(), k, stride, pad);
  if (ho < 1 || wo < 1) throw DimensionError("deconv2d: output would be empty");
  detail::ConvGeometry g{x.n(), w.c(), ho, wo, k, stride, pad, x.h(), x.w()};
  const RowMatrix<Scalar> cols = detail::weight_matrix(w).transpose() * detail::channels_to_rows(x);
  Tensor4<Scalar> out(Shape4{x.n(), w.c(), ho, wo});
  detail::col2im(cols, g, out.data());
  return out;
}

template <typename Scalar>
Var<Scalar> conv2d(Var<Scalar> x, Var<Scalar> w, int stride, int pad) {
  auto* graph = x.graph();
  const auto& xv = x.value();
  const auto& wv = w.value();
  Tensor4<Scalar> out = conv2d_forward(xv, wv, stride, pad);
  const int k = wv.h();
  detail::ConvGeometry g{xv.n(), xv.c(), xv.h(), xv.w(), k, stride, pad, out.h(), out.w()};
  return graph->record(std::move(out), {x, w}, [graph, x, w, g](const Tensor4<Scalar>& gout) {
    const RowMatrix<Scalar> dout = detail::channels_to_rows(gout);
    if (w.requires_grad()) {
      const RowMatrix<Scalar> cols = detail::im2col(x.value().data(), g);
      auto& gw = graph->grad_buffer(w);
      Eigen::Map<RowMatrix<Scalar>>(gw.data(), gw.n(), g.rows()).noalias() += dout * cols.transpose();
    }
    if (x.requires_grad()) {
      const RowMatrix<Scalar> dcols = detail::weight_matrix(w.value()).transpose() * dout;
      detail::col2im(dcols, g, graph->grad_buffer(x).data());
    }
  });
}

template <typename Scalar>
Var<Scalar> deconv2d(Var<Scalar> x, Var<Scalar> w, int stride, int pad) {
  auto* graph = x.graph();
  Tensor4<Scalar> out = deconv2d_forward(x.value(), w.value(), stride, pad);
  const auto& xv = x.value();
  detail::ConvGeometry g{xv.n(), w.value().c(), out.h(), out.w(), w.value().h(), stride, pad, xv.h(), xv.w()};
  return graph->record(std::move(out), {x, w}, [graph, x, w, g](const Tensor4<Scalar>& gout) {
    const RowMatrix<Scalar> cols = detail::im2col(gout.data(), g);
    if (x.requires_grad()) {
      RowMatrix<Scalar> dx = detail::weight_matrix(w.value()) * cols;
      graph->grad_buffer(x).array() += detail::rows_to_channels(dx, x.shape()).array();
    }
    if (w.requires_grad()) {
      auto& gw = graph->grad_buffer(w);
      Eigen::Map<RowMatrix<Scalar>>(gw.data(), gw.n(), g.rows()).noalias() +=
          detail::channels_to_rows(x.value()) * cols.transpose();
    }
  });
}

/// Adds a per-channel bias b of shape (1,C,1,1).
template <typename Scalar>
Var<Scalar> add_channel_bias(Var<Scalar> x, Var<Scalar> b) {
  const auto& xv = x.value();
  if (b.value().size() != static_cast<std::size_t>(xv.c()))
    throw DimensionError("bias length does not match channel count");
  Tensor4<Scalar> out = xv;
  const auto plane = static_cast<Eigen::Index>(xv.shape().plane());
  for (int n = 0; n < xv.n(); ++n)
    for (int c = 0; c < xv.c(); ++c)
      Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(out.plane(n, c), plane) += b.value()[c];
  auto* graph = x.graph();
  return graph->record(std::move(out), {x, b}, [graph, x, b, plane](const Tensor4<Scalar>& gout) {
    graph->accumulate(x, gout);
    if (b.requires_grad()) {
      auto& gb = graph->grad_buffer(b);
      for (int n = 0; n < gout.n(); ++n)
        for (int c = 0; c < gout.c(); ++c)
          gb[c] += Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(gout.plane(n, c), plane).sum();
    }
  });
}

/// Elementwise map with derivative expressed in terms of input and output.
template <typename Scalar, typename F, typename DF>
Var<Scalar> elementwise(Var<Scalar> x, F f, DF df) {
  Tensor4<Scalar> out(x.shape());
  out.array() = x.value().array().unaryExpr(f);
  auto* graph = x.graph();
  // id the output node is about to receive
  const int out_id = static_cast<int>(graph->size());
  return graph->record(std::move(out), {x}, [graph, x, df, out_id](const Tensor4<Scalar>& gout) {
    const auto& xa = x.value().array();
    const auto& ya = Var<Scalar>(graph, out_id).value().array();
    auto& gx = graph->grad_buffer(x).array();
    for (Eigen::Index i = 0; i < xa.size(); ++i) gx[i] += gout.array()[i] * df(xa[i], ya[i]);
  });
}

template <typename Scalar>
Var<Scalar> relu(Var<Scalar> x) {
  return elementwise(
      x, [](Scalar v) { return v > Scalar(0) ? v : Scalar(0); },
      [](Scalar v, Scalar) { return v > Scalar(0) ? Scalar(1) : Scalar(0); });
}

template <typename Scalar>
Var<Scalar> leaky_relu(Var<Scalar> x, Scalar slope = Scalar(0.2)) {
  return elementwise(
      x, [slope](Scalar v) { return v > Scalar(0) ? v : slope * v; },
      [slope](Scalar v, Scalar) { return v > Scalar(0) ? Scalar(1) : slope; });
}

template <typename Scalar>
Var<Scalar> tanh(Var<Scalar> x) {
  return elementwise(
      x, [](Scalar v) { return std::tanh(v); }, [](Scalar, Scalar y) { return Scalar(1) - y * y; });
}

template <typename Scalar>
Var<Scalar> sigmoid(Var<Scalar> x) {
  return elementwise(
      x,
      [](Scalar v) {
        return v >= Scalar(0) ? Scalar(1) / (Scalar(1) + std::exp(-v))
                              : std::exp(v) / (Scalar(1) + std::exp(v));
      },
      [](Scalar, Scalar y) { return y * (Scalar(1) - y); });
}

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor4<Scalar> out(a.shape());
  out.array() = a.value().array() + b.value().array();
  auto* graph = a.graph();
  return graph->record(std::move(out), {a, b}, [graph, a, b](const Tensor4<Scalar>& gout) {
    graph->accumulate(a, gout);
    graph->accumulate(b, gout);
  });
}

template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor4<Scalar> out(a.shape());
  out.array() = a.value().array() - b.value().array();
  auto* graph = a.graph();
  return graph->record(std::move(out), {a, b}, [graph, a, b](const Tensor4<Scalar>& gout) {
    graph->accumulate(a, gout);
    if (b.requires_grad()) graph->grad_buffer(b).array() -= gout.array();
  });
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> x, Scalar factor) {
  Tensor4<Scalar> out(x.shape());
  out.array() = x.value().array() * factor;
  auto* graph = x.graph();
  return graph->record(std::move(out), {x}, [graph, x, factor](const Tensor4<Scalar>& gout) {
    if (x.requires_grad()) graph->grad_buffer(x).array() += gout.array() * factor;
  });
}

/// Sum of all entries, as a (1,1,1,1) tensor.
template <typename Scalar>
Var<Scalar> sum(Var<Scalar> x) {
  Tensor4<Scalar> out(Shape4{1, 1, 1, 1}, x.value().array().sum());
  auto* graph = x.graph();
  return graph->record(std::move(out), {x}, [graph, x](const Tensor4<Scalar>& gout) {
    if (x.requires_grad()) graph->grad_buffer(x).array() += gout[0];
  });
}

template <typename Scalar>
Var<Scalar> mean(Var<Scalar> x) {
  const auto count = static_cast<Scalar>(x.value().size());
  return scale(sum(x), Scalar(1) / count);
}

/// Elementwise product.
template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor4<Scalar> out(a.shape());
  out.array() = a.value().array() * b.value().array();
  auto* graph = a.graph();
  return graph->record(std::move(out), {a, b}, [graph, a, b](const Tensor4<Scalar>& gout) {
    if (a.requires_grad()) graph->grad_buffer(a).array() += gout.array() * b.value().array();
    if (b.requires_grad()) graph->grad_buffer(b).array() += gout.array() * a.value().array();
  });
}

/// Elementwise product with a constant tensor.
template <typename Scalar>
Var<Scalar> mul_const(Var<Scalar> x, const Tensor4<Scalar>& c) {
  require_same_shape(x.value(), c, "mul_const");
  Tensor4<Scalar> out(x.shape());
  out.array() = x.value().array() * c.array();
  auto* graph = x.graph();
  return graph->record(std::move(out), {x}, [graph, x, c](const Tensor4<Scalar>& gout) {
    graph->grad_buffer(x).array() += gout.array() * c.array();
  });
}

/// Sum of coefficient * term over single-element terms.
template <typename Scalar>
Var<Scalar> weighted_sum(const std::vector<std::pair<Scalar, Var<Scalar>>>& terms) {
  if (terms.empty()) throw InvalidInput("weighted_sum of no terms");
  Scalar total(0);
  std::vector<Var<Scalar>> inputs;
  std::vector<Scalar> coeffs;
  for (const auto& [coeff, term] : terms) {
    if (term.value().size() != 1) throw DimensionError("weighted_sum expects scalar terms");
    total += coeff * term.value()[0];
    inputs.push_back(term);
    coeffs.push_back(coeff);
  }
  auto* graph = inputs.front().graph();
  return graph->record(Tensor4<Scalar>(Shape4{1, 1, 1, 1}, total), inputs,
                       [graph, inputs, coeffs](const Tensor4<Scalar>& gout) {
                         for (std::size_t i = 0; i < inputs.size(); ++i)
                           if (inputs[i].requires_grad()) graph->grad_buffer(inputs[i])[0] += coeffs[i] * gout[0];
                       });
}

/// Concatenates along the channel axis.
template <typename Scalar>
Var<Scalar> concat_channels(Var<Scalar> a, Var<Scalar> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.n() != bv.n() || av.h() != bv.h() || av.w() != bv.w())
    throw DimensionError("concat_channels: " + av.shape().str() + " vs " + bv.shape().str());
  Tensor4<Scalar> out(Shape4{av.n(), av.c() + bv.c(), av.h(), av.w()});
  const std::size_t plane = av.shape().plane();
  for (int n = 0; n < av.n(); ++n) {
    std::copy_n(av.plane(n, 0), plane * av.c(), out.plane(n, 0));
    std::copy_n(bv.plane(n, 0), plane * bv.c(), out.plane(n, av.c()));
  }
  auto* graph = a.graph();
  const int ca = av.c();
  return graph->record(std::move(out), {a, b}, [graph, a, b, ca, plane](const Tensor4<Scalar>& gout) {
    for (int n = 0; n < gout.n(); ++n) {
      if (a.requires_grad()) {
        auto& ga = graph->grad_buffer(a);
        for (std::size_t i = 0; i < plane * ca; ++i) ga.plane(n, 0)[i] += gout.plane(n, 0)[i];
      }
      if (b.requires_grad()) {
        auto& gb = graph->grad_buffer(b);
        const std::size_t len = plane * gb.c();
        for (std::size_t i = 0; i < len; ++i) gb.plane(n, 0)[i] += gout.plane(n, ca)[i];
      }
    }
  });
}

/// Repeats a single-channel tensor into `channels` identical channels.
template <typename Scalar>
Var<Scalar> replicate_channels(Var<Scalar> x, int channels) {
  const auto& xv = x.value();
  if (xv.c() != 1) throw DimensionError("replicate_channels expects a single-channel input");
  Tensor4<Scalar> out(Shape4{xv.n(), channels, xv.h(), xv.w()});
  const std::size_t plane = xv.shape().plane();
  for (int n = 0; n < xv.n(); ++n)
    for (int c = 0; c < channels; ++c) std::copy_n(xv.plane(n, 0), plane, out.plane(n, c));
  auto* graph = x.graph();
  return graph->record(std::move(out), {x}, [graph, x, plane](const Tensor4<Scalar>& gout) {
    if (!x.requires_grad()) return;
    auto& gx = graph->grad_buffer(x);
    for (int n = 0; n < gout.n(); ++n)
      for (int c = 0; c < gout.c(); ++c)
        for (std::size_t i = 0; i < plane; ++i) gx.plane(n, 0)[i] += gout.plane(n, c)[i];
  });
}

/// y[:,c] = scales[c] * x[:,c] + shifts[c].
template <typename Scalar>
Var<Scalar> channel_affine(Var<Scalar> x, std::vector<Scalar> scales, std::vector<Scalar> shifts) {
  const auto& xv = x.value();
  if (scales.size() != static_cast<std::size_t>(xv.c()) || shifts.size() != scales.size())
    throw DimensionError("channel_affine: coefficient count does not match channels");
  Tensor4<Scalar> out(xv.shape());
  const auto plane = static_cast<Eigen::Index>(xv.shape().plane());
  using Map = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
  using CMap = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
  for (int n = 0; n < xv.n(); ++n)
    for (int c = 0; c < xv.c(); ++c)
      Map(out.plane(n, c), plane) = CMap(xv.plane(n, c), plane) * scales[c] + shifts[c];
  auto* graph = x.graph();
  return graph->record(std::move(out), {x}, [graph, x, scales, plane](const Tensor4<Scalar>& gout) {
    if (!x.requires_grad()) return;
    auto& gx = graph->grad_buffer(x);
    for (int n = 0; n < gout.n(); ++n)
      for (int c = 0; c < gout.c(); ++c) Map(gx.plane(n, c), plane) += CMap(gout.plane(n, c), plane) * scales[c];
  });
}

/// Stops gradient flow: returns a fresh leaf holding x's value.
template <typename Scalar>
Var<Scalar> detach(Var<Scalar> x) {
  return x.graph()->input(x.value(), false);
}

/// Evaluates `fn` on a double-precision copy of x in a private sub-graph and
/// records the result on x's graph. Gradients flow back through the
/// sub-graph (including into any double parameters it uses) only when x
/// itself requires a gradient.
template <typename Scalar, typename Fn>
Var<Scalar> in_double(Var<Scalar> x, Fn fn) {
  if constexpr (std::is_same_v<Scalar, double>) {
    return fn(x);
  } else {
    auto sub = std::make_shared<Graph<double>>();
    const Var<double> xin = sub->input(x.value().template cast<double>(), x.requires_grad());
    const Var<double> yout = fn(xin);
    auto* graph = x.graph();
    return graph->record(yout.value().template cast<Scalar>(), {x},
                         [graph, x, sub, xin, yout](const Tensor4<Scalar>& gout) {
                           sub->backward(yout, gout.template cast<double>());
                           if (sub->has_grad(xin))
                             graph->grad_buffer(x).array() += sub->grad(xin).array().template cast<Scalar>();
                         });
  }
}

}  // namespace spdgan

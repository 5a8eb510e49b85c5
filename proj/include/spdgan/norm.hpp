#pragma once

#include <Eigen/Core>

#include <cmath>
#include <string>

#include "spdgan/ops.hpp"

namespace spdgan {

enum class NormKind { none, batch, instance, spectral };

inline std::string to_string(NormKind k) {
  switch (k) {
    case NormKind::none: return "none";
    case NormKind::batch: return "batch";
    case NormKind::instance: return "instance";
    case NormKind::spectral: return "spectral";
  }
  return "none";
}

inline NormKind parse_norm_kind(const std::string& s) {
  if (s == "none") return NormKind::none;
  if (s == "batch") return NormKind::batch;
  if (s == "instance") return NormKind::instance;
  if (s == "spectral") return NormKind::spectral;
  throw ConfigError("unknown normalization kind: " + s);
}

struct NormSpec {
  NormKind kind = NormKind::none;
  double eps = 1e-5;
  double momentum = 0.1;  // running-statistics update rate (batch norm)
};

enum class NormMode { train, eval };

/// Running statistics of a batch-norm layer, stored in checkpointable buffers.
template <typename Scalar>
struct BatchStats {
  Param<Scalar>* mean = nullptr;
  Param<Scalar>* var = nullptr;
};

/// Batch normalisation with per-channel statistics over (N, H, W).
template <typename Scalar>
Var<Scalar> batch_norm(Var<Scalar> x, Var<Scalar> gamma, Var<Scalar> beta, BatchStats<Scalar> running,
                       NormMode mode, double eps = 1e-5, double momentum = 0.1) {
  const auto& xv = x.value();
  const int N = xv.n(), C = xv.c();
  const auto plane = static_cast<Eigen::Index>(xv.shape().plane());
  if (mode == NormMode::train && N < 2)
    throw ConfigError("batch_norm in train mode needs a batch of at least 2");
  if (gamma.value().size() != static_cast<std::size_t>(C) || beta.value().size() != static_cast<std::size_t>(C))
    throw DimensionError("batch_norm: affine parameters do not match channel count");
  using CMap = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
  using Map = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>;

  Eigen::Array<Scalar, Eigen::Dynamic, 1> mu(C), inv_std(C);
  const double count = static_cast<double>(N) * plane;
  if (mode == NormMode::train) {
    for (int c = 0; c < C; ++c) {
      double s = 0;
      for (int n = 0; n < N; ++n) s += CMap(xv.plane(n, c), plane).template cast<double>().sum();
      const double m = s / count;
      double ss = 0;
      for (int n = 0; n < N; ++n)
        ss += (CMap(xv.plane(n, c), plane).template cast<double>() - m).square().sum();
      const double var = ss / count;
      mu[c] = static_cast<Scalar>(m);
      inv_std[c] = static_cast<Scalar>(1.0 / std::sqrt(var + eps));
      if (running.mean && running.var) {
        auto& rm = running.mean->value[c];
        auto& rv = running.var->value[c];
        rm = static_cast<Scalar>((1 - momentum) * rm + momentum * m);
        rv = static_cast<Scalar>((1 - momentum) * rv + momentum * var * count / (count - 1));
      }
    }
  } else {
    if (!running.mean || !running.var) throw InternalError("batch_norm eval mode without running statistics");
    for (int c = 0; c < C; ++c) {
      mu[c] = running.mean->value[c];
      inv_std[c] = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(running.var->value[c]) + eps));
    }
  }

  Tensor4<Scalar> xhat(xv.shape()), out(xv.shape());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      Map(xhat.plane(n, c), plane) = (CMap(xv.plane(n, c), plane) - mu[c]) * inv_std[c];
      Map(out.plane(n, c), plane) = Map(xhat.plane(n, c), plane) * gamma.value()[c] + beta.value()[c];
    }

  auto* graph = x.graph();
  const bool batch_stats = mode == NormMode::train;
  return graph->record(std::move(out), {x, gamma, beta},
                       [graph, x, gamma, beta, xhat = std::move(xhat), inv_std, plane, batch_stats,
                        count](const Tensor4<Scalar>& gout) {
    const int N = gout.n(), C = gout.c();
    for (int c = 0; c < C; ++c) {
      Scalar sum_g(0), sum_gx(0);
      for (int n = 0; n < N; ++n) {
        sum_g += CMap(gout.plane(n, c), plane).sum();
        sum_gx += (CMap(gout.plane(n, c), plane) * CMap(xhat.plane(n, c), plane)).sum();
      }
      if (gamma.requires_grad()) graph->grad_buffer(gamma)[c] += sum_gx;
      if (beta.requires_grad()) graph->grad_buffer(beta)[c] += sum_g;
      if (!x.requires_grad()) continue;
      auto& gx = graph->grad_buffer(x);
      const Scalar k = gamma.value()[c] * inv_std[c];
      const Scalar mg = sum_g / static_cast<Scalar>(count), mgx = sum_gx / static_cast<Scalar>(count);
      for (int n = 0; n < N; ++n) {
        if (batch_stats)
          Map(gx.plane(n, c), plane) +=
              k * (CMap(gout.plane(n, c), plane) - mg - CMap(xhat.plane(n, c), plane) * mgx);
        else
          Map(gx.plane(n, c), plane) += k * CMap(gout.plane(n, c), plane);
      }
    }
  });
}

/// Instance normalisation: statistics per (sample, channel) over (H, W).
template <typename Scalar>
Var<Scalar> instance_norm(Var<Scalar> x, Var<Scalar> gamma, Var<Scalar> beta, double eps = 1e-5) {
  const auto& xv = x.value();
  const int N = xv.n(), C = xv.c();
  const auto plane = static_cast<Eigen::Index>(xv.shape().plane());
  if (plane < 2) throw ConfigError("instance_norm needs at least 2 spatial positions");
  if (gamma.value().size() != static_cast<std::size_t>(C) || beta.value().size() != static_cast<std::size_t>(C))
    throw DimensionError("instance_norm: affine parameters do not match channel count");
  using CMap = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
  using Map = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>;

  Tensor4<Scalar> xhat(xv.shape()), out(xv.shape());
  Eigen::Array<Scalar, Eigen::Dynamic, 1> inv_std(N * C);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const auto xs = CMap(xv.plane(n, c), plane).template cast<double>();
      const double m = xs.mean();
      const double var = (xs - m).square().mean();
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[n * C + c] = static_cast<Scalar>(is);
      Map(xhat.plane(n, c), plane) = ((xs - m) * is).template cast<Scalar>();
      Map(out.plane(n, c), plane) = Map(xhat.plane(n, c), plane) * gamma.value()[c] + beta.value()[c];
    }

  auto* graph = x.graph();
  return graph->record(std::move(out), {x, gamma, beta},
                       [graph, x, gamma, beta, xhat = std::move(xhat), inv_std, plane](const Tensor4<Scalar>& gout) {
    const int N = gout.n(), C = gout.c();
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const auto g = CMap(gout.plane(n, c), plane);
        const auto xh = CMap(xhat.plane(n, c), plane);
        const Scalar sum_g = g.sum();
        const Scalar sum_gx = (g * xh).sum();
        if (gamma.requires_grad()) graph->grad_buffer(gamma)[c] += sum_gx;
        if (beta.requires_grad()) graph->grad_buffer(beta)[c] += sum_g;
        if (!x.requires_grad()) continue;
        const Scalar k = gamma.value()[c] * inv_std[n * C + c];
        const Scalar cnt = static_cast<Scalar>(plane);
        Map(graph->grad_buffer(x).plane(n, c), plane) += k * (g - sum_g / cnt - xh * (sum_gx / cnt));
      }
  });
}

// ---------------------------------------------------------------------------
// Spectral normalisation

struct SpectralEstimate {
  double sigma = 0.0;
  bool degenerate = false;
};

/// Power iteration on w reshaped to (out x rest). `u` (length out) is the
/// persistent left vector, refined in place. Returns sigma = u^T W v.
template <typename Scalar>
SpectralEstimate power_iteration(const Tensor4<Scalar>& w, Eigen::VectorXd& u, int iterations) {
  const Eigen::MatrixXd W = detail::weight_matrix(w).template cast<double>();
  if (u.size() != W.rows()) throw DimensionError("power_iteration: u has wrong length");
  SpectralEstimate est;
  if (W.squaredNorm() == 0.0) {
    est.degenerate = true;
    return est;
  }
  if (u.squaredNorm() == 0.0) u = Eigen::VectorXd::Ones(W.rows());
  u.normalize();
  Eigen::VectorXd v = W.transpose() * u;
  for (int it = 0; it < iterations; ++it) {
    v = W.transpose() * u;
    const double vn = v.norm();
    if (vn == 0.0) {
      est.degenerate = true;
      return est;
    }
    v /= vn;
    u = W * v;
    const double un = u.norm();
    if (un == 0.0) {
      est.degenerate = true;
      return est;
    }
    u /= un;
  }
  v = W.transpose() * u;
  if (v.norm() > 0) v.normalize();
  est.sigma = u.dot(W * v);
  if (!(est.sigma > 0.0)) est.degenerate = true;
  return est;
}

/// Persistent state of one spectrally normalised weight: the left singular
/// vector estimate and the sigma used for the current step. Both live in
/// non-trainable buffers so checkpoints capture them.
template <typename Scalar>
class SpectralNorm {
 public:
  SpectralNorm() = default;
  SpectralNorm(ParamStore<Scalar>& store, const std::string& prefix, const Param<Scalar>& weight, Rng& rng,
               int train_iterations = 1, int init_iterations = 30)
      : train_iterations_(train_iterations) {
    u_ = &store.add(prefix + ".sn_u", Tensor4<Scalar>::randn(Shape4{1, 1, 1, weight.value.n()}, rng), false);
    sigma_ = &store.add(prefix + ".sn_sigma", Tensor4<Scalar>(Shape4{1, 1, 1, 1}, Scalar(1)), false);
    converge(weight.value, init_iterations);
  }

  /// Warm-up: batches of `chunk` iterations until sigma settles to 1e-7
  /// relative (random init weights have small spectral gaps), capped at 100
  /// batches.
  SpectralEstimate converge(const Tensor4<Scalar>& w, int chunk = 30, double tol = 1e-7) {
    SpectralEstimate est = refresh(w, chunk);
    for (int i = 0; i < 100 && !est.degenerate; ++i) {
      const double prev = est.sigma;
      est = refresh(w, chunk);
      if (std::abs(est.sigma - prev) <= tol * est.sigma) break;
    }
    return est;
  }

  /// Single power steps until sigma moves by at most tol (relative). Used
  /// after each optimiser update so W / sigma tracks the new weight.
  SpectralEstimate track(const Tensor4<Scalar>& w, int max_iterations = 50, double tol = 1e-7) {
    double prev = sigma();
    SpectralEstimate est;
    for (int i = 0; i < max_iterations; ++i) {
      est = refresh(w, 1);
      if (est.degenerate || std::abs(est.sigma - prev) <= tol * est.sigma) break;
      prev = est.sigma;
    }
    return est;
  }

  /// Runs power iterations on the current weight and stores the new sigma.
  SpectralEstimate refresh(const Tensor4<Scalar>& w, int iterations) {
    Eigen::VectorXd u = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(u_->value.data(), u_->value.size())
                            .template cast<double>()
                            .matrix();
    const SpectralEstimate est = power_iteration(w, u, iterations);
    degenerate_ = est.degenerate;
    if (!est.degenerate) {
      u_->value.array() = u.array().cast<Scalar>();
      sigma_->value[0] = static_cast<Scalar>(est.sigma);
    }
    return est;
  }

  /// W / sigma. With update=true the sigma estimate is refreshed first;
  /// sigma is treated as a constant in the backward pass.
  Var<Scalar> apply(Var<Scalar> w, bool update) {
    if (update) refresh(w.value(), train_iterations_);
    return normalize_with(w, degenerate_ ? Scalar(0) : sigma_->value[0]);
  }

  double sigma() const { return static_cast<double>(sigma_->value[0]); }
  bool degenerate() const { return degenerate_; }

  /// x / sigma with constant sigma; sigma == 0 flags a degenerate weight and
  /// yields zeros.
  static Var<Scalar> normalize_with(Var<Scalar> w, Scalar sigma) {
    const Scalar inv = sigma > Scalar(0) ? Scalar(1) / sigma : Scalar(0);
    return scale(w, inv);
  }

 private:
  Param<Scalar>* u_ = nullptr;
  Param<Scalar>* sigma_ = nullptr;
  int train_iterations_ = 1;
  bool degenerate_ = false;
};

/// Functional form: returns W / sigma_hat(W) after `iterations` power
/// iterations from the given u (refined in place).
template <typename Scalar>
Tensor4<Scalar> spectral_normalize(const Tensor4<Scalar>& w, Eigen::VectorXd& u, int iterations,
                                   bool* degenerate = nullptr) {
  const SpectralEstimate est = power_iteration(w, u, iterations);
  if (degenerate) *degenerate = est.degenerate;
  Tensor4<Scalar> out(w.shape());
  if (!est.degenerate) out.array() = w.array() / static_cast<Scalar>(est.sigma);
  return out;
}

}  // namespace spdgan

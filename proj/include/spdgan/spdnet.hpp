#pragma once

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

#include "spdgan/graph.hpp"
#include "spdgan/linalg.hpp"
#include "spdgan/param.hpp"

namespace spdgan::spd {

using linalg::EigPair;
using Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Matrix-level layers (always double precision)

/// W X W^T, symmetrised. W is d_out x d_in with orthonormal rows.
MatrixXd bimap_forward(const MatrixXd& X, const MatrixXd& W);

/// U max(eps I, Lambda) U^T. Optionally returns the decomposition of X.
MatrixXd reeig_forward(const MatrixXd& X, double eps, EigPair* cache = nullptr);

/// U log(Lambda) U^T. Throws DomainError for eigenvalues <= 0.
MatrixXd logeig_forward(const MatrixXd& X, EigPair* cache = nullptr);

enum class LayerKind { bimap, reeig, logeig };

/// Values a layer's backward pass needs from its forward pass.
struct LayerCache {
  LayerKind kind = LayerKind::bimap;
  MatrixXd x_in;
  MatrixXd weight;             // BiMap only
  std::optional<EigPair> eig;  // ReEig / LogEig
  double eps = 0.0;            // ReEig only
};

struct LayerGrads {
  MatrixXd dx;
  std::optional<MatrixXd> dw;
};

/// Gradient of a layer with respect to its input (and weight, for BiMap),
/// given dL/dY. BiMap: dX = W^T G W, dW = 2 G W sym(X) with G = sym(dL/dY).
/// ReEig / LogEig: dX = U (K o (U^T G U)) U^T with K the Loewner matrix of
/// the eigenvalue function; at lambda == eps the clamp's derivative is 1.
LayerGrads spd_backward(const LayerCache& cache, const MatrixXd& grad_out);

// ---------------------------------------------------------------------------
// Stiefel-manifold weight handling

/// Result of one manifold update.
struct StiefelReport {
  bool reseeded = false;  // retraction was rank deficient; rows were re-seeded
};

/// Rows of A orthonormalised by Gram-Schmidt in row order (two passes),
/// i.e. the Q of a thin QR of A^T with positive R diagonal. Rank-deficient rows are
/// replaced deterministically by completing the basis with coordinate
/// vectors; `reseeded` reports that case.
MatrixXd orthonormal_rows(const MatrixXd& A, bool* reseeded = nullptr);

/// Projects the Euclidean gradient onto the tangent space at W
/// (G - G W^T W), steps by -lr along it and retracts onto the manifold of
/// row-orthonormal matrices.
StiefelReport stiefel_update(MatrixXd& W, const MatrixXd& euclid_grad, double lr);

/// Gaussian rows, then row-orthonormalisation.
MatrixXd random_semi_orthogonal(int rows, int cols, Rng& rng);

/// ||W W^T - I||_F
double orthonormality_error(const MatrixXd& W);

// ---------------------------------------------------------------------------
// Graph ops over batches of matrices stored as (N, 1, rows, cols) tensors

namespace detail {

template <typename Scalar>
MatrixXd matrix_of(const Tensor4<Scalar>& t, int n) {
  return t.matrix(n, 0).template cast<double>();
}

template <typename Scalar>
void set_matrix(Tensor4<Scalar>& t, int n, const MatrixXd& m) {
  t.matrix(n, 0) = m.cast<Scalar>();
}

template <typename Scalar>
void add_matrix(Tensor4<Scalar>& t, int n, const MatrixXd& m) {
  t.matrix(n, 0) += m.cast<Scalar>();
}

template <typename Scalar>
void require_square_batch(const Tensor4<Scalar>& t, const char* op) {
  if (t.c() != 1 || t.h() != t.w())
    throw DimensionError(std::string(op) + ": expected a (N,1,d,d) batch of square matrices, got " +
                         t.shape().str());
}

}  // namespace detail

/// Wraps a double-precision matrix as a (1,1,rows,cols) tensor.
template <typename Scalar>
Tensor4<Scalar> matrix_tensor(const MatrixXd& m) {
  Tensor4<Scalar> t(Shape4{1, 1, static_cast<int>(m.rows()), static_cast<int>(m.cols())});
  detail::set_matrix(t, 0, m);
  return t;
}

template <typename Scalar>
Var<Scalar> bimap(Var<Scalar> X, Var<Scalar> W) {
  const auto& xv = X.value();
  const auto& wv = W.value();
  detail::require_square_batch(xv, "bimap");
  if (wv.n() != 1 || wv.c() != 1 || wv.w() != xv.h())
    throw DimensionError("bimap: weight " + wv.shape().str() + " does not match input " + xv.shape().str());
  const MatrixXd Wm = detail::matrix_of(wv, 0);
  Tensor4<Scalar> out(Shape4{xv.n(), 1, wv.h(), wv.h()});
  for (int n = 0; n < xv.n(); ++n) detail::set_matrix(out, n, bimap_forward(detail::matrix_of(xv, n), Wm));
  auto* graph = X.graph();
  return graph->record(std::move(out), {X, W}, [graph, X, W, Wm](const Tensor4<Scalar>& gout) {
    for (int n = 0; n < gout.n(); ++n) {
      LayerCache cache{LayerKind::bimap, detail::matrix_of(X.value(), n), Wm, std::nullopt, 0.0};
      const LayerGrads g = spd_backward(cache, detail::matrix_of(gout, n));
      if (X.requires_grad()) detail::add_matrix(graph->grad_buffer(X), n, g.dx);
      if (W.requires_grad()) detail::add_matrix(graph->grad_buffer(W), 0, *g.dw);
    }
  });
}

template <typename Scalar>
Var<Scalar> reeig(Var<Scalar> X, double eps) {
  const auto& xv = X.value();
  detail::require_square_batch(xv, "reeig");
  Tensor4<Scalar> out(xv.shape());
  std::vector<EigPair> eigs(static_cast<std::size_t>(xv.n()));
  for (int n = 0; n < xv.n(); ++n)
    detail::set_matrix(out, n, reeig_forward(detail::matrix_of(xv, n), eps, &eigs[static_cast<std::size_t>(n)]));
  auto* graph = X.graph();
  return graph->record(std::move(out), {X}, [graph, X, eps, eigs = std::move(eigs)](const Tensor4<Scalar>& gout) {
    for (int n = 0; n < gout.n(); ++n) {
      LayerCache cache{LayerKind::reeig, MatrixXd(), MatrixXd(), eigs[static_cast<std::size_t>(n)], eps};
      detail::add_matrix(graph->grad_buffer(X), n, spd_backward(cache, detail::matrix_of(gout, n)).dx);
    }
  });
}

template <typename Scalar>
Var<Scalar> logeig(Var<Scalar> X) {
  const auto& xv = X.value();
  detail::require_square_batch(xv, "logeig");
  Tensor4<Scalar> out(xv.shape());
  std::vector<EigPair> eigs(static_cast<std::size_t>(xv.n()));
  for (int n = 0; n < xv.n(); ++n)
    detail::set_matrix(out, n, logeig_forward(detail::matrix_of(xv, n), &eigs[static_cast<std::size_t>(n)]));
  auto* graph = X.graph();
  return graph->record(std::move(out), {X}, [graph, X, eigs = std::move(eigs)](const Tensor4<Scalar>& gout) {
    for (int n = 0; n < gout.n(); ++n) {
      LayerCache cache{LayerKind::logeig, MatrixXd(), MatrixXd(), eigs[static_cast<std::size_t>(n)], 0.0};
      detail::add_matrix(graph->grad_buffer(X), n, spd_backward(cache, detail::matrix_of(gout, n)).dx);
    }
  });
}

/// Per-sample logit <S, L_n>_F + b, shape (N,1,1,1). S is (1,1,d,d), b (1,1,1,1).
template <typename Scalar>
Var<Scalar> frobenius_logit(Var<Scalar> L, Var<Scalar> S, Var<Scalar> b) {
  const auto& lv = L.value();
  detail::require_square_batch(lv, "frobenius_logit");
  if (S.value().shape() != Shape4{1, 1, lv.h(), lv.w()} || b.value().size() != 1)
    throw DimensionError("frobenius_logit: head parameters do not match input " + lv.shape().str());
  Tensor4<Scalar> out(Shape4{lv.n(), 1, 1, 1});
  for (int n = 0; n < lv.n(); ++n)
    out[static_cast<std::size_t>(n)] = (L.value().matrix(n, 0).array() * S.value().matrix(0, 0).array()).sum() +
                                       b.value()[0];
  auto* graph = L.graph();
  return graph->record(std::move(out), {L, S, b}, [graph, L, S, b](const Tensor4<Scalar>& gout) {
    for (int n = 0; n < gout.n(); ++n) {
      const Scalar g = gout[static_cast<std::size_t>(n)];
      if (L.requires_grad()) graph->grad_buffer(L).matrix(n, 0) += g * S.value().matrix(0, 0);
      if (S.requires_grad()) graph->grad_buffer(S).matrix(0, 0) += g * L.value().matrix(n, 0);
      if (b.requires_grad()) graph->grad_buffer(b)[0] += g;
    }
  });
}

// ---------------------------------------------------------------------------
// Layers

/// Bilinear map with a row-orthonormal d_out x d_in weight held in double.
class BiMapLayer {
 public:
  BiMapLayer(ParamStore<double>& store, const std::string& name, int d_in, int d_out, Rng& rng);

  int d_in() const { return d_in_; }
  int d_out() const { return d_out_; }
  Param<double>& weight() { return *w_; }
  const Param<double>& weight() const { return *w_; }
  MatrixXd weight_matrix() const { return detail::matrix_of(w_->value, 0); }

  MatrixXd forward(const MatrixXd& X) const { return bimap_forward(X, weight_matrix()); }

  /// Manifold step with the accumulated gradient; clears the gradient.
  StiefelReport step(double lr);

 private:
  Param<double>* w_ = nullptr;
  int d_in_ = 0;
  int d_out_ = 0;
};

struct ReEigLayer {
  double eps = 1e-4;
};

/// Ordered BiMap -> ReEig blocs. Dimensions d_0 > d_1 > ... > d_k.
class SPDNetStack {
 public:
  SPDNetStack(ParamStore<double>& store, const std::string& prefix, const std::vector<int>& dims, double eps,
              Rng& rng);

  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  std::size_t bloc_count() const { return blocs_.size(); }
  const std::vector<int>& dims() const { return dims_; }
  double eps() const { return reeig_.eps; }
  std::vector<BiMapLayer>& blocs() { return blocs_; }
  const std::vector<BiMapLayer>& blocs() const { return blocs_; }

  /// Runs the blocs on a graph (without the terminal LogEig). `train`
  /// selects trainable or frozen weights.
  Var<double> forward(Var<double> X, bool train);

  /// Matrix-level forward through every bloc; `trace` (if given) receives
  /// each bloc's BiMap and ReEig outputs in order.
  MatrixXd forward(const MatrixXd& X, std::vector<MatrixXd>* trace = nullptr) const;

 private:
  std::vector<int> dims_;
  ReEigLayer reeig_;
  std::vector<BiMapLayer> blocs_;
};

}  // namespace spdgan::spd

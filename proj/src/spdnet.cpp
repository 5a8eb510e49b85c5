#include "spdgan/spdnet.hpp"

#include <cmath>
#include <string>

namespace spdgan::spd {

using linalg::symmetrize;

namespace {

void require_square(const MatrixXd& X, const char* op) {
  if (X.rows() != X.cols()) throw DimensionError(std::string(op) + ": input is not square");
}

}  // namespace

MatrixXd bimap_forward(const MatrixXd& X, const MatrixXd& W) {
  require_square(X, "bimap");
  if (W.cols() != X.rows())
    throw DimensionError("bimap: weight is " + std::to_string(W.rows()) + "x" + std::to_string(W.cols()) +
                         " but input has dimension " + std::to_string(X.rows()));
  return symmetrize(W * X * W.transpose());
}

MatrixXd reeig_forward(const MatrixXd& X, double eps, EigPair* cache) {
  require_square(X, "reeig");
  EigPair e = linalg::sym_eig(X);
  MatrixXd Y = linalg::apply_fn(e, [eps](double v) { return std::max(eps, v); });
  if (cache) *cache = std::move(e);
  return Y;
}

MatrixXd logeig_forward(const MatrixXd& X, EigPair* cache) {
  require_square(X, "logeig");
  EigPair e = linalg::sym_eig(X);
  if (e.values.size() && e.values.minCoeff() <= 0.0)
    throw DomainError("logeig: eigenvalue " + std::to_string(e.values.minCoeff()) +
                      " is not positive (missing ReEig?)");
  MatrixXd Y = linalg::apply_fn(e, [](double v) { return std::log(v); });
  if (cache) *cache = std::move(e);
  return Y;
}

LayerGrads spd_backward(const LayerCache& cache, const MatrixXd& grad_out) {
  const MatrixXd G = symmetrize(grad_out);
  LayerGrads out;
  switch (cache.kind) {
    case LayerKind::bimap: {
      if (cache.weight.size() == 0 || cache.x_in.size() == 0)
        throw InternalError("bimap backward: forward cache is missing");
      const MatrixXd& W = cache.weight;
      out.dx = W.transpose() * G * W;
      out.dw = 2.0 * G * W * symmetrize(cache.x_in);
      return out;
    }
    case LayerKind::reeig:
    case LayerKind::logeig: {
      if (!cache.eig) throw InternalError("eigenvalue-layer backward: forward cache is missing");
      const EigPair& e = *cache.eig;
      MatrixXd K;
      if (cache.kind == LayerKind::reeig) {
        const double eps = cache.eps;
        K = linalg::loewner_matrix(
            e.values, [eps](double v) { return std::max(eps, v); },
            [eps](double v) { return v >= eps ? 1.0 : 0.0; });
      } else {
        K = linalg::loewner_matrix(
            e.values, [](double v) { return std::log(v); }, [](double v) { return 1.0 / v; });
      }
      const MatrixXd inner = K.cwiseProduct(e.U.transpose() * G * e.U);
      out.dx = symmetrize(e.U * inner * e.U.transpose());
      return out;
    }
  }
  throw InternalError("spd_backward: unknown layer kind");
}

MatrixXd orthonormal_rows(const MatrixXd& A, bool* reseeded) {
  const Eigen::Index rows = A.rows(), cols = A.cols();
  if (rows > cols) throw DimensionError("orthonormal_rows: more rows than columns");
  MatrixXd Q = A;
  bool any_reseed = false;
  const double tol = 1e-10 * std::max(1.0, A.cwiseAbs().maxCoeff());
  Eigen::Index next_basis = 0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double original = Q.row(i).norm();
    // two Gram-Schmidt passes keep the result orthonormal to rounding
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index j = 0; j < i; ++j) Q.row(i) -= Q.row(i).dot(Q.row(j)) * Q.row(j);
    double norm = Q.row(i).norm();
    if (!(norm > tol) || !(norm > 1e-8 * original)) {
      any_reseed = true;
      while (true) {
        if (next_basis >= cols) throw InternalError("orthonormal_rows: could not complete the basis");
        Eigen::RowVectorXd e = Eigen::RowVectorXd::Unit(cols, next_basis++);
        for (int pass = 0; pass < 2; ++pass)
          for (Eigen::Index j = 0; j < i; ++j) e -= e.dot(Q.row(j)) * Q.row(j);
        if (e.norm() > 0.5) {
          Q.row(i) = e;
          norm = e.norm();
          break;
        }
      }
    }
    Q.row(i) /= norm;
  }
  if (reseeded) *reseeded = any_reseed;
  return Q;
}

StiefelReport stiefel_update(MatrixXd& W, const MatrixXd& euclid_grad, double lr) {
  if (euclid_grad.rows() != W.rows() || euclid_grad.cols() != W.cols())
    throw DimensionError("stiefel_update: gradient shape does not match weight");
  StiefelReport report;
  if (euclid_grad.isZero(0.0)) return report;
  const MatrixXd tangent = euclid_grad - (euclid_grad * W.transpose()) * W;
  W = orthonormal_rows(W - lr * tangent, &report.reseeded);
  return report;
}

MatrixXd random_semi_orthogonal(int rows, int cols, Rng& rng) {
  MatrixXd A(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) A(i, j) = rng.normal();
  return orthonormal_rows(A);
}

double orthonormality_error(const MatrixXd& W) {
  return (W * W.transpose() - MatrixXd::Identity(W.rows(), W.rows())).norm();
}

BiMapLayer::BiMapLayer(ParamStore<double>& store, const std::string& name, int d_in, int d_out, Rng& rng)
    : d_in_(d_in), d_out_(d_out) {
  if (d_out < 1 || d_out > d_in)
    throw ConfigError("BiMap needs 1 <= d_out <= d_in, got " + std::to_string(d_in) + " -> " + std::to_string(d_out));
  w_ = &store.add(name, matrix_tensor<double>(random_semi_orthogonal(d_out, d_in, rng)));
}

StiefelReport BiMapLayer::step(double lr) {
  MatrixXd W = weight_matrix();
  const MatrixXd G = detail::matrix_of(w_->grad, 0);
  w_->zero_grad();
  if (!G.allFinite()) throw NumericError("BiMap gradient is not finite");
  const StiefelReport report = stiefel_update(W, G, lr);
  detail::set_matrix(w_->value, 0, W);
  return report;
}

SPDNetStack::SPDNetStack(ParamStore<double>& store, const std::string& prefix, const std::vector<int>& dims,
                         double eps, Rng& rng)
    : dims_(dims), reeig_{eps} {
  if (dims.size() < 2) throw ConfigError("SPD stack needs at least one bloc (two dimensions)");
  if (!(eps > 0.0)) throw ConfigError("ReEig threshold must be positive");
  for (std::size_t i = 1; i < dims.size(); ++i) {
    if (dims[i] >= dims[i - 1])
      throw ConfigError("SPD bloc dimensions must strictly decrease");
    blocs_.emplace_back(store, prefix + ".bimap" + std::to_string(i - 1), dims[i - 1], dims[i], rng);
  }
}

Var<double> SPDNetStack::forward(Var<double> X, bool train) {
  Var<double> h = X;
  for (auto& b : blocs_) {
    Var<double> w = train ? h.graph()->param(b.weight()) : h.graph()->frozen(b.weight());
    h = reeig(bimap(h, w), reeig_.eps);
  }
  return h;
}

MatrixXd SPDNetStack::forward(const MatrixXd& X, std::vector<MatrixXd>* trace) const {
  MatrixXd h = X;
  for (const auto& b : blocs_) {
    h = b.forward(h);
    if (trace) trace->push_back(h);
    h = reeig_forward(h, reeig_.eps);
    if (trace) trace->push_back(h);
  }
  return h;
}

}  // namespace spdgan::spd

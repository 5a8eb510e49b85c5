#include "spdgan/linalg.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace spdgan::linalg {

namespace {

constexpr Eigen::Index kJacobiMaxDim = 64;

EigPair sorted_descending(const MatrixXd& U, const VectorXd& values) {
  const auto n = values.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return values[a] > values[b]; });
  EigPair out{MatrixXd(U.rows(), n), VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    out.U.col(i) = U.col(order[static_cast<std::size_t>(i)]);
    out.values[i] = values[order[static_cast<std::size_t>(i)]];
  }
  return out;
}

void require_finite_square(const MatrixXd& M) {
  if (M.rows() != M.cols())
    throw DimensionError("eigendecomposition requires a square matrix");
  if (!M.allFinite()) throw InvalidInput("eigendecomposition input has non-finite entries");
}

}  // namespace

EigPair jacobi_eig(const MatrixXd& M, int max_sweeps) {
  require_finite_square(M);
  const Eigen::Index n = M.rows();
  MatrixXd A = symmetrize(M);
  MatrixXd V = MatrixXd::Identity(n, n);
  const double scale = A.norm();
  if (scale == 0.0 || n == 1) return sorted_descending(V, A.diagonal());

  const double target = 1e-12 * scale;
  for (int sweep = 0; sweep <= max_sweeps; ++sweep) {
    double off2 = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < n; ++i)
        if (i != j) off2 += A(i, j) * A(i, j);
    const double off = std::sqrt(off2);
    if (off < target) return sorted_descending(V, A.diagonal());
    if (sweep == max_sweeps) break;
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = A(p, q);
        if (apq == 0.0) continue;
        const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        // A <- J^T A J with J the (p,q) plane rotation
        const VectorXd col_p = A.col(p);
        A.col(p) = c * col_p - s * A.col(q);
        A.col(q) = s * col_p + c * A.col(q);
        const Eigen::RowVectorXd row_p = A.row(p);
        A.row(p) = c * row_p - s * A.row(q);
        A.row(q) = s * row_p + c * A.row(q);
        A(p, q) = A(q, p) = 0.0;
        const VectorXd v_p = V.col(p);
        V.col(p) = c * v_p - s * V.col(q);
        V.col(q) = s * v_p + c * V.col(q);
      }
    }
  }
  throw NumericError("Jacobi eigensolver did not converge after " + std::to_string(max_sweeps) + " sweeps",
                     max_sweeps);
}

EigPair sym_eig(const MatrixXd& M) {
  require_finite_square(M);
  if (M.rows() <= kJacobiMaxDim) return jacobi_eig(M);
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(symmetrize(M));
  if (solver.info() != Eigen::Success) throw NumericError("symmetric eigensolver failed to converge");
  return sorted_descending(solver.eigenvectors(), solver.eigenvalues());
}

MatrixXd apply_fn(const EigPair& eig, const ScalarFn& f) {
  VectorXd fv = eig.values.unaryExpr([&](double v) { return f(v); });
  return symmetrize(eig.U * fv.asDiagonal() * eig.U.transpose());
}

double tie_tolerance(const VectorXd& values) {
  const double top = values.size() ? values.cwiseAbs().maxCoeff() : 0.0;
  return 1e-10 * std::max(1.0, top);
}

MatrixXd loewner_matrix(const VectorXd& values, const ScalarFn& f, const ScalarFn& fprime) {
  if (!values.allFinite()) throw InvalidInput("loewner_matrix: non-finite eigenvalues");
  const Eigen::Index n = values.size();
  const double tau = tie_tolerance(values);
  VectorXd fv = values.unaryExpr([&](double v) { return f(v); });
  MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const double gap = values[i] - values[j];
      const double k = std::abs(gap) > tau ? (fv[i] - fv[j]) / gap : fprime(0.5 * (values[i] + values[j]));
      K(i, j) = K(j, i) = k;
    }
  }
  return K;
}

SPDMatrix::SPDMatrix(MatrixXd m) : m_(std::move(m)) {
  if (m_.rows() != m_.cols()) throw DimensionError("SPD matrix must be square");
  if (!m_.allFinite()) throw InvalidInput("SPD matrix has non-finite entries");
  const double scale = std::max(1.0, m_.cwiseAbs().maxCoeff());
  if ((m_ - m_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw InvalidInput("SPD matrix is not symmetric");
}

const EigPair& SPDMatrix::eig() const {
  if (!eig_) eig_ = sym_eig(m_);
  return *eig_;
}

MatrixXd spd_fn(const SPDMatrix& M, const ScalarFn& f, bool requires_positive) {
  const EigPair& e = M.eig();
  if (requires_positive && e.values.size() && e.values.minCoeff() <= 0.0)
    throw DomainError("matrix function requires positive eigenvalues, smallest is " +
                      std::to_string(e.values.minCoeff()));
  return apply_fn(e, f);
}

MatrixXd spd_log(const SPDMatrix& M) {
  return spd_fn(M, [](double v) { return std::log(v); }, true);
}

MatrixXd spd_exp(const SPDMatrix& M) {
  return spd_fn(M, [](double v) { return std::exp(v); });
}

MatrixXd psd_sqrt(const SPDMatrix& M) {
  return spd_fn(M, [](double v) { return std::sqrt(std::max(0.0, v)); });
}

}  // namespace spdgan::linalg

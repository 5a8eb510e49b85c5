#pragma once

#include <Eigen/Core>

#include <functional>
#include <optional>

#include "spdgan/errors.hpp"

namespace spdgan::linalg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Orthogonal eigenvectors (columns of U) and eigenvalues sorted descending.
struct EigPair {
  MatrixXd U;
  VectorXd values;

  MatrixXd reconstruct() const { return U * values.asDiagonal() * U.transpose(); }
};

using ScalarFn = std::function<double(double)>;

/// (M + M^T) / 2
inline MatrixXd symmetrize(const MatrixXd& M) { return 0.5 * (M + M.transpose()); }

/// Symmetric eigendecomposition of (M + M^T)/2 by cyclic Jacobi rotations
/// (row-by-row sweep order), stopping once the off-diagonal Frobenius norm
/// drops below 1e-12 * ||M||_F. Matrices larger than 64 fall back to Eigen's
/// tridiagonal QR solver.
/// Throws InvalidInput on non-finite entries, NumericError on
/// non-convergence.
EigPair sym_eig(const MatrixXd& M);

/// Jacobi path only, regardless of size.
EigPair jacobi_eig(const MatrixXd& M, int max_sweeps = 100);

/// U f(Lambda) U^T
MatrixXd apply_fn(const EigPair& eig, const ScalarFn& f);

/// Divided-difference (Loewner) matrix of f over the eigenvalues:
/// (f(l_i) - f(l_j)) / (l_i - l_j), or f'((l_i + l_j)/2) when the pair is
/// closer than tau = 1e-10 * max(1, |l_max|).
MatrixXd loewner_matrix(const VectorXd& values, const ScalarFn& f, const ScalarFn& fprime);

double tie_tolerance(const VectorXd& values);

/// Symmetric matrix with a lazily computed, cached eigendecomposition.
/// Construction checks symmetry; positivity is checked by the SPD-only
/// functions (log, sqrt) that need it.
class SPDMatrix {
 public:
  SPDMatrix() = default;
  explicit SPDMatrix(MatrixXd m);

  const MatrixXd& matrix() const { return m_; }
  Eigen::Index dim() const { return m_.rows(); }
  const EigPair& eig() const;
  bool has_cache() const { return eig_.has_value(); }
  double min_eigenvalue() const { return eig().values.minCoeff(); }
  bool positive_definite() const { return dim() > 0 && min_eigenvalue() > 0.0; }

 private:
  MatrixXd m_;
  mutable std::optional<EigPair> eig_;
};

/// U f(Lambda) U^T. Throws DomainError when `requires_positive` and some
/// eigenvalue is <= 0.
MatrixXd spd_fn(const SPDMatrix& M, const ScalarFn& f, bool requires_positive = false);

MatrixXd spd_log(const SPDMatrix& M);
MatrixXd spd_exp(const SPDMatrix& M);
/// Principal square root of a PSD matrix; negative eigenvalues clip to 0.
MatrixXd psd_sqrt(const SPDMatrix& M);

}  // namespace spdgan::linalg

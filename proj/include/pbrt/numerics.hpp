#pragma once

#include <Eigen/Dense>

namespace pbrt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Dense symmetric matrix. Construction checks symmetry to 1e-12 absolute.
class SymMatrix {
public:
    SymMatrix() = default;
    explicit SymMatrix(Matrix m);

    /// Averages m with its transpose instead of checking symmetry.
    static SymMatrix symmetrized(const Matrix& m);
    static SymMatrix identity(Eigen::Index dim);
    static SymMatrix zero(Eigen::Index dim);

    Eigen::Index dim() const { return m_.rows(); }
    const Matrix& matrix() const { return m_; }
    operator const Matrix&() const { return m_; }  // NOLINT(google-explicit-constructor)
    double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

private:
    Matrix m_;
};

/// Solves a * x = b for symmetric positive definite a via Cholesky.
/// Throws NotPositiveDefinite when a pivot is <= dim * 1e-14 * max|diag|.
Matrix spd_solve(const SymMatrix& a, const Matrix& b);

/// Moore-Penrose inverse through the SVD. Singular values below
/// max(rows, cols) * sigma_max * 1e-12 are treated as zero.
Matrix generalized_inverse(const Matrix& a);

double log_det_spd(const SymMatrix& a);

/// True iff the smallest eigenvalue is >= -tol * max(1, ||a||_2).
bool is_psd(const SymMatrix& a, double tol);

/// Symmetrizes m and clips eigenvalues in (-tol * max(1, ||m||), 0) to zero.
/// Throws NotPositiveSemidefinite for larger negative eigenvalues.
SymMatrix project_psd(const Matrix& m, double tol);

/// Symmetric square root factor r with r * r^T = a for PSD a. Uses Cholesky
/// when a is positive definite and the eigendecomposition otherwise.
Matrix psd_factor(const SymMatrix& a);

}  // namespace pbrt

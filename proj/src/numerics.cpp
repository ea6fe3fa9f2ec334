#include "pbrt/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pbrt/errors.hpp"

namespace pbrt {

namespace {

constexpr double kSymmetryTol = 1e-12;
constexpr double kPivotFactor = 1e-14;
constexpr double kRankFactor = 1e-12;

Eigen::LLT<Matrix> checked_cholesky(const Matrix& a) {
    const auto n = a.rows();
    if (n == 0) {
        throw NotPositiveDefinite("empty matrix");
    }
    const double max_diag = a.diagonal().cwiseAbs().maxCoeff();
    const double threshold = static_cast<double>(n) * kPivotFactor * max_diag;
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success) {
        throw NotPositiveDefinite("Cholesky factorization failed");
    }
    const Matrix& l = llt.matrixLLT();
    for (Eigen::Index i = 0; i < n; ++i) {
        const double pivot = l(i, i) * l(i, i);
        if (!(pivot > threshold)) {
            throw NotPositiveDefinite("pivot " + std::to_string(i) + " is " + std::to_string(pivot) +
                                      ", below threshold " + std::to_string(threshold));
        }
    }
    return llt;
}

}  // namespace

SymMatrix::SymMatrix(Matrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) {
        throw InvalidInput("SymMatrix must be square");
    }
    for (Eigen::Index i = 0; i < m_.rows(); ++i) {
        for (Eigen::Index j = 0; j < i; ++j) {
            if (std::abs(m_(i, j) - m_(j, i)) > kSymmetryTol) {
                throw InvalidInput("matrix is not symmetric at (" + std::to_string(i) + ", " +
                                   std::to_string(j) + ")");
            }
        }
    }
}

SymMatrix SymMatrix::symmetrized(const Matrix& m) {
    return SymMatrix(Matrix(0.5 * (m + m.transpose())));
}

SymMatrix SymMatrix::identity(Eigen::Index dim) {
    return SymMatrix(Matrix::Identity(dim, dim));
}

SymMatrix SymMatrix::zero(Eigen::Index dim) {
    return SymMatrix(Matrix::Zero(dim, dim));
}

Matrix spd_solve(const SymMatrix& a, const Matrix& b) {
    return checked_cholesky(a.matrix()).solve(b);
}

Matrix generalized_inverse(const Matrix& a) {
    if (a.size() == 0) {
        return Matrix::Zero(a.cols(), a.rows());
    }
    Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& sv = svd.singularValues();
    const double sigma_max = sv.size() > 0 ? sv(0) : 0.0;
    const double cutoff =
        static_cast<double>(std::max(a.rows(), a.cols())) * sigma_max * kRankFactor;
    Vector inv_sv = Vector::Zero(sv.size());
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > cutoff && sv(i) > 0.0) {
            inv_sv(i) = 1.0 / sv(i);
        }
    }
    return svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
}

double log_det_spd(const SymMatrix& a) {
    const auto llt = checked_cholesky(a.matrix());
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

bool is_psd(const SymMatrix& a, double tol) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(a.matrix(), Eigen::EigenvaluesOnly);
    const Vector& ev = eig.eigenvalues();
    const double norm = ev.cwiseAbs().maxCoeff();
    return ev.minCoeff() >= -tol * std::max(1.0, norm);
}

SymMatrix project_psd(const Matrix& m, double tol) {
    const Matrix sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
    const Vector& ev = eig.eigenvalues();
    const double min_ev = ev.minCoeff();
    if (min_ev >= 0.0) {
        return SymMatrix(sym);
    }
    const double norm = ev.cwiseAbs().maxCoeff();
    if (min_ev < -tol * std::max(1.0, norm)) {
        throw NotPositiveSemidefinite("minimum eigenvalue " + std::to_string(min_ev) +
                                      " exceeds PSD tolerance");
    }
    const Vector clipped = ev.cwiseMax(0.0);
    return SymMatrix::symmetrized(eig.eigenvectors() * clipped.asDiagonal() *
                                  eig.eigenvectors().transpose());
}

Matrix psd_factor(const SymMatrix& a) {
    Eigen::LLT<Matrix> llt(a.matrix());
    if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().minCoeff() > 0.0) {
        return llt.matrixL();
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(a.matrix());
    const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal();
}

}  // namespace pbrt

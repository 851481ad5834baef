#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "pfb/common.hpp"

namespace pfb {

/// Lower-triangular X with X X^T = M for symmetric positive-definite M.
inline Mat sym_factor(const Mat& M) {
    if (M.rows() != M.cols()) throw LinAlgError("sym_factor: matrix not square");
    const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
    if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw LinAlgError("sym_factor: matrix not symmetric");
    Eigen::LLT<Mat> llt(M);
    if (llt.info() != Eigen::Success)
        throw LinAlgError("sym_factor: matrix not positive definite (metric degenerate here)");
    return llt.matrixL();
}

struct InverseDet {
    Mat inverse;
    double det = 0.0;
};

/// Inverse and determinant in one pass; rejects near-singular input.
inline InverseDet inverse_det(const Mat& M) {
    if (M.rows() != M.cols()) throw LinAlgError("inverse_det: matrix not square");
    Eigen::PartialPivLU<Mat> lu(M);
    const double det = lu.determinant();
    // Hadamard bound as the scale for the singularity test
    double scale = 1.0;
    for (int i = 0; i < M.rows(); ++i) scale *= std::max(M.row(i).norm(), 1e-300);
    if (!(std::abs(det) > 1e-14 * scale)) {
        double diag_max = 0.0, diag_min = std::numeric_limits<double>::infinity();
        const Mat& u = lu.matrixLU();
        for (int i = 0; i < M.rows(); ++i) {
            diag_max = std::max(diag_max, std::abs(u(i, i)));
            diag_min = std::min(diag_min, std::abs(u(i, i)));
        }
        const double cond = diag_min > 0 ? diag_max / diag_min : std::numeric_limits<double>::infinity();
        throw LinAlgError("inverse_det: matrix is singular to tolerance (|det| = " + std::to_string(det) +
                          ", pivot-ratio condition estimate " + std::to_string(cond) + ")");
    }
    return {lu.inverse(), det};
}

/// Product of the `rank` leading eigenvalues (by magnitude). The trailing
/// eigenvalues must be negligible; this is the determinant taken on the
/// non-degenerate block of a rank-deficient matrix. Symmetric input uses the
/// self-adjoint solver; oblique projectors go through the general one.
inline double pseudo_det(const Mat& M, int rank, double tol = 1e-8) {
    if (M.rows() != M.cols()) throw LinAlgError("pseudo_det: matrix not square");
    if (rank < 0 || rank > M.rows()) throw LinAlgError("pseudo_det: bad rank");
    if (rank == 0) return 1.0;
    const int n = static_cast<int>(M.rows());
    const double scale = std::max(M.cwiseAbs().maxCoeff(), 1e-300);
    std::vector<double> mags(static_cast<std::size_t>(n));
    std::vector<double> vals(static_cast<std::size_t>(n));
    if ((M - M.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale) {
        Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (M + M.transpose()));
        if (es.info() != Eigen::Success) throw LinAlgError("pseudo_det: eigensolver failed");
        for (int i = 0; i < n; ++i) {
            vals[static_cast<std::size_t>(i)] = es.eigenvalues()[i];
            mags[static_cast<std::size_t>(i)] = std::abs(es.eigenvalues()[i]);
        }
    } else {
        Eigen::EigenSolver<Mat> es(M);
        if (es.info() != Eigen::Success) throw LinAlgError("pseudo_det: eigensolver failed");
        for (int i = 0; i < n; ++i) {
            const std::complex<double> ev = es.eigenvalues()[i];
            if (std::abs(ev.imag()) > tol * scale)
                throw LinAlgError("pseudo_det: eigenvalue has a significant imaginary part");
            vals[static_cast<std::size_t>(i)] = ev.real();
            mags[static_cast<std::size_t>(i)] = std::abs(ev);
        }
    }
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return mags[static_cast<std::size_t>(a)] < mags[static_cast<std::size_t>(b)]; });
    const double top = std::max(mags[static_cast<std::size_t>(order.back())], 1e-300);
    for (int i = 0; i < n - rank; ++i)
        if (mags[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] > tol * top)
            throw LinAlgError("pseudo_det: matrix rank exceeds " + std::to_string(rank));
    double p = 1.0;
    for (int i = n - rank; i < n; ++i) p *= vals[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
    return p;
}

}  // namespace pfb

#pragma once
#include "core.hpp"

#include <algorithm>
#include <cmath>

namespace gslogit::linalg {

inline constexpr Index svd_dimension_limit = 64;
inline constexpr double power_tolerance = 1e-10;
inline constexpr int power_max_iterations = 10000;

/// Largest singular value. Blocks whose smaller side is at most 64 go through a
/// full SVD; larger ones use power iteration on A^T A.
inline double spectral_norm(const Eigen::Ref<const Mat>& a)
{
    if (a.size() == 0) return 0.0;
    if (std::min(a.rows(), a.cols()) <= svd_dimension_limit) {
        Eigen::JacobiSVD<Mat> svd(a);
        return svd.singularValues()(0);
    }
    Vec v = Vec::Ones(a.cols()) / std::sqrt(static_cast<double>(a.cols()));
    // a deterministic but non-degenerate start
    for (Index k = 0; k < v.size(); ++k) v(k) += 1e-3 * std::sin(static_cast<double>(k + 1));
    v.normalize();
    double sigma = 0.0;
    for (int it = 0; it < power_max_iterations; ++it) {
        Vec w = a.transpose() * (a * v);
        const double norm = w.norm();
        if (norm == 0.0) return 0.0;
        const double next = std::sqrt(norm);
        v = w / norm;
        if (std::abs(next - sigma) <= power_tolerance * next) return next;
        sigma = next;
    }
    return sigma;
}

/// Symmetric square root of a positive semidefinite matrix (negative eigenvalues clamped).
inline Mat psd_sqrt(const Eigen::Ref<const Mat>& s)
{
    Eigen::SelfAdjointEigenSolver<Mat> eig(s);
    const Vec root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

inline double min_eigenvalue(const Eigen::Ref<const Mat>& s)
{
    Eigen::SelfAdjointEigenSolver<Mat> eig(s, Eigen::EigenvaluesOnly);
    return eig.eigenvalues()(0);
}

inline double log_sum_exp(const Eigen::Ref<const Vec>& x)
{
    const double top = x.maxCoeff();
    if (!std::isfinite(top)) return top;
    return top + std::log((x.array() - top).exp().sum());
}

} // namespace gslogit::linalg

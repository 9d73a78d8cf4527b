#pragma once
#include "core.hpp"
#include "design.hpp"
#include "linalg.hpp"
#include "rng.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace gslogit {

/// b(theta) = log(1 + sum_l exp(theta_l)), evaluated with a max shift over (0, theta).
inline double log_partition(const Eigen::Ref<const Vec>& theta)
{
    if (theta.size() == 1) {
        const double t = theta(0);
        if (std::isnan(t)) throw InputError("log_partition: NaN linear predictor");
        return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
    }
    double top = 0.0;
    for (Index l = 0; l < theta.size(); ++l) {
        if (std::isnan(theta(l))) throw InputError("log_partition: NaN linear predictor");
        top = std::max(top, theta(l));
    }
    double acc = std::exp(-top);
    for (Index l = 0; l < theta.size(); ++l) acc += std::exp(theta(l) - top);
    return top + std::log(acc);
}

/// Category probabilities of categories 1..m-1 (category 0 is the reference).
inline Vec category_probabilities(const Eigen::Ref<const Vec>& theta)
{
    double top = 0.0;
    for (Index l = 0; l < theta.size(); ++l) top = std::max(top, theta(l));
    Vec e = (theta.array() - top).exp().matrix();
    const double denom = std::exp(-top) + e.sum();
    return e / denom;
}

struct MeanCovariance {
    Vec mu;
    Mat w;
};

/// Gradient and Hessian of b: mu = softmax(theta), W = diag(mu) - mu mu^T.
inline MeanCovariance mean_and_covariance(const Eigen::Ref<const Vec>& theta)
{
    MeanCovariance out;
    out.mu = category_probabilities(theta);
    out.w = Mat(out.mu.asDiagonal()) - out.mu * out.mu.transpose();
    return out;
}

/// Multinomial response: raw labels z_i in {0..m-1} and the stacked indicator vector Y.
struct ResponseVector {
    Index m = 2;
    std::vector<int> labels;
    Vec y;

    Index n() const { return static_cast<Index>(labels.size()); }

    static ResponseVector from_labels(std::vector<int> labels, Index m)
    {
        require(m >= 2, "category count m must be at least 2");
        ResponseVector out;
        out.m = m;
        out.y = Vec::Zero(static_cast<Index>(labels.size()) * (m - 1));
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const int z = labels[i];
            require(z >= 0 && z < m, "response label " + std::to_string(z) + " outside 0.." + std::to_string(m - 1));
            if (z > 0) out.y(static_cast<Index>(i) * (m - 1) + (z - 1)) = 1.0;
        }
        out.labels = std::move(labels);
        return out;
    }
};

inline Vec linear_predictor(const GroupedDesign& design, const Eigen::Ref<const Vec>& beta)
{
    require(beta.size() == design.d(), "coefficient length " + std::to_string(beta.size()) + " does not match d = " +
                                           std::to_string(design.d()));
    return design.matrix() * beta;
}

/// sum_i { Y_i^T theta_i - b(theta_i) } for a stacked predictor theta.
inline double log_likelihood_from_predictor(const Eigen::Ref<const Vec>& theta, const ResponseVector& y)
{
    const Index r = y.m - 1;
    require(theta.size() == y.y.size(), "predictor and response lengths differ");
    double total = 0.0;
    for (Index i = 0; i < y.n(); ++i) {
        const auto block = theta.segment(i * r, r);
        const int z = y.labels[static_cast<std::size_t>(i)];
        total += (z > 0 ? block(z - 1) : 0.0) - log_partition(block);
    }
    return total;
}

inline void check_response(const GroupedDesign& design, const ResponseVector& y)
{
    require(y.m == design.m(), "response has m = " + std::to_string(y.m) + " but design has m = " + std::to_string(design.m()));
    require(y.n() == design.n(), "response has " + std::to_string(y.n()) + " observations but design has " +
                                     std::to_string(design.n()));
}

inline double log_likelihood(const Eigen::Ref<const Vec>& beta, const GroupedDesign& design, const ResponseVector& y)
{
    check_response(design, y);
    return log_likelihood_from_predictor(linear_predictor(design, beta), y);
}

struct ScoreHessian {
    Vec gradient;
    Mat hessian;
};

/// Gradient X^T (Y - mu(beta)) and Hessian -X^T W(beta) X of the log-likelihood,
/// accumulated observation block by observation block.
inline ScoreHessian score_and_hessian(const Eigen::Ref<const Vec>& beta, const GroupedDesign& design,
                                      const ResponseVector& y)
{
    check_response(design, y);
    const Vec theta = linear_predictor(design, beta);
    const Index r = design.block_rows();
    ScoreHessian out{Vec::Zero(design.d()), Mat::Zero(design.d(), design.d())};
    for (Index i = 0; i < design.n(); ++i) {
        const auto xi = design.row_block(i);
        const MeanCovariance mc = mean_and_covariance(theta.segment(i * r, r));
        out.gradient.noalias() += xi.transpose() * (y.y.segment(i * r, r) - mc.mu);
        out.hessian.noalias() -= xi.transpose() * mc.w * xi;
    }
    return out;
}

/// The data-generating model: beta_0 with predictors, means and per-observation covariance blocks.
struct TrueModel {
    Vec beta0;
    Vec theta0;
    Vec mu;
    std::vector<Mat> w_blocks;
    std::vector<Index> support;
    Index m = 2;

    Index s0() const { return static_cast<Index>(support.size()); }
};

inline TrueModel make_true_model(const GroupedDesign& design, const Vec& beta0)
{
    TrueModel t;
    t.beta0 = beta0;
    t.theta0 = linear_predictor(design, beta0);
    t.m = design.m();
    const Index r = design.block_rows();
    t.mu.resize(t.theta0.size());
    t.w_blocks.reserve(static_cast<std::size_t>(design.n()));
    for (Index i = 0; i < design.n(); ++i) {
        MeanCovariance mc = mean_and_covariance(t.theta0.segment(i * r, r));
        t.mu.segment(i * r, r) = mc.mu;
        t.w_blocks.push_back(std::move(mc.w));
    }
    t.support = SparseCoef::sparsify(beta0, design.partition()).support;
    return t;
}

/// d_0 = d_{S_0}.
inline Index true_dimension(const TrueModel& t, const GroupPartition& partition) { return partition.dim_of(t.support); }

/// Rows of W^{1/2} X, built block by block from the true-model covariance.
inline Mat whitened_design(const GroupedDesign& design, const TrueModel& t)
{
    const Index r = design.block_rows();
    Mat out(design.matrix().rows(), design.d());
    for (Index i = 0; i < design.n(); ++i)
        out.middleRows(i * r, r).noalias() = linalg::psd_sqrt(t.w_blocks[static_cast<std::size_t>(i)]) * design.row_block(i);
    return out;
}

/// ||W^{1/2} v||_2 for a stacked vector v, without forming W.
inline double weighted_norm(const Eigen::Ref<const Vec>& v, const TrueModel& t)
{
    const Index r = t.m - 1;
    double sq = 0.0;
    for (std::size_t i = 0; i < t.w_blocks.size(); ++i) {
        const auto seg = v.segment(static_cast<Index>(i) * r, r);
        sq += seg.dot(t.w_blocks[i] * seg);
    }
    return std::sqrt(std::max(0.0, sq));
}

/// Draws Z_i with P(Z_i = l) proportional to exp(theta_{0il}) for l >= 1 and to 1 for l = 0.
inline ResponseVector simulate_responses(const TrueModel& t, Rng& rng)
{
    const Index r = t.m - 1;
    const Index n = t.theta0.size() / r;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<int> labels(static_cast<std::size_t>(n), 0);
    for (Index i = 0; i < n; ++i) {
        const double u = unif(rng);
        double cum = 0.0;
        int z = 0;
        for (Index l = 0; l < r; ++l) {
            cum += t.mu(i * r + l);
            if (u < cum) {
                z = static_cast<int>(l) + 1;
                break;
            }
        }
        labels[static_cast<std::size_t>(i)] = z;
    }
    return ResponseVector::from_labels(std::move(labels), t.m);
}

inline ResponseVector simulate_responses(const TrueModel& t, std::uint64_t seed)
{
    Rng rng = make_rng(seed, stream::response);
    return simulate_responses(t, rng);
}

/// sum_i { b(theta_i) - b(theta_0i) - mu_i^T (theta_i - theta_0i) }: the Y-free part of the
/// centered log-likelihood ratio (Y - mu)^T X (beta - beta_0) - log(f_beta / f_0)(Y).
inline double log_likelihood_ratio_centered(const Eigen::Ref<const Vec>& beta, const TrueModel& t,
                                            const GroupedDesign& design)
{
    const Vec theta = linear_predictor(design, beta);
    const Index r = design.block_rows();
    double total = 0.0;
    for (Index i = 0; i < design.n(); ++i) {
        const auto th = theta.segment(i * r, r);
        const auto th0 = t.theta0.segment(i * r, r);
        total += log_partition(th) - log_partition(th0) - t.mu.segment(i * r, r).dot(th - th0);
    }
    return total;
}

} // namespace gslogit

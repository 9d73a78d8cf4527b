#pragma once
#include "core.hpp"
#include "design.hpp"
#include "rng.hpp"

#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace gslogit {

/// log(p v n^gbar) = max(log p, gbar log n), the dimension penalty shared by the prior,
/// the slab scale and all rate expressions.
inline double log_dimension_penalty(Index p, Index n, Index gbar)
{
    return std::max(std::log(static_cast<double>(p)), static_cast<double>(gbar) * std::log(static_cast<double>(n)));
}

/// lambda = 8 ||X||_* sqrt(log p v gbar log n).
inline double lambda_value(double x_star, Index p, Index n, Index gbar)
{
    require(p >= 2 || n >= 2, "lambda undefined for p = n = 1 (log argument is zero)");
    require(x_star > 0.0, "lambda undefined for a zero design");
    return 8.0 * x_star * std::sqrt(log_dimension_penalty(p, n, gbar));
}

inline double lambda_from_design(const GroupedDesign& design)
{
    require(design.p() >= 2 || design.n() >= 2, "lambda undefined for p = n = 1 (log argument is zero)");
    return lambda_value(x_star_norm(design), design.p(), design.n(), design.gbar());
}

/// Full prior: geometric group-size law pi_p(s) proportional to (p v n^gbar)^{-A s},
/// uniform support given its size, and the Kotz-type slab with scale lambda.
class PriorSpec {
public:
    PriorSpec(GroupPartition partition, Index n, double a, double lambda)
        : partition_(std::move(partition)), n_(n), a_(a), lambda_(lambda)
    {
        require(a_ > 0.0 && std::isfinite(a_), "prior exponent A must be positive");
        require(lambda_ > 0.0 && std::isfinite(lambda_), "lambda must be positive");
        require(n_ >= 1, "n must be positive");
        log_base_ = log_dimension_penalty(p(), n_, gbar());
        // terms exp(-A k log_base) are at most 1 and decrease geometrically
        const double step = -a_ * log_base_;
        double sum = 0.0;
        for (Index k = 0; k <= p(); ++k) sum += std::exp(step * static_cast<double>(k));
        log_norm_ = std::log(sum);
    }

    static PriorSpec from_design(const GroupedDesign& design, double a = 1.0,
                                 std::optional<double> lambda_override = std::nullopt)
    {
        const double lambda = lambda_override ? *lambda_override : lambda_from_design(design);
        return PriorSpec(design.partition(), design.n(), a, lambda);
    }

    const GroupPartition& partition() const { return partition_; }
    Index p() const { return partition_.count(); }
    Index n() const { return n_; }
    Index gbar() const { return partition_.max_size(); }
    double a() const { return a_; }
    double lambda() const { return lambda_; }
    /// log(p v n^gbar).
    double log_base() const { return log_base_; }

    /// log pi_p(s), normalized over s = 0..p.
    double log_pi_p(Index s) const
    {
        require(s >= 0 && s <= p(), "group dimension " + std::to_string(s) + " outside 0.." + std::to_string(p()));
        return -a_ * log_base_ * static_cast<double>(s) - log_norm_;
    }

private:
    GroupPartition partition_;
    Index n_;
    double a_;
    double lambda_;
    double log_base_ = 0.0;
    double log_norm_ = 0.0;
};

inline double log_pi_p(Index s, const PriorSpec& prior) { return prior.log_pi_p(s); }

inline double log_binomial(Index p, Index s)
{
    return std::lgamma(static_cast<double>(p) + 1.0) - std::lgamma(static_cast<double>(s) + 1.0) -
           std::lgamma(static_cast<double>(p - s) + 1.0);
}

/// log of the normalizing constant of one Kotz block of size g:
/// g log(lambda / sqrt(pi)) + log Gamma(g/2) - log 2 - log Gamma(g).
inline double log_kotz_normalizer(Index g, double lambda)
{
    const double gd = static_cast<double>(g);
    return gd * std::log(lambda / std::sqrt(std::numbers::pi)) + std::lgamma(gd / 2.0) - std::log(2.0) - std::lgamma(gd);
}

/// log h_S(beta_S) for beta_S stacked in support order; 0 for the empty support.
inline double log_kotz_density(const Eigen::Ref<const Vec>& beta_s, const std::vector<Index>& support, double lambda,
                               const GroupPartition& partition)
{
    require(lambda > 0.0, "lambda must be positive");
    require(beta_s.size() == partition.dim_of(support), "beta_S length does not match d_S");
    double total = 0.0;
    Index offset = 0;
    for (Index j : support) {
        const Index g = partition.size(j);
        total += log_kotz_normalizer(g, lambda) - lambda * beta_s.segment(offset, g).norm();
        offset += g;
    }
    return total;
}

/// Draws beta_S from the slab: per group a uniform direction on the unit sphere of R^{g_j}
/// and a radius ~ Gamma(shape g_j, rate lambda).
inline Vec sample_slab(const std::vector<Index>& support, double lambda, const GroupPartition& partition, Rng& rng)
{
    require(lambda > 0.0, "lambda must be positive");
    Vec out(partition.dim_of(support));
    std::normal_distribution<double> normal(0.0, 1.0);
    Index offset = 0;
    for (Index j : support) {
        const Index g = partition.size(j);
        Vec dir(g);
        double norm = 0.0;
        do {
            for (Index k = 0; k < g; ++k) dir(k) = normal(rng);
            norm = dir.norm();
        } while (norm == 0.0);
        std::gamma_distribution<double> radius(static_cast<double>(g), 1.0 / lambda);
        out.segment(offset, g) = dir * (radius(rng) / norm);
        offset += g;
    }
    return out;
}

inline Vec sample_slab(const std::vector<Index>& support, double lambda, const GroupPartition& partition,
                       std::uint64_t seed)
{
    Rng rng = make_rng(seed);
    return sample_slab(support, lambda, partition, rng);
}

/// log pi_p(|S|) - log C(p, |S|) + log h_S(beta_S).
inline double log_prior(const std::vector<Index>& support, const Eigen::Ref<const Vec>& beta_s, const PriorSpec& prior)
{
    const Index s = static_cast<Index>(support.size());
    return prior.log_pi_p(s) - log_binomial(prior.p(), s) +
           log_kotz_density(beta_s, support, prior.lambda(), prior.partition());
}

} // namespace gslogit

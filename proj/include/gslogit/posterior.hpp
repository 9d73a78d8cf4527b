#pragma once
#include "core.hpp"
#include "design.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "prior.hpp"
#include "quadrature.hpp"
#include "rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace gslogit {

/// theta = X_S beta_S using only the columns of the support.
inline Vec support_predictor(const GroupedDesign& design, const std::vector<Index>& support, const Eigen::Ref<const Vec>& beta_s)
{
    require(beta_s.size() == design.partition().dim_of(support), "beta_S length does not match d_S");
    Vec theta = Vec::Zero(design.matrix().rows());
    Index off = 0;
    for (Index j : support) {
        const Index g = design.partition().size(j);
        theta.noalias() += design.column_block(j) * beta_s.segment(off, g);
        off += g;
    }
    return theta;
}

/// log-likelihood plus log-prior of the state (S, beta_S).
inline double log_unnormalized_posterior(const std::vector<Index>& support, const Eigen::Ref<const Vec>& beta_s,
                                         const ResponseVector& y, const GroupedDesign& design, const PriorSpec& prior)
{
    check_response(design, y);
    return log_likelihood_from_predictor(support_predictor(design, support, beta_s), y) + log_prior(support, beta_s, prior);
}

// ---- sampler -------------------------------------------------------------------------

struct MoveProbs {
    double add = 0.25;
    double remove = 0.25;
    double swap = 0.10;
    double within = 0.40;

    void validate() const
    {
        for (double q : {add, remove, swap, within}) require(q >= 0.0 && std::isfinite(q), "move probabilities must be nonnegative");
        require(std::abs(add + remove + swap + within - 1.0) < 1e-9, "move probabilities must sum to 1");
        require((add > 0.0) == (remove > 0.0), "ADD and REMOVE must be both enabled or both disabled");
    }
};

struct SamplerConfig {
    Index n_iter = 200000;
    Index burn_in = 20000;
    Index thin = 10;
    std::uint64_t seed = 0;
    Index chains = 1;
    MoveProbs moves;
    double rw_scale = 2.4;
    double target_accept = 0.25;
    /// Replace the likelihood by 0 and sample the prior.
    bool prior_only = false;
    std::size_t workers = 1;

    void validate() const
    {
        require(n_iter > burn_in && burn_in >= 0, "need n_iter > burn_in >= 0");
        require(thin >= 1, "thin must be at least 1");
        require(chains >= 1, "chains must be at least 1");
        require(rw_scale > 0.0, "rw_scale must be positive");
        require(target_accept > 0.0 && target_accept < 1.0, "target acceptance must be in (0, 1)");
        moves.validate();
    }
};

enum class Move { add = 0, remove = 1, swap = 2, within = 3 };
inline constexpr std::array<const char*, 4> move_names{"add", "remove", "swap", "within"};

struct ChainState {
    Index chain = 0;
    Index iteration = 0;
    std::vector<Index> support;
    Vec values;
    double log_posterior = 0.0;
};

struct MoveCounts {
    std::array<Index, 4> proposed{};
    std::array<Index, 4> accepted{};
};

struct PosteriorSample {
    std::vector<ChainState> states;
    std::vector<MoveCounts> counts;
    /// Random-walk multiplier per chain after burn-in adaptation.
    std::vector<double> tau;
};

namespace detail {

class Chain {
public:
    Chain(const ResponseVector& y, const GroupedDesign& design, const PriorSpec& prior, const SamplerConfig& cfg, Index id)
        : y_(y), design_(design), prior_(prior), cfg_(cfg), id_(id),
          rng_(make_rng(derive_seed(cfg.seed, stream::sampler), static_cast<std::uint64_t>(id)))
    {
        theta_ = Vec::Zero(design.matrix().rows());
        loglik_ = likelihood(theta_);
        if (!std::isfinite(loglik_)) throw DegenerateError("non-finite log-posterior at the initial state");
        const double xs = x_star_norm(design);
        tau_ = xs > 0.0 ? 1.0 / xs : 1.0;
    }

    void run(std::vector<ChainState>& out, MoveCounts& counts)
    {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        Index within_steps = 0;
        for (Index it = 1; it <= cfg_.n_iter; ++it) {
            const double u = unif(rng_);
            const MoveProbs& q = cfg_.moves;
            Move move = Move::within;
            if (u < q.add) move = Move::add;
            else if (u < q.add + q.remove) move = Move::remove;
            else if (u < q.add + q.remove + q.swap) move = Move::swap;
            const auto mi = static_cast<std::size_t>(move);
            ++counts.proposed[mi];
            bool accepted = false;
            switch (move) {
            case Move::add: accepted = add(); break;
            case Move::remove: accepted = remove(); break;
            case Move::swap: accepted = swap(); break;
            case Move::within: {
                const bool possible = !support_.empty();
                accepted = within();
                if (possible && it <= cfg_.burn_in) {
                    ++within_steps;
                    const double gamma = std::pow(static_cast<double>(within_steps), -0.6);
                    tau_ *= std::exp(gamma * ((accepted ? 1.0 : 0.0) - cfg_.target_accept));
                }
                break;
            }
            }
            if (accepted) ++counts.accepted[mi];
            if (it % 1000 == 0) refresh();
            if (it > cfg_.burn_in && (it - cfg_.burn_in) % cfg_.thin == 0) {
                refresh();
                ChainState st;
                st.chain = id_;
                st.iteration = it;
                st.support = support_;
                st.values = values_;
                st.log_posterior = (cfg_.prior_only ? 0.0 : loglik_) + log_prior(support_, values_, prior_);
                out.push_back(std::move(st));
            }
        }
    }

    double tau() const { return tau_; }

private:
    double likelihood(const Vec& theta) const { return cfg_.prior_only ? 0.0 : log_likelihood_from_predictor(theta, y_); }

    void refresh()
    {
        theta_ = support_predictor(design_, support_, values_);
        loglik_ = likelihood(theta_);
    }

    Index offset_of(std::size_t pos) const
    {
        Index off = 0;
        for (std::size_t k = 0; k < pos; ++k) off += design_.partition().size(support_[k]);
        return off;
    }

    bool accept(double log_ratio)
    {
        if (log_ratio >= 0.0) return true;
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        return std::log(unif(rng_)) < log_ratio;
    }

    Index pick(Index n)
    {
        std::uniform_int_distribution<Index> dist(0, n - 1);
        return dist(rng_);
    }

    Index pick_outside()
    {
        const Index p = design_.p();
        Index k = pick(p - static_cast<Index>(support_.size()));
        // k-th group not in the (sorted) support
        for (Index j : support_) {
            if (j <= k) ++k;
            else break;
        }
        return k;
    }

    bool add()
    {
        const Index p = design_.p();
        const Index s = static_cast<Index>(support_.size());
        if (s == p) return false;
        const Index j = pick_outside();
        const Vec block = sample_slab({j}, prior_.lambda(), design_.partition(), rng_);
        Vec theta = theta_ + design_.column_block(j) * block;
        const double ll = likelihood(theta);
        const double log_ratio = ll - loglik_ + prior_.log_pi_p(s + 1) - prior_.log_pi_p(s) +
                                 std::log(cfg_.moves.remove) - std::log(cfg_.moves.add);
        if (!accept(log_ratio)) return false;
        const auto pos = static_cast<std::size_t>(std::lower_bound(support_.begin(), support_.end(), j) - support_.begin());
        const Index off = offset_of(pos);
        Vec values(values_.size() + block.size());
        values << values_.head(off), block, values_.tail(values_.size() - off);
        values_ = std::move(values);
        support_.insert(support_.begin() + static_cast<std::ptrdiff_t>(pos), j);
        theta_ = std::move(theta);
        loglik_ = ll;
        return true;
    }

    bool remove()
    {
        const Index s = static_cast<Index>(support_.size());
        if (s == 0) return false;
        const auto pos = static_cast<std::size_t>(pick(s));
        const Index j = support_[pos];
        const Index g = design_.partition().size(j);
        const Index off = offset_of(pos);
        Vec theta = theta_ - design_.column_block(j) * values_.segment(off, g);
        const double ll = likelihood(theta);
        const double log_ratio = ll - loglik_ + prior_.log_pi_p(s - 1) - prior_.log_pi_p(s) +
                                 std::log(cfg_.moves.add) - std::log(cfg_.moves.remove);
        if (!accept(log_ratio)) return false;
        Vec values(values_.size() - g);
        values << values_.head(off), values_.tail(values_.size() - off - g);
        values_ = std::move(values);
        support_.erase(support_.begin() + static_cast<std::ptrdiff_t>(pos));
        theta_ = std::move(theta);
        loglik_ = ll;
        return true;
    }

    bool swap()
    {
        const Index p = design_.p();
        const Index s = static_cast<Index>(support_.size());
        if (s == 0 || s == p) return false;
        const auto pos = static_cast<std::size_t>(pick(s));
        const Index out_j = support_[pos];
        const Index in_j = pick_outside();
        const Index g_out = design_.partition().size(out_j);
        const Index off = offset_of(pos);
        const Vec block = sample_slab({in_j}, prior_.lambda(), design_.partition(), rng_);
        Vec theta = theta_ - design_.column_block(out_j) * values_.segment(off, g_out) + design_.column_block(in_j) * block;
        const double ll = likelihood(theta);
        if (!accept(ll - loglik_)) return false;
        // rebuild blocks without out_j, then insert in_j at its sorted position
        std::vector<Index> support;
        std::vector<Vec> blocks;
        Index o = 0;
        for (Index j : support_) {
            const Index g = design_.partition().size(j);
            if (j != out_j) {
                support.push_back(j);
                blocks.push_back(values_.segment(o, g));
            }
            o += g;
        }
        const auto ins = static_cast<std::size_t>(std::lower_bound(support.begin(), support.end(), in_j) - support.begin());
        support.insert(support.begin() + static_cast<std::ptrdiff_t>(ins), in_j);
        blocks.insert(blocks.begin() + static_cast<std::ptrdiff_t>(ins), block);
        Vec values(design_.partition().dim_of(support));
        o = 0;
        for (const Vec& b : blocks) {
            values.segment(o, b.size()) = b;
            o += b.size();
        }
        support_ = std::move(support);
        values_ = std::move(values);
        theta_ = std::move(theta);
        loglik_ = ll;
        return true;
    }

    bool within()
    {
        if (support_.empty()) return false;
        const Index ds = values_.size();
        std::normal_distribution<double> normal(0.0, 1.0);
        Vec step(ds);
        for (Index k = 0; k < ds; ++k) step(k) = normal(rng_);
        step *= tau_ * cfg_.rw_scale / std::sqrt(static_cast<double>(ds));
        const Vec proposal = values_ + step;
        Vec theta = theta_ + support_predictor(design_, support_, step);
        const double ll = likelihood(theta);
        const double lambda = prior_.lambda();
        const double log_ratio = ll - loglik_ - lambda * (l21_norm(proposal, design_.partition().restricted(support_)) -
                                                          l21_norm(values_, design_.partition().restricted(support_)));
        if (!accept(log_ratio)) return false;
        values_ = proposal;
        theta_ = std::move(theta);
        loglik_ = ll;
        return true;
    }

    const ResponseVector& y_;
    const GroupedDesign& design_;
    const PriorSpec& prior_;
    const SamplerConfig& cfg_;
    Index id_;
    Rng rng_;
    std::vector<Index> support_;
    Vec values_ = Vec(0);
    Vec theta_;
    double loglik_ = 0.0;
    double tau_ = 1.0;
};

} // namespace detail

/// Birth/death/swap/random-walk Metropolis-Hastings for (S, beta_S), started at S = {}.
/// Independent chains use derived seed streams and their thinned post-burn-in states are
/// pooled in chain order.
inline PosteriorSample mcmc_run(const ResponseVector& y, const GroupedDesign& design, const PriorSpec& prior,
                                const SamplerConfig& cfg)
{
    cfg.validate();
    check_response(design, y);
    require(prior.p() == design.p(), "prior and design disagree on the number of groups");
    const auto nc = static_cast<std::size_t>(cfg.chains);
    std::vector<std::vector<ChainState>> per_chain(nc);
    PosteriorSample out;
    out.counts.resize(nc);
    out.tau.resize(nc);
    parallel_for(
        nc,
        [&](std::size_t c) {
            detail::Chain chain(y, design, prior, cfg, static_cast<Index>(c));
            chain.run(per_chain[c], out.counts[c]);
            out.tau[c] = chain.tau();
        },
        cfg.workers);
    for (auto& states : per_chain)
        for (auto& st : states) out.states.push_back(std::move(st));
    return out;
}

// ---- summaries -----------------------------------------------------------------------

/// Linear-interpolation quantile (the common "type 7" definition) of unsorted data.
inline double quantile(std::vector<double> values, double q)
{
    require(!values.empty(), "quantile of an empty sample");
    require(q >= 0.0 && q <= 1.0, "quantile level outside [0, 1]");
    std::sort(values.begin(), values.end());
    const double h = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(values.size() - 1, lo + 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

struct PosteriorSummary {
    Vec inclusion;
    /// s_law(k) = posterior probability that s_beta = k, k = 0..p.
    Vec s_law;
    std::vector<double> l2;
    std::vector<double> l21;
    std::vector<double> predictor;

    double l2_quantile(double q) const { return quantile(l2, q); }
    double l21_quantile(double q) const { return quantile(l21, q); }
    double predictor_quantile(double q) const { return quantile(predictor, q); }
};

/// Monte Carlo summary of the pooled states against beta_0 (distances use the true-model W).
inline PosteriorSummary summarize(const PosteriorSample& sample, const TrueModel& truth, const GroupedDesign& design)
{
    require(!sample.states.empty(), "cannot summarize an empty chain");
    const auto& part = design.partition();
    const Index p = design.p();
    PosteriorSummary out;
    out.inclusion = Vec::Zero(p);
    out.s_law = Vec::Zero(p + 1);
    const double w = 1.0 / static_cast<double>(sample.states.size());
    for (const auto& st : sample.states) {
        const Vec beta = SparseCoef{st.support, st.values}.densify(part);
        const Vec diff = beta - truth.beta0;
        for (Index j : SparseCoef::sparsify(beta, part).support) out.inclusion(j) += w;
        out.s_law(group_count(beta, part)) += w;
        out.l2.push_back(diff.norm());
        out.l21.push_back(l21_norm(diff, part));
        out.predictor.push_back(weighted_norm(design.matrix() * diff, truth));
    }
    return out;
}

// ---- exact oracle --------------------------------------------------------------------

struct OracleConfig {
    double rel_tol = 1e-6;
    Index max_groups = 10;
    Index max_block_dim = 3;
    bool prior_only = false;
    Index map_iterations = 5000;
};

struct SupportPosterior {
    std::vector<Index> support;
    /// log of the slab-integrated likelihood, log int exp(loglik) h_S d beta_S.
    double log_evidence = 0.0;
    double probability = 0.0;
};

struct OracleResult {
    std::vector<SupportPosterior> supports;
    Vec inclusion;
    Vec s_law;
    /// log sum_S pi_p(s) C(p,s)^{-1} int exp(loglik) h_S, the marginal likelihood.
    double log_marginal = 0.0;
};

namespace detail {

/// Maximizer of loglik(X_S b) - lambda ||b||_{2,1} by accelerated proximal gradient.
inline Vec penalized_mode(const GroupedDesign& design, const std::vector<Index>& support, const ResponseVector& y,
                          double lambda, bool prior_only, Index iterations)
{
    const auto local = design.partition().restricted(support);
    const Index ds = local.dim();
    if (prior_only) return Vec::Zero(ds);
    const Mat xs = design.support_columns(support);
    const double lip = 0.5 * std::pow(linalg::spectral_norm(xs), 2) + 1e-12;
    const double step = 1.0 / lip;
    const Index r = design.block_rows();
    auto objective = [&](const Vec& b) { return log_likelihood_from_predictor(xs * b, y) - lambda * l21_norm(b, local); };
    auto gradient = [&](const Vec& b) {
        const Vec theta = xs * b;
        Vec resid = y.y;
        for (Index i = 0; i < design.n(); ++i) resid.segment(i * r, r) -= category_probabilities(theta.segment(i * r, r));
        return Vec(xs.transpose() * resid);
    };
    auto prox = [&](Vec v) {
        for (Index j = 0; j < local.count(); ++j) {
            auto blk = v.segment(local.start(j), local.size(j));
            const double nb = blk.norm();
            blk *= nb > lambda * step ? 1.0 - lambda * step / nb : 0.0;
        }
        return v;
    };
    Vec b = Vec::Zero(ds), z = b;
    double t = 1.0;
    double fb = objective(b);
    for (Index it = 0; it < iterations; ++it) {
        Vec next = prox(z + step * gradient(z));
        double fn = objective(next);
        if (fn < fb) {
            // monotone restart
            next = prox(b + step * gradient(b));
            fn = objective(next);
            t = 1.0;
            z = next;
        } else {
            const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            z = next + ((t - 1.0) / tn) * (next - b);
            t = tn;
        }
        const double change = (next - b).norm();
        b = std::move(next);
        fb = fn;
        if (change <= 1e-13 * (1.0 + b.norm())) break;
    }
    return b;
}

} // namespace detail

/// Exact posterior over supports by enumeration and nested adaptive quadrature.
inline OracleResult exact_oracle(const ResponseVector& y, const GroupedDesign& design, const PriorSpec& prior,
                                 const OracleConfig& cfg = {})
{
    check_response(design, y);
    const Index p = design.p();
    if (p > cfg.max_groups)
        throw CapExceeded("exact oracle supports at most " + std::to_string(cfg.max_groups) + " groups, got " + std::to_string(p));
    if (design.d() > cfg.max_block_dim)
        throw CapExceeded("exact oracle needs d_S <= " + std::to_string(cfg.max_block_dim) +
                          " for every support, but the full support has d = " + std::to_string(design.d()));
    require(cfg.rel_tol > 0.0, "oracle tolerance must be positive");
    const auto& part = design.partition();
    const double lambda = prior.lambda();
    const Index r = design.block_rows();

    OracleResult out;
    std::vector<double> log_weights;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << p); ++mask) {
        SupportPosterior sp;
        for (Index j = 0; j < p; ++j)
            if (mask & (std::uint64_t{1} << j)) sp.support.push_back(j);
        const Index s = static_cast<Index>(sp.support.size());
        if (s == 0) {
            sp.log_evidence = cfg.prior_only ? 0.0 : log_likelihood_from_predictor(Vec::Zero(design.matrix().rows()), y);
        } else {
            const auto local = part.restricted(sp.support);
            const Mat xs = design.support_columns(sp.support);
            const Vec mode = detail::penalized_mode(design, sp.support, y, lambda, cfg.prior_only, cfg.map_iterations);
            // curvature for placing the nested levels
            Mat h = Mat::Zero(local.dim(), local.dim());
            if (!cfg.prior_only) {
                const Vec theta = xs * mode;
                for (Index i = 0; i < design.n(); ++i) {
                    const auto xi = xs.middleRows(i * r, r);
                    h.noalias() += xi.transpose() * mean_and_covariance(theta.segment(i * r, r)).w * xi;
                }
            }
            for (Index j = 0; j < local.count(); ++j) {
                const auto blk = mode.segment(local.start(j), local.size(j));
                const double nb = blk.norm();
                auto hb = h.block(local.start(j), local.start(j), local.size(j), local.size(j));
                if (nb > 1.0 / lambda) {
                    const Vec u = blk / nb;
                    hb += (lambda / nb) * (Mat::Identity(local.size(j), local.size(j)) - u * u.transpose());
                } else {
                    hb += 0.5 * lambda * lambda * Mat::Identity(local.size(j), local.size(j));
                }
            }
            h += 1e-12 * (1.0 + h.diagonal().cwiseAbs().maxCoeff()) * Mat::Identity(local.dim(), local.dim());
            const Mat cov = h.ldlt().solve(Mat::Identity(local.dim(), local.dim()));
            const std::vector<Index>& sup = sp.support;
            double log_norm = 0.0;
            for (Index j : sup) log_norm += log_kotz_normalizer(part.size(j), lambda);
            Vec theta(xs.rows());
            auto log_f = [&](const Vec& b) {
                double lp = log_norm;
                for (Index j = 0; j < local.count(); ++j) lp -= lambda * b.segment(local.start(j), local.size(j)).norm();
                if (cfg.prior_only) return lp;
                theta.noalias() = xs * b;
                return lp + log_likelihood_from_predictor(theta, y);
            };
            quadrature::Options qo;
            qo.rel_tol = cfg.rel_tol;
            sp.log_evidence = quadrature::log_integrate(log_f, mode, cov, qo);
        }
        log_weights.push_back(prior.log_pi_p(s) - log_binomial(p, s) + sp.log_evidence);
        out.supports.push_back(std::move(sp));
    }
    const Vec lw = Eigen::Map<const Vec>(log_weights.data(), static_cast<Index>(log_weights.size()));
    out.log_marginal = linalg::log_sum_exp(lw);
    out.inclusion = Vec::Zero(p);
    out.s_law = Vec::Zero(p + 1);
    for (std::size_t k = 0; k < out.supports.size(); ++k) {
        auto& sp = out.supports[k];
        sp.probability = std::exp(log_weights[k] - out.log_marginal);
        for (Index j : sp.support) out.inclusion(j) += sp.probability;
        out.s_law(static_cast<Index>(sp.support.size())) += sp.probability;
    }
    return out;
}

} // namespace gslogit

#pragma once
#include "core.hpp"
#include "design.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "prior.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <vector>

namespace gslogit {

struct GeometryOptions {
    /// Cone constant c in ||beta_{S^c}||_{2,1} <= c ||beta_S||_{2,1}.
    double cone_constant = 7.0;
    Index search_samples = 100000;
    Index refine_steps = 500;
    double refine_step = 1e-2;
    /// Best random samples per objective handed to the refinement stage.
    Index refine_starts = 4;
    Index enumeration_cap = 50000;
    Index support_samples = 2000;
    Index swap_trials = 200;
    /// Supports with d_S above this skip their own eigen-decomposition in the psi_1 search.
    Index eig_limit = 256;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

/// A reported infimum estimate: value == objective(certificate) by construction.
struct Estimate {
    double value = std::numeric_limits<double>::infinity();
    Vec certificate;
    std::vector<Index> support;
};

namespace detail {

/// Saturating binomial coefficient, clamped at `cap + 1`.
inline Index binomial_capped(Index p, Index k, Index cap)
{
    if (k < 0 || k > p) return 0;
    k = std::min(k, p - k);
    long double acc = 1.0L;
    for (Index i = 1; i <= k; ++i) {
        acc = acc * static_cast<long double>(p - k + i) / static_cast<long double>(i);
        if (acc > static_cast<long double>(cap)) return cap + 1;
    }
    return static_cast<Index>(std::llround(acc));
}

/// Calls fn(combination) for every k-subset of {0..p-1} in lexicographic order.
template <class Fn>
void for_each_combination(Index p, Index k, Fn&& fn)
{
    if (k > p || k < 0) return;
    std::vector<Index> c(static_cast<std::size_t>(k));
    for (Index i = 0; i < k; ++i) c[static_cast<std::size_t>(i)] = i;
    for (;;) {
        fn(static_cast<const std::vector<Index>&>(c));
        Index i = k - 1;
        while (i >= 0 && c[static_cast<std::size_t>(i)] == p - k + i) --i;
        if (i < 0) return;
        ++c[static_cast<std::size_t>(i)];
        for (Index j = i + 1; j < k; ++j) c[static_cast<std::size_t>(j)] = c[static_cast<std::size_t>(j - 1)] + 1;
    }
}

inline std::vector<Index> random_support(Index p, Index k, Rng& rng)
{
    std::vector<Index> all(static_cast<std::size_t>(p));
    for (Index j = 0; j < p; ++j) all[static_cast<std::size_t>(j)] = j;
    for (Index i = 0; i < k; ++i) {
        std::uniform_int_distribution<Index> pick(i, p - 1);
        std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(pick(rng))]);
    }
    std::vector<Index> out(all.begin(), all.begin() + k);
    std::sort(out.begin(), out.end());
    return out;
}

inline std::uint64_t support_hash(const std::vector<Index>& support)
{
    std::uint64_t h = 0x51ed270b27a1f0a5ULL ^ support.size();
    for (Index j : support) h = mix64(h ^ static_cast<std::uint64_t>(j));
    return h;
}

} // namespace detail

/// Compatibility quantities for a design at the covariance of a declared true model.
/// Everything is evaluated through A = W^{1/2} X / ||X||_*.
class CompatibilityProblem {
public:
    CompatibilityProblem(const GroupedDesign& design, const TrueModel& truth, GeometryOptions options = {})
        : partition_(design.partition()), options_(options)
    {
        require(options_.cone_constant > 0.0, "cone constant must be positive");
        require(truth.beta0.size() == design.d(), "true coefficient length does not match the design");
        x_star_ = x_star_norm(design);
        if (!(x_star_ > 0.0)) throw DegenerateError("||X||_* is zero; compatibility quantities are undefined");
        a_ = whitened_design(design, truth) / x_star_;
        if (a_.cols() <= 4096) gram_ = a_.transpose() * a_;
        all_groups_.resize(static_cast<std::size_t>(p()));
        for (Index j = 0; j < p(); ++j) all_groups_[static_cast<std::size_t>(j)] = j;
    }

    const Mat& scaled_whitened() const { return a_; }
    double x_star() const { return x_star_; }
    Index p() const { return partition_.count(); }
    Index d() const { return partition_.dim(); }
    const GroupPartition& partition() const { return partition_; }
    const GeometryOptions& options() const { return options_; }

    // ---- objectives -----------------------------------------------------------------

    /// ||W^{1/2} X beta||_2 / ||X||_*.
    double weighted_norm_scaled(const Vec& beta) const { return apply(beta, nonzero_groups(beta)).norm(); }

    bool in_cone(const Vec& beta, const std::vector<Index>& s) const
    {
        const auto flags = membership(s);
        double in = 0.0, out = 0.0;
        for (Index j = 0; j < p(); ++j) (flags[static_cast<std::size_t>(j)] ? in : out) += block(beta, j).norm();
        return out <= options_.cone_constant * in * (1.0 + 1e-12) + 1e-300;
    }

    /// ||W^{1/2} X beta|| sqrt(s) / (||X||_* ||beta||_{2,1}).
    double phi_objective(const Vec& beta, const std::vector<Index>& s) const
    {
        return weighted_norm_scaled(beta) * std::sqrt(static_cast<double>(s.size())) / l21_norm(beta, partition_);
    }

    /// As phi_objective with denominator ||beta_S||_{2,1}.
    double phi_mod_objective(const Vec& beta, const std::vector<Index>& s) const
    {
        double den = 0.0;
        for (Index j : s) den += block(beta, j).norm();
        return weighted_norm_scaled(beta) * std::sqrt(static_cast<double>(s.size())) / den;
    }

    /// ||W^{1/2} X beta|| sqrt(s_beta) / (||X||_* ||beta||_{2,1}).
    double psi1_objective(const Vec& beta) const
    {
        const auto groups = nonzero_groups(beta);
        return apply(beta, groups).norm() * std::sqrt(static_cast<double>(groups.size())) / l21_norm(beta, partition_);
    }

    /// ||W^{1/2} X beta|| / (||X||_* ||beta||_2).
    double psi2_objective(const Vec& beta) const { return weighted_norm_scaled(beta) / beta.norm(); }

    // ---- phi / phi_mod ----------------------------------------------------------------

    struct PhiPair {
        Estimate phi;
        Estimate phi_mod;
    };

    /// Shared random cone search plus refinement for phi(S) and phi_mod(S). Both estimates
    /// are minima over one candidate pool, so phi_mod/8 <= phi <= phi_mod holds for them.
    PhiPair phi_pair(std::vector<Index> s) const
    {
        std::sort(s.begin(), s.end());
        s.erase(std::unique(s.begin(), s.end()), s.end());
        require(!s.empty(), "phi is undefined for the empty support");
        for (Index j : s) require(j >= 0 && j < p(), "support index out of range");
        const auto flags = membership(s);
        std::vector<Index> comp;
        for (Index j = 0; j < p(); ++j)
            if (!flags[static_cast<std::size_t>(j)]) comp.push_back(j);
        const double c = options_.cone_constant;
        const double root_s = std::sqrt(static_cast<double>(s.size()));
        const Index keep = std::max<Index>(1, options_.refine_starts);

        struct Ranked {
            double value;
            Index index;
            Vec beta;
        };
        auto insert = [keep](std::vector<Ranked>& list, Ranked item) {
            if (static_cast<Index>(list.size()) == keep && item.value >= list.back().value) return;
            auto it = std::upper_bound(list.begin(), list.end(), item, [](const Ranked& x, const Ranked& y) {
                return x.value < y.value || (x.value == y.value && x.index < y.index);
            });
            list.insert(it, std::move(item));
            if (static_cast<Index>(list.size()) > keep) list.pop_back();
        };

        // random cone samples in fixed-size batches with their own streams
        const Index batch = 1000;
        const Index n_batches = (options_.search_samples + batch - 1) / batch;
        std::vector<std::vector<Ranked>> best_phi(static_cast<std::size_t>(n_batches));
        std::vector<std::vector<Ranked>> best_mod(static_cast<std::size_t>(n_batches));
        const std::uint64_t phi_seed = derive_seed(options_.seed, detail::support_hash(s) ^ 0x7068ULL);
        parallel_for(
            static_cast<std::size_t>(n_batches),
            [&](std::size_t b) {
                Rng rng = make_rng(phi_seed, b);
                std::normal_distribution<double> normal(0.0, 1.0);
                std::uniform_real_distribution<double> unif(0.0, 1.0);
                const Index lo = static_cast<Index>(b) * batch;
                const Index hi = std::min(options_.search_samples, lo + batch);
                for (Index i = lo; i < hi; ++i) {
                    Vec beta = Vec::Zero(d());
                    for (Index j : s)
                        for (Index k = 0; k < partition_.size(j); ++k) beta(partition_.start(j) + k) = normal(rng);
                    double ns = 0.0;
                    for (Index j : s) ns += block(beta, j).norm();
                    if (!(ns > 0.0)) continue;
                    for (Index j : s) block_ref(beta, j) /= ns;
                    double tprime = 0.0;
                    std::vector<Index> used = s;
                    if (!comp.empty()) {
                        std::vector<Index> chosen;
                        if (unif(rng) < 0.5) {
                            chosen = comp;
                        } else {
                            const Index kmax = std::min<Index>(4, static_cast<Index>(comp.size()));
                            std::uniform_int_distribution<Index> kdist(1, kmax);
                            const auto idx = detail::random_support(static_cast<Index>(comp.size()), kdist(rng), rng);
                            for (Index t : idx) chosen.push_back(comp[static_cast<std::size_t>(t)]);
                        }
                        double nu = 0.0;
                        for (Index j : chosen) {
                            auto blk = block_ref(beta, j);
                            for (Index k = 0; k < blk.size(); ++k) blk(k) = normal(rng);
                            nu += blk.norm();
                        }
                        tprime = unif(rng) < 0.25 ? 1.0 : unif(rng);
                        if (nu > 0.0)
                            for (Index j : chosen) block_ref(beta, j) *= c * tprime / nu;
                        else
                            tprime = 0.0;
                        used.insert(used.end(), chosen.begin(), chosen.end());
                    }
                    const double num = apply(beta, used).norm() * root_s;
                    const double total = l21_norm(beta, partition_);
                    insert(best_phi[b], Ranked{num / total, i, beta});
                    insert(best_mod[b], Ranked{num, i, beta});
                }
            },
            options_.workers);

        std::vector<Ranked> top_phi, top_mod;
        for (Index b = 0; b < n_batches; ++b) {
            for (auto& r : best_phi[static_cast<std::size_t>(b)]) insert(top_phi, std::move(r));
            for (auto& r : best_mod[static_cast<std::size_t>(b)]) insert(top_mod, std::move(r));
        }

        // structured starts: bottom eigenvector on S, alone and with a cancelling S^c part
        std::vector<Vec> pool;
        for (auto& r : top_phi) pool.push_back(r.beta);
        for (auto& r : top_mod) pool.push_back(r.beta);
        {
            Vec e = embed(min_eigvec(s), s);
            pool.push_back(e);
            if (!comp.empty()) {
                Vec u = apply_t(apply(e, s), comp);
                double nu = 0.0;
                for (Index j : comp) nu += block(u, j).norm();
                if (nu > 0.0) {
                    double ns = 0.0;
                    for (Index j : s) ns += block(e, j).norm();
                    Vec start = e;
                    for (Index j : comp) block_ref(start, j) = -block(u, j) * (c * ns / nu);
                    pool.push_back(start);
                }
            }
        }

        const std::size_t starts = pool.size();
        std::vector<Vec> refined(2 * starts);
        parallel_for(
            2 * starts,
            [&](std::size_t k) {
                const bool mod = k >= starts;
                refined[k] = refine(pool[k % starts], all_groups_, mod ? flags : std::vector<char>(flags.size(), 1), &s,
                                    root_s);
            },
            options_.workers);
        pool.insert(pool.end(), refined.begin(), refined.end());

        PhiPair out;
        for (const Vec& beta : pool) {
            if (!in_cone(beta, s)) continue;
            const double f = phi_objective(beta, s);
            const double g = phi_mod_objective(beta, s);
            if (f < out.phi.value) out.phi = Estimate{f, beta, s};
            if (g < out.phi_mod.value) out.phi_mod = Estimate{g, beta, s};
        }
        if (!std::isfinite(out.phi.value)) throw DegenerateError("phi search produced no feasible candidate");
        return out;
    }

    Estimate phi(const std::vector<Index>& s) const { return phi_pair(s).phi; }
    Estimate phi_mod(const std::vector<Index>& s) const { return phi_pair(s).phi_mod; }

    // ---- psi_2 ------------------------------------------------------------------------

    /// min over supports of size <= s of the smallest singular value of A_{S'}. Because that
    /// value can only decrease as columns are added, supports of size min(s, p) suffice.
    Estimate psi2(Index s) const
    {
        require(s >= 1 && s <= p(), "sparsity level s outside 1..p");
        const Index k = std::min(s, p());
        std::vector<std::vector<Index>> supports;
        const bool enumerate = detail::binomial_capped(p(), k, options_.enumeration_cap) <= options_.enumeration_cap;
        if (enumerate) {
            detail::for_each_combination(p(), k, [&](const std::vector<Index>& c) { supports.push_back(c); });
        } else {
            Rng rng = make_rng(derive_seed(options_.seed, 0x707332ULL), static_cast<std::uint64_t>(k));
            for (Index t = 0; t < options_.support_samples; ++t) supports.push_back(detail::random_support(p(), k, rng));
        }
        Estimate best = best_over(supports, [&](const std::vector<Index>& sup) { return psi2_support(sup); });
        if (!enumerate && k < p()) {
            // greedy swaps from the best sampled support
            Rng rng = make_rng(derive_seed(options_.seed, 0x73776170ULL), static_cast<std::uint64_t>(k));
            for (Index t = 0; t < options_.swap_trials; ++t) {
                std::vector<Index> cand = best.support;
                std::vector<char> in = membership(cand);
                std::uniform_int_distribution<Index> pos(0, k - 1);
                std::uniform_int_distribution<Index> grp(0, p() - 1);
                Index incoming = grp(rng);
                while (in[static_cast<std::size_t>(incoming)]) incoming = grp(rng);
                cand[static_cast<std::size_t>(pos(rng))] = incoming;
                std::sort(cand.begin(), cand.end());
                Estimate e = psi2_support(cand);
                if (e.value < best.value) best = std::move(e);
            }
        }
        return best;
    }

    // ---- psi_1 ------------------------------------------------------------------------

    /// Upper-bound estimate of psi_1(s): every support of size <= s is searched when their
    /// number is within the enumeration cap, otherwise all singletons plus random supports.
    /// Each support gets a deterministic inner search, so enumeration never reports more
    /// than the randomized path.
    Estimate psi1(Index s) const
    {
        require(s >= 1 && s <= p(), "sparsity level s outside 1..p");
        const Index k = std::min(s, p());
        Index total = 0;
        for (Index j = 1; j <= k && total <= options_.enumeration_cap; ++j)
            total += detail::binomial_capped(p(), j, options_.enumeration_cap);
        std::vector<std::vector<Index>> supports;
        if (total <= options_.enumeration_cap) {
            for (Index j = 1; j <= k; ++j)
                detail::for_each_combination(p(), j, [&](const std::vector<Index>& c) { supports.push_back(c); });
        } else {
            for (Index j = 0; j < p(); ++j) supports.push_back({j});
            if (k >= 2) {
                Rng rng = make_rng(derive_seed(options_.seed, 0x707331ULL), static_cast<std::uint64_t>(k));
                std::uniform_int_distribution<Index> size(2, k);
                for (Index t = 0; t < options_.support_samples; ++t) supports.push_back(detail::random_support(p(), size(rng), rng));
            }
        }
        return best_over(supports, [&](const std::vector<Index>& sup) { return psi1_support(sup); });
    }

    struct PsiProfile {
        std::map<Index, Estimate> psi1;
        std::map<Index, Estimate> psi2;
    };

    /// psi_1 and psi_2 at several levels. Certificates found at smaller s stay feasible at
    /// larger s and every psi_1 certificate is also a psi_2 candidate, so the reported maps
    /// are nonincreasing and satisfy psi_2 <= psi_1.
    PsiProfile psi_profile(std::vector<Index> levels) const
    {
        std::sort(levels.begin(), levels.end());
        levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
        PsiProfile out;
        const Estimate* prev1 = nullptr;
        const Estimate* prev2 = nullptr;
        for (Index s : levels) {
            Estimate e1 = psi1(s);
            if (prev1 && prev1->value < e1.value) e1 = *prev1;
            Estimate e2 = psi2(s);
            const double folded = psi2_objective(e1.certificate);
            if (folded < e2.value) e2 = Estimate{folded, e1.certificate, e1.support};
            if (prev2 && prev2->value < e2.value) e2 = *prev2;
            prev1 = &(out.psi1[s] = std::move(e1));
            prev2 = &(out.psi2[s] = std::move(e2));
        }
        return out;
    }

private:
    Eigen::VectorBlock<const Vec> block(const Vec& beta, Index j) const
    {
        return beta.segment(partition_.start(j), partition_.size(j));
    }
    Eigen::VectorBlock<Vec> block_ref(Vec& beta, Index j) const
    {
        return beta.segment(partition_.start(j), partition_.size(j));
    }

    std::vector<char> membership(const std::vector<Index>& s) const
    {
        std::vector<char> flags(static_cast<std::size_t>(p()), 0);
        for (Index j : s) flags[static_cast<std::size_t>(j)] = 1;
        return flags;
    }

    std::vector<Index> nonzero_groups(const Vec& beta) const
    {
        std::vector<Index> out;
        for (Index j = 0; j < p(); ++j)
            if ((block(beta, j).array() != 0.0).any()) out.push_back(j);
        return out;
    }

    Vec apply(const Vec& beta, const std::vector<Index>& groups) const
    {
        Vec r = Vec::Zero(a_.rows());
        for (Index j : groups) r.noalias() += a_.middleCols(partition_.start(j), partition_.size(j)) * block(beta, j);
        return r;
    }

    Vec apply_t(const Vec& r, const std::vector<Index>& groups) const
    {
        Vec out = Vec::Zero(d());
        for (Index j : groups)
            block_ref(out, j).noalias() = a_.middleCols(partition_.start(j), partition_.size(j)).transpose() * r;
        return out;
    }

    Vec embed(const Vec& local, const std::vector<Index>& s) const
    {
        Vec out = Vec::Zero(d());
        Index off = 0;
        for (Index j : s) {
            block_ref(out, j) = local.segment(off, partition_.size(j));
            off += partition_.size(j);
        }
        return out;
    }

    Mat support_gram(const std::vector<Index>& s) const
    {
        const Index ds = partition_.dim_of(s);
        Mat g(ds, ds);
        if (gram_.size() > 0) {
            Index ro = 0;
            for (Index a : s) {
                Index co = 0;
                for (Index b : s) {
                    g.block(ro, co, partition_.size(a), partition_.size(b)) =
                        gram_.block(partition_.start(a), partition_.start(b), partition_.size(a), partition_.size(b));
                    co += partition_.size(b);
                }
                ro += partition_.size(a);
            }
        } else {
            Mat cols(a_.rows(), ds);
            Index off = 0;
            for (Index j : s) {
                cols.middleCols(off, partition_.size(j)) = a_.middleCols(partition_.start(j), partition_.size(j));
                off += partition_.size(j);
            }
            g.noalias() = cols.transpose() * cols;
        }
        return g;
    }

    /// Unit eigenvector of the smallest eigenvalue of A_S^T A_S (local coordinates).
    Vec min_eigvec(const std::vector<Index>& s) const
    {
        Eigen::SelfAdjointEigenSolver<Mat> eig(support_gram(s));
        return eig.eigenvectors().col(0);
    }

    const Vec& global_eigvec() const
    {
        std::call_once(global_once_, [&] {
            if (d() <= 4096) global_eig_ = min_eigvec(all_groups_);
        });
        return global_eig_;
    }

    Estimate psi2_support(const std::vector<Index>& s) const
    {
        Vec cert = embed(min_eigvec(s), s);
        return Estimate{psi2_objective(cert), cert, s};
    }

    Estimate psi1_support(const std::vector<Index>& s) const
    {
        const double kappa = std::sqrt(static_cast<double>(s.size()));
        std::vector<Vec> starts;
        Vec e;
        if (partition_.dim_of(s) <= options_.eig_limit) {
            e = min_eigvec(s);
        } else if (global_eigvec().size() == d()) {
            Vec g = global_eigvec();
            Index off = 0;
            e.resize(partition_.dim_of(s));
            for (Index j : s) {
                e.segment(off, partition_.size(j)) = g.segment(partition_.start(j), partition_.size(j));
                off += partition_.size(j);
            }
        }
        if (e.size() > 0 && e.norm() > 0.0) {
            Vec full = embed(e, s);
            starts.push_back(full);
            Vec balanced = full;
            bool ok = true;
            for (Index j : s) {
                const double nb = block(balanced, j).norm();
                if (nb > 0.0) block_ref(balanced, j) /= nb;
                else ok = false;
            }
            if (ok) starts.push_back(balanced);
        }
        Rng rng = make_rng(derive_seed(options_.seed, detail::support_hash(s)));
        std::normal_distribution<double> normal(0.0, 1.0);
        for (int t = 0; t < 2; ++t) {
            Vec r = Vec::Zero(d());
            for (Index j : s)
                for (Index k = 0; k < partition_.size(j); ++k) r(partition_.start(j) + k) = normal(rng);
            starts.push_back(r);
        }
        const std::vector<char> all(static_cast<std::size_t>(p()), 1);
        std::size_t best_start = 0;
        double best_value = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < starts.size(); ++t) {
            const double v = ratio(starts[t], s, all, kappa);
            if (v < best_value) {
                best_value = v;
                best_start = t;
            }
        }
        Vec cert = refine(starts[best_start], s, all, nullptr, kappa);
        double value = psi1_objective(cert);
        const double start_value = psi1_objective(starts[best_start]);
        if (start_value < value) {
            cert = starts[best_start];
            value = start_value;
        }
        return Estimate{value, cert, s};
    }

    template <class Eval>
    Estimate best_over(const std::vector<std::vector<Index>>& supports, Eval&& eval) const
    {
        std::vector<double> values(supports.size(), std::numeric_limits<double>::infinity());
        parallel_for(
            supports.size(), [&](std::size_t t) { values[t] = eval(supports[t]).value; }, options_.workers);
        std::size_t arg = 0;
        for (std::size_t t = 1; t < values.size(); ++t)
            if (values[t] < values[arg]) arg = t;
        return eval(supports[arg]);
    }

    /// kappa ||A beta|| / D(beta) with D summing block norms over flagged groups.
    double ratio(const Vec& beta, const std::vector<Index>& active, const std::vector<char>& den_flags, double kappa) const
    {
        double den = 0.0;
        for (Index j = 0; j < p(); ++j)
            if (den_flags[static_cast<std::size_t>(j)]) den += block(beta, j).norm();
        if (!(den > 0.0)) return std::numeric_limits<double>::infinity();
        return kappa * apply(beta, active).norm() / den;
    }

    /// Normalized projected-gradient descent on ratio(); the cone is enforced by shrinking
    /// the off-support part onto its boundary, and the scale by fixing ||beta||_{2,1} = 1.
    Vec refine(Vec beta, const std::vector<Index>& active, const std::vector<char>& den_flags,
               const std::vector<Index>* cone, double kappa) const
    {
        std::vector<char> in_s;
        if (cone) in_s = membership(*cone);
        auto project = [&](Vec& b) {
            if (cone) {
                double ns = 0.0, nc = 0.0;
                for (Index j = 0; j < p(); ++j) (in_s[static_cast<std::size_t>(j)] ? ns : nc) += block(b, j).norm();
                const double limit = options_.cone_constant * ns;
                if (nc > limit) {
                    const double shrink = nc > 0.0 ? limit / nc : 0.0;
                    for (Index j = 0; j < p(); ++j)
                        if (!in_s[static_cast<std::size_t>(j)]) block_ref(b, j) *= shrink;
                }
            }
            const double total = l21_norm(b, partition_);
            if (total > 0.0) b /= total;
        };
        project(beta);
        double f = ratio(beta, active, den_flags, kappa);
        double eta = options_.refine_step;
        for (Index step = 0; step < options_.refine_steps && eta > 1e-12 && std::isfinite(f); ++step) {
            const Vec r = apply(beta, active);
            const double num = r.norm();
            if (!(num > 0.0)) break;
            double den = 0.0;
            for (Index j = 0; j < p(); ++j)
                if (den_flags[static_cast<std::size_t>(j)]) den += block(beta, j).norm();
            const Vec a = apply_t(r, active) / num;
            Vec g = Vec::Zero(d());
            for (Index j : active) {
                auto gj = block_ref(g, j);
                gj = block(a, j) / den;
                const double nb = block(beta, j).norm();
                if (den_flags[static_cast<std::size_t>(j)] && nb > 0.0) gj -= (num / (den * den)) * block(beta, j) / nb;
                gj *= kappa;
            }
            const double gn = g.norm();
            if (!(gn > 0.0)) break;
            Vec cand = beta - (eta * beta.norm() / gn) * g;
            project(cand);
            const double fc = ratio(cand, active, den_flags, kappa);
            if (fc < f) {
                beta = std::move(cand);
                f = fc;
                eta = std::min(eta * 1.2, 0.5);
            } else {
                eta *= 0.5;
            }
        }
        return beta;
    }

    GroupPartition partition_;
    GeometryOptions options_;
    double x_star_ = 0.0;
    Mat a_;
    Mat gram_;
    std::vector<Index> all_groups_;
    mutable std::once_flag global_once_;
    mutable Vec global_eig_;
};

// ---- closed-form thresholds and rates -------------------------------------------------

/// xi_0 = s_0 + {4 + 100/phi^2} s_0 / A_4.
inline double xi0(double s0, double phi_s0, double a4)
{
    require(s0 >= 1.0, "xi0 needs s0 >= 1");
    require(phi_s0 > 0.0 && std::isfinite(phi_s0), "xi0 needs phi > 0");
    require(a4 > 0.0, "xi0 needs A4 > 0");
    return s0 + (4.0 + 100.0 / (phi_s0 * phi_s0)) * s0 / a4;
}

/// s_0 + (M_2/A_4)(1 + 33/phi^2) s_0, the group-dimension level of the first theorem.
inline double theorem1_threshold(double s0, double phi_s0, double a4, double m2)
{
    require(m2 > 3.0, "M2 must exceed 3");
    require(s0 >= 0.0, "s0 must be nonnegative");
    require(phi_s0 > 0.0 && std::isfinite(phi_s0), "threshold needs phi > 0");
    require(a4 > 0.0, "threshold needs A4 > 0");
    return s0 + (m2 / a4) * (1.0 + 33.0 / (phi_s0 * phi_s0)) * s0;
}

/// Sparsity level at which psi_1, psi_2 enter the rates: floor(xi_0 + s_0) capped at p.
inline Index rate_level(double xi0_value, Index s0, Index p)
{
    const double level = std::floor(xi0_value + static_cast<double>(s0));
    return std::max<Index>(1, std::min<Index>(p, static_cast<Index>(std::min(level, 1e18))));
}

struct Rates {
    double predictor = 0.0;
    double l2 = 0.0;
    double l21 = 0.0;
};

inline Rates contraction_rates(Index s0, double log_penalty, double x_star, double phi_s0, double psi1, double psi2)
{
    if (!(phi_s0 > 0.0) || !(psi1 > 0.0) || !(psi2 > 0.0))
        throw DegenerateError("a compatibility estimate is zero; contraction rates are undefined");
    require(x_star > 0.0, "||X||_* must be positive");
    const double sd = static_cast<double>(s0);
    Rates r;
    r.predictor = std::sqrt(sd * log_penalty) / (psi1 * phi_s0);
    r.l2 = r.predictor / (psi2 * x_star);
    r.l21 = sd * std::sqrt(log_penalty) / (psi1 * psi1 * phi_s0 * phi_s0 * x_star);
    return r;
}

struct RegimeRatios {
    double b1 = 0.0;
    double b2 = 0.0;
};

inline RegimeRatios regime_ratios(Index s0, double log_penalty, double max_row_block, double x_star, double phi_s0,
                                  double psi1)
{
    require(s0 >= 1, "regime ratios need a nonzero true coefficient");
    if (!(phi_s0 > 0.0) || !(psi1 > 0.0)) throw DegenerateError("a compatibility estimate is zero");
    const double base = static_cast<double>(s0) * std::sqrt(log_penalty) * max_row_block / x_star;
    return RegimeRatios{base / (phi_s0 * phi_s0), base / (psi1 * psi1 * phi_s0 * phi_s0)};
}

struct CompatReport {
    double x_star = 0.0;
    double max_row_block = 0.0;
    double log_penalty = 0.0;
    double cone_constant = 7.0;
    double a4 = 1.0;
    std::vector<Index> support0;
    std::optional<Estimate> phi_s0;
    std::optional<Estimate> phi_mod_s0;
    std::map<Index, Estimate> psi1;
    std::map<Index, Estimate> psi2;
    std::optional<double> xi0;
    std::optional<Index> rate_level;
    std::optional<RegimeRatios> regimes;
    std::optional<Rates> rates;

    Index s0() const { return static_cast<Index>(support0.size()); }
};

/// Full compatibility report at the true model. For beta_0 = 0 only the norms are filled.
inline CompatReport diagnose(const GroupedDesign& design, const TrueModel& truth, const PriorSpec& prior,
                             const GeometryOptions& options = {})
{
    CompatReport rep;
    CompatibilityProblem problem(design, truth, options);
    rep.x_star = problem.x_star();
    rep.max_row_block = max_row_block_norm(design);
    rep.log_penalty = log_dimension_penalty(design.p(), design.n(), design.gbar());
    rep.cone_constant = options.cone_constant;
    rep.a4 = prior.a();
    rep.support0 = truth.support;
    if (truth.support.empty()) return rep;
    auto pair = problem.phi_pair(truth.support);
    rep.phi_s0 = pair.phi;
    rep.phi_mod_s0 = pair.phi_mod;
    rep.xi0 = xi0(static_cast<double>(rep.s0()), pair.phi.value, prior.a());
    rep.rate_level = rate_level(*rep.xi0, rep.s0(), design.p());
    auto profile = problem.psi_profile({1, std::min(rep.s0(), design.p()), *rep.rate_level});
    rep.psi1 = std::move(profile.psi1);
    rep.psi2 = std::move(profile.psi2);
    const double p1 = rep.psi1.at(*rep.rate_level).value;
    const double p2 = rep.psi2.at(*rep.rate_level).value;
    rep.regimes = regime_ratios(rep.s0(), rep.log_penalty, rep.max_row_block, rep.x_star, pair.phi.value, p1);
    rep.rates = contraction_rates(rep.s0(), rep.log_penalty, rep.x_star, pair.phi.value, p1, p2);
    return rep;
}

} // namespace gslogit

#pragma once
#include "core.hpp"
#include "design.hpp"
#include "geometry.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "posterior.hpp"
#include "prior.hpp"
#include "rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace gslogit::verify {

using json = nlohmann::json;

struct CheckReport {
    std::string name;
    Index instances = 0;
    Index violations = 0;
    /// Largest (lhs - rhs) over all tested inequalities; negative means every case had slack.
    double worst_margin = -std::numeric_limits<double>::infinity();
    json tolerances = json::object();
    std::uint64_t seed = 0;
    bool pass = false;
    json details = json::object();

    void record(double margin, double slack)
    {
        ++instances;
        worst_margin = std::max(worst_margin, margin);
        if (!(margin <= slack)) ++violations;
    }
};

inline json to_json(const CheckReport& r)
{
    return json{{"check", r.name},         {"instances", r.instances}, {"violations", r.violations},
                {"worst_margin", r.worst_margin}, {"tolerances", r.tolerances}, {"seed", r.seed},
                {"pass", r.pass},          {"details", r.details}};
}

/// Normal-approximation Monte Carlo slack: k standard errors of a frequency estimate.
inline double frequency_slack(double p, Index n, double k = 3.0)
{
    return k * std::sqrt(std::max(0.0, p * (1.0 - p)) / static_cast<double>(n));
}

// ---- self-concordance -----------------------------------------------------------------

struct EtaDerivatives {
    double eta = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
    double d3 = 0.0;
};

/// eta(t) = log(1 + sum_j exp(w_j + t v_j)) and its first three derivatives from the closed
/// forms of e^eta eta', e^{2 eta} eta'' and the derivative of the latter, with a max shift.
inline EtaDerivatives eta_derivatives(const Vec& v, const Vec& w, double t)
{
    const Index r = v.size();
    Vec a = w + t * v;
    const double top = std::max(0.0, a.maxCoeff());
    const Vec e = (a.array() - top).exp().matrix();
    const double e0 = std::exp(-top);
    const double z = e0 + e.sum();
    double s1 = 0.0, s2 = 0.0, s3 = 0.0, c2 = 0.0, c3 = 0.0;
    for (Index j = 0; j < r; ++j) {
        s1 += v(j) * e(j);
        s2 += v(j) * v(j) * e(j);
        s3 += v(j) * v(j) * v(j) * e(j);
        for (Index k = j + 1; k < r; ++k) {
            const double diff2 = (v(j) - v(k)) * (v(j) - v(k));
            c2 += e(j) * e(k) * diff2;
            c3 += e(j) * e(k) * (v(j) + v(k)) * diff2;
        }
    }
    EtaDerivatives out;
    out.eta = top + std::log(z);
    out.d1 = s1 / z;
    out.d2 = (e0 * s2 + c2) / (z * z);
    out.d3 = (e0 * s3 + c3) / (z * z) - 2.0 * out.d1 * out.d2;
    return out;
}

struct SelfConcordanceConfig {
    Index instances = 1000;
    std::vector<Index> m_values{2, 3, 5};
    double t_min = -5.0;
    double t_max = 5.0;
    double t_step = 0.01;
    double slack = 1e-9;
    double fd_tol = 1e-6;
    std::uint64_t seed = 1;
};

inline CheckReport check_selfconcordance(const SelfConcordanceConfig& cfg)
{
    require(cfg.t_step > 0.0 && cfg.t_step <= 0.01 + 1e-15, "t grid step must be at most 0.01");
    require(cfg.t_min <= -5.0 && cfg.t_max >= 5.0, "t grid must cover [-5, 5]");
    require(!cfg.m_values.empty(), "need at least one category count");
    CheckReport rep;
    rep.name = "selfconcordance";
    rep.seed = cfg.seed;
    rep.tolerances = {{"slack", cfg.slack}, {"finite_difference", cfg.fd_tol}, {"t_step", cfg.t_step}};
    const auto steps = static_cast<Index>(std::llround((cfg.t_max - cfg.t_min) / cfg.t_step));
    Index fd_failures = 0;
    double fd_worst = 0.0;
    Index points = 0;
    for (Index inst = 0; inst < cfg.instances; ++inst) {
        Rng rng = make_rng(derive_seed(cfg.seed, stream::verify), static_cast<std::uint64_t>(inst));
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        const Index m = cfg.m_values[static_cast<std::size_t>(inst) % cfg.m_values.size()];
        const Index r = m - 1;
        Vec v(r), w(r);
        // the first instance of each m is v = 0; the rest mix scales
        const double scale = inst < static_cast<Index>(cfg.m_values.size()) ? 0.0 : std::exp(std::log(0.05) + unif(rng) * std::log(60.0));
        for (Index j = 0; j < r; ++j) {
            v(j) = scale * normal(rng);
            w(j) = 3.0 * normal(rng);
        }
        const double vn = v.norm();
        const double h = vn > 0.0 ? 0.01 / vn : 0.01;
        for (Index k = 0; k <= steps; ++k) {
            const double t = cfg.t_min + static_cast<double>(k) * cfg.t_step;
            const EtaDerivatives e = eta_derivatives(v, w, t);
            rep.record(std::abs(e.d3) - 4.0 * vn * e.d2, cfg.slack);
            ++points;
            // fourth-order central differences of eta (first, second) and of eta'' (third)
            auto eta_at = [&](double s) { return eta_derivatives(v, w, s).eta; };
            auto d2_at = [&](double s) { return eta_derivatives(v, w, s).d2; };
            const double f1 = (-eta_at(t + 2 * h) + 8 * eta_at(t + h) - 8 * eta_at(t - h) + eta_at(t - 2 * h)) / (12 * h);
            const double f2 = (-eta_at(t + 2 * h) + 16 * eta_at(t + h) - 30 * e.eta + 16 * eta_at(t - h) - eta_at(t - 2 * h)) /
                              (12 * h * h);
            const double f3 = (-d2_at(t + 2 * h) + 8 * d2_at(t + h) - 8 * d2_at(t - h) + d2_at(t - 2 * h)) / (12 * h);
            const double sc = std::max(1.0, vn);
            const double err = std::max({std::abs(f1 - e.d1) / sc, std::abs(f2 - e.d2) / (sc * sc),
                                         std::abs(f3 - e.d3) / (sc * sc * sc)});
            fd_worst = std::max(fd_worst, err);
            if (err > cfg.fd_tol) ++fd_failures;
        }
    }
    rep.instances = cfg.instances;
    rep.details = {{"grid_points", points}, {"finite_difference_failures", fd_failures},
                   {"finite_difference_worst_scaled_error", fd_worst}};
    rep.pass = rep.violations == 0 && fd_failures == 0;
    return rep;
}

// ---- likelihood sandwich --------------------------------------------------------------

struct SandwichTerms {
    double lower = 0.0;
    double middle = 0.0;
    double upper = 0.0;
};

/// Both sides of the two-sided bound on the centered log-likelihood ratio at (beta, beta_0).
inline SandwichTerms likelihood_sandwich(const GroupedDesign& design, const Vec& beta, const Vec& beta0)
{
    const TrueModel t = make_true_model(design, beta0);
    const Vec delta = beta - beta0;
    const Vec xd = design.matrix() * delta;
    const double quad_w = std::pow(weighted_norm(xd, t), 2);
    SandwichTerms out;
    out.middle = log_likelihood_ratio_centered(beta, t, design);
    out.lower = quad_w / (2.0 + 4.0 * max_row_block_norm(design) * l21_norm(delta, design.partition()));
    out.upper = 0.5 * xd.squaredNorm();
    return out;
}

struct SandwichConfig {
    Index instances = 1000;
    Index max_n = 50;
    Index max_m = 4;
    Index max_d = 20;
    double coef_bound = 3.0;
    double slack = 1e-9;
    std::uint64_t seed = 2;
};

inline CheckReport check_likelihood_sandwich(const SandwichConfig& cfg)
{
    CheckReport rep;
    rep.name = "likelihood_sandwich";
    rep.seed = cfg.seed;
    rep.tolerances = {{"slack", cfg.slack}};
    double tightest = std::numeric_limits<double>::infinity();
    for (Index inst = 0; inst < cfg.instances; ++inst) {
        Rng rng = make_rng(derive_seed(cfg.seed, stream::verify), static_cast<std::uint64_t>(inst));
        std::uniform_int_distribution<Index> ndist(1, cfg.max_n), mdist(2, cfg.max_m), ddist(1, cfg.max_d), gdist(1, 3);
        std::uniform_real_distribution<double> coef(-cfg.coef_bound, cfg.coef_bound), unif(0.0, 1.0);
        std::normal_distribution<double> normal(0.0, 1.0);
        const Index n = ndist(rng), m = mdist(rng), d = ddist(rng);
        std::vector<Index> sizes;
        for (Index left = d; left > 0;) {
            const Index g = std::min(left, gdist(rng));
            sizes.push_back(g);
            left -= g;
        }
        const double xscale = std::exp(std::log(0.1) + unif(rng) * std::log(20.0));
        Mat x(n * (m - 1), d);
        for (Index i = 0; i < x.rows(); ++i)
            for (Index c = 0; c < d; ++c) x(i, c) = xscale * normal(rng);
        const GroupedDesign design(x, n, m, GroupPartition::from_sizes(sizes));
        Vec beta0(d), beta(d);
        for (Index c = 0; c < d; ++c) beta0(c) = coef(rng);
        const double mode = unif(rng);
        if (mode < 0.05) {
            beta = beta0;
        } else if (mode < 0.3) {
            // local perturbations, where both bounds are tight
            const double eps = std::exp(std::log(1e-4) + unif(rng) * std::log(1e3));
            for (Index c = 0; c < d; ++c) beta(c) = std::clamp(beta0(c) + eps * normal(rng), -cfg.coef_bound, cfg.coef_bound);
        } else {
            for (Index c = 0; c < d; ++c) beta(c) = coef(rng);
        }
        const SandwichTerms s = likelihood_sandwich(design, beta, beta0);
        const double margin = std::max(s.lower - s.middle, s.middle - s.upper);
        rep.record(margin, cfg.slack);
        tightest = std::min(tightest, std::min(s.middle - s.lower, s.upper - s.middle));
    }
    rep.details = {{"smallest_gap", tightest}};
    rep.pass = rep.violations == 0;
    return rep;
}

// ---- tail probability -----------------------------------------------------------------

/// max_j ||X_{.j}^T (Y - mu)||_2 for a stacked residual.
inline double max_group_score(const GroupedDesign& design, const Vec& resid)
{
    const Vec s = design.matrix().transpose() * resid;
    double best = 0.0;
    for (Index j = 0; j < design.p(); ++j)
        best = std::max(best, s.segment(design.partition().start(j), design.partition().size(j)).norm());
    return best;
}

/// 4 ||X||_* sqrt(log p v gbar).
inline double tail_threshold(const GroupedDesign& design)
{
    const double l = std::max(std::log(static_cast<double>(design.p())), static_cast<double>(design.gbar()));
    return 4.0 * x_star_norm(design) * std::sqrt(l);
}

/// (p v n^gbar)^{-3/4}.
inline double tail_bound(const GroupedDesign& design)
{
    return std::exp(-0.75 * log_dimension_penalty(design.p(), design.n(), design.gbar()));
}

struct TailConfig {
    Index n_mc = 100000;
    std::uint64_t seed = 3;
    std::size_t workers = 1;
};

inline CheckReport check_tail_bound(const GroupedDesign& design, const TrueModel& truth, const TailConfig& cfg)
{
    require(cfg.n_mc >= 10000, "tail check needs at least 10^4 replicates");
    CheckReport rep;
    rep.name = "tail_bound";
    rep.seed = cfg.seed;
    const double threshold = tail_threshold(design);
    const double bound = tail_bound(design);
    const Index chunks = 100;
    std::vector<Index> hits(chunks, 0);
    std::vector<double> largest(chunks, 0.0);
    parallel_for(
        static_cast<std::size_t>(chunks),
        [&](std::size_t c) {
            Rng rng = make_rng(derive_seed(cfg.seed, stream::verify), c);
            const Index lo = static_cast<Index>(c) * cfg.n_mc / chunks;
            const Index hi = static_cast<Index>(c + 1) * cfg.n_mc / chunks;
            for (Index k = lo; k < hi; ++k) {
                const ResponseVector y = simulate_responses(truth, rng);
                const double stat = max_group_score(design, y.y - truth.mu);
                largest[c] = std::max(largest[c], stat);
                if (stat > threshold) ++hits[c];
            }
        },
        cfg.workers);
    Index total = 0;
    for (Index h : hits) total += h;
    const double freq = static_cast<double>(total) / static_cast<double>(cfg.n_mc);
    const double slack = frequency_slack(bound, cfg.n_mc);
    rep.instances = 1;
    rep.worst_margin = freq - bound;
    rep.violations = freq > bound + slack ? 1 : 0;
    rep.tolerances = {{"mc_standard_errors", 3}, {"slack", slack}};
    rep.details = {{"n_mc", cfg.n_mc},
                   {"threshold", threshold},
                   {"bound", bound},
                   {"exceedance_frequency", freq},
                   {"largest_statistic", *std::max_element(largest.begin(), largest.end())},
                   {"p", design.p()},
                   {"n", design.n()},
                   {"gbar", design.gbar()}};
    rep.pass = rep.violations == 0;
    return rep;
}

// ---- quadratic-form MGF -----------------------------------------------------------------

/// Independent blocks Z_j, each uniform-with-weights over a finite mean-zero point set.
struct BoundedVectorSpec {
    std::vector<std::vector<Vec>> points;
    std::vector<std::vector<double>> weights;

    Index dim() const
    {
        Index d = 0;
        for (const auto& p : points) d += p.front().size();
        return d;
    }

    void validate() const
    {
        require(!points.empty() && points.size() == weights.size(), "bounded-vector spec needs points and weights per block");
        for (std::size_t j = 0; j < points.size(); ++j) {
            require(!points[j].empty() && points[j].size() == weights[j].size(), "each block needs weighted points");
            Vec mean = Vec::Zero(points[j].front().size());
            double total = 0.0;
            for (std::size_t k = 0; k < points[j].size(); ++k) {
                require(points[j][k].size() == mean.size(), "points in one block must share a dimension");
                require(weights[j][k] >= 0.0, "weights must be nonnegative");
                mean += weights[j][k] * points[j][k];
                total += weights[j][k];
            }
            require(std::abs(total - 1.0) < 1e-12, "block weights must sum to 1");
            require(mean.cwiseAbs().maxCoeff() < 1e-12, "block law must have mean zero");
        }
    }

    /// max over blocks of the largest point norm (b-bar).
    double max_radius() const
    {
        double b = 0.0;
        for (const auto& blk : points)
            for (const Vec& x : blk) b = std::max(b, x.norm());
        return b;
    }

    /// max over blocks of the support diameter (b-tilde).
    double max_diameter() const
    {
        double b = 0.0;
        for (const auto& blk : points)
            for (const Vec& x : blk)
                for (const Vec& y : blk) b = std::max(b, (x - y).norm());
        return b;
    }

    Vec draw(Rng& rng) const
    {
        Vec z(dim());
        Index off = 0;
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (std::size_t j = 0; j < points.size(); ++j) {
            double u = unif(rng);
            std::size_t k = 0;
            while (k + 1 < points[j].size() && u >= weights[j][k]) u -= weights[j][k++];
            z.segment(off, points[j][k].size()) = points[j][k];
            off += points[j][k].size();
        }
        return z;
    }
};

/// exp(t max b-bar^2 tr(Q) / (1 - 2 t max b-tilde^2 ||Q||_sp)).
inline double mgf_bound(const BoundedVectorSpec& spec, const Mat& q, double t)
{
    const double bb = spec.max_radius(), bt = spec.max_diameter();
    const double qn = linalg::spectral_norm(q);
    return std::exp(t * bb * bb * q.trace() / (1.0 - 2.0 * t * bt * bt * qn));
}

/// Largest admissible t: 1 / (2 max b-tilde^2 ||Q||_sp).
inline double mgf_t_limit(const BoundedVectorSpec& spec, const Mat& q)
{
    const double bt = spec.max_diameter();
    const double qn = linalg::spectral_norm(q);
    return qn > 0.0 ? 1.0 / (2.0 * bt * bt * qn) : std::numeric_limits<double>::infinity();
}

struct MgfConfig {
    std::vector<double> t_grid;
    Index n_mc = 100000;
    std::uint64_t seed = 4;
};

inline CheckReport check_mgf_bound(const BoundedVectorSpec& spec, const Mat& q, const MgfConfig& cfg,
                                   const std::string& label = "mgf_bound")
{
    spec.validate();
    require(q.rows() == spec.dim() && q.cols() == spec.dim(), "Q must match the stacked dimension");
    require((q - q.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + q.cwiseAbs().maxCoeff()), "Q must be symmetric");
    if (q.size() > 0) require(linalg::min_eigenvalue(q) >= -1e-10 * (1.0 + q.cwiseAbs().maxCoeff()), "Q must be positive semidefinite");
    const double limit = mgf_t_limit(spec, q);
    for (double t : cfg.t_grid) require(t > 0.0 && t < limit, "t = " + std::to_string(t) + " outside the admissible range");
    require(cfg.n_mc >= 2, "need at least two replicates");
    CheckReport rep;
    rep.name = label;
    rep.seed = cfg.seed;
    rep.tolerances = {{"relative_standard_errors", 3}};
    std::vector<double> forms(static_cast<std::size_t>(cfg.n_mc));
    Rng rng = make_rng(derive_seed(cfg.seed, stream::verify));
    for (auto& f : forms) {
        const Vec z = spec.draw(rng);
        f = z.dot(q * z);
    }
    json rows = json::array();
    for (double t : cfg.t_grid) {
        // mean and sd of exp(t z'Qz) with a max shift for stability
        double top = 0.0;
        for (double f : forms) top = std::max(top, t * f);
        double s1 = 0.0, s2 = 0.0;
        for (double f : forms) {
            const double e = std::exp(t * f - top);
            s1 += e;
            s2 += e * e;
        }
        const double nm = static_cast<double>(cfg.n_mc);
        const double mean_scaled = s1 / nm;
        const double var_scaled = std::max(0.0, (s2 / nm - mean_scaled * mean_scaled) * nm / (nm - 1.0));
        const double rse = std::sqrt(var_scaled / nm) / mean_scaled;
        const double log_est = top + std::log(mean_scaled);
        const double log_bound = std::log(mgf_bound(spec, q, t));
        const double margin = log_est - (log_bound + std::log1p(3.0 * rse));
        rep.record(margin, 0.0);
        rows.push_back({{"t", t}, {"log_mgf_estimate", log_est}, {"log_bound", log_bound}, {"relative_se", rse}});
    }
    rep.details = {{"n_mc", cfg.n_mc}, {"t_limit", limit}, {"grid", rows}};
    rep.pass = rep.violations == 0;
    return rep;
}

/// n independent Rademacher scalars.
inline BoundedVectorSpec rademacher_spec(Index n)
{
    BoundedVectorSpec s;
    for (Index j = 0; j < n; ++j) {
        s.points.push_back({Vec::Constant(1, -1.0), Vec::Constant(1, 1.0)});
        s.weights.push_back({0.5, 0.5});
    }
    return s;
}

/// n centered two-point laws in R^2 with random atoms and weights.
inline BoundedVectorSpec two_point_spec(Index n, std::uint64_t seed)
{
    Rng rng = make_rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.2, 0.8);
    BoundedVectorSpec s;
    for (Index j = 0; j < n; ++j) {
        const double w = unif(rng);
        Vec dir(2);
        dir << normal(rng), normal(rng);
        // atoms a and -w a / (1 - w) keep the mean at zero
        const Vec a = dir;
        const Vec b = -(w / (1.0 - w)) * dir;
        s.points.push_back({a, b});
        s.weights.push_back({w, 1.0 - w});
    }
    return s;
}

/// Residual blocks Y_i - mu_i of n multinomial observations with the given means.
inline BoundedVectorSpec multinomial_residual_spec(const TrueModel& truth)
{
    const Index r = truth.m - 1;
    const Index n = truth.mu.size() / r;
    BoundedVectorSpec s;
    for (Index i = 0; i < n; ++i) {
        const Vec mu = truth.mu.segment(i * r, r);
        std::vector<Vec> pts{-mu};
        std::vector<double> wts{1.0 - mu.sum()};
        for (Index l = 0; l < r; ++l) {
            Vec e = -mu;
            e(l) += 1.0;
            pts.push_back(e);
            wts.push_back(mu(l));
        }
        s.points.push_back(std::move(pts));
        s.weights.push_back(std::move(wts));
    }
    return s;
}

// ---- design scaling -------------------------------------------------------------------

struct ScalingConfig {
    std::vector<Index> n_grid{200, 800, 3200};
    Index n_rep = 20;
    double lower = 0.5;
    double upper = 2.5;
    std::uint64_t seed = 5;
};

/// ||X||_* / sqrt(n(m-1)) over replicated random designs. `partition_for(n)` gives the
/// group structure at each n.
template <class PartitionFor>
CheckReport check_xstar_scaling(PartitionFor&& partition_for, Index m, EntryLaw law, const ScalingConfig& cfg)
{
    require(cfg.n_grid.size() >= 2, "scaling check needs at least two sample sizes");
    require(std::is_sorted(cfg.n_grid.begin(), cfg.n_grid.end()), "n grid must be increasing");
    CheckReport rep;
    rep.name = "xstar_scaling";
    rep.seed = cfg.seed;
    rep.tolerances = {{"window", {cfg.lower, cfg.upper}}};
    json rows = json::array();
    std::vector<double> spreads;
    for (std::size_t k = 0; k < cfg.n_grid.size(); ++k) {
        const Index n = cfg.n_grid[k];
        const GroupPartition part = partition_for(n);
        double lo = std::numeric_limits<double>::infinity(), hi = -lo, sum = 0.0;
        for (Index rep_i = 0; rep_i < cfg.n_rep; ++rep_i) {
            const std::uint64_t s = derive_seed(derive_seed(cfg.seed, static_cast<std::uint64_t>(n)), static_cast<std::uint64_t>(rep_i));
            const GroupedDesign design = random_subgaussian_design(n, m, part, law, s);
            const double ratio = x_star_norm(design) / std::sqrt(static_cast<double>(n * (m - 1)));
            lo = std::min(lo, ratio);
            hi = std::max(hi, ratio);
            sum += ratio;
            if (k + 2 >= cfg.n_grid.size()) rep.record(std::max(cfg.lower - ratio, ratio - cfg.upper), 0.0);
        }
        spreads.push_back(hi - lo);
        rows.push_back({{"n", n}, {"p", part.count()}, {"min", lo}, {"max", hi}, {"mean", sum / static_cast<double>(cfg.n_rep)},
                        {"spread", hi - lo}});
    }
    bool shrinking = true;
    for (std::size_t k = 1; k < spreads.size(); ++k)
        shrinking = shrinking && (spreads[k] < spreads[k - 1] || (spreads[k] == 0.0 && spreads[k - 1] == 0.0));
    rep.details = {{"law", to_string(law)}, {"m", m}, {"grid", rows}, {"spread_shrinking", shrinking}};
    rep.pass = rep.violations == 0 && shrinking;
    return rep;
}

// ---- evidence lower bound ---------------------------------------------------------------

/// Log of e^{-1/128} e^{-lambda ||beta_0||_{2,1}} pi_p(s_0) (p v n^gbar)^{-3 s_0}; s_0 = 0 for
/// beta_0 = 0 extends the bound continuously.
inline double log_evidence_lower_bound(const Vec& beta0, const GroupPartition& partition, const PriorSpec& prior)
{
    const Index s0 = group_count(beta0, partition);
    return -1.0 / 128.0 - prior.lambda() * l21_norm(beta0, partition) + prior.log_pi_p(s0) -
           3.0 * static_cast<double>(s0) * prior.log_base();
}

/// log int (f_beta / f_0)(Y) d Pi(beta), by exact enumeration and quadrature.
inline double log_evidence_ratio(const ResponseVector& y, const GroupedDesign& design, const PriorSpec& prior,
                                 const Vec& beta0, const OracleConfig& oracle = {})
{
    const OracleResult res = exact_oracle(y, design, prior, oracle);
    return res.log_marginal - log_likelihood(beta0, design, y);
}

struct EvidenceConfig {
    Index datasets = 20;
    OracleConfig oracle;
    std::uint64_t seed = 6;
};

inline CheckReport check_evidence_lower_bound(const GroupedDesign& design, const Vec& beta0, const PriorSpec& prior,
                                              const EvidenceConfig& cfg)
{
    const Index d0 = design.partition().dim_of(SparseCoef::sparsify(beta0, design.partition()).support);
    require(d0 <= design.n(), "the evidence bound needs d_0 <= n");
    CheckReport rep;
    rep.name = "evidence_lower_bound";
    rep.seed = cfg.seed;
    rep.tolerances = {{"oracle_rel_tol", cfg.oracle.rel_tol}};
    const TrueModel truth = make_true_model(design, beta0);
    const double bound = log_evidence_lower_bound(beta0, design.partition(), prior);
    json rows = json::array();
    for (Index k = 0; k < cfg.datasets; ++k) {
        const ResponseVector y = simulate_responses(truth, derive_seed(cfg.seed, static_cast<std::uint64_t>(k)));
        const double ev = log_evidence_ratio(y, design, prior, beta0, cfg.oracle);
        // relative quadrature error on the evidence becomes an absolute error on its log
        rep.record(bound - ev, 10.0 * cfg.oracle.rel_tol);
        rows.push_back({{"dataset", k}, {"log_evidence", ev}});
    }
    rep.details = {{"log_bound", bound}, {"s0", truth.s0()}, {"datasets", rows},
                   {"s0_zero_extension", truth.s0() == 0}};
    rep.pass = rep.violations == 0;
    return rep;
}

// ---- sampler validation ---------------------------------------------------------------

struct SamplerValidation {
    bool ran = false;
    bool ok = false;
    double max_inclusion_error = 0.0;
    double s_law_tv = 0.0;
    double tolerance = 0.02;
};

inline json to_json(const SamplerValidation& v)
{
    if (!v.ran) return json{{"status", "absent"}};
    return json{{"status", v.ok ? "validated" : "failed"},
                {"max_inclusion_error", v.max_inclusion_error},
                {"s_law_total_variation", v.s_law_tv},
                {"tolerance", v.tolerance}};
}

/// Small instance inside the oracle caps: n = 40, three singleton groups, m = 2.
struct OracleInstance {
    GroupedDesign design;
    Vec beta0;
    ResponseVector y;
    PriorSpec prior;
};

inline OracleInstance oracle_instance(std::uint64_t seed, std::optional<double> lambda_override, double a = 1.0,
                                      double signal = 1.0)
{
    const Index n = 40;
    GroupedDesign design = random_subgaussian_design(n, 2, GroupPartition::singletons(3), EntryLaw::gaussian,
                                                     derive_seed(seed, stream::design));
    Vec beta0 = Vec::Zero(3);
    beta0(0) = signal;
    beta0(1) = -0.5 * signal;
    const TrueModel truth = make_true_model(design, beta0);
    ResponseVector y = simulate_responses(truth, derive_seed(seed, stream::response));
    PriorSpec prior = PriorSpec::from_design(design, a, lambda_override);
    return OracleInstance{std::move(design), std::move(beta0), std::move(y), std::move(prior)};
}

struct SamplerComparison {
    OracleResult oracle;
    PosteriorSummary mcmc;
    double max_inclusion_error = 0.0;
    double s_law_tv = 0.0;
};

inline SamplerComparison compare_sampler_to_oracle(const OracleInstance& inst, const SamplerConfig& sampler,
                                                   const OracleConfig& oracle = {})
{
    SamplerComparison out;
    out.oracle = exact_oracle(inst.y, inst.design, inst.prior, oracle);
    const PosteriorSample sample = mcmc_run(inst.y, inst.design, inst.prior, sampler);
    out.mcmc = summarize(sample, make_true_model(inst.design, inst.beta0), inst.design);
    out.max_inclusion_error = (out.mcmc.inclusion - out.oracle.inclusion).cwiseAbs().maxCoeff();
    out.s_law_tv = 0.5 * (out.mcmc.s_law - out.oracle.s_law).cwiseAbs().sum();
    return out;
}

/// Runs the sampler configuration on a discriminating oracle instance (lambda = 1, A = 1/2, signal 2).
inline SamplerValidation validate_sampler(const SamplerConfig& sampler, std::uint64_t seed)
{
    SamplerValidation v;
    v.ran = true;
    const OracleInstance inst = oracle_instance(seed, 1.0, 0.5, 2.0);
    SamplerConfig cfg = sampler;
    cfg.seed = derive_seed(seed, stream::sampler);
    const SamplerComparison cmp = compare_sampler_to_oracle(inst, cfg);
    v.max_inclusion_error = cmp.max_inclusion_error;
    v.s_law_tv = cmp.s_law_tv;
    v.ok = v.max_inclusion_error <= v.tolerance && v.s_law_tv <= v.tolerance;
    return v;
}

// ---- theorem experiments --------------------------------------------------------------

struct ExperimentConfig {
    std::vector<Index> n_grid{100, 200, 400, 800};
    Index m = 3;
    Index s0 = 2;
    /// Group size; with the multinomial construction it must equal m - 1.
    Index group_size = 2;
    /// p = p_factor * n / gbar.
    double p_factor = 2.0;
    double signal = 1.0;
    double a = 1.0;
    std::optional<double> lambda_override;
    double m2 = 4.0;
    /// "multinomial" (common covariates, Kronecker blocks) or "subgaussian".
    std::string design = "multinomial";
    EntryLaw law = EntryLaw::gaussian;
    SamplerConfig sampler;
    GeometryOptions geometry;
    bool validate_sampler = true;
    std::uint64_t seed = 7;
    double quantile_level = 0.9;
    double bounded_factor = 3.0;
    double exceedance_limit = 0.05;
};

struct ExperimentInstance {
    GroupedDesign design;
    TrueModel truth;
    ResponseVector y;
    PriorSpec prior;
};

inline ExperimentInstance experiment_instance(const ExperimentConfig& cfg, Index n)
{
    require(cfg.m >= 2 && cfg.s0 >= 0 && cfg.group_size >= 1, "experiment needs m >= 2, s0 >= 0, group size >= 1");
    const Index p = std::max<Index>(cfg.s0, static_cast<Index>(std::llround(cfg.p_factor * static_cast<double>(n) /
                                                                            static_cast<double>(cfg.group_size))));
    const std::uint64_t seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(n));
    std::optional<GroupedDesign> design;
    if (cfg.design == "multinomial") {
        require(cfg.group_size == cfg.m - 1, "the multinomial construction has groups of size m - 1");
        Rng rng = make_rng(seed, stream::design);
        design.emplace(build_multinomial_design(random_matrix(n, p, cfg.law, rng), cfg.m));
    } else if (cfg.design == "subgaussian") {
        design.emplace(random_subgaussian_design(n, cfg.m, GroupPartition::uniform(p, cfg.group_size), cfg.law, seed));
    } else {
        throw InputError("unknown experiment design '" + cfg.design + "' (expected multinomial or subgaussian)");
    }
    Vec beta0 = Vec::Zero(design->d());
    Rng rng = make_rng(seed, stream::truth);
    std::bernoulli_distribution sign(0.5);
    for (Index j = 0; j < cfg.s0; ++j)
        for (Index c : design->partition().members(j)) beta0(c) = sign(rng) ? cfg.signal : -cfg.signal;
    TrueModel truth = make_true_model(*design, beta0);
    ResponseVector y = simulate_responses(truth, seed);
    PriorSpec prior = PriorSpec::from_design(*design, cfg.a, cfg.lambda_override);
    return ExperimentInstance{std::move(*design), std::move(truth), std::move(y), std::move(prior)};
}

struct ExperimentRow {
    Index n = 0;
    Index p = 0;
    Index d = 0;
    double lambda = 0.0;
    CompatReport compat;
    double threshold = 0.0;
    double exceedance = 0.0;
    PosteriorSummary summary;
    double q_l2 = 0.0;
    double q_l21 = 0.0;
    double q_predictor = 0.0;
    double median_l2 = 0.0;
    std::array<double, 4> acceptance{};
    double tau = 0.0;
};

struct ExperimentReport {
    std::string kind;
    ExperimentConfig config;
    std::vector<ExperimentRow> rows;
    SamplerValidation validation;
    json assertions = json::object();
    bool pass = false;
    std::vector<std::string> warnings;
};

inline ExperimentRow experiment_row(const ExperimentConfig& cfg, Index n)
{
    const ExperimentInstance inst = experiment_instance(cfg, n);
    ExperimentRow row;
    row.n = n;
    row.p = inst.design.p();
    row.d = inst.design.d();
    row.lambda = inst.prior.lambda();
    GeometryOptions geo = cfg.geometry;
    geo.seed = derive_seed(cfg.seed ^ geo.seed, stream::geometry + static_cast<std::uint64_t>(n));
    row.compat = diagnose(inst.design, inst.truth, inst.prior, geo);
    // a signal-free truth has s_0 = 0 and the threshold collapses to 0
    row.threshold = inst.truth.s0() == 0 ? 0.0
                                         : theorem1_threshold(static_cast<double>(inst.truth.s0()), row.compat.phi_s0->value, cfg.a, cfg.m2);
    SamplerConfig sc = cfg.sampler;
    sc.seed = derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(n));
    const PosteriorSample sample = mcmc_run(inst.y, inst.design, inst.prior, sc);
    row.summary = summarize(sample, inst.truth, inst.design);
    for (Index k = 0; k < row.summary.s_law.size(); ++k)
        if (static_cast<double>(k) > row.threshold) row.exceedance += row.summary.s_law(k);
    row.q_l2 = row.summary.l2_quantile(cfg.quantile_level);
    row.q_l21 = row.summary.l21_quantile(cfg.quantile_level);
    row.q_predictor = row.summary.predictor_quantile(cfg.quantile_level);
    row.median_l2 = row.summary.l2_quantile(0.5);
    MoveCounts total;
    for (const auto& c : sample.counts)
        for (std::size_t k = 0; k < 4; ++k) {
            total.proposed[k] += c.proposed[k];
            total.accepted[k] += c.accepted[k];
        }
    for (std::size_t k = 0; k < 4; ++k)
        row.acceptance[k] = total.proposed[k] > 0 ? static_cast<double>(total.accepted[k]) / static_cast<double>(total.proposed[k]) : 0.0;
    row.tau = sample.tau.empty() ? 0.0 : sample.tau.front();
    return row;
}

/// Per-n rows shared by both theorem experiments, plus the sampler validation status.
struct ExperimentRun {
    ExperimentConfig config;
    std::vector<ExperimentRow> rows;
    SamplerValidation validation;
};

inline ExperimentRun run_experiment_rows(const ExperimentConfig& cfg)
{
    require(!cfg.n_grid.empty() && std::is_sorted(cfg.n_grid.begin(), cfg.n_grid.end()), "n grid must be nonempty and increasing");
    require(cfg.m2 > 3.0, "M2 must exceed 3");
    ExperimentRun run;
    run.config = cfg;
    for (Index n : cfg.n_grid) run.rows.push_back(experiment_row(cfg, n));
    if (cfg.validate_sampler) run.validation = validate_sampler(cfg.sampler, derive_seed(cfg.seed, 0x76616cULL));
    return run;
}

/// Evaluates the trend assertions of `kind` ("dimension" or "contraction") on shared rows.
inline ExperimentReport assess_experiment(const std::string& kind, const ExperimentRun& run)
{
    require(kind == "dimension" || kind == "contraction", "experiment kind must be dimension or contraction");
    const ExperimentConfig& cfg = run.config;
    ExperimentReport rep;
    rep.kind = kind;
    rep.config = cfg;
    rep.rows = run.rows;
    rep.validation = run.validation;
    if (!rep.validation.ran) rep.warnings.push_back("sampler validation absent for this configuration");
    else if (!rep.validation.ok) rep.warnings.push_back("sampler configuration failed its oracle validation");
    const std::size_t k = rep.rows.size();
    if (kind == "dimension") {
        bool nonincreasing = true;
        for (std::size_t i = k / 2 + 1; i < k; ++i) nonincreasing = nonincreasing && rep.rows[i].exceedance <= rep.rows[i - 1].exceedance;
        const bool small = rep.rows.back().exceedance < cfg.exceedance_limit;
        rep.assertions = {{"exceedance_nonincreasing_top_half", nonincreasing}, {"exceedance_below_limit_at_largest_n", small}};
        rep.pass = nonincreasing && small;
    } else {
        bool decreasing = true;
        for (std::size_t i = 1; i < k; ++i) decreasing = decreasing && rep.rows[i].q_l2 < rep.rows[i - 1].q_l2;
        auto bounded = [&](auto metric, auto rate) {
            for (const auto& r : rep.rows)
                if (!r.compat.rates) return false;
            const double first = metric(rep.rows.front()) / rate(rep.rows.front());
            double worst = first;
            for (const auto& r : rep.rows) worst = std::max(worst, metric(r) / rate(r));
            return worst <= cfg.bounded_factor * first;
        };
        const bool b_l2 = bounded([](const ExperimentRow& r) { return r.q_l2; }, [](const ExperimentRow& r) { return r.compat.rates->l2; });
        const bool b_l21 = bounded([](const ExperimentRow& r) { return r.q_l21; }, [](const ExperimentRow& r) { return r.compat.rates->l21; });
        const bool b_pred = bounded([](const ExperimentRow& r) { return r.q_predictor; },
                                    [](const ExperimentRow& r) { return r.compat.rates->predictor; });
        rep.assertions = {{"l2_quantile_strictly_decreasing", decreasing},
                          {"normalized_l2_bounded", b_l2},
                          {"normalized_l21_bounded", b_l21},
                          {"normalized_predictor_bounded", b_pred}};
        rep.pass = decreasing && b_l2 && b_l21 && b_pred;
    }
    return rep;
}

inline ExperimentReport run_dimension_experiment(const ExperimentConfig& cfg)
{
    return assess_experiment("dimension", run_experiment_rows(cfg));
}

inline ExperimentReport run_contraction_experiment(const ExperimentConfig& cfg)
{
    return assess_experiment("contraction", run_experiment_rows(cfg));
}

inline json to_json(const Estimate& e)
{
    std::vector<double> cert(e.certificate.data(), e.certificate.data() + e.certificate.size());
    return json{{"value", e.value}, {"support", e.support}, {"certificate", cert}};
}

inline json to_json(const CompatReport& r)
{
    json out{{"x_star", r.x_star},           {"max_row_block", r.max_row_block}, {"log_penalty", r.log_penalty},
             {"cone_constant", r.cone_constant}, {"A4", r.a4},                   {"support0", r.support0},
             {"s0", r.s0()}};
    if (r.phi_s0) out["phi_S0"] = to_json(*r.phi_s0);
    if (r.phi_mod_s0) out["phi_mod_S0"] = to_json(*r.phi_mod_s0);
    json p1 = json::object(), p2 = json::object();
    for (const auto& [s, e] : r.psi1) p1[std::to_string(s)] = to_json(e);
    for (const auto& [s, e] : r.psi2) p2[std::to_string(s)] = to_json(e);
    out["psi1"] = p1;
    out["psi2"] = p2;
    if (r.xi0) out["xi0"] = *r.xi0;
    if (r.rate_level) out["rate_level"] = *r.rate_level;
    if (r.regimes) out["regime_ratio_B1"] = r.regimes->b1, out["regime_ratio_B2"] = r.regimes->b2;
    if (r.rates) out["rate_predictor"] = r.rates->predictor, out["rate_l2"] = r.rates->l2, out["rate_l21"] = r.rates->l21;
    return out;
}

inline json to_json(const ExperimentReport& r)
{
    json rows = json::array();
    for (const auto& row : r.rows) {
        json jr{{"n", row.n},
                {"p", row.p},
                {"d", row.d},
                {"lambda", row.lambda},
                {"x_star", row.compat.x_star},
                {"phi_S0", row.compat.phi_s0 ? row.compat.phi_s0->value : 0.0},
                {"xi0", row.compat.xi0 ? *row.compat.xi0 : 0.0},
                {"theorem1_threshold", row.threshold},
                {"regime_ratio_B1", row.compat.regimes ? row.compat.regimes->b1 : 0.0},
                {"regime_ratio_B2", row.compat.regimes ? row.compat.regimes->b2 : 0.0},
                {"exceedance", row.exceedance},
                {"quantile_l2", row.q_l2},
                {"quantile_l21", row.q_l21},
                {"quantile_predictor", row.q_predictor},
                {"median_l2", row.median_l2},
                {"s_law", std::vector<double>(row.summary.s_law.data(), row.summary.s_law.data() + row.summary.s_law.size())},
                {"acceptance", {{"add", row.acceptance[0]}, {"remove", row.acceptance[1]}, {"swap", row.acceptance[2]},
                                {"within", row.acceptance[3]}}},
                {"tau", row.tau}};
        if (row.compat.rates) {
            jr["rate_predictor"] = row.compat.rates->predictor;
            jr["rate_l2"] = row.compat.rates->l2;
            jr["rate_l21"] = row.compat.rates->l21;
            jr["normalized_l2"] = row.q_l2 / row.compat.rates->l2;
            jr["normalized_l21"] = row.q_l21 / row.compat.rates->l21;
            jr["normalized_predictor"] = row.q_predictor / row.compat.rates->predictor;
            jr["psi1"] = row.compat.psi1.at(*row.compat.rate_level).value;
            jr["psi2"] = row.compat.psi2.at(*row.compat.rate_level).value;
        }
        rows.push_back(jr);
    }
    return json{{"experiment", r.kind},
                {"rows", rows},
                {"sampler_validation", to_json(r.validation)},
                {"assertions", r.assertions},
                {"warnings", r.warnings},
                {"pass", r.pass}};
}

} // namespace gslogit::verify

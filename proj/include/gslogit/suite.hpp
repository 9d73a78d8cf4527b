#pragma once
#include "verify.hpp"

#include <string>
#include <vector>

// Standard instances for each inequality check, shared by the verify subcommand and the
// acceptance binary.
namespace gslogit::suite {

using verify::CheckReport;
using verify::json;

struct SuiteOptions {
    std::uint64_t seed = 1;
    Index instances = 1000;
    Index n_mc = 100000;
    Index datasets = 20;
    Index replicates = 20;
    std::size_t workers = 1;
};

/// Folds sub-reports into one: counts add, margins take the max, pass needs every part.
inline CheckReport merge(const std::string& name, const std::vector<CheckReport>& parts, std::uint64_t seed)
{
    CheckReport out;
    out.name = name;
    out.seed = seed;
    out.pass = true;
    json sub = json::array();
    for (const auto& r : parts) {
        out.instances += r.instances;
        out.violations += r.violations;
        out.worst_margin = std::max(out.worst_margin, r.worst_margin);
        out.pass = out.pass && r.pass;
        sub.push_back(verify::to_json(r));
        if (out.tolerances.empty()) out.tolerances = r.tolerances;
    }
    out.details = {{"parts", sub}};
    return out;
}

inline CheckReport selfconcordance(const SuiteOptions& o)
{
    verify::SelfConcordanceConfig c;
    c.instances = o.instances;
    c.seed = derive_seed(o.seed, 1);
    return verify::check_selfconcordance(c);
}

inline CheckReport likelihood_sandwich(const SuiteOptions& o)
{
    verify::SandwichConfig c;
    c.instances = o.instances;
    c.seed = derive_seed(o.seed, 2);
    return verify::check_likelihood_sandwich(c);
}

/// p = 50, n = 100: singleton groups (gbar = 1) with a mild and a +-5 true coefficient, and
/// a three-category multinomial design (gbar = 2).
inline CheckReport tail_bound(const SuiteOptions& o)
{
    const std::uint64_t base = derive_seed(o.seed, 3);
    const Index n = 100, p = 50;
    std::vector<CheckReport> parts;
    verify::TailConfig tc;
    tc.n_mc = o.n_mc;
    tc.workers = o.workers;
    {
        const GroupedDesign design = random_subgaussian_design(n, 2, GroupPartition::singletons(p), EntryLaw::gaussian, derive_seed(base, 10));
        Vec beta0 = Vec::Zero(p);
        beta0.head(3) << 0.5, -0.5, 0.25;
        tc.seed = derive_seed(base, 11);
        auto r = verify::check_tail_bound(design, make_true_model(design, beta0), tc);
        r.name = "tail_bound_gbar1";
        parts.push_back(r);
        Rng rng = make_rng(derive_seed(base, 12));
        std::bernoulli_distribution coin(0.5);
        Vec big(p);
        for (Index c = 0; c < p; ++c) big(c) = coin(rng) ? 5.0 : -5.0;
        tc.seed = derive_seed(base, 13);
        r = verify::check_tail_bound(design, make_true_model(design, big), tc);
        r.name = "tail_bound_gbar1_pm5";
        parts.push_back(r);
    }
    {
        Rng rng = make_rng(derive_seed(base, 20));
        const GroupedDesign design = build_multinomial_design(random_matrix(n, p, EntryLaw::gaussian, rng), 3);
        Vec beta0 = Vec::Zero(design.d());
        beta0.head(4) << 0.5, -0.5, 0.25, 0.25;
        tc.seed = derive_seed(base, 21);
        auto r = verify::check_tail_bound(design, make_true_model(design, beta0), tc);
        r.name = "tail_bound_gbar2";
        parts.push_back(r);
    }
    return merge("tail_bound", parts, o.seed);
}

/// Random PSD matrix B'B / k with B k x d Gaussian.
inline Mat random_psd(Index d, Index k, std::uint64_t seed)
{
    Rng rng = make_rng(seed);
    const Mat b = random_matrix(k, d, EntryLaw::gaussian, rng);
    Mat q = b.transpose() * b / static_cast<double>(k);
    return 0.5 * (q + q.transpose());
}

/// Five admissible t values (fractions of the limit) on three bounded-vector laws.
inline CheckReport mgf_bound(const SuiteOptions& o)
{
    const std::uint64_t base = derive_seed(o.seed, 4);
    const std::vector<double> fractions{0.05, 0.2, 0.4, 0.6, 0.8};
    std::vector<CheckReport> parts;
    auto run = [&](const verify::BoundedVectorSpec& spec, const Mat& q, const std::string& label, std::uint64_t s) {
        verify::MgfConfig c;
        const double limit = verify::mgf_t_limit(spec, q);
        for (double f : fractions) c.t_grid.push_back(f * limit);
        c.n_mc = o.n_mc;
        c.seed = s;
        parts.push_back(verify::check_mgf_bound(spec, q, c, label));
    };
    run(verify::rademacher_spec(20), Mat::Identity(20, 20), "mgf_rademacher_identity", derive_seed(base, 1));
    run(verify::two_point_spec(10, derive_seed(base, 2)), random_psd(20, 5, derive_seed(base, 3)), "mgf_two_point_r2",
        derive_seed(base, 4));
    {
        const GroupedDesign design = random_subgaussian_design(10, 3, GroupPartition::singletons(4), EntryLaw::gaussian, derive_seed(base, 5));
        Vec beta0(4);
        beta0 << 1.0, -0.5, 0.5, 0.0;
        const verify::BoundedVectorSpec spec = verify::multinomial_residual_spec(make_true_model(design, beta0));
        run(spec, random_psd(spec.dim(), 8, derive_seed(base, 6)), "mgf_multinomial_residual", derive_seed(base, 7));
    }
    return merge("mgf_bound", parts, o.seed);
}

/// p = 25 groups of size 2, m = 2, Gaussian and Rademacher entries, n in {200, 800, 3200}.
/// Singleton Rademacher columns would have norm exactly sqrt(n).
inline CheckReport xstar_scaling(const SuiteOptions& o)
{
    const std::uint64_t base = derive_seed(o.seed, 5);
    verify::ScalingConfig c;
    c.n_rep = o.replicates;
    std::vector<CheckReport> parts;
    auto part = [](Index) { return GroupPartition::uniform(25, 2); };
    c.seed = derive_seed(base, 1);
    auto g = verify::check_xstar_scaling(part, 2, EntryLaw::gaussian, c);
    g.name = "xstar_scaling_gaussian";
    parts.push_back(g);
    c.seed = derive_seed(base, 2);
    auto r = verify::check_xstar_scaling(part, 2, EntryLaw::rademacher, c);
    r.name = "xstar_scaling_rademacher";
    parts.push_back(r);
    return merge("xstar_scaling", parts, o.seed);
}

/// p = 3 singleton groups, n = 30, m = 2, s_0 = 1, default slab scale.
inline CheckReport evidence_lower_bound(const SuiteOptions& o)
{
    const std::uint64_t base = derive_seed(o.seed, 6);
    const GroupedDesign design = random_subgaussian_design(30, 2, GroupPartition::singletons(3), EntryLaw::gaussian, derive_seed(base, 1));
    Vec beta0 = Vec::Zero(3);
    beta0(0) = 1.0;
    const PriorSpec prior = PriorSpec::from_design(design);
    verify::EvidenceConfig c;
    c.datasets = o.datasets;
    c.seed = derive_seed(base, 2);
    return verify::check_evidence_lower_bound(design, beta0, prior, c);
}

inline const std::vector<std::string>& check_names()
{
    static const std::vector<std::string> names{"selfconcordance", "likelihood_sandwich", "tail_bound",
                                                "mgf_bound",       "xstar_scaling",       "evidence_lower_bound"};
    return names;
}

inline CheckReport run_check(const std::string& name, const SuiteOptions& o)
{
    if (name == "selfconcordance") return selfconcordance(o);
    if (name == "likelihood_sandwich") return likelihood_sandwich(o);
    if (name == "tail_bound") return tail_bound(o);
    if (name == "mgf_bound") return mgf_bound(o);
    if (name == "xstar_scaling") return xstar_scaling(o);
    if (name == "evidence_lower_bound") return evidence_lower_bound(o);
    throw InputError("unknown check '" + name + "'");
}

} // namespace gslogit::suite

// Simulate a small grouped multinomial problem, sample its posterior and print the
// compatibility report at the true coefficient.
#include <gslogit/gslogit.hpp>

#include <iostream>

int main()
{
    using namespace gslogit;
    const Index n = 150, covariates = 12, m = 3;
    Rng rng = make_rng(42, stream::design);
    const GroupedDesign design = build_multinomial_design(random_matrix(n, covariates, EntryLaw::gaussian, rng), m);

    Vec beta0 = Vec::Zero(design.d());
    beta0.head(2) << 1.5, -1.0;
    const TrueModel truth = make_true_model(design, beta0);
    const ResponseVector y = simulate_responses(truth, derive_seed(42, stream::response));

    // the default slab scale is very conservative at this size; use a lighter one
    const PriorSpec prior = PriorSpec::from_design(design, 1.0, 2.0);
    SamplerConfig sc;
    sc.n_iter = 50000;
    sc.burn_in = 5000;
    sc.seed = 42;
    const PosteriorSample sample = mcmc_run(y, design, prior, sc);
    const PosteriorSummary post = summarize(sample, truth, design);

    std::cout << "lambda " << prior.lambda() << "\ninclusion";
    for (Index j = 0; j < design.p(); ++j) std::cout << ' ' << post.inclusion(j);
    std::cout << "\nmedian l2 distance " << post.l2_quantile(0.5) << '\n';

    GeometryOptions geo;
    geo.search_samples = 5000;
    geo.refine_steps = 200;
    const CompatReport rep = diagnose(design, truth, prior, geo);
    std::cout << "phi(S0) " << rep.phi_s0->value << "  xi0 " << *rep.xi0 << "  rate_l2 " << rep.rates->l2 << '\n';
}

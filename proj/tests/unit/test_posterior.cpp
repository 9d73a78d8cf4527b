#include <gslogit/posterior.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace gslogit;

namespace {

struct Instance {
    GroupedDesign design;
    TrueModel truth;
    ResponseVector y;
};

Instance small_instance(Index n, const GroupPartition& part, Index m, const Vec& beta0, std::uint64_t seed)
{
    GroupedDesign d = random_subgaussian_design(n, m, part, EntryLaw::gaussian, seed);
    TrueModel t = make_true_model(d, beta0);
    ResponseVector y = simulate_responses(t, seed + 1);
    return Instance{std::move(d), std::move(t), std::move(y)};
}

SamplerConfig short_chain(std::uint64_t seed, Index iters = 200000)
{
    SamplerConfig c;
    c.n_iter = iters;
    c.burn_in = iters / 10;
    c.thin = 5;
    c.seed = seed;
    return c;
}

} // namespace

TEST(LogPosterior, SplitsIntoLikelihoodAndPrior)
{
    const auto inst = small_instance(20, GroupPartition::from_sizes({2, 1, 1}), 3, (Vec(4) << 0.5, 0, 0, -0.5).finished(), 1);
    const PriorSpec prior = PriorSpec::from_design(inst.design, 1.0, 2.0);
    const std::vector<Index> s{0, 2};
    const Vec bs = (Vec(3) << 0.3, -0.2, 0.7).finished();
    Vec full = Vec::Zero(4);
    full.head(2) = bs.head(2);
    full(3) = bs(2);
    EXPECT_NEAR(log_unnormalized_posterior(s, bs, inst.y, inst.design, prior),
                log_likelihood(full, inst.design, inst.y) + log_prior(s, bs, prior), 1e-10);
    EXPECT_NEAR(log_unnormalized_posterior({}, Vec(), inst.y, inst.design, prior), -20 * std::log(3.0) + prior.log_pi_p(0), 1e-10);
}

TEST(SamplerConfigTest, ValidationRejectsBadMoves)
{
    SamplerConfig c;
    c.moves.add = 0.5;
    EXPECT_THROW(c.validate(), InputError);
    c.moves = MoveProbs{0.0, 0.5, 0.0, 0.5};
    EXPECT_THROW(c.validate(), InputError);
    c.moves = MoveProbs{};
    c.burn_in = c.n_iter;
    EXPECT_THROW(c.validate(), InputError);
    c.burn_in = 0;
    EXPECT_NO_THROW(c.validate());
}

TEST(Sampler, BitwiseDeterministic)
{
    const auto inst = small_instance(30, GroupPartition::singletons(4), 2, (Vec(4) << 1, 0, 0, 0).finished(), 2);
    const PriorSpec prior = PriorSpec::from_design(inst.design, 0.5, 1.0);
    SamplerConfig c = short_chain(3, 20000);
    c.chains = 2;
    const auto a = mcmc_run(inst.y, inst.design, prior, c);
    c.workers = 2;
    const auto b = mcmc_run(inst.y, inst.design, prior, c);
    ASSERT_EQ(a.states.size(), b.states.size());
    for (std::size_t k = 0; k < a.states.size(); ++k) {
        EXPECT_EQ(a.states[k].support, b.states[k].support);
        EXPECT_EQ(a.states[k].values, b.states[k].values);
        EXPECT_EQ(a.states[k].log_posterior, b.states[k].log_posterior);
    }
}

TEST(Sampler, StoredLogPosteriorMatchesRecomputation)
{
    const auto inst = small_instance(30, GroupPartition::from_sizes({2, 2, 1}), 3, Vec::Zero(5), 4);
    const PriorSpec prior = PriorSpec::from_design(inst.design, 0.5, 1.0);
    const auto sample = mcmc_run(inst.y, inst.design, prior, short_chain(5, 20000));
    for (std::size_t k = 0; k < sample.states.size(); k += 97) {
        const auto& st = sample.states[k];
        EXPECT_NEAR(st.log_posterior, log_unnormalized_posterior(st.support, st.values, inst.y, inst.design, prior),
                    1e-8 * std::max(1.0, std::abs(st.log_posterior)));
    }
}

TEST(Sampler, PriorOnlyMatchesGroupSizeLaw)
{
    const Index p = 4;
    const auto inst = small_instance(10, GroupPartition::singletons(p), 2, Vec::Zero(p), 6);
    const PriorSpec prior(inst.design.partition(), 10, 0.1, 1.0);
    SamplerConfig c = short_chain(7, 400000);
    c.prior_only = true;
    const auto sum = summarize(mcmc_run(inst.y, inst.design, prior, c), inst.truth, inst.design);
    double tv = 0.0;
    for (Index s = 0; s <= p; ++s) tv += 0.5 * std::abs(sum.s_law(s) - std::exp(prior.log_pi_p(s)));
    EXPECT_LE(tv, 0.02);
}

TEST(Sampler, MatchesExactOracleOnTwoGroups)
{
    const auto inst = small_instance(40, GroupPartition::from_sizes({1, 2}), 2, (Vec(3) << 1.5, 0, 0).finished(), 8);
    const PriorSpec prior = PriorSpec::from_design(inst.design, 0.5, 1.0);
    const auto oracle = exact_oracle(inst.y, inst.design, prior);
    const auto sum = summarize(mcmc_run(inst.y, inst.design, prior, short_chain(9, 400000)), inst.truth, inst.design);
    EXPECT_LE((sum.inclusion - oracle.inclusion).cwiseAbs().maxCoeff(), 0.02);
    EXPECT_LE(0.5 * (sum.s_law - oracle.s_law).cwiseAbs().sum(), 0.02);
}

TEST(Oracle, CapsOnGroupsAndDimension)
{
    const auto big = small_instance(5, GroupPartition::singletons(11), 2, Vec::Zero(11), 10);
    EXPECT_THROW(exact_oracle(big.y, big.design, PriorSpec::from_design(big.design)), CapExceeded);
    const auto wide = small_instance(5, GroupPartition::from_sizes({2, 2}), 2, Vec::Zero(4), 11);
    EXPECT_THROW(exact_oracle(wide.y, wide.design, PriorSpec::from_design(wide.design)), CapExceeded);
}

TEST(Oracle, NormalizedAndStableUnderTolerance)
{
    const auto inst = small_instance(30, GroupPartition::from_sizes({2, 1}), 3, (Vec(3) << 0.8, -0.4, 0).finished(), 12);
    const PriorSpec prior = PriorSpec::from_design(inst.design, 0.5, 1.5);
    const auto coarse = exact_oracle(inst.y, inst.design, prior);
    double total = 0.0;
    for (const auto& sp : coarse.supports) total += sp.probability;
    EXPECT_NEAR(total, 1.0, 1e-8);
    EXPECT_NEAR(coarse.s_law.sum(), 1.0, 1e-8);
    OracleConfig fine;
    fine.rel_tol = 1e-8;
    const auto refined = exact_oracle(inst.y, inst.design, prior, fine);
    for (std::size_t k = 0; k < coarse.supports.size(); ++k)
        EXPECT_LT(std::abs(coarse.supports[k].probability - refined.supports[k].probability), 1e-4);
}

TEST(Oracle, PriorOnlyRecoversPrior)
{
    const auto inst = small_instance(10, GroupPartition::from_sizes({1, 1, 1}), 2, Vec::Zero(3), 13);
    const PriorSpec prior(inst.design.partition(), 10, 0.3, 2.0);
    OracleConfig c;
    c.prior_only = true;
    const auto res = exact_oracle(inst.y, inst.design, prior, c);
    for (Index s = 0; s <= 3; ++s) EXPECT_NEAR(res.s_law(s), std::exp(prior.log_pi_p(s)), 1e-6);
    EXPECT_NEAR(res.log_marginal, 0.0, 1e-6);
}

TEST(Oracle, NullDataFavoursEmptySupport)
{
    const auto inst = small_instance(300, GroupPartition::singletons(3), 2, Vec::Zero(3), 14);
    const auto res = exact_oracle(inst.y, inst.design, PriorSpec::from_design(inst.design));
    double best = 0.0;
    std::vector<Index> arg;
    for (const auto& sp : res.supports)
        if (sp.probability > best) {
            best = sp.probability;
            arg = sp.support;
        }
    EXPECT_TRUE(arg.empty());
}

TEST(Summary, ConstantChainGivesConstantQuantiles)
{
    const auto inst = small_instance(20, GroupPartition::from_sizes({2, 1}), 3, (Vec(3) << 0.5, 0.5, 0).finished(), 15);
    PosteriorSample sample;
    for (Index k = 0; k < 7; ++k) sample.states.push_back(ChainState{0, k, {1}, Vec::Constant(1, 2.0), 0.0});
    const auto sum = summarize(sample, inst.truth, inst.design);
    const Vec diff = (Vec(3) << -0.5, -0.5, 2.0).finished();
    for (double q : {0.1, 0.5, 0.9}) {
        EXPECT_NEAR(sum.l2_quantile(q), diff.norm(), 1e-12);
        EXPECT_NEAR(sum.l21_quantile(q), std::sqrt(0.5) + 2.0, 1e-12);
    }
    // dense recomputation of the predictor distance
    const Vec eta = inst.design.matrix() * diff;
    double acc = 0.0;
    for (Index i = 0; i < 20; ++i) {
        const Vec e = eta.segment(2 * i, 2);
        acc += e.dot(inst.truth.w_blocks[static_cast<std::size_t>(i)] * e);
    }
    EXPECT_NEAR(sum.predictor_quantile(0.5), std::sqrt(acc), 1e-10);
    EXPECT_NEAR(sum.inclusion(1), 1.0, 1e-15);
    EXPECT_NEAR(sum.s_law(1), 1.0, 1e-15);
}

TEST(Summary, TruthOnChainGivesZeroDistances)
{
    const auto inst = small_instance(20, GroupPartition::singletons(3), 2, (Vec(3) << 0, 1.25, 0).finished(), 16);
    PosteriorSample sample;
    sample.states.push_back(ChainState{0, 0, {1}, Vec::Constant(1, 1.25), 0.0});
    const auto sum = summarize(sample, inst.truth, inst.design);
    EXPECT_EQ(sum.l2_quantile(0.9), 0.0);
    EXPECT_EQ(sum.l21_quantile(0.9), 0.0);
    EXPECT_EQ(sum.predictor_quantile(0.9), 0.0);
}

TEST(Quantile, LinearInterpolation)
{
    EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.5), 2.5);
    EXPECT_NEAR(quantile({4, 1, 3, 2}, 0.9), 3.7, 1e-12);
    EXPECT_DOUBLE_EQ(quantile({5}, 0.3), 5.0);
    EXPECT_THROW(quantile({}, 0.5), InputError);
    EXPECT_THROW(quantile({1.0}, 1.5), InputError);
}

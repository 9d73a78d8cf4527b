#include <gslogit/model.hpp>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <gtest/gtest.h>

#include <cmath>

using namespace gslogit;
using Big = boost::multiprecision::cpp_bin_float_50;

namespace {

double log_partition_big(const Vec& theta)
{
    Big acc = 1;
    for (Index l = 0; l < theta.size(); ++l) acc += boost::multiprecision::exp(Big(theta(l)));
    return static_cast<double>(boost::multiprecision::log(acc));
}

Vec vec(std::initializer_list<double> v)
{
    Vec out(static_cast<Index>(v.size()));
    Index k = 0;
    for (double x : v) out(k++) = x;
    return out;
}

Vec random_vec(Index d, std::uint64_t seed, double scale = 1.0)
{
    Rng rng = make_rng(seed);
    return scale * random_matrix(d, 1, EntryLaw::gaussian, rng).col(0);
}

struct Instance {
    GroupedDesign design;
    Vec beta;
    ResponseVector y;
};

Instance random_instance(Index n, Index m, std::uint64_t seed)
{
    GroupedDesign d = random_subgaussian_design(n, m, GroupPartition::from_sizes({2, 1, 2}), EntryLaw::gaussian, seed);
    Vec beta = random_vec(5, seed + 1, 0.7);
    const TrueModel t = make_true_model(d, beta);
    ResponseVector y = simulate_responses(t, seed + 2);
    return Instance{std::move(d), std::move(beta), std::move(y)};
}

} // namespace

TEST(LogPartition, KnownValues)
{
    EXPECT_DOUBLE_EQ(log_partition(vec({0.0})), std::log(2.0));
    EXPECT_DOUBLE_EQ(log_partition(vec({0.0, 0.0})), std::log(3.0));
}

TEST(LogPartition, MatchesHighPrecisionOracle)
{
    const Vec t = vec({1.0, -1.0});
    EXPECT_NEAR(log_partition(t), log_partition_big(t), 1e-15);
    for (std::uint64_t s = 0; s < 50; ++s) {
        const Vec th = random_vec(1 + static_cast<Index>(s % 4), s, 20.0);
        const double ref = log_partition_big(th);
        EXPECT_NEAR(log_partition(th), ref, 1e-14 * std::max(1.0, std::abs(ref)));
    }
}

TEST(LogPartition, NoOverflowAtLargeArguments)
{
    for (double v : {700.0, -700.0}) {
        const Vec t = vec({v, v * 0.5, -v});
        EXPECT_TRUE(std::isfinite(log_partition(t)));
        EXPECT_NEAR(log_partition(t), log_partition_big(t), 1e-12 * std::abs(v));
    }
}

TEST(LogPartition, NanIsInputError)
{
    EXPECT_THROW(log_partition(vec({0.0, std::nan("")})), InputError);
    EXPECT_THROW(log_partition(vec({std::nan("")})), InputError);
}

TEST(LogPartition, ConvexAlongRandomLines)
{
    for (std::uint64_t s = 0; s < 100; ++s) {
        const Vec a = random_vec(3, s, 3.0), b = random_vec(3, 1000 + s, 3.0);
        const double lam = 0.3;
        EXPECT_LE(log_partition(lam * a + (1 - lam) * b), lam * log_partition(a) + (1 - lam) * log_partition(b) + 1e-12);
    }
}

TEST(MeanCovariance, KnownValues)
{
    const auto bin = mean_and_covariance(vec({0.0}));
    EXPECT_DOUBLE_EQ(bin.mu(0), 0.5);
    EXPECT_DOUBLE_EQ(bin.w(0, 0), 0.25);
    const auto tri = mean_and_covariance(vec({0.0, 0.0}));
    EXPECT_NEAR(tri.mu(0), 1.0 / 3, 1e-15);
    EXPECT_NEAR(tri.w(0, 0), 2.0 / 9, 1e-15);
    EXPECT_NEAR(tri.w(0, 1), -1.0 / 9, 1e-15);
}

TEST(MeanCovariance, MatchesFiniteDifferencesOfLogPartition)
{
    for (std::uint64_t s = 0; s < 30; ++s) {
        const Index r = 1 + static_cast<Index>(s % 4);
        const Vec t = random_vec(r, s, 2.0);
        const auto mc = mean_and_covariance(t);
        const double h = 1e-4;
        for (Index a = 0; a < r; ++a) {
            Vec ea = Vec::Zero(r);
            ea(a) = h;
            EXPECT_NEAR((log_partition(t + ea) - log_partition(t - ea)) / (2 * h), mc.mu(a), 1e-8);
            for (Index b = 0; b < r; ++b) {
                Vec eb = Vec::Zero(r);
                eb(b) = h;
                const double fd = (log_partition(t + ea + eb) - log_partition(t + ea - eb) - log_partition(t - ea + eb) +
                                   log_partition(t - ea - eb)) /
                                  (4 * h * h);
                EXPECT_NEAR(fd, mc.w(a, b), 1e-6);
            }
        }
    }
}

TEST(MeanCovariance, PsdWithSpectralNormAtMostOne)
{
    for (std::uint64_t s = 0; s < 200; ++s) {
        const auto mc = mean_and_covariance(random_vec(1 + static_cast<Index>(s % 5), s, 4.0));
        EXPECT_TRUE((mc.mu.array() > 0.0).all());
        EXPECT_LT(mc.mu.sum(), 1.0);
        Eigen::SelfAdjointEigenSolver<Mat> es(mc.w);
        EXPECT_GE(es.eigenvalues().minCoeff(), -1e-14);
        EXPECT_LE(es.eigenvalues().maxCoeff(), 1.0);
    }
}

TEST(MeanCovariance, MaxShiftedProbabilitiesMatchDirectSoftmax)
{
    for (std::uint64_t s = 0; s < 50; ++s) {
        const Vec t = random_vec(3, s, 3.0);
        const double denom = 1.0 + t.array().exp().sum();
        const Vec direct = t.array().exp().matrix() / denom;
        EXPECT_LT((category_probabilities(t) - direct).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Response, IndicatorLayout)
{
    const auto y = ResponseVector::from_labels({0, 2, 1}, 3);
    Vec expected(6);
    expected << 0, 0, 0, 1, 1, 0;
    EXPECT_EQ(y.y, expected);
    EXPECT_THROW(ResponseVector::from_labels({3}, 3), InputError);
}

TEST(LogLikelihood, ZeroCoefficientIsUniform)
{
    const auto inst = random_instance(12, 4, 1);
    EXPECT_NEAR(log_likelihood(Vec::Zero(5), inst.design, inst.y), -12 * std::log(4.0), 1e-12);
}

TEST(LogLikelihood, BinaryMatchesBernoulliFormula)
{
    const GroupedDesign d = random_subgaussian_design(30, 2, GroupPartition::singletons(3), EntryLaw::gaussian, 2);
    const Vec beta = random_vec(3, 3);
    const auto y = simulate_responses(make_true_model(d, beta), 4);
    double ref = 0.0;
    for (Index i = 0; i < 30; ++i) {
        const double eta = d.matrix().row(i).dot(beta);
        const double pr = 1.0 / (1.0 + std::exp(-eta));
        ref += y.labels[static_cast<std::size_t>(i)] == 1 ? std::log(pr) : std::log(1 - pr);
    }
    EXPECT_NEAR(log_likelihood(beta, d, y), ref, 1e-10);
}

TEST(LogLikelihood, MatchesProbabilityProductOracle)
{
    const auto inst = random_instance(3, 3, 5);
    const Vec theta = inst.design.matrix() * inst.beta;
    double ref = 0.0;
    for (Index i = 0; i < 3; ++i) {
        const double e1 = std::exp(theta(2 * i)), e2 = std::exp(theta(2 * i + 1));
        const double probs[3] = {1 / (1 + e1 + e2), e1 / (1 + e1 + e2), e2 / (1 + e1 + e2)};
        ref += std::log(probs[inst.y.labels[static_cast<std::size_t>(i)]]);
    }
    EXPECT_NEAR(log_likelihood(inst.beta, inst.design, inst.y), ref, 1e-12);
}

TEST(LogLikelihood, DimensionMismatchIsInputError)
{
    const auto inst = random_instance(5, 3, 6);
    EXPECT_THROW(log_likelihood(Vec::Zero(4), inst.design, inst.y), InputError);
    EXPECT_THROW(log_likelihood(inst.beta, inst.design, ResponseVector::from_labels({0, 1}, 3)), InputError);
}

TEST(ScoreHessian, GradientMatchesFiniteDifferences)
{
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto inst = random_instance(15, 2 + static_cast<Index>(s % 3), 10 + s);
        const auto sh = score_and_hessian(inst.beta, inst.design, inst.y);
        const double h = 1e-5;
        for (Index c = 0; c < 5; ++c) {
            Vec e = Vec::Zero(5);
            e(c) = h;
            const double fd = (log_likelihood(inst.beta + e, inst.design, inst.y) - log_likelihood(inst.beta - e, inst.design, inst.y)) / (2 * h);
            EXPECT_NEAR(fd, sh.gradient(c), 1e-6 * std::max(1.0, std::abs(sh.gradient(c))));
            const Vec gp = score_and_hessian(inst.beta + e, inst.design, inst.y).gradient;
            const Vec gm = score_and_hessian(inst.beta - e, inst.design, inst.y).gradient;
            const Vec col = (gp - gm) / (2 * h);
            EXPECT_LT((col - sh.hessian.col(c)).cwiseAbs().maxCoeff(), 1e-4 * std::max(1.0, sh.hessian.cwiseAbs().maxCoeff()));
        }
    }
}

TEST(ScoreHessian, HessianSymmetricNegativeSemidefinite)
{
    const auto inst = random_instance(20, 4, 30);
    const auto sh = score_and_hessian(inst.beta, inst.design, inst.y);
    EXPECT_LT((sh.hessian - sh.hessian.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE(Eigen::SelfAdjointEigenSolver<Mat>(sh.hessian).eigenvalues().maxCoeff(), 1e-10);
}

TEST(ScoreHessian, CenteredColumnsGiveZeroGradientAtBalancedResponse)
{
    // m = 2, labels alternate so Y - mu(0) = +-1/2; columns orthogonal to that pattern
    Mat x(4, 1);
    x << 1, 1, 2, 2;
    const GroupedDesign d(x, 4, 2, GroupPartition::singletons(1));
    const auto y = ResponseVector::from_labels({1, 0, 1, 0}, 2);
    EXPECT_NEAR(score_and_hessian(Vec::Zero(1), d, y).gradient(0), 0.0, 1e-15);
}

TEST(Simulate, UniformCategoriesAtZeroCoefficient)
{
    const GroupedDesign d = random_subgaussian_design(100000, 4, GroupPartition::singletons(1), EntryLaw::gaussian, 40);
    const auto y = simulate_responses(make_true_model(d, Vec::Zero(1)), 41);
    std::array<double, 4> freq{};
    for (int z : y.labels) freq[static_cast<std::size_t>(z)] += 1e-5;
    for (double f : freq) EXPECT_NEAR(f, 0.25, 0.01);
}

TEST(Simulate, SaturatedPredictorPicksCategory)
{
    Mat x = Mat::Zero(2000, 1);
    for (Index i = 0; i < 1000; ++i) x(2 * i, 0) = 1.0;
    const GroupedDesign d(x, 1000, 3, GroupPartition::singletons(1));
    const auto y = simulate_responses(make_true_model(d, Vec::Constant(1, 30.0)), 42);
    const auto ones = std::count(y.labels.begin(), y.labels.end(), 1);
    EXPECT_GT(static_cast<double>(ones) / 1000.0, 0.999);
}

TEST(Simulate, DeterministicGivenSeed)
{
    const auto inst = random_instance(50, 3, 43);
    const TrueModel t = make_true_model(inst.design, inst.beta);
    EXPECT_EQ(simulate_responses(t, 7).labels, simulate_responses(t, 7).labels);
}

TEST(CenteredRatio, ZeroAtTruthAndNonnegative)
{
    const auto inst = random_instance(25, 3, 50);
    const TrueModel t = make_true_model(inst.design, inst.beta);
    EXPECT_NEAR(log_likelihood_ratio_centered(inst.beta, t, inst.design), 0.0, 1e-12);
    for (std::uint64_t s = 0; s < 50; ++s) EXPECT_GE(log_likelihood_ratio_centered(random_vec(5, 60 + s, 2.0), t, inst.design), 0.0);
}

TEST(CenteredRatio, AgreesWithScoreMinusLikelihoodRatioForAnyResponse)
{
    const auto inst = random_instance(25, 4, 70);
    const TrueModel t = make_true_model(inst.design, inst.beta);
    const Vec beta = random_vec(5, 71, 1.5);
    const double direct = log_likelihood_ratio_centered(beta, t, inst.design);
    for (std::uint64_t s = 0; s < 2; ++s) {
        const auto y = simulate_responses(t, 80 + s);
        const double via_y = (y.y - t.mu).dot(inst.design.matrix() * (beta - inst.beta)) -
                             (log_likelihood(beta, inst.design, y) - log_likelihood(inst.beta, inst.design, y));
        EXPECT_NEAR(direct, via_y, 1e-9);
    }
}

TEST(TrueModel, WhitenedDesignReproducesWeightedNorm)
{
    const auto inst = random_instance(10, 4, 90);
    const TrueModel t = make_true_model(inst.design, inst.beta);
    const Mat a = whitened_design(inst.design, t);
    const Vec v = random_vec(5, 91);
    EXPECT_NEAR((a * v).norm(), weighted_norm(inst.design.matrix() * v, t), 1e-12);
    EXPECT_EQ(t.s0(), 3);
    EXPECT_EQ(true_dimension(t, inst.design.partition()), 5);
}

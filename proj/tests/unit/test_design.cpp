#include <gslogit/design.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace gslogit;

namespace {

// independent oracles
double l21_double_loop(const Vec& beta, const GroupPartition& part)
{
    double total = 0.0;
    for (Index j = 0; j < part.count(); ++j) {
        double sq = 0.0;
        for (Index c : part.members(j)) sq += beta(c) * beta(c);
        total += std::sqrt(sq);
    }
    return total;
}

double svd_norm(const Mat& a)
{
    if (a.size() == 0) return 0.0;
    return Eigen::JacobiSVD<Mat>(a).singularValues()(0);
}

Mat gather_columns(const Mat& x, const std::vector<Index>& cols)
{
    Mat out(x.rows(), static_cast<Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Index>(k)) = x.col(cols[k]);
    return out;
}

double x_star_oracle(const GroupedDesign& d)
{
    double best = 0.0;
    for (Index j = 0; j < d.p(); ++j) best = std::max(best, svd_norm(gather_columns(d.matrix(), d.partition().members(j))));
    return best;
}

double row_block_oracle(const GroupedDesign& d)
{
    const Index r = d.m() - 1;
    double best = 0.0;
    for (Index i = 0; i < d.n(); ++i) {
        const Mat xi = d.matrix().middleRows(i * r, r);
        for (Index j = 0; j < d.p(); ++j) best = std::max(best, svd_norm(gather_columns(xi, d.partition().members(j))));
    }
    return best;
}

Vec random_vec(Index d, std::uint64_t seed)
{
    Rng rng = make_rng(seed);
    return random_matrix(d, 1, EntryLaw::gaussian, rng).col(0);
}

} // namespace

TEST(GroupPartition, InvariantsHold)
{
    const auto part = GroupPartition::from_sizes({2, 1, 3});
    EXPECT_EQ(part.count(), 3);
    EXPECT_EQ(part.dim(), 6);
    EXPECT_EQ(part.max_size(), 3);
    EXPECT_TRUE(part.contiguous());
    EXPECT_EQ(part.start(2), 3);
    EXPECT_EQ(part.dim_of({0, 2}), 5);
    const auto r = part.restricted({0, 2});
    EXPECT_EQ(r.count(), 2);
    EXPECT_EQ(r.dim(), 5);
}

TEST(GroupPartition, RejectsInvalidGroupings)
{
    EXPECT_THROW(GroupPartition::from_groups({{0, 1}, {1, 2}}, 3), InputError);
    EXPECT_THROW(GroupPartition::from_groups({{0}, {2}}, 3), InputError);
    EXPECT_THROW(GroupPartition::from_groups({{0, 1}, {}}, 2), InputError);
    EXPECT_THROW(GroupPartition::from_sizes({2, 0}), InputError);
}

TEST(GroupPartition, NonContiguousGroupsAreSupported)
{
    const auto part = GroupPartition::from_groups({{0, 2}, {1, 3}}, 4);
    EXPECT_FALSE(part.contiguous());
    Vec b(4);
    b << 3, 1, 4, 1;
    EXPECT_NEAR(l21_norm(b, part), 5.0 + std::sqrt(2.0), 1e-14);
}

TEST(L21Norm, PythagoreanExample)
{
    Vec b(4);
    b << 3, 4, 0, 5;
    EXPECT_DOUBLE_EQ(l21_norm(b, GroupPartition::from_sizes({2, 2})), 10.0);
}

TEST(L21Norm, ZeroVector) { EXPECT_EQ(l21_norm(Vec::Zero(7), GroupPartition::from_sizes({3, 4})), 0.0); }

TEST(L21Norm, MatchesDoubleLoopOracle)
{
    const auto part = GroupPartition::from_sizes({3, 2, 4, 3});
    for (std::uint64_t s = 0; s < 20; ++s) {
        const Vec b = random_vec(12, s);
        EXPECT_NEAR(l21_norm(b, part), l21_double_loop(b, part), 1e-12);
    }
}

TEST(L21Norm, DimensionMismatchIsInputError) { EXPECT_THROW(l21_norm(Vec::Zero(3), GroupPartition::singletons(4)), InputError); }

TEST(L21Norm, GroupCauchySchwarz)
{
    for (std::uint64_t s = 0; s < 50; ++s) {
        const auto part = GroupPartition::from_sizes({1 + static_cast<Index>(s % 3), 2, 3, 1});
        const Vec b = random_vec(part.dim(), 100 + s);
        const double l21 = l21_norm(b, part);
        EXPECT_LE(b.norm(), l21 + 1e-12);
        EXPECT_LE(l21, std::sqrt(static_cast<double>(part.count())) * b.norm() + 1e-12);
    }
}

TEST(XStarNorm, IdentityIsOne)
{
    const GroupedDesign d(Mat::Identity(4, 4), 4, 2, GroupPartition::singletons(4));
    EXPECT_DOUBLE_EQ(x_star_norm(d), 1.0);
}

TEST(XStarNorm, SingleGroupIsSpectralNorm)
{
    Rng rng = make_rng(3);
    const Mat x = random_matrix(20, 6, EntryLaw::gaussian, rng);
    const GroupedDesign d(x, 20, 2, GroupPartition::from_sizes({6}));
    EXPECT_NEAR(x_star_norm(d), svd_norm(x), 1e-10 * svd_norm(x));
}

TEST(XStarNorm, MatchesPerBlockSvdOracle)
{
    const GroupedDesign d = random_subgaussian_design(20, 2, GroupPartition::uniform(3, 2), EntryLaw::gaussian, 5);
    EXPECT_NEAR(x_star_norm(d), x_star_oracle(d), 1e-10 * x_star_oracle(d));
}

TEST(XStarNorm, PowerIterationPathForLargeBlocks)
{
    const GroupedDesign d = random_subgaussian_design(200, 2, GroupPartition::uniform(2, 80), EntryLaw::gaussian, 6);
    EXPECT_NEAR(x_star_norm(d), x_star_oracle(d), 1e-8 * x_star_oracle(d));
}

TEST(XStarNorm, SingletonGroupsGiveMaxColumnNorm)
{
    const GroupedDesign d = random_subgaussian_design(30, 3, GroupPartition::singletons(5), EntryLaw::uniform, 7);
    EXPECT_NEAR(x_star_norm(d), d.matrix().colwise().norm().maxCoeff(), 1e-12);
}

TEST(MaxRowBlockNorm, BinarySingletonsGiveMaxAbsEntry)
{
    const GroupedDesign d = random_subgaussian_design(25, 2, GroupPartition::singletons(6), EntryLaw::gaussian, 8);
    EXPECT_DOUBLE_EQ(max_row_block_norm(d), max_abs_entry(d));
}

TEST(MaxRowBlockNorm, IdentityIsOne)
{
    const GroupedDesign d(Mat::Identity(6, 6), 3, 3, GroupPartition::uniform(3, 2));
    EXPECT_DOUBLE_EQ(max_row_block_norm(d), 1.0);
}

TEST(MaxRowBlockNorm, MatchesOracleAndEntryBounds)
{
    for (std::uint64_t s = 0; s < 20; ++s) {
        const Index m = 2 + static_cast<Index>(s % 3);
        const auto part = GroupPartition::from_sizes({1, 2, 3});
        const GroupedDesign d = random_subgaussian_design(10, m, part, EntryLaw::gaussian, 20 + s);
        const double v = max_row_block_norm(d);
        EXPECT_NEAR(v, row_block_oracle(d), 1e-10 * v);
        EXPECT_LE(max_abs_entry(d), v + 1e-12);
        EXPECT_LE(v, std::sqrt(static_cast<double>((m - 1) * part.max_size())) * max_abs_entry(d) + 1e-12);
        EXPECT_LE(x_star_norm(d), std::sqrt(static_cast<double>(d.n())) * v + 1e-10);
    }
}

TEST(MultinomialDesign, KroneckerBlocksInGroupMajorLayout)
{
    Mat z(1, 2);
    z << 1.5, -2.0;
    const GroupedDesign d = build_multinomial_design(z, 3);
    Mat expected(2, 4);
    // group j holds the two category coefficients of covariate j
    expected << 1.5, 0, -2.0, 0, 0, 1.5, 0, -2.0;
    EXPECT_EQ(d.matrix(), expected);
    EXPECT_EQ(d.p(), 2);
    EXPECT_EQ(d.gbar(), 2);
    // a column permutation of the category-major form [[z1,z2,0,0],[0,0,z1,z2]]
    Mat category_major(2, 4);
    category_major << 1.5, -2.0, 0, 0, 0, 0, 1.5, -2.0;
    const std::vector<Index> perm{0, 2, 1, 3};
    EXPECT_EQ(gather_columns(category_major, perm), expected);
}

TEST(MultinomialDesign, BinaryReducesToZ)
{
    Rng rng = make_rng(9);
    const Mat z = random_matrix(6, 4, EntryLaw::gaussian, rng);
    const GroupedDesign d = build_multinomial_design(z, 2);
    EXPECT_EQ(d.matrix(), z);
    EXPECT_EQ(d.gbar(), 1);
}

TEST(MultinomialDesign, StructuralCounts)
{
    Rng rng = make_rng(10);
    const Mat z = random_matrix(5, 3, EntryLaw::gaussian, rng);
    const GroupedDesign d = build_multinomial_design(z, 4);
    EXPECT_EQ(d.d(), 9);
    for (Index j = 0; j < d.p(); ++j) {
        const Mat xj = d.column_block(j);
        EXPECT_EQ(xj.rows(), 15);
        for (Index c = 0; c < xj.cols(); ++c) EXPECT_EQ((xj.col(c).array() != 0.0).count(), 5);
    }
}

TEST(MultinomialDesign, PredictorMatchesCategoryCoefficients)
{
    Rng rng = make_rng(11);
    const Index n = 7, p = 4, m = 4, r = m - 1;
    const Mat z = random_matrix(n, p, EntryLaw::gaussian, rng);
    const Mat alpha = random_matrix(p, r, EntryLaw::gaussian, rng);
    const GroupedDesign d = build_multinomial_design(z, m);
    Vec beta(p * r);
    for (Index j = 0; j < p; ++j)
        for (Index l = 0; l < r; ++l) beta(j * r + l) = alpha(j, l);
    const Vec theta = d.matrix() * beta;
    for (Index i = 0; i < n; ++i)
        for (Index l = 0; l < r; ++l) EXPECT_NEAR(theta(i * r + l), z.row(i).dot(alpha.col(l)), 1e-12);
}

TEST(MultinomialDesign, EmptyZIsInputError) { EXPECT_THROW(build_multinomial_design(Mat(0, 3), 3), InputError); }

TEST(RandomDesign, RademacherEntriesAreSigns)
{
    const GroupedDesign d = random_subgaussian_design(40, 3, GroupPartition::singletons(5), EntryLaw::rademacher, 12);
    EXPECT_TRUE((d.matrix().array().abs() == 1.0).all());
}

TEST(RandomDesign, SameSeedSameMatrix)
{
    const auto part = GroupPartition::uniform(4, 2);
    EXPECT_EQ(random_subgaussian_design(10, 3, part, EntryLaw::gaussian, 13).matrix(),
              random_subgaussian_design(10, 3, part, EntryLaw::gaussian, 13).matrix());
    EXPECT_NE(random_subgaussian_design(10, 3, part, EntryLaw::gaussian, 13).matrix(),
              random_subgaussian_design(10, 3, part, EntryLaw::gaussian, 14).matrix());
}

TEST(RandomDesign, GaussianColumnMeansNearZero)
{
    const GroupedDesign d = random_subgaussian_design(500, 2, GroupPartition::singletons(50), EntryLaw::gaussian, 15);
    const double tol = 4.0 / std::sqrt(500.0);
    EXPECT_LT(d.matrix().colwise().mean().cwiseAbs().maxCoeff(), tol);
}

TEST(RandomDesign, UniformLawHasUnitVariance)
{
    const GroupedDesign d = random_subgaussian_design(20000, 2, GroupPartition::singletons(2), EntryLaw::uniform, 16);
    const double var = d.matrix().array().square().mean();
    EXPECT_NEAR(var, 1.0, 0.03);
}

TEST(SparseCoef, RoundTrip)
{
    const auto part = GroupPartition::from_sizes({2, 1, 3, 2});
    Vec b = Vec::Zero(8);
    b.segment(2, 1) << 0.7;
    b.segment(6, 2) << -1.0, 0.0;
    const SparseCoef sc = SparseCoef::sparsify(b, part);
    EXPECT_EQ(sc.support, (std::vector<Index>{1, 3}));
    EXPECT_EQ(sc.values.size(), 3);
    EXPECT_EQ(sc.densify(part), b);
    EXPECT_EQ(sc.group_dim(), group_count(b, part));
}

TEST(SparseCoef, GroupDimensionCountsNonzeroBlocks)
{
    const auto part = GroupPartition::from_sizes({2, 2});
    SparseCoef sc{{0, 1}, Vec::Zero(4)};
    sc.values(0) = 1.0;
    EXPECT_EQ(group_count(sc.densify(part), part), 1);
    EXPECT_LE(group_count(sc.densify(part), part), sc.group_dim());
}

TEST(GroupedDesign, RejectsRowCountMismatch) { EXPECT_THROW(GroupedDesign(Mat::Zero(5, 2), 3, 3, GroupPartition::singletons(2)), InputError); }

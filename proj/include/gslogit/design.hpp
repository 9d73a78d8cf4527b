#pragma once
#include "core.hpp"
#include "linalg.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace gslogit {

/// Ordered partition G_1..G_p of the coefficient indices {0..d-1}.
///
/// Groups may be arbitrary index sets; designs require the contiguous,
/// group-major layout (group j occupies columns [start(j), start(j)+size(j))).
class GroupPartition {
public:
    GroupPartition() = default;

    static GroupPartition from_sizes(const std::vector<Index>& sizes)
    {
        std::vector<std::vector<Index>> groups;
        groups.reserve(sizes.size());
        Index next = 0;
        for (Index g : sizes) {
            require(g >= 1, "group sizes must be positive");
            std::vector<Index> members(static_cast<std::size_t>(g));
            std::iota(members.begin(), members.end(), next);
            next += g;
            groups.push_back(std::move(members));
        }
        return GroupPartition(std::move(groups), next);
    }

    static GroupPartition singletons(Index d) { return from_sizes(std::vector<Index>(static_cast<std::size_t>(d), 1)); }

    static GroupPartition uniform(Index p, Index g) { return from_sizes(std::vector<Index>(static_cast<std::size_t>(p), g)); }

    static GroupPartition from_groups(std::vector<std::vector<Index>> groups, Index d) { return GroupPartition(std::move(groups), d); }

    Index dim() const { return d_; }
    Index count() const { return static_cast<Index>(groups_.size()); }
    Index size(Index j) const { return static_cast<Index>(groups_[static_cast<std::size_t>(j)].size()); }
    Index max_size() const { return gbar_; }
    const std::vector<Index>& members(Index j) const { return groups_[static_cast<std::size_t>(j)]; }
    bool contiguous() const { return contiguous_; }

    /// First column of group j; only meaningful for contiguous partitions.
    Index start(Index j) const { return starts_[static_cast<std::size_t>(j)]; }

    /// Total dimension d_S of the groups in `support`.
    Index dim_of(const std::vector<Index>& support) const
    {
        Index total = 0;
        for (Index j : support) total += size(j);
        return total;
    }

    /// Contiguous partition of R^{d_S} describing the blocks of beta_S, in support order.
    GroupPartition restricted(const std::vector<Index>& support) const
    {
        std::vector<Index> sizes;
        sizes.reserve(support.size());
        for (Index j : support) sizes.push_back(size(j));
        return from_sizes(sizes);
    }

    std::vector<Index> sizes() const
    {
        std::vector<Index> out;
        out.reserve(groups_.size());
        for (const auto& g : groups_) out.push_back(static_cast<Index>(g.size()));
        return out;
    }

private:
    GroupPartition(std::vector<std::vector<Index>> groups, Index d) : d_(d), groups_(std::move(groups))
    {
        require(!groups_.empty(), "partition needs at least one group");
        std::vector<char> seen(static_cast<std::size_t>(d), 0);
        Index covered = 0;
        contiguous_ = true;
        Index expected = 0;
        for (const auto& g : groups_) {
            require(!g.empty(), "every group must be nonempty");
            gbar_ = std::max<Index>(gbar_, static_cast<Index>(g.size()));
            starts_.push_back(g.front());
            for (Index c : g) {
                require(c >= 0 && c < d, "group member " + std::to_string(c) + " outside 0.." + std::to_string(d - 1));
                require(!seen[static_cast<std::size_t>(c)], "column " + std::to_string(c) + " assigned to two groups");
                seen[static_cast<std::size_t>(c)] = 1;
                ++covered;
                if (c != expected) contiguous_ = false;
                ++expected;
            }
        }
        require(covered == d, "groups do not cover all " + std::to_string(d) + " columns");
    }

    Index d_ = 0;
    Index gbar_ = 0;
    bool contiguous_ = true;
    std::vector<std::vector<Index>> groups_;
    std::vector<Index> starts_;
};

/// Stacked design X = (X_1^T, ..., X_n^T)^T with n(m-1) rows and a group-major column layout.
class GroupedDesign {
public:
    GroupedDesign(Mat x, Index n, Index m, GroupPartition partition)
        : x_(std::move(x)), n_(n), m_(m), partition_(std::move(partition))
    {
        require(m_ >= 2, "category count m must be at least 2");
        require(n_ >= 1, "observation count n must be positive");
        require(x_.rows() == n_ * (m_ - 1), "design has " + std::to_string(x_.rows()) + " rows, expected n(m-1) = " +
                                                 std::to_string(n_ * (m_ - 1)));
        require(x_.cols() == partition_.dim(), "design column count does not match the partition dimension");
        require(partition_.contiguous(), "design columns must be stored group-major (contiguous groups)");
        require(x_.allFinite(), "design contains non-finite entries");
    }

    Index n() const { return n_; }
    Index m() const { return m_; }
    Index block_rows() const { return m_ - 1; }
    Index d() const { return x_.cols(); }
    Index p() const { return partition_.count(); }
    Index gbar() const { return partition_.max_size(); }
    const Mat& matrix() const { return x_; }
    const GroupPartition& partition() const { return partition_; }

    /// X_i, the (m-1) x d block of observation i.
    auto row_block(Index i) const { return x_.middleRows(i * (m_ - 1), m_ - 1); }

    /// X_{.j}, the n(m-1) x g_j column block of group j.
    auto column_block(Index j) const { return x_.middleCols(partition_.start(j), partition_.size(j)); }

    /// Columns of the groups in `support`, concatenated in support order.
    Mat support_columns(const std::vector<Index>& support) const
    {
        Mat out(x_.rows(), partition_.dim_of(support));
        Index c = 0;
        for (Index j : support) {
            out.middleCols(c, partition_.size(j)) = column_block(j);
            c += partition_.size(j);
        }
        return out;
    }

private:
    Mat x_;
    Index n_;
    Index m_;
    GroupPartition partition_;
};

/// Group-sparse coefficient: support S (sorted group indices) and the stacked nonzero block beta_S.
struct SparseCoef {
    std::vector<Index> support;
    Vec values;

    Vec densify(const GroupPartition& partition) const
    {
        require(values.size() == partition.dim_of(support), "beta_S length does not match d_S");
        Vec beta = Vec::Zero(partition.dim());
        Index offset = 0;
        for (Index j : support) {
            const auto& cols = partition.members(j);
            for (std::size_t k = 0; k < cols.size(); ++k) beta(cols[k]) = values(offset + static_cast<Index>(k));
            offset += partition.size(j);
        }
        return beta;
    }

    /// Support = groups whose block is not identically zero.
    static SparseCoef sparsify(const Vec& beta, const GroupPartition& partition)
    {
        require(beta.size() == partition.dim(), "coefficient length does not match the partition dimension");
        SparseCoef out;
        std::vector<double> vals;
        for (Index j = 0; j < partition.count(); ++j) {
            const auto& cols = partition.members(j);
            const bool nonzero = std::any_of(cols.begin(), cols.end(), [&](Index c) { return beta(c) != 0.0; });
            if (!nonzero) continue;
            out.support.push_back(j);
            for (Index c : cols) vals.push_back(beta(c));
        }
        out.values = Eigen::Map<const Vec>(vals.data(), static_cast<Index>(vals.size()));
        return out;
    }

    Index group_dim() const { return static_cast<Index>(support.size()); }
};

/// sum_j ||beta_j||_2 over the groups of `partition`.
inline double l21_norm(const Eigen::Ref<const Vec>& beta, const GroupPartition& partition)
{
    require(beta.size() == partition.dim(), "l21_norm: vector length " + std::to_string(beta.size()) +
                                                " does not match partition dimension " + std::to_string(partition.dim()));
    double total = 0.0;
    if (partition.contiguous()) {
        for (Index j = 0; j < partition.count(); ++j) total += beta.segment(partition.start(j), partition.size(j)).norm();
        return total;
    }
    for (Index j = 0; j < partition.count(); ++j) {
        double sq = 0.0;
        for (Index c : partition.members(j)) sq += beta(c) * beta(c);
        total += std::sqrt(sq);
    }
    return total;
}

/// Number of groups with a nonzero block (s_beta).
inline Index group_count(const Eigen::Ref<const Vec>& beta, const GroupPartition& partition)
{
    Index count = 0;
    for (Index j = 0; j < partition.count(); ++j) {
        for (Index c : partition.members(j)) {
            if (beta(c) != 0.0) {
                ++count;
                break;
            }
        }
    }
    return count;
}

/// ||X||_* = max_j ||X_{.j}||_sp.
inline double x_star_norm(const GroupedDesign& design)
{
    double best = 0.0;
    for (Index j = 0; j < design.p(); ++j) best = std::max(best, linalg::spectral_norm(design.column_block(j)));
    return best;
}

/// max_i ||X_i||_*: the ||.||_* norm of each observation's (m-1) x d block, maximized over i.
inline double max_row_block_norm(const GroupedDesign& design)
{
    const auto& part = design.partition();
    double best = 0.0;
    for (Index i = 0; i < design.n(); ++i) {
        const auto block = design.row_block(i);
        for (Index j = 0; j < design.p(); ++j) {
            const auto sub = block.middleCols(part.start(j), part.size(j));
            const double s = (sub.rows() == 1 || sub.cols() == 1) ? sub.norm() : linalg::spectral_norm(sub);
            best = std::max(best, s);
        }
    }
    return best;
}

/// max absolute entry of X.
inline double max_abs_entry(const GroupedDesign& design) { return design.matrix().cwiseAbs().maxCoeff(); }

/// Multinomial logit design X_i = I_{m-1} (x) Z_i^T with columns regrouped so that the m-1
/// coefficients tied to covariate j form group j (columns j(m-1) .. j(m-1)+m-2, category order).
inline GroupedDesign build_multinomial_design(const Mat& z, Index m)
{
    require(m >= 2, "category count m must be at least 2");
    require(z.rows() > 0 && z.cols() > 0, "covariate matrix Z is empty");
    const Index n = z.rows();
    const Index p = z.cols();
    const Index r = m - 1;
    Mat x = Mat::Zero(n * r, p * r);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < p; ++j)
            for (Index l = 0; l < r; ++l) x(i * r + l, j * r + l) = z(i, j);
    return GroupedDesign(std::move(x), n, m, GroupPartition::uniform(p, r));
}

enum class EntryLaw { gaussian, rademacher, uniform };

inline EntryLaw parse_entry_law(const std::string& name)
{
    if (name == "gaussian") return EntryLaw::gaussian;
    if (name == "rademacher") return EntryLaw::rademacher;
    if (name == "uniform") return EntryLaw::uniform;
    throw InputError("unknown design distribution '" + name + "' (expected gaussian, rademacher or uniform)");
}

inline std::string to_string(EntryLaw law)
{
    switch (law) {
    case EntryLaw::gaussian: return "gaussian";
    case EntryLaw::rademacher: return "rademacher";
    case EntryLaw::uniform: return "uniform";
    }
    return "unknown";
}

/// Mean-zero unit-variance matrix of the given entry law.
inline Mat random_matrix(Index rows, Index cols, EntryLaw law, Rng& rng)
{
    Mat x(rows, cols);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::bernoulli_distribution coin(0.5);
    std::uniform_real_distribution<double> unif(-std::sqrt(3.0), std::sqrt(3.0));
    // fill row by row so that each row is an independent draw
    for (Index i = 0; i < rows; ++i) {
        for (Index c = 0; c < cols; ++c) {
            switch (law) {
            case EntryLaw::gaussian: x(i, c) = normal(rng); break;
            case EntryLaw::rademacher: x(i, c) = coin(rng) ? 1.0 : -1.0; break;
            case EntryLaw::uniform: x(i, c) = unif(rng); break;
            }
        }
    }
    return x;
}

/// Design whose n(m-1) rows are independent vectors with i.i.d. mean-zero unit-variance entries.
inline GroupedDesign random_subgaussian_design(Index n, Index m, const GroupPartition& partition, EntryLaw law,
                                               std::uint64_t seed)
{
    require(m >= 2, "category count m must be at least 2");
    require(n >= 1, "observation count n must be positive");
    Rng rng = make_rng(seed, stream::design);
    return GroupedDesign(random_matrix(n * (m - 1), partition.dim(), law, rng), n, m, partition);
}

} // namespace gslogit

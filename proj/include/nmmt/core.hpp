#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nmmt {

using Index = Eigen::Index;

/// Binary decision vector; bit i set means the null of hypothesis i is rejected.
class DecisionConfig {
public:
    DecisionConfig() = default;
    explicit DecisionConfig(Index m, bool value = false)
        : bits_(static_cast<std::size_t>(m), value ? 1 : 0) {}
    DecisionConfig(std::initializer_list<int> bits);
    static DecisionConfig from_bits(std::vector<std::uint8_t> bits);

    Index size() const { return static_cast<Index>(bits_.size()); }
    bool operator[](Index i) const { return bits_[static_cast<std::size_t>(i)] != 0; }
    void set(Index i, bool value) { bits_[static_cast<std::size_t>(i)] = value ? 1 : 0; }
    void flip(Index i) { set(i, !(*this)[i]); }

    Index rejections() const;
    bool none() const { return rejections() == 0; }
    bool all() const { return rejections() == size(); }

    const std::vector<std::uint8_t>& bits() const { return bits_; }
    std::string to_string() const;

    bool operator==(const DecisionConfig&) const = default;
    /// Lexicographic on bits, index 0 most significant.
    std::strong_ordering operator<=>(const DecisionConfig& other) const { return bits_ <=> other.bits_; }

private:
    std::vector<std::uint8_t> bits_;
};

/// Null region of one hypothesis; the alternative is its complement.
struct NullRegion {
    double lo = 0.0;
    double hi = 0.0;
    bool closed = true;

    static NullRegion closed_interval(double lo, double hi) { return {lo, hi, true}; }
    static NullRegion open_interval(double lo, double hi) { return {lo, hi, false}; }

    bool contains(double x) const { return closed ? (lo <= x && x <= hi) : (lo < x && x < hi); }
};

/// Per-hypothesis partition (null_i, alt_i) bound to a draw coordinate.
class HypothesisSet {
public:
    HypothesisSet() = default;
    HypothesisSet(std::vector<NullRegion> regions, std::vector<Index> coordinates);

    Index size() const { return static_cast<Index>(regions_.size()); }
    const NullRegion& region(Index i) const;
    Index coordinate(Index i) const;

    template <typename Draw>
    bool alternative(const Draw& theta, Index i) const
    {
        return !region(i).contains(theta[coordinate(i)]);
    }

private:
    std::vector<NullRegion> regions_;
    std::vector<Index> coordinates_;
};

/// Dependence groups G_1..G_m; each G_i contains i.
class GroupStructure {
public:
    GroupStructure() = default;
    explicit GroupStructure(std::vector<std::vector<Index>> groups);
    static GroupStructure singletons(Index m);

    Index size() const { return static_cast<Index>(groups_.size()); }
    const std::vector<Index>& group(Index i) const { return groups_[static_cast<std::size_t>(i)]; }
    /// G_i without i.
    const std::vector<Index>& others(Index i) const { return others_[static_cast<std::size_t>(i)]; }
    bool is_singleton(Index i) const { return others(i).empty(); }
    bool all_singletons() const;
    bool contains(Index i, Index j) const;

    /// Connected components of the graph with an edge whenever j in G_i or i in G_j.
    std::vector<std::vector<Index>> components() const;

private:
    std::vector<std::vector<Index>> groups_;
    std::vector<std::vector<Index>> others_;
};

struct Provenance {
    std::string sampler;
    std::uint64_t seed = 0;
};

/// Immutable set of S posterior draws, one draw per row.
class PosteriorSampleSet {
public:
    PosteriorSampleSet(Eigen::MatrixXd draws, Provenance provenance);

    Index size() const { return draws_.rows(); }
    Index dimension() const { return draws_.cols(); }
    auto draw(Index s) const { return draws_.row(s); }
    const Eigen::MatrixXd& matrix() const { return draws_; }
    const Provenance& provenance() const { return provenance_; }

private:
    Eigen::MatrixXd draws_;
    Provenance provenance_;
};

/// r_i: 1 iff the draw lies in the alternative of hypothesis i.
bool eval_r(const Eigen::Ref<const Eigen::RowVectorXd>& draw, Index i, const HypothesisSet& hypotheses);

/// z_i: 1 iff every j in G_i \ {i} satisfies H_{d_j, j} under the draw.
bool eval_z(const Eigen::Ref<const Eigen::RowVectorXd>& draw, const DecisionConfig& d, Index i,
            const GroupStructure& groups, const HypothesisSet& hypotheses);

double estimate_v(const PosteriorSampleSet& samples, Index i, const HypothesisSet& hypotheses);
double estimate_w(const PosteriorSampleSet& samples, const DecisionConfig& d, Index i,
                  const GroupStructure& groups, const HypothesisSet& hypotheses);

/// w_in(d) as a function of (d, i).
using JointProbabilityFn = std::function<double(const DecisionConfig&, Index)>;

/// Precomputed r_i for every draw; the substrate for fast v and w.
class IndicatorTable {
public:
    IndicatorTable(const PosteriorSampleSet& samples, const HypothesisSet& hypotheses);

    Index draws() const { return static_cast<Index>(alt_.rows()); }
    Index hypotheses() const { return static_cast<Index>(alt_.cols()); }
    bool alternative(Index s, Index i) const { return alt_(s, i) != 0; }

    Eigen::VectorXd marginals() const;

private:
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> alt_;
};

/// Memoized w_in(d) for a sample set.
///
/// w_in depends on d only through d restricted to G_i \ {i}, so each
/// hypothesis keeps a count per pattern of that restriction (one pass over
/// the draws). Groups too wide for a table fall back to direct counting.
class GroupedJointTable {
public:
    GroupedJointTable(std::shared_ptr<const IndicatorTable> table, GroupStructure groups);

    double operator()(const DecisionConfig& d, Index i) const;

    static constexpr std::size_t kMaxTableBits = 16;

private:
    std::shared_ptr<const IndicatorTable> table_;
    GroupStructure groups_;
    std::vector<std::vector<double>> probs_;
};

/// Everything a decision rule needs from a posterior: marginals v and joint w.
struct PosteriorSummary {
    Eigen::VectorXd v;
    JointProbabilityFn w;
    GroupStructure groups;

    Index size() const { return v.size(); }
    Eigen::VectorXd w_at(const DecisionConfig& d) const;
};

PosteriorSummary summarize(const PosteriorSampleSet& samples, const HypothesisSet& hypotheses,
                           const GroupStructure& groups);

} // namespace nmmt

namespace nmmt {

/// Exponential decay constants of FDR_Xn (h_min), mFDR_Xn (j_min) and
/// FNR_Xn (h_tilde_min); empty when no hypothesis qualifies.
struct RateConstants {
    std::optional<double> j_min;
    std::optional<double> h_min;
    std::optional<double> h_tilde_min;
};

} // namespace nmmt

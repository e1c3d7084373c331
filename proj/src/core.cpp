#include "nmmt/core.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace nmmt {

DecisionConfig::DecisionConfig(std::initializer_list<int> bits)
{
    bits_.reserve(bits.size());
    for (int b : bits) {
        if (b != 0 && b != 1) {
            throw std::invalid_argument("DecisionConfig: entries must be 0 or 1");
        }
        bits_.push_back(static_cast<std::uint8_t>(b));
    }
}

DecisionConfig DecisionConfig::from_bits(std::vector<std::uint8_t> bits)
{
    DecisionConfig d;
    for (auto& b : bits) {
        if (b > 1) {
            throw std::invalid_argument("DecisionConfig: entries must be 0 or 1");
        }
    }
    d.bits_ = std::move(bits);
    return d;
}

Index DecisionConfig::rejections() const
{
    return static_cast<Index>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::string DecisionConfig::to_string() const
{
    std::string s;
    s.reserve(bits_.size());
    for (auto b : bits_) {
        s.push_back(b ? '1' : '0');
    }
    return s;
}

HypothesisSet::HypothesisSet(std::vector<NullRegion> regions, std::vector<Index> coordinates)
    : regions_(std::move(regions)), coordinates_(std::move(coordinates))
{
    if (regions_.size() != coordinates_.size()) {
        throw std::invalid_argument("HypothesisSet: coordinate map must cover every hypothesis");
    }
    for (Index c : coordinates_) {
        if (c < 0) {
            throw std::invalid_argument("HypothesisSet: negative coordinate");
        }
    }
}

const NullRegion& HypothesisSet::region(Index i) const
{
    if (i < 0 || i >= size()) {
        throw std::out_of_range("hypothesis index out of range");
    }
    return regions_[static_cast<std::size_t>(i)];
}

Index HypothesisSet::coordinate(Index i) const
{
    if (i < 0 || i >= size()) {
        throw std::out_of_range("hypothesis index out of range");
    }
    return coordinates_[static_cast<std::size_t>(i)];
}

GroupStructure::GroupStructure(std::vector<std::vector<Index>> groups) : groups_(std::move(groups))
{
    const auto m = static_cast<Index>(groups_.size());
    others_.resize(groups_.size());
    for (Index i = 0; i < m; ++i) {
        auto& g = groups_[static_cast<std::size_t>(i)];
        std::sort(g.begin(), g.end());
        g.erase(std::unique(g.begin(), g.end()), g.end());
        if (!std::binary_search(g.begin(), g.end(), i)) {
            throw std::invalid_argument("GroupStructure: G_i must contain i");
        }
        for (Index j : g) {
            if (j < 0 || j >= m) {
                throw std::invalid_argument("GroupStructure: index out of range");
            }
            if (j != i) {
                others_[static_cast<std::size_t>(i)].push_back(j);
            }
        }
    }
}

GroupStructure GroupStructure::singletons(Index m)
{
    std::vector<std::vector<Index>> g(static_cast<std::size_t>(m));
    for (Index i = 0; i < m; ++i) {
        g[static_cast<std::size_t>(i)] = {i};
    }
    return GroupStructure(std::move(g));
}

bool GroupStructure::all_singletons() const
{
    return std::all_of(others_.begin(), others_.end(), [](const auto& o) { return o.empty(); });
}

bool GroupStructure::contains(Index i, Index j) const
{
    const auto& g = group(i);
    return std::binary_search(g.begin(), g.end(), j);
}

std::vector<std::vector<Index>> GroupStructure::components() const
{
    const auto m = static_cast<std::size_t>(size());
    std::vector<std::size_t> parent(m);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    for (std::size_t i = 0; i < m; ++i) {
        for (Index j : others_[i]) {
            const auto a = find(i);
            const auto b = find(static_cast<std::size_t>(j));
            if (a != b) {
                parent[std::max(a, b)] = std::min(a, b);
            }
        }
    }
    std::vector<std::vector<Index>> out;
    std::vector<std::ptrdiff_t> slot(m, -1);
    for (std::size_t i = 0; i < m; ++i) {
        const auto r = find(i);
        if (slot[r] < 0) {
            slot[r] = static_cast<std::ptrdiff_t>(out.size());
            out.emplace_back();
        }
        out[static_cast<std::size_t>(slot[r])].push_back(static_cast<Index>(i));
    }
    return out;
}

PosteriorSampleSet::PosteriorSampleSet(Eigen::MatrixXd draws, Provenance provenance)
    : draws_(std::move(draws)), provenance_(std::move(provenance))
{
    if (draws_.rows() < 1) {
        throw std::invalid_argument("PosteriorSampleSet: empty sample set");
    }
}

bool eval_r(const Eigen::Ref<const Eigen::RowVectorXd>& draw, Index i, const HypothesisSet& hypotheses)
{
    if (hypotheses.coordinate(i) >= draw.size()) {
        throw std::out_of_range("eval_r: coordinate outside the draw");
    }
    return hypotheses.alternative(draw, i);
}

bool eval_z(const Eigen::Ref<const Eigen::RowVectorXd>& draw, const DecisionConfig& d, Index i,
            const GroupStructure& groups, const HypothesisSet& hypotheses)
{
    if (d.size() != hypotheses.size() || groups.size() != hypotheses.size()) {
        throw std::invalid_argument("eval_z: dimension mismatch");
    }
    for (Index j : groups.others(i)) {
        if (eval_r(draw, j, hypotheses) != d[j]) {
            return false;
        }
    }
    return true;
}

double estimate_v(const PosteriorSampleSet& samples, Index i, const HypothesisSet& hypotheses)
{
    Index hits = 0;
    for (Index s = 0; s < samples.size(); ++s) {
        hits += eval_r(samples.draw(s), i, hypotheses) ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(samples.size());
}

double estimate_w(const PosteriorSampleSet& samples, const DecisionConfig& d, Index i,
                  const GroupStructure& groups, const HypothesisSet& hypotheses)
{
    if (d.size() != hypotheses.size() || groups.size() != hypotheses.size()) {
        throw std::invalid_argument("estimate_w: dimension mismatch");
    }
    Index hits = 0;
    for (Index s = 0; s < samples.size(); ++s) {
        const auto draw = samples.draw(s);
        hits += (eval_r(draw, i, hypotheses) && eval_z(draw, d, i, groups, hypotheses)) ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(samples.size());
}

IndicatorTable::IndicatorTable(const PosteriorSampleSet& samples, const HypothesisSet& hypotheses)
    : alt_(samples.size(), hypotheses.size())
{
    for (Index s = 0; s < samples.size(); ++s) {
        const auto draw = samples.draw(s);
        for (Index i = 0; i < hypotheses.size(); ++i) {
            alt_(s, i) = eval_r(draw, i, hypotheses) ? 1 : 0;
        }
    }
}

Eigen::VectorXd IndicatorTable::marginals() const
{
    return alt_.cast<double>().colwise().mean().transpose();
}

GroupedJointTable::GroupedJointTable(std::shared_ptr<const IndicatorTable> table, GroupStructure groups)
    : table_(std::move(table)), groups_(std::move(groups))
{
    const Index m = groups_.size();
    if (table_->hypotheses() != m) {
        throw std::invalid_argument("GroupedJointTable: dimension mismatch");
    }
    const auto total = static_cast<double>(table_->draws());
    probs_.resize(static_cast<std::size_t>(m));
    for (Index i = 0; i < m; ++i) {
        const auto& others = groups_.others(i);
        if (others.size() > kMaxTableBits) {
            continue;
        }
        auto& counts = probs_[static_cast<std::size_t>(i)];
        counts.assign(std::size_t{1} << others.size(), 0.0);
        for (Index s = 0; s < table_->draws(); ++s) {
            if (!table_->alternative(s, i)) {
                continue;
            }
            std::size_t pattern = 0;
            for (std::size_t k = 0; k < others.size(); ++k) {
                pattern |= static_cast<std::size_t>(table_->alternative(s, others[k])) << k;
            }
            counts[pattern] += 1.0;
        }
        for (auto& c : counts) {
            c /= total;
        }
    }
}

double GroupedJointTable::operator()(const DecisionConfig& d, Index i) const
{
    if (d.size() != groups_.size()) {
        throw std::invalid_argument("w: dimension mismatch");
    }
    const auto& others = groups_.others(i);
    const auto& probs = probs_[static_cast<std::size_t>(i)];
    if (!probs.empty()) {
        std::size_t pattern = 0;
        for (std::size_t k = 0; k < others.size(); ++k) {
            pattern |= static_cast<std::size_t>(d[others[k]]) << k;
        }
        return probs[pattern];
    }
    Index hits = 0;
    for (Index s = 0; s < table_->draws(); ++s) {
        if (!table_->alternative(s, i)) {
            continue;
        }
        bool ok = true;
        for (Index j : others) {
            if (table_->alternative(s, j) != d[j]) {
                ok = false;
                break;
            }
        }
        hits += ok ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(table_->draws());
}

Eigen::VectorXd PosteriorSummary::w_at(const DecisionConfig& d) const
{
    Eigen::VectorXd out(size());
    for (Index i = 0; i < size(); ++i) {
        out[i] = w(d, i);
    }
    return out;
}

PosteriorSummary summarize(const PosteriorSampleSet& samples, const HypothesisSet& hypotheses,
                           const GroupStructure& groups)
{
    if (groups.size() != hypotheses.size()) {
        throw std::invalid_argument("summarize: dimension mismatch");
    }
    auto table = std::make_shared<const IndicatorTable>(samples, hypotheses);
    auto joint = std::make_shared<const GroupedJointTable>(table, groups);
    PosteriorSummary out;
    out.v = table->marginals();
    out.w = [joint](const DecisionConfig& d, Index i) { return (*joint)(d, i); };
    out.groups = groups;
    return out;
}

} // namespace nmmt

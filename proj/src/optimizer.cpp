#include "nmmt/optimizer.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>

#include "nmmt/random.hpp"

namespace nmmt {

namespace {

void check_beta(double beta)
{
    if (!(beta >= 0.0 && beta <= 1.0)) {
        throw std::invalid_argument("beta must lie in [0, 1]");
    }
}

// Objective restricted to one component; d carries the full configuration.
double component_objective(const JointProbabilityFn& w, const DecisionConfig& d, const std::vector<Index>& comp,
                           double beta)
{
    double f = 0.0;
    for (Index i : comp) {
        if (d[i]) {
            f += w(d, i) - beta;
        }
    }
    return f;
}

// Tie-break order on masks over the component (bit k = comp[k], k = 0 most significant).
bool better_mask(double obj_a, std::uint64_t a, double obj_b, std::uint64_t b)
{
    if (obj_a > obj_b + kObjectiveTieTolerance) {
        return true;
    }
    if (obj_b > obj_a + kObjectiveTieTolerance) {
        return false;
    }
    const int ra = std::popcount(a);
    const int rb = std::popcount(b);
    if (ra != rb) {
        return ra < rb;
    }
    const std::uint64_t diff = a ^ b;
    if (diff == 0) {
        return false;
    }
    const std::uint64_t lowest = diff & (~diff + 1);
    return (a & lowest) == 0;
}

void apply_mask(DecisionConfig& d, const std::vector<Index>& comp, std::uint64_t mask)
{
    for (std::size_t k = 0; k < comp.size(); ++k) {
        d.set(comp[k], ((mask >> k) & 1U) != 0);
    }
}

void solve_exhaustive(const JointProbabilityFn& w, const std::vector<Index>& comp, double beta, DecisionConfig& d)
{
    const std::uint64_t count = std::uint64_t{1} << comp.size();
    std::uint64_t best_mask = 0;
    apply_mask(d, comp, 0);
    double best = component_objective(w, d, comp, beta);
    for (std::uint64_t mask = 1; mask < count; ++mask) {
        apply_mask(d, comp, mask);
        const double f = component_objective(w, d, comp, beta);
        if (better_mask(f, mask, best, best_mask)) {
            best = f;
            best_mask = mask;
        }
    }
    apply_mask(d, comp, best_mask);
}

// Steepest single-flip ascent on the component, starting from d.
double ascend(const JointProbabilityFn& w, const std::vector<Index>& comp, double beta, DecisionConfig& d)
{
    double current = component_objective(w, d, comp, beta);
    for (;;) {
        Index best_k = -1;
        double best = current;
        for (std::size_t k = 0; k < comp.size(); ++k) {
            d.flip(comp[k]);
            const double f = component_objective(w, d, comp, beta);
            d.flip(comp[k]);
            if (f > best + kObjectiveTieTolerance) {
                best = f;
                best_k = static_cast<Index>(k);
            }
        }
        if (best_k < 0) {
            return current;
        }
        d.flip(comp[static_cast<std::size_t>(best_k)]);
        current = best;
    }
}

bool better_on_component(double obj_a, const DecisionConfig& a, double obj_b, const DecisionConfig& b,
                         const std::vector<Index>& comp)
{
    if (obj_a > obj_b + kObjectiveTieTolerance) {
        return true;
    }
    if (obj_b > obj_a + kObjectiveTieTolerance) {
        return false;
    }
    Index ra = 0;
    Index rb = 0;
    for (Index i : comp) {
        ra += a[i] ? 1 : 0;
        rb += b[i] ? 1 : 0;
    }
    if (ra != rb) {
        return ra < rb;
    }
    for (Index i : comp) {
        if (a[i] != b[i]) {
            return !a[i];
        }
    }
    return false;
}

void solve_local_search(const JointProbabilityFn& w, const std::vector<Index>& comp, double beta,
                        const OptimizerOptions& options, const Eigen::VectorXd& marginals, DecisionConfig& d)
{
    Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(comp.front())));
    for (Index i : comp) {
        d.set(i, marginals[i] > beta);
    }
    double best_obj = ascend(w, comp, beta, d);
    DecisionConfig best = d;
    for (int r = 0; r < options.random_starts; ++r) {
        for (Index i : comp) {
            d.set(i, rng.bernoulli(0.5));
        }
        const double f = ascend(w, comp, beta, d);
        if (better_on_component(f, d, best_obj, best, comp)) {
            best_obj = f;
            best = d;
        }
    }
    for (Index i : comp) {
        d.set(i, best[i]);
    }
}

} // namespace

bool better_decision(double obj_a, const DecisionConfig& a, double obj_b, const DecisionConfig& b)
{
    if (obj_a > obj_b + kObjectiveTieTolerance) {
        return true;
    }
    if (obj_b > obj_a + kObjectiveTieTolerance) {
        return false;
    }
    if (a.rejections() != b.rejections()) {
        return a.rejections() < b.rejections();
    }
    return a < b;
}

double f_beta(const Eigen::Ref<const Eigen::VectorXd>& w, const DecisionConfig& d, double beta)
{
    check_beta(beta);
    if (w.size() != d.size()) {
        throw std::invalid_argument("f_beta: dimension mismatch");
    }
    double f = 0.0;
    for (Index i = 0; i < d.size(); ++i) {
        if (d[i]) {
            f += w[i] - beta;
        }
    }
    return f;
}

double f_beta(const JointProbabilityFn& w, const DecisionConfig& d, double beta)
{
    check_beta(beta);
    double f = 0.0;
    for (Index i = 0; i < d.size(); ++i) {
        if (d[i]) {
            f += w(d, i) - beta;
        }
    }
    return f;
}

DecisionConfig additive_rule(const Eigen::Ref<const Eigen::VectorXd>& v, double beta)
{
    check_beta(beta);
    DecisionConfig d(v.size());
    for (Index i = 0; i < v.size(); ++i) {
        d.set(i, v[i] > beta);
    }
    return d;
}

void audit_group_consistency(const JointProbabilityFn& w, const GroupStructure& groups, Index m, int trials,
                             std::uint64_t seed)
{
    if (groups.size() != m) {
        throw std::invalid_argument("audit: dimension mismatch");
    }
    Rng rng(seed);
    DecisionConfig d(m);
    for (int t = 0; t < trials; ++t) {
        for (Index i = 0; i < m; ++i) {
            d.set(i, rng.bernoulli(0.5));
        }
        for (Index i = 0; i < m; ++i) {
            const double base = w(d, i);
            for (Index j = 0; j < m; ++j) {
                if (groups.contains(i, j)) {
                    continue;
                }
                d.flip(j);
                const double moved = w(d, i);
                d.flip(j);
                if (moved != base) {
                    throw std::invalid_argument("inconsistent group structure: w_" + std::to_string(i) +
                                                " depends on coordinate " + std::to_string(j) + " outside G_i");
                }
            }
        }
    }
}

DecisionConfig optimize_decision(const JointProbabilityFn& w, const GroupStructure& groups, double beta, Index m,
                                 const OptimizerOptions& options)
{
    check_beta(beta);
    if (groups.size() != m) {
        throw std::invalid_argument("optimize_decision: dimension mismatch");
    }
    if (options.audit) {
        audit_group_consistency(w, groups, m, options.audit_trials, options.seed);
    }
    DecisionConfig d(m);
    Eigen::VectorXd marginals;
    if (options.marginals) {
        marginals = *options.marginals;
    } else {
        marginals.resize(m);
        for (Index i = 0; i < m; ++i) {
            marginals[i] = w(d, i);
        }
    }
    for (const auto& comp : groups.components()) {
        if (static_cast<Index>(comp.size()) <= options.exact_limit) {
            solve_exhaustive(w, comp, beta, d);
        } else {
            solve_local_search(w, comp, beta, options, marginals, d);
        }
    }
    return d;
}

DecisionConfig brute_force_decision(const JointProbabilityFn& w, const GroupStructure& groups, double beta, Index m)
{
    check_beta(beta);
    if (m > 20) {
        throw std::invalid_argument("brute_force_decision: m too large for enumeration (max 20)");
    }
    if (groups.size() != m) {
        throw std::invalid_argument("brute_force_decision: dimension mismatch");
    }
    DecisionConfig best(m);
    double best_obj = f_beta(w, best, beta);
    DecisionConfig d(m);
    for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << m); ++mask) {
        for (Index i = 0; i < m; ++i) {
            d.set(i, ((mask >> i) & 1U) != 0);
        }
        const double f = f_beta(w, d, beta);
        if (better_decision(f, d, best_obj, best)) {
            best_obj = f;
            best = d;
        }
    }
    return best;
}

} // namespace nmmt

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nmmt/optimizer.hpp"
#include "nmmt/random.hpp"
#include "nmmt/stats.hpp"

#include <cmath>

using namespace nmmt;

namespace {

struct Instance {
    GroupStructure groups;
    PosteriorSummary summary;
};

// Random groups and correlated binary draws; summarize() yields a group-consistent w.
Instance random_instance(Index m, std::uint64_t seed, Index draws = 200)
{
    Rng rng(seed);
    std::vector<std::vector<Index>> g(static_cast<std::size_t>(m));
    for (Index i = 0; i < m; ++i) {
        g[static_cast<std::size_t>(i)].push_back(i);
        for (Index j = 0; j < m; ++j) {
            if (j != i && rng.bernoulli(2.0 / static_cast<double>(m))) {
                g[static_cast<std::size_t>(i)].push_back(j);
            }
        }
    }
    Eigen::MatrixXd x(draws, m);
    Eigen::VectorXd p(m);
    for (Index i = 0; i < m; ++i) {
        p[i] = rng.uniform();
    }
    for (Index s = 0; s < draws; ++s) {
        const double shared = rng.normal();
        for (Index i = 0; i < m; ++i) {
            x(s, i) = ((0.7 * shared + rng.normal()) / std::sqrt(1.49) < normal_quantile(p[i])) ? 1.0 : 0.0;
        }
    }
    std::vector<NullRegion> regions(static_cast<std::size_t>(m), NullRegion::closed_interval(-0.5, 0.5));
    std::vector<Index> coords(static_cast<std::size_t>(m));
    for (Index i = 0; i < m; ++i) {
        coords[static_cast<std::size_t>(i)] = i;
    }
    GroupStructure groups(g);
    return {groups, summarize(PosteriorSampleSet(x, {"test", seed}), HypothesisSet(regions, coords), groups)};
}

} // namespace

TEST_CASE("objective examples")
{
    Eigen::VectorXd w(2);
    w << 0.9, 0.1;
    CHECK(f_beta(w, DecisionConfig{1, 0}, 0.5) == doctest::Approx(0.4));
    CHECK(f_beta(w, DecisionConfig{0, 0}, 0.5) == 0.0);
    w << 0.6, 0.2;
    CHECK(f_beta(w, DecisionConfig{1, 1}, 0.5) == doctest::Approx(-0.2));
    CHECK_THROWS_AS(f_beta(w, DecisionConfig{1, 1}, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(f_beta(w, DecisionConfig{1, 1}, -0.1), std::invalid_argument);
}

TEST_CASE("additive rule thresholds strictly")
{
    Eigen::VectorXd v(3);
    v << 0.9, 0.3, 0.5;
    CHECK(additive_rule(v, 0.5) == DecisionConfig{1, 0, 0});
    CHECK(additive_rule(v, 0.0) == DecisionConfig{1, 1, 1});
    CHECK(additive_rule(v, 1.0).none());
}

TEST_CASE("singleton groups reduce to thresholding the marginals")
{
    Eigen::VectorXd v(2);
    v << 0.9, 0.3;
    JointProbabilityFn w = [v](const DecisionConfig&, Index i) { return v[i]; };
    const auto g = GroupStructure::singletons(2);
    CHECK(optimize_decision(w, g, 0.5, 2) == DecisionConfig{1, 0});
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto inst = random_instance(10, seed);
        const auto singles = GroupStructure::singletons(10);
        const Eigen::VectorXd marg = inst.summary.v;
        JointProbabilityFn wv = [marg](const DecisionConfig&, Index i) { return marg[i]; };
        // Marginals are multiples of 1/200; keep beta off that lattice so no tie arises.
        for (int k = 0; k < 20; ++k) {
            const double beta = (k + 0.37) / 20.0;
            CHECK(optimize_decision(wv, singles, beta, 10) == additive_rule(marg, beta));
            CHECK(brute_force_decision(wv, singles, beta, 10) == additive_rule(marg, beta));
        }
    }
}

TEST_CASE("tabulated three-hypothesis example matches enumeration")
{
    // G_1 = {1,2}, G_2 = {1,2}, G_3 = {3}; w_i indexed by the partner decision.
    GroupStructure g({{0, 1}, {0, 1}, {2}});
    JointProbabilityFn w = [](const DecisionConfig& d, Index i) {
        switch (i) {
        case 0: return d[1] ? 0.35 : 0.55;
        case 1: return d[0] ? 0.30 : 0.45;
        default: return 0.41;
        }
    };
    const auto best = brute_force_decision(w, g, 0.4, 3);
    CHECK(optimize_decision(w, g, 0.4, 3) == best);
    CHECK(best == DecisionConfig{1, 0, 1});
    CHECK(f_beta(w, best, 0.4) == doctest::Approx(0.16));
}

TEST_CASE("optimizer agrees with enumeration on random consistent instances")
{
    for (Index m = 1; m <= 12; ++m) {
        for (std::uint64_t seed = 0; seed < 8; ++seed) {
            const auto inst = random_instance(m, 100 * static_cast<std::uint64_t>(m) + seed);
            for (double beta : {0.0, 0.1, 0.35, 0.5, 0.8, 1.0}) {
                CHECK(optimize_decision(inst.summary.w, inst.groups, beta, m) ==
                      brute_force_decision(inst.summary.w, inst.groups, beta, m));
            }
        }
    }
}

TEST_CASE("beta one accepts everything")
{
    const auto inst = random_instance(9, 77);
    CHECK(optimize_decision(inst.summary.w, inst.groups, 1.0, 9).none());
    JointProbabilityFn certain = [](const DecisionConfig&, Index) { return 1.0; };
    CHECK(optimize_decision(certain, GroupStructure::singletons(4), 1.0, 4).none());
    CHECK(brute_force_decision(certain, GroupStructure::singletons(1), 0.5, 1) == DecisionConfig{1});
}

TEST_CASE("rejections do not increase with beta")
{
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto inst = random_instance(8, 500 + seed);
        Index previous = 9;
        for (int k = 0; k <= 40; ++k) {
            const double beta = k / 40.0;
            const Index r = optimize_decision(inst.summary.w, inst.groups, beta, 8).rejections();
            CHECK(r <= previous);
            previous = r;
        }
    }
}

TEST_CASE("optimum dominates random configurations")
{
    Rng rng(31);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto inst = random_instance(14, 900 + seed);
        const double beta = rng.uniform();
        const auto best = optimize_decision(inst.summary.w, inst.groups, beta, 14);
        const double top = f_beta(inst.summary.w, best, beta);
        for (int k = 0; k < 1000; ++k) {
            DecisionConfig d(14);
            for (Index i = 0; i < 14; ++i) {
                d.set(i, rng.bernoulli(0.5));
            }
            CHECK(top >= f_beta(inst.summary.w, d, beta) - kObjectiveTieTolerance);
        }
    }
}

TEST_CASE("components above the exact limit use local search")
{
    // A chain makes one component of size 30.
    const Index m = 30;
    std::vector<std::vector<Index>> g(static_cast<std::size_t>(m));
    for (Index i = 0; i < m; ++i) {
        g[static_cast<std::size_t>(i)] = {i};
        if (i + 1 < m) {
            g[static_cast<std::size_t>(i)].push_back(i + 1);
        }
    }
    GroupStructure groups(g);
    REQUIRE(groups.components().size() == 1);
    Rng rng(5);
    Eigen::VectorXd a(m);
    Eigen::VectorXd b(m);
    for (Index i = 0; i < m; ++i) {
        a[i] = rng.uniform();
        b[i] = rng.uniform();
    }
    JointProbabilityFn w = [a, b, m](const DecisionConfig& d, Index i) {
        return (i + 1 < m && d[i + 1]) ? a[i] : b[i];
    };
    OptimizerOptions opts;
    opts.exact_limit = 20;
    const auto local = optimize_decision(w, groups, 0.5, m, opts);
    const auto again = optimize_decision(w, groups, 0.5, m, opts);
    CHECK(local == again);
    // A single flip never improves the local-search answer.
    const double top = f_beta(w, local, 0.5);
    for (Index i = 0; i < m; ++i) {
        auto d = local;
        d.flip(i);
        CHECK(f_beta(w, d, 0.5) <= top + kObjectiveTieTolerance);
    }
    // The chain objective is solvable by dynamic programming; compare against it.
    // State: decision of i+1 when scoring i, scanned from the end.
    std::vector<double> best_if(2, 0.0);
    for (Index i = m - 1; i >= 0; --i) {
        std::vector<double> next(2);
        for (int di = 0; di <= 1; ++di) {
            double val = 0.0;
            if (i + 1 < m) {
                double take0 = best_if[0];
                double take1 = best_if[1];
                val = di ? std::max(take0 + b[i] - 0.5, take1 + a[i] - 0.5) : std::max(take0, take1);
            } else {
                val = di ? b[i] - 0.5 : 0.0;
            }
            next[static_cast<std::size_t>(di)] = val;
        }
        best_if = next;
    }
    CHECK(top == doctest::Approx(std::max(best_if[0], best_if[1])).epsilon(1e-12));
}

TEST_CASE("audit detects out-of-group dependence")
{
    JointProbabilityFn leaky = [](const DecisionConfig& d, Index i) { return (i == 0 && d[2]) ? 0.2 : 0.7; };
    const auto g = GroupStructure::singletons(3);
    CHECK_THROWS_AS(audit_group_consistency(leaky, g, 3, 32, 1), std::invalid_argument);
    OptimizerOptions opts;
    opts.audit = true;
    CHECK_THROWS_AS(optimize_decision(leaky, g, 0.5, 3, opts), std::invalid_argument);
    const auto inst = random_instance(6, 3);
    CHECK_NOTHROW(audit_group_consistency(inst.summary.w, inst.groups, 6, 32, 1));
    CHECK_THROWS(brute_force_decision(leaky, GroupStructure::singletons(21), 0.5, 21));
}

TEST_CASE("tie-break order")
{
    CHECK(better_decision(1.0, DecisionConfig{1, 1}, 0.5, DecisionConfig{0, 0}));
    CHECK(better_decision(0.0, DecisionConfig{0, 0}, 0.0, DecisionConfig{1, 0}));
    CHECK(better_decision(0.0, DecisionConfig{0, 1}, 0.0, DecisionConfig{1, 0}));
    CHECK_FALSE(better_decision(0.0, DecisionConfig{1, 0}, 0.0, DecisionConfig{1, 0}));
}

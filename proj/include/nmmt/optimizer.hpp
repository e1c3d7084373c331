#pragma once

#include <cstdint>
#include <optional>

#include "nmmt/core.hpp"

namespace nmmt {

/// Objectives closer than this are treated as tied.
inline constexpr double kObjectiveTieTolerance = 1e-12;

/// f_beta(d) = sum_i d_i (w_i - beta), with w indexed by hypothesis.
double f_beta(const Eigen::Ref<const Eigen::VectorXd>& w, const DecisionConfig& d, double beta);

/// Same objective with w evaluated at d itself.
double f_beta(const JointProbabilityFn& w, const DecisionConfig& d, double beta);

struct OptimizerOptions {
    /// Components up to this size are enumerated exhaustively.
    Index exact_limit = 20;
    int random_starts = 32;
    std::uint64_t seed = 0x5eed;
    /// Marginals used for the additive-rule start of the local search.
    std::optional<Eigen::VectorXd> marginals;
    /// Probe w for dependence on out-of-group coordinates before optimizing.
    bool audit = false;
    int audit_trials = 64;
};

/// Maximizer of f_beta over {0,1}^m, solved independently per connected
/// component of the group graph. Ties go to fewer rejections, then to the
/// lexicographically smallest configuration.
DecisionConfig optimize_decision(const JointProbabilityFn& w, const GroupStructure& groups, double beta, Index m,
                                 const OptimizerOptions& options = {});

/// Exhaustive argmax over all 2^m configurations (m <= 20).
DecisionConfig brute_force_decision(const JointProbabilityFn& w, const GroupStructure& groups, double beta,
                                    Index m);

/// d_i = 1 iff v_i > beta.
DecisionConfig additive_rule(const Eigen::Ref<const Eigen::VectorXd>& v, double beta);

/// Throws std::invalid_argument if some w_i changes when a coordinate outside
/// G_i is flipped on randomly drawn configurations.
void audit_group_consistency(const JointProbabilityFn& w, const GroupStructure& groups, Index m, int trials,
                             std::uint64_t seed);

/// True when (obj_a, a) beats (obj_b, b) under the objective-then-tie-break order.
bool better_decision(double obj_a, const DecisionConfig& a, double obj_b, const DecisionConfig& b);

} // namespace nmmt

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nmmt/core.hpp"
#include "nmmt/optimizer.hpp"

namespace nmmt {

/// Posterior error measures of one decision given the data.
struct ErrorReport {
    double fdr_x = 0.0;
    double mfdr_x = 0.0;
    double fnr_x = 0.0;
    double mfnr_x = 0.0;
    Index rejections = 0;
};

enum class ErrorMeasure { Fdr, ModifiedFdr, Fnr, ModifiedFnr };

std::string to_string(ErrorMeasure measure);
ErrorMeasure parse_error_measure(const std::string& name);
double select(const ErrorReport& report, ErrorMeasure measure);

double posterior_fdr(const DecisionConfig& d, const Eigen::Ref<const Eigen::VectorXd>& v);
double posterior_fnr(const DecisionConfig& d, const Eigen::Ref<const Eigen::VectorXd>& v);
double modified_posterior_fdr(const DecisionConfig& d, const Eigen::Ref<const Eigen::VectorXd>& w_of_d);
double modified_posterior_fnr(const DecisionConfig& d, const Eigen::Ref<const Eigen::VectorXd>& w_of_d);

ErrorReport error_report(const DecisionConfig& d, const PosteriorSummary& posterior);

/// Non-marginal decision at beta for a summarized posterior.
DecisionConfig nmd_decision(const PosteriorSummary& posterior, double beta, const OptimizerOptions& options = {});

struct CalibrationResult {
    double beta = 1.0;
    double achieved = 0.0;
    /// False when the visited error trace was not non-increasing in beta.
    bool monotone = true;
    std::vector<std::pair<double, double>> trace;
};

/// Smallest beta on the dyadic grid of spacing 2^-resolution_bits with
/// error_at(beta) <= target_alpha, found by bisection.
CalibrationResult calibrate_beta(double target_alpha, const std::function<double(double)>& error_at,
                                 int resolution_bits = 12);

/// Calibration of the non-marginal rule against FDR_Xn or mFDR_Xn.
CalibrationResult calibrate_beta(double target_alpha, ErrorMeasure measure, const PosteriorSummary& posterior,
                                 int resolution_bits = 12, const OptimizerOptions& options = {});

enum class Conditioning { ExcludeNone, ExcludeAllAccept, ExcludeAllReject };

struct ReplicateOutcome {
    DecisionConfig decision;
    ErrorReport report;
};

struct ExpectedErrorEstimate {
    double value = 0.0;
    Index n_replicates = 0;
    Index n_qualifying = 0;
    Index n_excluded = 0;
    Index n_failed = 0;
    double std_err = 0.0;
};

class ConditioningNeverOccurred : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Mean of one error component over replicates passing the conditioning
/// event. Replicate r runs with seed derive_seed(master_seed, r); results do
/// not depend on jobs.
ExpectedErrorEstimate expected_errors(const std::function<ReplicateOutcome(std::uint64_t)>& runner, Index replicates,
                                      Conditioning conditioning, ErrorMeasure measure, std::uint64_t master_seed,
                                      int jobs = 1);

/// Same estimate from outcomes already computed (std::nullopt = failed replicate).
ExpectedErrorEstimate expected_errors(const std::vector<std::optional<ReplicateOutcome>>& outcomes,
                                      Conditioning conditioning, ErrorMeasure measure);

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    Index used = 0;
    Index dropped = 0;
};

class InsufficientData : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// OLS of log(error) on n. Non-positive errors are dropped and counted.
RateFit rate_fit(const std::vector<std::pair<double, double>>& points);

struct BoundCheck {
    double observed = 0.0;
    double std_err = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    bool within = false;
    Index m_signal_groups = 0;
};

/// Number of groups containing a false null (m_1), after checking that
/// all-null groups do not overlap those groups. Throws if they do.
Index check_disjoint_null_groups(const GroupStructure& groups, const DecisionConfig& d_true);

/// Asymptotic interval for the maximum mpBFDR, (1/(sum d_t + 1), (m - m_1)/(sum d_t + m - m_1)).
std::pair<double, double> max_mpbfdr_bounds(const GroupStructure& groups, const DecisionConfig& d_true);

/// Estimates mpBFDR of the non-marginal rule at beta = 0 and compares it to
/// the asymptotic interval (membership allows 2 standard errors).
BoundCheck beta_zero_bound_check(const GroupStructure& groups, const DecisionConfig& d_true,
                                 const std::function<PosteriorSummary(std::uint64_t)>& posterior_for_seed,
                                 Index replicates, std::uint64_t master_seed, int jobs = 1);

/// Runs task(r) for r in [0, count) on a bounded pool; output order is by r.
/// A task that throws leaves an empty slot and, if errors is given, its message.
template <typename T>
std::vector<std::optional<T>> run_indexed(Index count, int jobs, const std::function<T(Index)>& task,
                                          std::vector<std::string>* errors = nullptr);

} // namespace nmmt

#include "nmmt/detail/pool.hpp"

#pragma once

#include <filesystem>
#include <span>
#include <optional>
#include <string>
#include <vector>

#include "nmmt/config.hpp"
#include "nmmt/kl.hpp"

namespace nmmt::harness {

/// |d0 AND d| / |d0 OR d|, and 1 when both are all-zero.
double jaccard(const DecisionConfig& d0, const DecisionConfig& d);

/// One-sample KS distance of samples against N(mean, sd^2).
double ks_distance(std::span<const double> samples, double mean, double sd);

/// Largest set of hypotheses, taken in decreasing v order, whose posterior
/// FDR stays at or below alpha.
DecisionConfig szg_rule(const Eigen::Ref<const Eigen::VectorXd>& v, double alpha);

inline constexpr const char* kReplicatesVersion = "# nmmt replicates v1";
inline constexpr const char* kReplicatesHeader =
    "experiment,seed,n,method,rejections,jaccard,euclid,ks,fdr_x,mfdr_x,fnr_x,mfnr_x,beta,wall_ms";

struct ReplicateRecord {
    std::string experiment;
    std::uint64_t seed = 0;
    Index n = 0;
    Method method = Method::Nmd;
    DecisionConfig decision;
    ErrorReport report;
    double jaccard = 0.0;
    double euclid = 0.0;
    double ks = 0.0;
    /// Threshold used by the rule; absent for SZG.
    std::optional<double> beta;
    double wall_ms = 0.0;
};

std::string format_record(const ReplicateRecord& record);
void write_replicates_csv(const std::filesystem::path& path, const std::vector<ReplicateRecord>& records);

struct ReplicateFailure {
    Index n = 0;
    Index replicate = 0;
    std::string message;
};

struct CellSummary {
    Index n = 0;
    Method method = Method::Nmd;
    Index count = 0;
    double median_jaccard = 0.0;
    double median_euclid = 0.0;
    double median_ks = 0.0;
    double mean_jaccard = 0.0;
    double mean_euclid = 0.0;
    double mean_ks = 0.0;
    double mean_fdr_x = 0.0;
    double mean_mfdr_x = 0.0;
    double mean_fnr_x = 0.0;
    double mean_mfnr_x = 0.0;
};

std::vector<CellSummary> summarize_cells(const std::vector<ReplicateRecord>& records);

struct ComparisonResult {
    std::vector<ReplicateRecord> records;
    std::vector<CellSummary> cells;
    Index attempted = 0;
    std::vector<ReplicateFailure> failures;
};

/// NMD, MPR and SZG on simulated AR(1) datasets over the n grid.
ComparisonResult run_comparison(const ExperimentConfig& config, int jobs);

struct ConsistencyRow {
    Index n = 0;
    double fraction = 0.0;
    double std_err = 0.0;
    Index failed = 0;
};

/// Fraction of replicates where the non-marginal decision at the fixed beta
/// equals the true decision.
std::vector<ConsistencyRow> run_consistency(const ExperimentConfig& config, int jobs);

struct RateRow {
    Index n = 0;
    ErrorMeasure measure = ErrorMeasure::Fdr;
    /// Geometric mean over qualifying replicates in log mode, arithmetic otherwise.
    double mean_error = 0.0;
    Index used = 0;
    std::optional<double> slope_target;
};

struct RateMeasureFit {
    ErrorMeasure measure = ErrorMeasure::Fdr;
    std::optional<RateFit> fit;
    std::optional<double> slope_target;
    /// Set when the fit was impossible.
    std::string note;
};

struct RatesResult {
    std::vector<RateRow> rows;
    std::vector<RateMeasureFit> fits;
    RateConstants constants;
    DecisionConfig d_true;
    Index failed = 0;
};

RatesResult run_rates(const ExperimentConfig& config, int jobs);

struct AlphaControlRow {
    Index n = 0;
    double beta_nmd = 0.0;
    ExpectedErrorEstimate mpbfdr;
    double beta_mpr = 0.0;
    ExpectedErrorEstimate pbfdr;
};

struct AlphaControlResult {
    bool feasible = true;
    std::string message;
    std::pair<double, double> bounds{0.0, 0.0};
    Index m_signal_groups = 0;
    std::vector<AlphaControlRow> rows;
    std::optional<BoundCheck> bound_check;
};

AlphaControlResult run_alpha_control(const ExperimentConfig& config, int jobs);

struct SuiteCheck {
    std::string name;
    Index passed = 0;
    Index total = 0;
    /// Fraction of passing checks required.
    double required = 1.0;
    std::string detail;

    bool ok() const { return total > 0 && static_cast<double>(passed) >= required * static_cast<double>(total); }
};

struct OracleSuiteResult {
    std::vector<SuiteCheck> checks;

    bool ok() const;
};

/// Property checks on the Gaussian oracle: sample-based v/w against the
/// closed form, optimizer against enumeration, dominance and reduction of the
/// modified measures, monotonicity in beta and the null-coordinate identity.
OracleSuiteResult run_oracle_suite(const ExperimentConfig& config, int jobs);

/// Writes the experiment's output files into out_dir and returns the CLI exit
/// code (0 success, 2 failure threshold exceeded).
int run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir, int jobs);

} // namespace nmmt::harness

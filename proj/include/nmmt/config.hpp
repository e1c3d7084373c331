#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nmmt/ar1.hpp"
#include "nmmt/errors.hpp"
#include "nmmt/gauss_oracle.hpp"

namespace nmmt {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ExperimentKind { OracleSuite, Compare, Rates, AlphaControl, Equipartition };
enum class ModelKind { Oracle, Ar1 };
enum class Method { Nmd, Mpr, Szg };

std::string to_string(ExperimentKind kind);
std::string to_string(Method method);

struct LambdaSpec {
    std::string kind = "block";
    Index block = 5;
    double correlation = 0.5;

    Eigen::MatrixXd build(Index m) const;
};

struct Ar1Section {
    Index m = 50;
    /// Explicit beta0 when non-empty, otherwise assembled from the signal lists.
    std::vector<double> beta0;
    std::vector<Index> signal_indices{0, 5, 10, 15, 20};
    std::vector<double> signal_values{0.6, -0.8, 1.0, -0.7, 0.9};
    double rho0 = -0.5;
    double sigma0_sq = 1.0;
    double intercept0 = 0.0;
    LambdaSpec lambda;
    double null_lo = -0.3;
    double null_hi = 0.3;
    double group_percentile = 0.95;
    ar1::GroupScore group_score = ar1::GroupScore::PartialCorrelation;
    bool intercept = true;

    ar1::TrueParams true_params() const;
};

struct OracleSection {
    std::vector<double> theta0{0.9, 0.6, 0.0, 0.1, -0.8};
    double sigma = 1.0;
    double prior_mean = 0.0;
    double prior_sd = 1.0;
    double eps = 0.3;
    /// Empty means singleton groups.
    std::vector<std::vector<Index>> groups;
    /// "analytic" uses closed-form v and w, "sampled" uses posterior draws.
    std::string posterior = "analytic";
    Index draws = 4000;

    oracle::GaussOracleModel model() const;
    GroupStructure group_structure() const;
};

struct ExperimentConfig {
    ExperimentKind experiment = ExperimentKind::Compare;
    ModelKind model = ModelKind::Ar1;
    std::uint64_t seed = 20240601;
    Index replicates = 50;
    std::vector<Index> n_grid{100, 200, 400, 800, 1600};
    double alpha = 0.05;
    std::vector<Method> methods{Method::Nmd, Method::Mpr, Method::Szg};
    ErrorMeasure calibrate = ErrorMeasure::Fdr;
    /// Fixed threshold for rate studies.
    double beta = 0.5;
    /// "log" averages log errors across replicates, "arithmetic" averages errors.
    std::string rate_average = "log";
    bool record_wall_time = false;
    /// Fraction of failed replicates above which the run reports failure.
    double failure_threshold = 0.1;
    Index exact_limit = 20;
    int random_starts = 32;
    Ar1Section ar1;
    OracleSection oracle;
    ar1::SpikeSlabPrior prior = ar1::SpikeSlabPrior::defaults();
    ar1::McmcSettings mcmc;
    std::vector<ar1::Theta> thetas;
    std::optional<std::string> output_dir;

    void validate() const;
    OptimizerOptions optimizer_options() const;
};

/// Parses and validates a config; kind, when given, replaces the experiment field.
ExperimentConfig parse_config(const std::string& json_text, std::optional<ExperimentKind> kind = std::nullopt);
ExperimentConfig load_config(const std::filesystem::path& path, std::optional<ExperimentKind> kind = std::nullopt);
/// Canonical JSON rendering of every field, used for run metadata.
std::string dump_config(const ExperimentConfig& config);

} // namespace nmmt

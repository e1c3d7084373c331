#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "nmmt/core.hpp"

namespace nmmt::ar1 {

/// x_t = rho0 x_{t-1} + intercept0 + z_t' beta0 + eps_t, eps_t ~ N(0, sigma0_sq), x_0 = 0,
/// with covariate rows z_t ~ N_m(0, lambda).
struct TrueParams {
    double rho0 = -0.5;
    Eigen::VectorXd beta0;
    double intercept0 = 0.0;
    double sigma0_sq = 1.0;
    Eigen::MatrixXd lambda;

    Index m() const { return beta0.size(); }
    void validate() const;
};

/// Spike-and-slab prior: beta_i | gamma_i ~ gamma_i N(0, tau^2) + (1 - gamma_i) N(0, v tau^2),
/// gamma_i | p ~ Bernoulli(p), p ~ Beta(a1, b1), sigma^2 ~ IG(a2, b2), rho ~ N(0, rho_sd^2).
/// The intercept, when present, has a flat prior.
struct SpikeSlabPrior {
    double tau = 100.0;
    double v_spike = 1e-6;
    double a1 = 2.0;
    double b1 = 10.0;
    double a2 = 0.0;
    double b2 = 0.0;
    double rho_sd = 1.0;

    /// tau = 100, v = 1e-6, Beta(2, 10) (mode 0.1), IG with mode 1 and variance 100.
    static SpikeSlabPrior defaults();
    void validate() const;
};

/// (shape, scale) of the inverse-gamma with the given mode and variance.
std::pair<double, double> inverse_gamma_from_mode_variance(double mode, double variance);

struct Draw {
    double rho = 0.0;
    Eigen::VectorXd beta;
    double intercept = 0.0;
    double sigma_sq = 1.0;
    double p = 0.5;
    std::vector<std::uint8_t> gamma;
};

struct McmcSettings {
    Index iters = 6000;
    Index burnin = 1000;
    Index thin = 5;

    void validate() const;
    Index retained() const { return (iters - burnin + thin - 1) / thin; }
};

/// Flat draw layout used by PosteriorSampleSet: [rho, beta_1..beta_m, intercept, sigma_sq, p].
namespace layout {
inline constexpr Index rho = 0;
inline Index beta(Index i) { return 1 + i; }
inline Index intercept(Index m) { return 1 + m; }
inline Index sigma_sq(Index m) { return 2 + m; }
inline Index p(Index m) { return 3 + m; }
inline Index width(Index m) { return 4 + m; }
} // namespace layout

struct SamplerOutput {
    std::vector<Draw> draws;
    PosteriorSampleSet samples;
};

Eigen::MatrixXd gen_covariates(Index n, const Eigen::MatrixXd& lambda, std::uint64_t seed);
Eigen::VectorXd gen_data(const Eigen::Ref<const Eigen::MatrixXd>& z, const TrueParams& params, std::uint64_t seed);

/// Systematic-scan Gibbs sampler for the spike-and-slab AR(1) regression.
SamplerOutput posterior_sample(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::MatrixXd>& z,
                               const SpikeSlabPrior& prior, const McmcSettings& settings, std::uint64_t seed,
                               bool intercept = true);

PosteriorSampleSet to_sample_set(const std::vector<Draw>& draws, Provenance provenance);

/// Hypothesis 0 tests |rho| < 1 against |rho| >= 1; hypothesis i (1..m) tests
/// beta_i in [null_lo, null_hi] against the complement.
HypothesisSet map_hypotheses(Index m, double null_lo = -0.3, double null_hi = 0.3);

enum class GroupScore { PartialCorrelation, RawPrecision };

/// Groups from the precision matrix lambda^{-1}: G_i holds j whenever the
/// pair score reaches the given quantile of all pair scores. The returned
/// structure covers m + 1 hypotheses with the rho hypothesis a singleton.
GroupStructure form_groups(const Eigen::MatrixXd& lambda, double percentile_level,
                           GroupScore score = GroupScore::PartialCorrelation);

struct Theta {
    double rho = 0.0;
    Eigen::VectorXd beta;
    double intercept = 0.0;
    double sigma_sq = 1.0;

    static Theta truth(const TrueParams& params);
};

/// log R_n(theta) = sum_t [log f_theta(x_t | x_{t-1}) - log p(x_t | x_{t-1})].
double log_rn(const Theta& theta, const Eigen::Ref<const Eigen::VectorXd>& x,
              const Eigen::Ref<const Eigen::MatrixXd>& z, const TrueParams& truth);

/// One draw of x_{n+1} per posterior draw.
Eigen::VectorXd posterior_predictive(const std::vector<Draw>& draws, const Eigen::Ref<const Eigen::VectorXd>& z_next,
                                     double x_n, std::uint64_t seed);

struct RefitResult {
    Eigen::VectorXd beta_hat;
    double intercept_hat = 0.0;
    double rho_hat = 0.0;
    double sigma_sq_hat = 1.0;
    std::vector<Draw> draws;
};

/// Refit with only the selected covariates, beta_i ~ N(0, tau^2) iid. The
/// point estimate is the highest-log-posterior retained draw, polished by
/// 50 coordinate-ascent sweeps on (beta, rho) at its sigma^2.
RefitResult refit_selected(const std::vector<bool>& selected, const Eigen::Ref<const Eigen::VectorXd>& x,
                           const Eigen::Ref<const Eigen::MatrixXd>& z, const SpikeSlabPrior& prior,
                           const McmcSettings& settings, std::uint64_t seed, bool intercept = true);

/// Covariance builders.
Eigen::MatrixXd block_equicorrelated(Index m, Index block, double correlation);
Eigen::MatrixXd toeplitz(Index m, double r);

/// Dataset CSV: columns t, x, z_1..z_m.
void write_dataset(const std::filesystem::path& path, const Eigen::Ref<const Eigen::VectorXd>& x,
                   const Eigen::Ref<const Eigen::MatrixXd>& z);
std::pair<Eigen::VectorXd, Eigen::MatrixXd> read_dataset(const std::filesystem::path& path);

} // namespace nmmt::ar1

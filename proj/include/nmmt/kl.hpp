#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "nmmt/ar1.hpp"
#include "nmmt/core.hpp"

namespace nmmt::kl {

/// True AR(1) parameters and the limit covariance of the covariates.
struct KlEnv {
    double rho0 = -0.5;
    Eigen::VectorXd beta0;
    double sigma0_sq = 1.0;
    Eigen::MatrixXd sigma_z;

    Index m() const { return beta0.size(); }
    void validate() const;
    /// Sigma_z = lambda for iid N(0, lambda) covariates.
    static KlEnv from(const ar1::TrueParams& params);
};

/// Point (rho, beta, sigma^2) of the AR(1) parameter space.
template <typename Scalar>
struct KlPoint {
    Scalar rho;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> beta;
    Scalar sigma_sq;
};

/// KL-divergence rate h(theta) between the true AR(1) process and the model
/// at theta, evaluated term by term.
template <typename Scalar>
Scalar h_theta(const KlPoint<Scalar>& theta, const KlEnv& env)
{
    using std::log;
    if (!(theta.sigma_sq > Scalar(0))) {
        throw std::invalid_argument("h_theta: sigma_sq must be positive");
    }
    if (theta.beta.size() != env.m()) {
        throw std::invalid_argument("h_theta: dimension mismatch");
    }
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> sz = env.sigma_z.template cast<Scalar>();
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> b0 = env.beta0.template cast<Scalar>();
    const Scalar s2 = theta.sigma_sq;
    const Scalar s02(env.sigma0_sq);
    const Scalar r0(env.rho0);
    const Scalar r = theta.rho;
    const Scalar signal0 = b0.dot(sz * b0);
    // Stationary second moment of x_t under the truth.
    const Scalar ex2 = s02 / (Scalar(1) - r0 * r0) + signal0 / (Scalar(1) - r0 * r0);

    Scalar h = Scalar(0.5) * log(s2 / s02);
    h += (Scalar(1) / (Scalar(2) * s2) - Scalar(1) / (Scalar(2) * s02)) * ex2;
    h += (r * r / (Scalar(2) * s2) - r0 * r0 / (Scalar(2) * s02)) * ex2;
    h += theta.beta.dot(sz * theta.beta) / (Scalar(2) * s2) - signal0 / (Scalar(2) * s02);
    h -= (r / s2 - r0 / s02) * (r0 * ex2);
    h -= (theta.beta / s2 - b0 / s02).dot(sz * b0);
    return h;
}

double h_theta(double rho, const Eigen::Ref<const Eigen::VectorXd>& beta, double sigma_sq, const KlEnv& env);

/// One coordinate constraint. Outside means the closure {x <= lo} U {x >= hi}.
struct Constraint {
    enum class Kind { Free, Interval, Outside };
    Kind kind = Kind::Free;
    double lo = 0.0;
    double hi = 0.0;

    static Constraint free() { return {}; }
    static Constraint interval(double lo, double hi) { return {Kind::Interval, lo, hi}; }
    static Constraint outside(double lo, double hi) { return {Kind::Outside, lo, hi}; }
};

/// Per-coordinate constraints over [rho, beta_1..beta_m, sigma]; sigma is
/// the standard deviation and always positive.
struct RegionSpec {
    std::vector<Constraint> coords;

    static RegionSpec unconstrained(Index m);
    Index m() const { return static_cast<Index>(coords.size()) - 2; }
    void validate() const;
};

struct JRegionOptions {
    int random_starts = 16;
    int grid_points = 21;
    std::uint64_t seed = 0x6b6c;
    /// h over the whole model; computed by global minimization when absent.
    std::optional<double> h_model;
};

struct RegionMinimum {
    /// J = inf h over the region minus inf h over the whole model.
    double value = 0.0;
    double h_value = 0.0;
    /// [rho, beta_1..beta_m, sigma].
    Eigen::VectorXd argmin;
    /// Smallest h seen on the coarse grid of the constrained coordinates.
    double grid_min = 0.0;
};

class MinimizationError : public std::runtime_error {
public:
    MinimizationError(const std::string& what, RegionMinimum best) : std::runtime_error(what), best_(std::move(best)) {}
    const RegionMinimum& best() const { return best_; }

private:
    RegionMinimum best_;
};

/// Infimum of f over the closure of a region given by per-coordinate
/// constraints, by the same multistart simplex scheme as j_region.
RegionMinimum region_infimum(const std::vector<Constraint>& coords,
                             const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& center,
                             const JRegionOptions& options = {});

/// Infimum of h over the whole parameter space, by multistart minimization.
double model_h_infimum(const KlEnv& env, const JRegionOptions& options = {});

/// J(theta) = h(theta) - inf h.
double j_theta(double rho, const Eigen::Ref<const Eigen::VectorXd>& beta, double sigma_sq, const KlEnv& env,
               const JRegionOptions& options = {});

/// Essential infimum of J over a region, by multistart simplex descent.
RegionMinimum j_region(const RegionSpec& region, const KlEnv& env, const JRegionOptions& options = {});

/// Hypothesis 0 is |rho| < 1, hypothesis i >= 1 is beta_i in [null_lo, null_hi].
DecisionConfig true_decision(const KlEnv& env, double null_lo, double null_hi);

/// Region H_{k, h} for hypothesis h (k = 1: alternative), other coordinates free.
RegionSpec hypothesis_region(const KlEnv& env, Index hypothesis, bool alternative, double null_lo, double null_hi);

/// J(H_{k, h}).
double j_hypothesis(const KlEnv& env, Index hypothesis, bool alternative, double null_lo, double null_hi,
                    const JRegionOptions& options = {});

/// J(Theta_{i,d}): hypothesis i in its alternative, j in G_i \ {i} in H_{d_j, j}.
double j_decision_region(const KlEnv& env, const DecisionConfig& d, Index i, const GroupStructure& groups,
                         double null_lo, double null_hi, const JRegionOptions& options = {});

RateConstants rate_constants(const DecisionConfig& d_true, const GroupStructure& groups, const KlEnv& env,
                             double null_lo, double null_hi, const JRegionOptions& options = {});

struct EquipartitionRow {
    Index theta_index = 0;
    Index n = 0;
    double h = 0.0;
    /// Mean over replicates of -(1/n) log R_n(theta).
    double mean_neg_log_rn = 0.0;
    double std_err = 0.0;
    /// Mean and median over replicates of |(1/n) log R_n(theta) + h(theta)|.
    double mean_residual = 0.0;
    double median_residual = 0.0;
};

/// Residual table of the relative equipartition property. Datasets are
/// shared across thetas for each (n, replicate).
std::vector<EquipartitionRow> equipartition_trace(const std::vector<ar1::Theta>& thetas,
                                                  const std::vector<Index>& n_grid, Index replicates,
                                                  const ar1::TrueParams& params, std::uint64_t seed, int jobs = 1);

} // namespace nmmt::kl

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "nmmt/core.hpp"

namespace nmmt::oracle {

/// Independent Gaussian means with a conjugate normal prior per coordinate.
/// Null region of coordinate i is [-eps, eps].
struct GaussOracleModel {
    Eigen::VectorXd theta0;
    double sigma = 1.0;
    double prior_mean = 0.0;
    double prior_sd = 1.0;
    double eps = 0.3;

    Index size() const { return theta0.size(); }
    void validate() const;
};

struct CoordinatePosterior {
    double mean = 0.0;
    double sd = 1.0;
};

using Posterior = std::vector<CoordinatePosterior>;

/// data: n x m observations.
Posterior analytic_posterior(const GaussOracleModel& model, const Eigen::Ref<const Eigen::MatrixXd>& data);

/// Posterior from sufficient statistics (sample mean per coordinate, n).
Posterior analytic_posterior(const GaussOracleModel& model, const Eigen::Ref<const Eigen::VectorXd>& sample_mean,
                             Index n);

/// P(|theta_i| > eps | data).
double analytic_v(const CoordinatePosterior& post, double eps);

/// P(H_{d_j, j} | data) for a single coordinate.
double analytic_decision_prob(const CoordinatePosterior& post, bool rejected, double eps);

/// v_i times the product over G_i \ {i} of P(H_{d_j, j}), exact under independence.
double analytic_w(const Posterior& post, const DecisionConfig& d, Index i, const GroupStructure& groups, double eps);

/// v and w for the exact posterior, in the shape decision rules consume.
PosteriorSummary analytic_summary(const Posterior& post, const GroupStructure& groups, double eps);

/// Null/alternative regions on coordinates 0..m-1.
HypothesisSet hypotheses(const GaussOracleModel& model);

/// Per-observation KL between N(theta0, sigma^2 I) and N(theta, sigma^2 I).
double oracle_h(const Eigen::Ref<const Eigen::VectorXd>& theta, const GaussOracleModel& model);

DecisionConfig true_decision(const GaussOracleModel& model);

/// Closed-form J_min, H_min and H~_min by coordinate-wise minimization.
RateConstants oracle_rate_constants(const GaussOracleModel& model, const DecisionConfig& d_true,
                                    const GroupStructure& groups);

/// Infimum of (t - theta0_k)^2 / (2 sigma^2) over the (closure of the)
/// region H_{rejected, k}.
double coordinate_j(const GaussOracleModel& model, Index k, bool rejected);

/// J over Theta_{i,d}: theta_i in the alternative and theta_j in H_{d_j, j}
/// for j in G_i \ {i}; other coordinates free.
double decision_region_j(const GaussOracleModel& model, const DecisionConfig& d, Index i,
                         const GroupStructure& groups);

/// n iid rows from N(theta0, sigma^2 I).
Eigen::MatrixXd gen_oracle_data(const GaussOracleModel& model, Index n, std::uint64_t seed);

/// S inverse-CDF draws from the analytic posterior, one column per coordinate.
PosteriorSampleSet sample_posterior(const Posterior& post, Index draws, std::uint64_t seed);

} // namespace nmmt::oracle

#include "nmmt/gauss_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "nmmt/random.hpp"
#include "nmmt/stats.hpp"

namespace nmmt::oracle {

void GaussOracleModel::validate() const
{
    if (!(sigma > 0.0)) {
        throw std::invalid_argument("GaussOracleModel: sigma must be positive");
    }
    if (!(prior_sd > 0.0)) {
        throw std::invalid_argument("GaussOracleModel: prior_sd must be positive");
    }
    if (!(eps >= 0.0)) {
        throw std::invalid_argument("GaussOracleModel: eps must be nonnegative");
    }
}

Posterior analytic_posterior(const GaussOracleModel& model, const Eigen::Ref<const Eigen::VectorXd>& sample_mean,
                             Index n)
{
    model.validate();
    if (n < 1) {
        throw std::invalid_argument("analytic_posterior: empty data");
    }
    if (sample_mean.size() != model.size()) {
        throw std::invalid_argument("analytic_posterior: dimension mismatch");
    }
    const double prior_prec = 1.0 / (model.prior_sd * model.prior_sd);
    const double data_prec = static_cast<double>(n) / (model.sigma * model.sigma);
    const double prec = prior_prec + data_prec;
    Posterior post(static_cast<std::size_t>(model.size()));
    for (Index i = 0; i < model.size(); ++i) {
        post[static_cast<std::size_t>(i)] = {(prior_prec * model.prior_mean + data_prec * sample_mean[i]) / prec,
                                             std::sqrt(1.0 / prec)};
    }
    return post;
}

Posterior analytic_posterior(const GaussOracleModel& model, const Eigen::Ref<const Eigen::MatrixXd>& data)
{
    if (data.rows() < 1) {
        throw std::invalid_argument("analytic_posterior: empty data");
    }
    if (data.cols() != model.size()) {
        throw std::invalid_argument("analytic_posterior: dimension mismatch");
    }
    const Eigen::VectorXd xbar = data.colwise().mean().transpose();
    return analytic_posterior(model, xbar, data.rows());
}

double analytic_v(const CoordinatePosterior& post, double eps)
{
    // Sum the two tails directly; 1 - P(null) loses the small values.
    const double upper = normal_sf((eps - post.mean) / post.sd);
    const double lower = normal_cdf((-eps - post.mean) / post.sd);
    return std::min(1.0, upper + lower);
}

double analytic_decision_prob(const CoordinatePosterior& post, bool rejected, double eps)
{
    return rejected ? analytic_v(post, eps) : normal_interval_prob(post.mean, post.sd, -eps, eps);
}

double analytic_w(const Posterior& post, const DecisionConfig& d, Index i, const GroupStructure& groups, double eps)
{
    if (d.size() != static_cast<Index>(post.size()) || groups.size() != d.size()) {
        throw std::invalid_argument("analytic_w: dimension mismatch");
    }
    double w = analytic_v(post[static_cast<std::size_t>(i)], eps);
    for (Index j : groups.others(i)) {
        w *= analytic_decision_prob(post[static_cast<std::size_t>(j)], d[j], eps);
    }
    return w;
}

PosteriorSummary analytic_summary(const Posterior& post, const GroupStructure& groups, double eps)
{
    PosteriorSummary out;
    out.v.resize(static_cast<Index>(post.size()));
    for (std::size_t i = 0; i < post.size(); ++i) {
        out.v[static_cast<Index>(i)] = analytic_v(post[i], eps);
    }
    out.groups = groups;
    out.w = [post, groups, eps](const DecisionConfig& d, Index i) { return analytic_w(post, d, i, groups, eps); };
    return out;
}

HypothesisSet hypotheses(const GaussOracleModel& model)
{
    std::vector<NullRegion> regions(static_cast<std::size_t>(model.size()),
                                    NullRegion::closed_interval(-model.eps, model.eps));
    std::vector<Index> coords(static_cast<std::size_t>(model.size()));
    for (Index i = 0; i < model.size(); ++i) {
        coords[static_cast<std::size_t>(i)] = i;
    }
    return {std::move(regions), std::move(coords)};
}

double oracle_h(const Eigen::Ref<const Eigen::VectorXd>& theta, const GaussOracleModel& model)
{
    if (theta.size() != model.size()) {
        throw std::invalid_argument("oracle_h: dimension mismatch");
    }
    return (theta - model.theta0).squaredNorm() / (2.0 * model.sigma * model.sigma);
}

DecisionConfig true_decision(const GaussOracleModel& model)
{
    DecisionConfig d(model.size());
    for (Index i = 0; i < model.size(); ++i) {
        d.set(i, std::abs(model.theta0[i]) > model.eps);
    }
    return d;
}

double coordinate_j(const GaussOracleModel& model, Index k, bool rejected)
{
    const double t0 = model.theta0[k];
    const double scale = 2.0 * model.sigma * model.sigma;
    double gap = 0.0;
    if (rejected) {
        // Closure of |t| > eps.
        gap = std::max(0.0, model.eps - std::abs(t0));
    } else {
        gap = std::max(0.0, std::abs(t0) - model.eps);
    }
    return gap * gap / scale;
}

double decision_region_j(const GaussOracleModel& model, const DecisionConfig& d, Index i,
                         const GroupStructure& groups)
{
    // Coordinates are separable, so the infimum is a sum of per-coordinate infima.
    double j = coordinate_j(model, i, true);
    for (Index k : groups.others(i)) {
        j += coordinate_j(model, k, d[k]);
    }
    return j;
}

RateConstants oracle_rate_constants(const GaussOracleModel& model, const DecisionConfig& d_true,
                                    const GroupStructure& groups)
{
    model.validate();
    if (d_true != true_decision(model)) {
        throw std::invalid_argument("oracle_rate_constants: d_t inconsistent with theta0");
    }
    if (groups.size() != model.size()) {
        throw std::invalid_argument("oracle_rate_constants: dimension mismatch");
    }
    RateConstants out;
    auto take_min = [](std::optional<double>& slot, double value) {
        slot = slot ? std::min(*slot, value) : value;
    };
    for (Index i = 0; i < model.size(); ++i) {
        if (d_true[i]) {
            take_min(out.h_min, coordinate_j(model, i, false));
            // Complement of Theta_{i,d^t}: at least one coordinate of G_i in its wrong region.
            for (Index k : groups.group(i)) {
                take_min(out.j_min, coordinate_j(model, k, !d_true[k]));
            }
        } else {
            take_min(out.h_tilde_min, coordinate_j(model, i, true));
        }
    }
    return out;
}

Eigen::MatrixXd gen_oracle_data(const GaussOracleModel& model, Index n, std::uint64_t seed)
{
    model.validate();
    if (n < 1) {
        throw std::invalid_argument("gen_oracle_data: n must be positive");
    }
    Rng rng(seed);
    Eigen::MatrixXd data(n, model.size());
    for (Index t = 0; t < n; ++t) {
        for (Index i = 0; i < model.size(); ++i) {
            data(t, i) = rng.normal(model.theta0[i], model.sigma);
        }
    }
    return data;
}

PosteriorSampleSet sample_posterior(const Posterior& post, Index draws, std::uint64_t seed)
{
    Rng rng(seed);
    Eigen::MatrixXd out(draws, static_cast<Index>(post.size()));
    for (Index s = 0; s < draws; ++s) {
        for (std::size_t i = 0; i < post.size(); ++i) {
            out(s, static_cast<Index>(i)) = post[i].mean + post[i].sd * normal_quantile(rng.uniform());
        }
    }
    return PosteriorSampleSet(std::move(out), {"gauss-oracle-inverse-cdf", seed});
}

} // namespace nmmt::oracle

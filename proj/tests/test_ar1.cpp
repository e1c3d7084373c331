#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "nmmt/ar1.hpp"
#include "nmmt/random.hpp"
#include "nmmt/stats.hpp"

using namespace nmmt;
using namespace nmmt::ar1;

namespace {

TrueParams small_truth(Index m = 4)
{
    TrueParams p;
    p.rho0 = -0.5;
    p.beta0 = Eigen::VectorXd::Zero(m);
    p.beta0[0] = 1.0;
    if (m > 2) {
        p.beta0[2] = -0.8;
    }
    p.sigma0_sq = 1.0;
    p.lambda = Eigen::MatrixXd::Identity(m, m);
    return p;
}

McmcSettings short_chain()
{
    McmcSettings s;
    s.iters = 1500;
    s.burnin = 300;
    s.thin = 3;
    return s;
}

} // namespace

TEST_CASE("inverse-gamma hyperparameters from mode and variance")
{
    const auto [a, b] = inverse_gamma_from_mode_variance(1.0, 100.0);
    CHECK(a == doctest::Approx(2.0812122114359477).epsilon(1e-12));
    CHECK(b == doctest::Approx(3.0812122114359477).epsilon(1e-12));
    const auto d = SpikeSlabPrior::defaults();
    CHECK(d.tau == 100.0);
    CHECK(d.v_spike == 1e-6);
    CHECK(d.a1 == 2.0);
    CHECK(d.b1 == 10.0);
    CHECK(d.a2 == doctest::Approx(a));
    CHECK_THROWS(inverse_gamma_from_mode_variance(0.0, 1.0));
}

TEST_CASE("hypothesis map for the autoregressive coefficient and the regressors")
{
    const auto h = map_hypotheses(3);
    REQUIRE(h.size() == 4);
    Eigen::RowVectorXd draw = Eigen::RowVectorXd::Zero(layout::width(3));
    draw[layout::rho] = 0.99;
    draw[layout::beta(0)] = 0.31;
    draw[layout::beta(1)] = 0.3;
    draw[layout::beta(2)] = -0.5;
    CHECK_FALSE(eval_r(draw, 0, h));
    CHECK(eval_r(draw, 1, h));
    CHECK_FALSE(eval_r(draw, 2, h));
    CHECK(eval_r(draw, 3, h));
    draw[layout::rho] = -1.0;
    CHECK(eval_r(draw, 0, h));
}

TEST_CASE("groups from a diagonal covariance are singletons")
{
    const auto g = form_groups(Eigen::MatrixXd::Identity(6, 6) * 2.0, 0.95);
    REQUIRE(g.size() == 7);
    CHECK(g.all_singletons());
    CHECK(form_groups(Eigen::MatrixXd::Identity(4, 4), 0.5, GroupScore::RawPrecision).all_singletons());
    const auto g2 = form_groups(Eigen::MatrixXd::Identity(1, 1), 0.95);
    CHECK(g2.all_singletons());
}

TEST_CASE("groups from a three-variable covariance")
{
    Eigen::MatrixXd lambda(3, 3);
    lambda << 1.0, 0.8, 0.1, 0.8, 1.0, 0.1, 0.1, 0.1, 1.0;
    const Eigen::MatrixXd prec = lambda.inverse();
    const double s12 = std::abs(prec(0, 1)) / std::sqrt(prec(0, 0) * prec(1, 1));
    const double s13 = std::abs(prec(0, 2)) / std::sqrt(prec(0, 0) * prec(2, 2));
    CHECK(s12 == doctest::Approx(0.798).epsilon(1e-3));
    CHECK(s13 == doctest::Approx(0.0335).epsilon(1e-2));
    const auto g = form_groups(lambda, 0.95);
    CHECK(g.group(0) == std::vector<Index>{0});
    CHECK(g.group(1) == std::vector<Index>{1, 2});
    CHECK(g.group(2) == std::vector<Index>{1, 2});
    CHECK(g.group(3) == std::vector<Index>{3});
}

TEST_CASE("formed groups are symmetric and block covariances group by block")
{
    const auto g = form_groups(block_equicorrelated(8, 4, 0.5), 0.95);
    for (Index i = 1; i <= 8; ++i) {
        for (Index j : g.group(i)) {
            CHECK(g.contains(j, i));
        }
    }
    CHECK(g.group(1) == std::vector<Index>{1, 2, 3, 4});
    CHECK(g.group(8) == std::vector<Index>{5, 6, 7, 8});
    const auto t = form_groups(toeplitz(10, 0.6), 0.95, GroupScore::RawPrecision);
    for (Index i = 1; i <= 10; ++i) {
        for (Index j : t.group(i)) {
            CHECK(t.contains(j, i));
        }
    }
    CHECK_THROWS(form_groups(Eigen::MatrixXd::Identity(3, 3), 1.0));
}

TEST_CASE("likelihood ratio at the truth is zero")
{
    const auto p = small_truth();
    const auto z = gen_covariates(200, p.lambda, 1);
    const auto x = gen_data(z, p, 2);
    CHECK(log_rn(Theta::truth(p), x, z, p) == 0.0);
    auto wide = Theta::truth(p);
    wide.sigma_sq = 4.0;
    CHECK(log_rn(wide, x, z, p) < 0.0);
    auto shifted = Theta::truth(p);
    shifted.rho = 0.2;
    CHECK(log_rn(shifted, x, z, p) < 0.0);
    wide.sigma_sq = 0.0;
    CHECK_THROWS(log_rn(wide, x, z, p));
}

TEST_CASE("simulated series has the stationary variance")
{
    auto p = small_truth(3);
    p.lambda = block_equicorrelated(3, 3, 0.4);
    const Index n = 100000;
    const auto z = gen_covariates(n, p.lambda, 11);
    const auto x = gen_data(z, p, 12);
    const double target = (p.sigma0_sq + p.beta0.dot(p.lambda * p.beta0)) / (1.0 - p.rho0 * p.rho0);
    const Eigen::VectorXd tail = x.tail(n - 100);
    const double var = (tail.array() - tail.mean()).square().mean();
    CHECK(std::abs(var / target - 1.0) < 0.05);
    CHECK(std::abs(tail.mean()) < 0.05);
    const Eigen::MatrixXd cov = (z.transpose() * z) / static_cast<double>(n);
    CHECK((cov - p.lambda).cwiseAbs().maxCoeff() < 0.03);
}

TEST_CASE("data generation is deterministic")
{
    const auto p = small_truth();
    CHECK(gen_covariates(20, p.lambda, 3) == gen_covariates(20, p.lambda, 3));
    const auto z = gen_covariates(20, p.lambda, 3);
    CHECK(gen_data(z, p, 4) == gen_data(z, p, 4));
    CHECK(gen_data(z, p, 4)[0] != gen_data(z, p, 5)[0]);
    Eigen::MatrixXd bad(2, 2);
    bad << 1.0, 2.0, 2.0, 1.0;
    CHECK_THROWS(gen_covariates(5, bad, 1));
}

TEST_CASE("sampler is reproducible and recovers the truth")
{
    const auto p = small_truth(5);
    const auto z = gen_covariates(1500, p.lambda, 21);
    const auto x = gen_data(z, p, 22);
    const auto prior = SpikeSlabPrior::defaults();
    const auto a = posterior_sample(x, z, prior, short_chain(), 7);
    const auto b = posterior_sample(x, z, prior, short_chain(), 7);
    CHECK(a.samples.matrix() == b.samples.matrix());
    CHECK(static_cast<Index>(a.draws.size()) == short_chain().retained());
    CHECK(a.samples.dimension() == layout::width(5));

    const Eigen::RowVectorXd mean = a.samples.matrix().colwise().mean();
    CHECK(std::abs(mean[layout::rho] - p.rho0) < 0.05);
    for (Index i = 0; i < 5; ++i) {
        CHECK(std::abs(mean[layout::beta(i)] - p.beta0[i]) < 0.1);
    }
    CHECK(std::abs(mean[layout::sigma_sq(5)] - 1.0) < 0.1);
    CHECK(std::abs(mean[layout::intercept(5)]) < 0.15);
}

TEST_CASE("posterior ranks of prior-drawn parameters are uniform")
{
    // Simulation-based calibration: parameters drawn from the prior, data from
    // the model, ranks of the truth among posterior draws should be uniform.
    SpikeSlabPrior prior;
    prior.tau = 1.0;
    prior.v_spike = 0.01;
    prior.a1 = 2.0;
    prior.b1 = 2.0;
    prior.a2 = 5.0;
    prior.b2 = 4.0;
    prior.rho_sd = 0.3;
    McmcSettings settings;
    settings.iters = 1100;
    settings.burnin = 100;
    settings.thin = 10;
    const Index m = 3;
    const Index n = 20;
    const int reps = 200;
    Rng rng(2024);
    std::vector<double> rank_rho;
    std::vector<double> rank_beta;
    std::vector<double> rank_sigma;
    for (int r = 0; r < reps; ++r) {
        const double p_incl = rng.beta(prior.a1, prior.b1);
        TrueParams truth;
        truth.rho0 = rng.normal(0.0, prior.rho_sd);
        if (std::abs(truth.rho0) >= 1.0) {
            truth.rho0 = std::copysign(0.999, truth.rho0);
        }
        truth.sigma0_sq = rng.inverse_gamma(prior.a2, prior.b2);
        truth.beta0 = Eigen::VectorXd(m);
        for (Index i = 0; i < m; ++i) {
            const double var = prior.tau * prior.tau * (rng.bernoulli(p_incl) ? 1.0 : prior.v_spike);
            truth.beta0[i] = rng.normal(0.0, std::sqrt(var));
        }
        truth.lambda = Eigen::MatrixXd::Identity(m, m);
        const auto z = gen_covariates(n, truth.lambda, rng.next());
        Rng noise(rng.next());
        Eigen::VectorXd x(n);
        double prev = 0.0;
        for (Index t = 0; t < n; ++t) {
            x[t] = truth.rho0 * prev + z.row(t).dot(truth.beta0) + std::sqrt(truth.sigma0_sq) * noise.normal();
            prev = x[t];
        }
        const auto out = posterior_sample(x, z, prior, settings, rng.next(), false);
        auto rank = [&](Index col, double value) {
            const auto c = out.samples.matrix().col(col);
            return static_cast<double>((c.array() < value).count()) / static_cast<double>(c.size());
        };
        rank_rho.push_back(rank(layout::rho, truth.rho0));
        rank_beta.push_back(rank(layout::beta(0), truth.beta0[0]));
        rank_sigma.push_back(rank(layout::sigma_sq(m), truth.sigma0_sq));
    }
    auto uniform_cdf = [](double u) { return std::clamp(u, 0.0, 1.0); };
    const double mean_tol = 4.0 * std::sqrt(1.0 / 12.0 / reps);
    for (const auto* ranks : {&rank_rho, &rank_beta, &rank_sigma}) {
        CHECK(std::abs(mean(*ranks) - 0.5) < mean_tol);
        CHECK(ks_statistic(*ranks, uniform_cdf) < 0.15);
    }
}

TEST_CASE("posterior predictive")
{
    Draw d;
    d.rho = 0.5;
    d.beta = Eigen::Vector2d(1.0, -1.0);
    d.intercept = 0.25;
    d.sigma_sq = 1e-20;
    const std::vector<Draw> draws(10, d);
    const auto pred = posterior_predictive(draws, Eigen::Vector2d(2.0, 1.0), 2.0, 3);
    for (Index s = 0; s < pred.size(); ++s) {
        CHECK(pred[s] == doctest::Approx(2.25));
    }
    CHECK(posterior_predictive(draws, Eigen::Vector2d(2.0, 1.0), 2.0, 3) == pred);
    CHECK_THROWS(posterior_predictive({}, Eigen::Vector2d(0.0, 0.0), 0.0, 1));
}

TEST_CASE("refit with selected covariates")
{
    const auto p = small_truth(4);
    const auto z = gen_covariates(800, p.lambda, 31);
    const auto x = gen_data(z, p, 32);
    const auto prior = SpikeSlabPrior::defaults();
    const auto none = refit_selected({false, false, false, false}, x, z, prior, short_chain(), 1);
    CHECK(none.beta_hat.isZero());
    const auto sel = std::vector<bool>{true, false, true, false};
    const auto a = refit_selected(sel, x, z, prior, short_chain(), 2);
    const auto b = refit_selected(sel, x, z, prior, short_chain(), 2);
    CHECK(a.beta_hat == b.beta_hat);
    CHECK(a.beta_hat[1] == 0.0);
    CHECK(a.beta_hat[3] == 0.0);
    CHECK(std::abs(a.beta_hat[0] - 1.0) < 0.1);
    CHECK(std::abs(a.beta_hat[2] + 0.8) < 0.1);
    CHECK(std::abs(a.rho_hat + 0.5) < 0.05);
    CHECK_THROWS(refit_selected({true}, x, z, prior, short_chain(), 1));
}

TEST_CASE("dataset round trip")
{
    const auto p = small_truth(3);
    const auto z = gen_covariates(15, p.lambda, 41);
    const auto x = gen_data(z, p, 42);
    const auto path = std::filesystem::temp_directory_path() / "nmmt_dataset_roundtrip.csv";
    write_dataset(path, x, z);
    const auto [x2, z2] = read_dataset(path);
    CHECK(x2 == x);
    CHECK(z2 == z);
    std::filesystem::remove(path);
    CHECK_THROWS(read_dataset(path));
}

TEST_CASE("parameter validation")
{
    auto p = small_truth(2);
    CHECK_NOTHROW(p.validate());
    p.rho0 = 1.0;
    CHECK_THROWS(p.validate());
    p = small_truth(2);
    p.lambda(0, 1) = 0.5;
    CHECK_THROWS(p.validate());
    p.lambda(1, 0) = 2.0;
    p.lambda(0, 1) = 2.0;
    CHECK_THROWS(p.validate());
    McmcSettings s;
    s.burnin = s.iters;
    CHECK_THROWS(s.validate());
}

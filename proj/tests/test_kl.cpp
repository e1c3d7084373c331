#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nmmt/kl.hpp"
#include "nmmt/random.hpp"

using namespace nmmt;
using namespace nmmt::kl;

namespace {

KlEnv env3()
{
    KlEnv e;
    e.rho0 = -0.5;
    e.beta0 = Eigen::Vector3d(1.0, 0.0, -0.6);
    e.sigma0_sq = 1.0;
    e.sigma_z = Eigen::Matrix3d::Identity();
    e.sigma_z(0, 1) = e.sigma_z(1, 0) = 0.5;
    return e;
}

double compact_h(double rho, const Eigen::VectorXd& beta, double sigma_sq, const KlEnv& e)
{
    const double v = (e.sigma0_sq + e.beta0.dot(e.sigma_z * e.beta0)) / (1.0 - e.rho0 * e.rho0);
    const Eigen::VectorXd db = beta - e.beta0;
    const double q = e.sigma0_sq + (rho - e.rho0) * (rho - e.rho0) * v + db.dot(e.sigma_z * db);
    return 0.5 * std::log(sigma_sq / e.sigma0_sq) + q / (2.0 * sigma_sq) - 0.5;
}

} // namespace

TEST_CASE("KL rate vanishes at the truth")
{
    const auto e = env3();
    CHECK(std::abs(h_theta(e.rho0, e.beta0, e.sigma0_sq, e)) < 1e-15);
}

TEST_CASE("term-by-term and compact KL forms agree")
{
    const auto e = env3();
    Rng rng(1);
    for (int k = 0; k < 10000; ++k) {
        const double rho = rng.uniform(-3.0, 3.0);
        const Eigen::Vector3d beta(rng.normal(), rng.normal(), rng.normal());
        const double s2 = std::exp(rng.uniform(-3.0, 3.0));
        const double h = h_theta(rho, beta, s2, e);
        CHECK(h == doctest::Approx(compact_h(rho, beta, s2, e)).epsilon(1e-9).scale(1.0));
        CHECK(h > 0.0);
    }
}

TEST_CASE("extended precision evaluation")
{
    const auto e = env3();
    KlPoint<long double> p{0.1L, Eigen::Matrix<long double, Eigen::Dynamic, 1>(3), 1.7L};
    p.beta << 0.9L, 0.2L, -0.5L;
    const long double hl = h_theta(p, e);
    const double hd = h_theta(0.1, Eigen::Vector3d(0.9, 0.2, -0.5), 1.7, e);
    CHECK(static_cast<double>(hl) == doctest::Approx(hd).epsilon(1e-13));
    CHECK_THROWS(h_theta(0.1, Eigen::Vector3d(0.9, 0.2, -0.5), 0.0, e));
    CHECK_THROWS(h_theta(0.1, Eigen::Vector2d(0.9, 0.2), 1.0, e));
}

TEST_CASE("whole-model infimum is zero for a well-specified environment")
{
    const auto e = env3();
    CHECK(std::abs(model_h_infimum(e)) < 1e-8);
    const auto r = j_region(RegionSpec::unconstrained(3), e);
    CHECK(r.value < 1e-8);
    JRegionOptions opts;
    opts.h_model = 0.0;
    CHECK(j_theta(0.2, e.beta0, 1.5, e, opts) == doctest::Approx(h_theta(0.2, e.beta0, 1.5, e)));
}

TEST_CASE("single regressor constrained to an interval")
{
    // Uncorrelated regressors: minimizing over rho and sigma leaves
    // J(b) = 0.5 log(1 + Sigma_ii (b - beta0_i)^2 / sigma0^2), attained at the nearest boundary.
    KlEnv e;
    e.rho0 = 0.3;
    e.beta0 = Eigen::Vector2d(1.2, -0.1);
    e.sigma0_sq = 0.8;
    e.sigma_z = Eigen::Vector2d(1.5, 0.7).asDiagonal();
    JRegionOptions opts;
    opts.h_model = 0.0;
    auto spec = RegionSpec::unconstrained(2);
    spec.coords[1] = Constraint::interval(-0.3, 0.3);
    const auto r = j_region(spec, e, opts);
    double grid_best = INFINITY;
    for (int k = 0; k <= 60000; ++k) {
        const double b = -0.3 + 0.6 * k / 60000.0;
        grid_best = std::min(grid_best, 0.5 * std::log1p(1.5 * (b - 1.2) * (b - 1.2) / 0.8));
    }
    CHECK(std::abs(r.value - grid_best) < 1e-6);
    CHECK(r.argmin[1] == doctest::Approx(0.3).epsilon(1e-5));
    CHECK(r.value <= r.grid_min + 1e-8);

    auto out = RegionSpec::unconstrained(2);
    out.coords[2] = Constraint::outside(-0.3, 0.3);
    const auto r2 = j_region(out, e, opts);
    CHECK(std::abs(r2.value - 0.5 * std::log1p(0.7 * 0.2 * 0.2 / 0.8)) < 1e-6);
}

TEST_CASE("shrinking a region never lowers its infimum")
{
    const auto e = env3();
    JRegionOptions opts;
    opts.h_model = 0.0;
    double previous = -1.0;
    for (double half : {0.9, 0.6, 0.3, 0.1}) {
        auto spec = RegionSpec::unconstrained(3);
        spec.coords[1] = Constraint::interval(-half, half);
        const double j = j_region(spec, e, opts).value;
        CHECK(j >= previous - 1e-9);
        CHECK(j >= 0.0);
        previous = j;
    }
}

TEST_CASE("rate constants with singleton groups")
{
    const auto e = env3();
    const auto d = true_decision(e, -0.3, 0.3);
    CHECK(d == DecisionConfig{0, 1, 0, 1});
    const auto rc = rate_constants(d, GroupStructure::singletons(4), e, -0.3, 0.3);
    REQUIRE(rc.h_min);
    REQUIRE(rc.j_min);
    REQUIRE(rc.h_tilde_min);
    CHECK(*rc.j_min == *rc.h_min);
    CHECK(*rc.h_min > 0.0);
    CHECK(*rc.h_tilde_min > 0.0);
}

TEST_CASE("grouping can only lower the modified rate")
{
    const auto e = env3();
    const auto d = true_decision(e, -0.3, 0.3);
    GroupStructure g({{0}, {1, 2}, {1, 2}, {3}});
    const auto rc = rate_constants(d, g, e, -0.3, 0.3);
    CHECK(*rc.j_min <= *rc.h_min + 1e-12);
    CHECK(*rc.j_min > 0.0);
}

TEST_CASE("rate constants are invariant under relabelling the regressors")
{
    const auto e = env3();
    KlEnv p;
    p.rho0 = e.rho0;
    p.sigma0_sq = e.sigma0_sq;
    // Order (2, 0, 1).
    Eigen::PermutationMatrix<3> perm;
    perm.indices() << 1, 2, 0;
    p.beta0 = perm * e.beta0;
    p.sigma_z = perm * e.sigma_z * perm.transpose();
    REQUIRE(p.beta0[1] == e.beta0[0]);
    const auto rc = rate_constants(true_decision(e, -0.3, 0.3), GroupStructure::singletons(4), e, -0.3, 0.3);
    const auto rp = rate_constants(true_decision(p, -0.3, 0.3), GroupStructure::singletons(4), p, -0.3, 0.3);
    CHECK(*rc.h_min == doctest::Approx(*rp.h_min).epsilon(1e-6));
    CHECK(*rc.h_tilde_min == doctest::Approx(*rp.h_tilde_min).epsilon(1e-6));
}

TEST_CASE("null hypotheses: decision region infimum equals the alternative infimum")
{
    const auto e = env3();
    const auto d = true_decision(e, -0.3, 0.3);
    GroupStructure g({{0}, {1, 2}, {1, 2, 3}, {2, 3}});
    JRegionOptions opts;
    opts.h_model = model_h_infimum(e);
    for (Index i = 0; i < 4; ++i) {
        if (d[i]) {
            continue;
        }
        const double joint = j_decision_region(e, d, i, g, -0.3, 0.3, opts);
        const double single = j_hypothesis(e, i, true, -0.3, 0.3, opts);
        CHECK(std::abs(joint - single) <= 1e-5);
    }
}

TEST_CASE("generic region infimum")
{
    auto f = [](const Eigen::VectorXd& x) { return (x[0] - 2.0) * (x[0] - 2.0) + (x[1] + 1.0) * (x[1] + 1.0); };
    const auto r = region_infimum({Constraint::interval(-1.0, 1.0), Constraint::outside(-0.5, 0.5)}, f,
                                  Eigen::Vector2d(0.0, 0.0));
    CHECK(r.h_value == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(r.argmin[0] == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(r.argmin[1] == doctest::Approx(-1.0).epsilon(1e-4));
}

TEST_CASE("equipartition residual at the truth is zero")
{
    ar1::TrueParams p;
    p.rho0 = -0.5;
    p.beta0 = Eigen::Vector2d(1.0, 0.0);
    p.lambda = Eigen::Matrix2d::Identity();
    std::vector<ar1::Theta> thetas{ar1::Theta::truth(p), {0.2, Eigen::Vector2d(0.5, 0.1), 0.0, 1.3}};
    const auto rows = equipartition_trace(thetas, {100, 2000}, 30, p, 5);
    REQUIRE(rows.size() == 4);
    for (const auto& r : rows) {
        if (r.theta_index == 0) {
            CHECK(r.h == doctest::Approx(0.0).scale(1.0));
            CHECK(r.mean_residual < 1e-12);
        } else {
            CHECK(r.h > 0.0);
        }
    }
    const auto again = equipartition_trace(thetas, {100, 2000}, 30, p, 5, 2);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        CHECK(rows[k].mean_neg_log_rn == again[k].mean_neg_log_rn);
    }
    thetas[1].intercept = 1.0;
    CHECK_THROWS(equipartition_trace(thetas, {100}, 2, p, 5));
}

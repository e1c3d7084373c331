#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "nmmt/experiments.hpp"
#include "nmmt/random.hpp"

using namespace nmmt;
using namespace nmmt::harness;

namespace {

const char* kSmallCompare = R"({
  "experiment": "compare",
  "model": "ar1",
  "seed": 7,
  "replicates": 3,
  "n_grid": [60, 120],
  "ar1": {"m": 6, "signal_indices": [0, 3], "signal_values": [1.0, -1.0],
          "lambda": {"kind": "block", "block": 3, "correlation": 0.5}},
  "mcmc": {"iters": 400, "burnin": 100, "thin": 2}
})";

std::string read_file(const std::filesystem::path& p)
{
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path scratch(const std::string& name)
{
    auto p = std::filesystem::temp_directory_path() / ("nmmt_harness_" + name);
    std::filesystem::remove_all(p);
    return p;
}

} // namespace

TEST_CASE("jaccard similarity")
{
    CHECK(jaccard(DecisionConfig{1, 0, 1}, DecisionConfig{1, 0, 1}) == 1.0);
    CHECK(jaccard(DecisionConfig{1, 0, 0}, DecisionConfig{0, 1, 1}) == 0.0);
    CHECK(jaccard(DecisionConfig{1, 1, 0}, DecisionConfig{1, 0, 1}) == doctest::Approx(1.0 / 3.0));
    CHECK(jaccard(DecisionConfig{0, 0}, DecisionConfig{0, 0}) == 1.0);
    Rng rng(1);
    for (int k = 0; k < 100; ++k) {
        DecisionConfig a(8);
        DecisionConfig b(8);
        for (Index i = 0; i < 8; ++i) {
            a.set(i, rng.bernoulli(0.4));
            b.set(i, rng.bernoulli(0.4));
        }
        CHECK(jaccard(a, b) == jaccard(b, a));
    }
    CHECK_THROWS(jaccard(DecisionConfig{1}, DecisionConfig{1, 0}));
}

TEST_CASE("KS distance against a normal reference")
{
    const std::vector<double> at_median{3.0};
    CHECK(ks_distance(at_median, 3.0, 2.0) == doctest::Approx(0.5));
    const std::vector<double> below{-5.0, -4.0, -3.5};
    CHECK(ks_distance(below, 0.0, 1.0) >= 0.5);
    Rng rng(2);
    std::vector<double> xs(10000);
    for (auto& x : xs) {
        x = rng.normal(1.5, 0.5);
    }
    CHECK(ks_distance(xs, 1.5, 0.5) < 0.02);
}

TEST_CASE("step-up selection by decreasing posterior probability")
{
    Eigen::VectorXd v(5);
    v << 0.99, 0.2, 0.97, 0.9, 0.5;
    // Running mean of 1 - v in order 0, 2, 3, 4, 1: 0.01, 0.02, 0.0467, 0.16, 0.288.
    CHECK(szg_rule(v, 0.05) == DecisionConfig{1, 0, 1, 1, 0});
    CHECK(szg_rule(v, 0.005).none());
    CHECK(szg_rule(v, 0.5).all());
    Eigen::VectorXd flat = Eigen::VectorXd::Constant(3, 0.5);
    CHECK(szg_rule(flat, 0.5).all());
}

TEST_CASE("config parsing")
{
    const auto cfg = parse_config(kSmallCompare);
    CHECK(cfg.experiment == ExperimentKind::Compare);
    CHECK(cfg.replicates == 3);
    CHECK(cfg.ar1.m == 6);
    CHECK(cfg.alpha == 0.05);
    CHECK(cfg.methods.size() == 3);
    CHECK(cfg.mcmc.iters == 400);
    CHECK_THROWS_AS(parse_config(R"({"experiment": "compare", "bogus": 1})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"experiment": "compare", "n_grid": [200, 100]})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"experiment": "compare", "ar1": {"mm": 3}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"experiment": "compare", "model": "oracle"})"), ConfigError);
    CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
    CHECK_NOTHROW(parse_config(R"({"model": "oracle"})", ExperimentKind::OracleSuite));
    CHECK_THROWS_AS(load_config("/nonexistent/nmmt.json"), ConfigError);

    const auto defaults = parse_config("{}");
    CHECK(defaults.seed == 20240601);
    CHECK(defaults.ar1.m == 50);
    CHECK(defaults.ar1.null_lo == -0.3);
    CHECK(defaults.mcmc.iters == 6000);
    CHECK(defaults.prior.tau == 100.0);
    const auto round = parse_config(dump_config(cfg));
    CHECK(dump_config(round) == dump_config(cfg));
}

TEST_CASE("replicate CSV layout")
{
    ReplicateRecord r;
    r.experiment = "compare";
    r.seed = 11;
    r.n = 100;
    r.method = Method::Szg;
    r.decision = DecisionConfig{1, 0};
    r.report = ErrorReport{0.1, 0.2, 0.3, 0.4, 1};
    r.jaccard = 0.5;
    const auto line = format_record(r);
    CHECK(line.rfind("compare,11,100,SZG,1,0.5,", 0) == 0);
    CHECK(line.find(",NA,") != std::string::npos);
    const auto path = scratch("csv.csv");
    write_replicates_csv(path, {r});
    std::istringstream in(read_file(path));
    std::string first;
    std::string second;
    std::getline(in, first);
    std::getline(in, second);
    CHECK(first == kReplicatesVersion);
    CHECK(second == kReplicatesHeader);
    std::filesystem::remove(path);
}

TEST_CASE("comparison runs are deterministic across repeats and job counts")
{
    const auto cfg = parse_config(kSmallCompare);
    const auto a = scratch("det_a");
    const auto b = scratch("det_b");
    CHECK(run_experiment(cfg, a, 1) == 0);
    CHECK(run_experiment(cfg, b, 2) == 0);
    const auto csv = read_file(a / "replicates.csv");
    CHECK(csv == read_file(b / "replicates.csv"));
    CHECK(std::filesystem::exists(a / "summary.json"));
    // 2 sample sizes x 3 replicates x 3 methods, plus two header lines.
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2 + 18);
    std::filesystem::remove_all(a);
    std::filesystem::remove_all(b);
}

TEST_CASE("method filter keeps only the requested rule")
{
    auto cfg = parse_config(kSmallCompare);
    cfg.methods = {Method::Mpr};
    cfg.ar1.lambda.kind = "identity";
    const auto res = run_comparison(cfg, 1);
    REQUIRE_FALSE(res.records.empty());
    for (const auto& r : res.records) {
        CHECK(r.method == Method::Mpr);
        REQUIRE(r.beta);
        CHECK(*r.beta >= 0.0);
    }
    for (const auto& c : res.cells) {
        CHECK(c.method == Method::Mpr);
    }
}

TEST_CASE("singleton oracle rates give identical modified and unmodified traces")
{
    const auto cfg = parse_config(R"({
      "experiment": "rates", "model": "oracle", "replicates": 100,
      "n_grid": [25, 50, 100, 200], "beta": 0.5,
      "oracle": {"theta0": [0.5, 0.9, 0.0, 0.1, -0.8]}
    })");
    const auto res = run_rates(cfg, 1);
    auto trace = [&](ErrorMeasure m) {
        std::vector<double> out;
        for (const auto& r : res.rows) {
            if (r.measure == m) {
                out.push_back(r.mean_error);
            }
        }
        return out;
    };
    CHECK(trace(ErrorMeasure::Fdr) == trace(ErrorMeasure::ModifiedFdr));
    CHECK(trace(ErrorMeasure::Fnr) == trace(ErrorMeasure::ModifiedFnr));
    REQUIRE(res.constants.h_min);
    CHECK(*res.constants.h_min == doctest::Approx(0.02));
    CHECK(*res.constants.j_min == *res.constants.h_min);
}

TEST_CASE("alpha above the asymptotic maximum is reported as infeasible")
{
    const auto cfg = parse_config(R"({
      "experiment": "alpha-control", "model": "oracle", "replicates": 10,
      "n_grid": [100, 200], "alpha": 0.45,
      "oracle": {"theta0": [0.8, 0.9, 1.0, 0.2, -0.2], "groups": [[0, 1], [0, 1], [2], [3], [4]]}
    })");
    const auto res = run_alpha_control(cfg, 1);
    CHECK_FALSE(res.feasible);
    CHECK(res.bounds.second == doctest::Approx(0.4));
    CHECK(res.message.find("0.4") != std::string::npos);
    const auto out = scratch("alpha");
    CHECK(run_experiment(cfg, out, 1) == 0);
    CHECK(read_file(out / "alpha_control.json").find("\"feasible\": false") != std::string::npos);
    std::filesystem::remove_all(out);
}

TEST_CASE("each experiment writes its files")
{
    const auto rates = parse_config(R"({
      "experiment": "rates", "model": "oracle", "replicates": 20, "n_grid": [25, 50, 100]
    })");
    const auto out = scratch("files");
    run_experiment(rates, out, 1);
    CHECK(read_file(out / "rates.csv").rfind("n,measure,mean_error,slope_target\n", 0) == 0);
    CHECK(std::filesystem::exists(out / "rates.json"));

    const auto equi = parse_config(R"({
      "experiment": "equipartition", "replicates": 4, "n_grid": [50, 100],
      "ar1": {"m": 2, "beta0": [1.0, 0.0], "lambda": {"kind": "identity"}},
      "thetas": [{"rho": -0.5, "beta": [1.0, 0.0], "sigma_sq": 1.0},
                 {"rho": 0.1, "beta": [0.5, 0.2], "sigma_sq": 2.0}]
    })");
    CHECK(run_experiment(equi, out, 1) == 0);
    const auto csv = read_file(out / "equipartition.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);

    const auto suite = parse_config(R"({"model": "oracle", "replicates": 5})", ExperimentKind::OracleSuite);
    run_experiment(suite, out, 1);
    CHECK(read_file(out / "summary.json").find("oracle_v_equivalence") != std::string::npos);
    std::filesystem::remove_all(out);
}

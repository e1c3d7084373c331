// One PASS/FAIL line per acceptance criterion; exit status is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "nmmt/experiments.hpp"
#include "nmmt/kl.hpp"

using namespace nmmt;
using namespace nmmt::harness;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0, double d = 0.0)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, pattern, a, b, c, d);
    return buf;
}

int jobs()
{
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

const SuiteCheck& find_check(const OracleSuiteResult& suite, const std::string& name)
{
    for (const auto& c : suite.checks) {
        if (c.name == name) {
            return c;
        }
    }
    throw std::runtime_error("missing suite check " + name);
}

std::string tally(const SuiteCheck& c)
{
    return c.name + " " + std::to_string(c.passed) + "/" + std::to_string(c.total);
}

const OracleSuiteResult& oracle_suite()
{
    static const OracleSuiteResult suite = [] {
        const auto cfg = parse_config(R"({"model": "oracle", "seed": 20240601})", ExperimentKind::OracleSuite);
        return run_oracle_suite(cfg, jobs());
    }();
    return suite;
}

// m = 8 AR(1) truth: three signals of magnitude 1 in two correlated blocks.
const char* kAr1Eight = R"(
  "ar1": {"m": 8, "signal_indices": [0, 3, 5], "signal_values": [1.0, -1.0, 1.0],
          "lambda": {"kind": "block", "block": 4, "correlation": 0.5}}
)";

Outcome oracle_equivalence()
{
    const auto& s = oracle_suite();
    const auto& v = find_check(s, "oracle_v_equivalence");
    const auto& w = find_check(s, "oracle_w_equivalence");
    const auto& o = find_check(s, "optimizer_matches_enumeration");
    return {v.ok() && w.ok() && o.ok(), tally(v) + ", " + tally(w) + ", " + tally(o)};
}

Outcome consistency()
{
    const auto cfg = parse_config(std::string(R"({"experiment": "compare", "replicates": 50, "beta": 0.5,
        "n_grid": [100, 200, 400, 800, 1600],)") + kAr1Eight + "}");
    const auto rows = run_consistency(cfg, jobs());
    bool pass = true;
    std::string detail = "fractions";
    for (std::size_t k = 0; k < rows.size(); ++k) {
        detail += fmt(" %.2f", rows[k].fraction);
        if (rows[k].failed > 0) {
            pass = false;
        }
        if (k > 0) {
            const double se = std::hypot(rows[k - 1].std_err, rows[k].std_err);
            if (rows[k].fraction < rows[k - 1].fraction - se) {
                pass = false;
            }
        }
    }
    if (rows.back().fraction < 0.9) {
        pass = false;
    }
    return {pass, detail};
}

Outcome error_rates()
{
    const auto cfg = parse_config(R"({"experiment": "rates", "model": "oracle", "replicates": 200,
        "n_grid": [50, 100, 200, 400, 800], "beta": 0.5,
        "oracle": {"theta0": [0.5, 0.9, 0.0, 0.1, -0.8], "groups": [[0, 1], [0, 1], [2], [3], [4]]}})");
    const auto res = run_rates(cfg, jobs());
    bool pass = true;
    std::string detail;
    for (const auto& f : res.fits) {
        if (f.measure != ErrorMeasure::Fdr && f.measure != ErrorMeasure::Fnr) {
            continue;
        }
        if (!f.fit || !f.slope_target) {
            pass = false;
            detail += to_string(f.measure) + " no fit (" + f.note + ") ";
            continue;
        }
        const double rel = std::abs(f.fit->slope - *f.slope_target) / std::abs(*f.slope_target);
        pass = pass && rel <= 0.2;
        detail += to_string(f.measure) + fmt(" slope %.4f target %.4f (%.1f%%) ", f.fit->slope, *f.slope_target,
                                             100.0 * rel);
    }
    return {pass, detail};
}

Outcome dominance()
{
    const auto& s = oracle_suite();
    const auto& d = find_check(s, "modified_measure_dominance");
    const auto& r = find_check(s, "singleton_reduction");
    return {d.ok() && r.ok(), tally(d) + ", " + tally(r)};
}

Outcome monotonicity()
{
    const auto& s = oracle_suite();
    const auto& f = find_check(s, "fdr_monotone_in_beta");
    const auto& m = find_check(s, "mfdr_monotone_in_beta");
    return {f.ok() && m.ok(), tally(f) + ", " + tally(m)};
}

Outcome alpha_control()
{
    const auto cfg = parse_config(R"({"experiment": "alpha-control", "model": "oracle", "replicates": 200,
        "n_grid": [100, 200, 400, 800, 1600], "alpha": 0.2,
        "oracle": {"theta0": [0.8, 0.9, 1.0, 0.2, -0.2], "groups": [[0, 1], [0, 1], [2], [3], [4]]}})");
    const auto res = run_alpha_control(cfg, jobs());
    if (!res.feasible || !res.bound_check || res.rows.empty()) {
        return {false, "infeasible: " + res.message};
    }
    const auto& b = *res.bound_check;
    const double pbfdr = res.rows.back().pbfdr.value;
    const bool pass = b.within && std::abs(pbfdr - 0.2) <= 0.05;
    return {pass, fmt("beta=0 mpBFDR %.4f (se %.4f) in (%.2f, %.2f)", b.observed, b.std_err, b.lower, b.upper) +
                      fmt("; additive pBFDR %.4f at target 0.2", pbfdr)};
}

Outcome equipartition()
{
    const auto cfg = parse_config(std::string(R"({"experiment": "compare",)") + kAr1Eight + "}");
    const auto params = cfg.ar1.true_params();
    auto shifted = [&](double rho, Index k, double delta, double sigma_sq) {
        ar1::Theta t = ar1::Theta::truth(params);
        t.rho = rho;
        t.beta[k] += delta;
        t.sigma_sq = sigma_sq;
        return t;
    };
    const std::vector<ar1::Theta> thetas{shifted(-0.3, 0, 0.0, 1.0), shifted(-0.5, 0, -0.5, 1.2),
                                         shifted(0.0, 1, 0.4, 2.0), shifted(-0.6, 3, 0.3, 0.8),
                                         shifted(0.5, 5, -1.0, 1.5)};
    const std::vector<Index> grid{250, 2000, 4000};
    const auto rows = kl::equipartition_trace(thetas, grid, 200, params, 20240601, jobs());
    bool pass = true;
    std::string detail;
    for (std::size_t t = 0; t < thetas.size(); ++t) {
        const kl::EquipartitionRow* at[3] = {nullptr, nullptr, nullptr};
        for (const auto& r : rows) {
            if (r.theta_index == static_cast<Index>(t)) {
                for (std::size_t g = 0; g < grid.size(); ++g) {
                    if (r.n == grid[g]) {
                        at[g] = &r;
                    }
                }
            }
        }
        const double z = std::abs(at[1]->mean_neg_log_rn - at[1]->h) / at[1]->std_err;
        const bool ok = z <= 2.0 && at[2]->mean_residual < at[0]->mean_residual;
        pass = pass && ok;
        detail += fmt("h=%.4f z=%.2f res %.4f->%.4f; ", at[1]->h, z, at[0]->mean_residual, at[2]->mean_residual);
    }
    return {pass, detail};
}

Outcome null_identity()
{
    const auto& oracle = find_check(oracle_suite(), "null_coordinate_identity");
    const auto cfg = parse_config(std::string(R"({"experiment": "compare",)") + kAr1Eight + "}");
    const auto params = cfg.ar1.true_params();
    const auto env = kl::KlEnv::from(params);
    const auto groups = ar1::form_groups(params.lambda, cfg.ar1.group_percentile, cfg.ar1.group_score);
    const auto d = kl::true_decision(env, cfg.ar1.null_lo, cfg.ar1.null_hi);
    kl::JRegionOptions opts;
    opts.h_model = kl::model_h_infimum(env);
    double worst = 0.0;
    Index nulls = 0;
    for (Index i = 0; i < d.size(); ++i) {
        if (d[i]) {
            continue;
        }
        ++nulls;
        const double joint = kl::j_decision_region(env, d, i, groups, cfg.ar1.null_lo, cfg.ar1.null_hi, opts);
        const double single = kl::j_hypothesis(env, i, true, cfg.ar1.null_lo, cfg.ar1.null_hi, opts);
        worst = std::max(worst, std::abs(joint - single));
    }
    const bool pass = oracle.ok() && worst <= 1e-5;
    return {pass, tally(oracle) + fmt("; AR(1) max diff %.2e over %.0f null hypotheses", worst,
                                      static_cast<double>(nulls))};
}

Outcome desk_compare()
{
    const auto cfg = parse_config(R"({"experiment": "compare", "model": "ar1", "replicates": 50,
        "n_grid": [100, 200, 400, 800, 1600], "alpha": 0.05, "ar1": {"m": 50}})");
    const auto res = run_comparison(cfg, jobs());
    auto median = [&](Index n, Method m) {
        for (const auto& c : res.cells) {
            if (c.n == n && c.method == m) {
                return c.median_jaccard;
            }
        }
        throw std::runtime_error("missing comparison cell");
    };
    const Index n0 = cfg.n_grid.front();
    const double nmd0 = median(n0, Method::Nmd);
    bool pass = nmd0 >= median(n0, Method::Mpr) && nmd0 >= median(n0, Method::Szg);
    std::string detail = fmt("n=%.0f medians NMD %.3f MPR %.3f SZG %.3f; NMD trace", static_cast<double>(n0), nmd0,
                             median(n0, Method::Mpr), median(n0, Method::Szg));
    double prev = -1.0;
    for (Index n : cfg.n_grid) {
        const double m = median(n, Method::Nmd);
        detail += fmt(" %.3f", m);
        pass = pass && m >= prev;
        prev = m;
    }
    detail += "; failed replicates " + std::to_string(res.failures.size());
    return {pass, detail};
}

} // namespace

int main()
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"oracle equivalence", oracle_equivalence},
        {"consistency", consistency},
        {"error decay rates", error_rates},
        {"dominance and reduction", dominance},
        {"monotonicity in beta", monotonicity},
        {"alpha-control bounds", alpha_control},
        {"equipartition", equipartition},
        {"null-coordinate identity", null_identity},
        {"desk-scale comparison", desk_compare},
    };
    int failures = 0;
    for (const auto& [name, run] : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s %s [%.1fs]: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), secs, o.detail.c_str());
        std::fflush(stdout);
        failures += o.pass ? 0 : 1;
    }
    return failures;
}

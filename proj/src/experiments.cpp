#include "nmmt/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

#include "nmmt/random.hpp"
#include "nmmt/stats.hpp"

namespace nmmt::harness {

using nlohmann::json;

namespace {

std::string fmt(double x)
{
    if (std::isnan(x)) {
        return "NA";
    }
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::uint64_t replicate_seed(std::uint64_t master, Index n, Index r)
{
    return derive_seed(derive_seed(master, static_cast<std::uint64_t>(n)), static_cast<std::uint64_t>(r));
}

template <typename T>
std::vector<std::optional<T>> run_replicates(Index count, int jobs, const std::function<T(Index)>& task,
                                             std::vector<std::string>& errors)
{
    return run_indexed<T>(count, jobs, task, &errors);
}

double ms_since(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

// Everything a replicate needs from the AR(1) section.
struct Ar1Setup {
    ar1::TrueParams params;
    HypothesisSet hypotheses;
    GroupStructure groups;
    DecisionConfig d_true;

    explicit Ar1Setup(const ExperimentConfig& cfg)
        : params(cfg.ar1.true_params()),
          hypotheses(ar1::map_hypotheses(params.m(), cfg.ar1.null_lo, cfg.ar1.null_hi)),
          groups(ar1::form_groups(params.lambda, cfg.ar1.group_percentile, cfg.ar1.group_score)),
          d_true(kl::true_decision(kl::KlEnv::from(params), cfg.ar1.null_lo, cfg.ar1.null_hi))
    {
    }
};

struct Ar1Data {
    Eigen::VectorXd x;
    Eigen::MatrixXd z;
    Eigen::VectorXd z_next;
    double x_last = 0.0;
};

// n fitting observations plus the covariate row of the next time point.
Ar1Data simulate_ar1(const ar1::TrueParams& params, Index n, std::uint64_t seed)
{
    const Eigen::MatrixXd z_all = ar1::gen_covariates(n + 1, params.lambda, derive_seed(seed, 1));
    const Eigen::VectorXd x_all = ar1::gen_data(z_all, params, derive_seed(seed, 2));
    Ar1Data d;
    d.x = x_all.head(n);
    d.z = z_all.topRows(n);
    d.z_next = z_all.row(n).transpose();
    d.x_last = x_all[n - 1];
    return d;
}

ar1::SamplerOutput fit_ar1(const ExperimentConfig& cfg, const Ar1Data& data, std::uint64_t seed)
{
    return ar1::posterior_sample(data.x, data.z, cfg.prior, cfg.mcmc, derive_seed(seed, 3), cfg.ar1.intercept);
}

PosteriorSummary oracle_summary(const ExperimentConfig& cfg, const oracle::GaussOracleModel& model,
                                const GroupStructure& groups, Index n, std::uint64_t seed)
{
    const Eigen::MatrixXd data = oracle::gen_oracle_data(model, n, derive_seed(seed, 1));
    const oracle::Posterior post = oracle::analytic_posterior(model, data);
    if (cfg.oracle.posterior == "analytic") {
        return oracle::analytic_summary(post, groups, model.eps);
    }
    const PosteriorSampleSet samples = oracle::sample_posterior(post, cfg.oracle.draws, derive_seed(seed, 2));
    return summarize(samples, oracle::hypotheses(model), groups);
}

double calibrated_error(ErrorMeasure measure, const DecisionConfig& d, const PosteriorSummary& s)
{
    return measure == ErrorMeasure::Fdr ? posterior_fdr(d, s.v) : modified_posterior_fdr(d, s.w_at(d));
}

json estimate_json(const ExpectedErrorEstimate& e)
{
    return {{"value", e.value},
            {"std_err", e.std_err},
            {"n_replicates", e.n_replicates},
            {"n_qualifying", e.n_qualifying},
            {"n_excluded", e.n_excluded},
            {"n_failed", e.n_failed}};
}

json optional_json(const std::optional<double>& v)
{
    return v ? json(*v) : json(nullptr);
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << text;
}

} // namespace

double jaccard(const DecisionConfig& d0, const DecisionConfig& d)
{
    if (d0.size() != d.size()) {
        throw std::invalid_argument("jaccard: length mismatch");
    }
    Index both = 0;
    Index either = 0;
    for (Index i = 0; i < d.size(); ++i) {
        both += (d0[i] & d[i]);
        either += (d0[i] | d[i]);
    }
    return either == 0 ? 1.0 : static_cast<double>(both) / static_cast<double>(either);
}

double ks_distance(std::span<const double> samples, double mean, double sd)
{
    if (!(sd > 0.0)) {
        throw std::invalid_argument("ks_distance: sd must be positive");
    }
    return ks_statistic(samples, [=](double x) { return normal_cdf((x - mean) / sd); });
}

DecisionConfig szg_rule(const Eigen::Ref<const Eigen::VectorXd>& v, double alpha)
{
    const Index m = v.size();
    std::vector<Index> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return v[a] > v[b]; });
    // Posterior FDR of the top k is the running mean of 1 - v, non-decreasing in k.
    Index keep = 0;
    double false_mass = 0.0;
    for (Index k = 0; k < m; ++k) {
        false_mass += 1.0 - v[order[static_cast<std::size_t>(k)]];
        if (false_mass / static_cast<double>(k + 1) <= alpha) {
            keep = k + 1;
        }
    }
    DecisionConfig d(m, 0);
    for (Index k = 0; k < keep; ++k) {
        d.set(order[static_cast<std::size_t>(k)], 1);
    }
    return d;
}

std::string format_record(const ReplicateRecord& r)
{
    std::string s = r.experiment;
    s += ',' + std::to_string(r.seed);
    s += ',' + std::to_string(r.n);
    s += ',' + to_string(r.method);
    s += ',' + std::to_string(r.report.rejections);
    s += ',' + fmt(r.jaccard);
    s += ',' + fmt(r.euclid);
    s += ',' + fmt(r.ks);
    s += ',' + fmt(r.report.fdr_x);
    s += ',' + fmt(r.report.mfdr_x);
    s += ',' + fmt(r.report.fnr_x);
    s += ',' + fmt(r.report.mfnr_x);
    s += ',' + (r.beta ? fmt(*r.beta) : std::string("NA"));
    s += ',' + fmt(r.wall_ms);
    return s;
}

void write_replicates_csv(const std::filesystem::path& path, const std::vector<ReplicateRecord>& records)
{
    std::string text = std::string(kReplicatesVersion) + "\n" + kReplicatesHeader + "\n";
    for (const auto& r : records) {
        text += format_record(r);
        text += '\n';
    }
    write_text(path, text);
}

std::vector<CellSummary> summarize_cells(const std::vector<ReplicateRecord>& records)
{
    std::map<std::pair<Index, int>, std::vector<const ReplicateRecord*>> cells;
    for (const auto& r : records) {
        cells[{r.n, static_cast<int>(r.method)}].push_back(&r);
    }
    std::vector<CellSummary> out;
    for (const auto& [key, rows] : cells) {
        auto column = [&](auto get) {
            std::vector<double> c;
            c.reserve(rows.size());
            for (const auto* r : rows) {
                c.push_back(get(*r));
            }
            return c;
        };
        const auto jac = column([](const ReplicateRecord& r) { return r.jaccard; });
        const auto euc = column([](const ReplicateRecord& r) { return r.euclid; });
        const auto ks = column([](const ReplicateRecord& r) { return r.ks; });
        CellSummary c;
        c.n = key.first;
        c.method = static_cast<Method>(key.second);
        c.count = static_cast<Index>(rows.size());
        c.median_jaccard = median(jac);
        c.median_euclid = median(euc);
        c.median_ks = median(ks);
        c.mean_jaccard = mean(jac);
        c.mean_euclid = mean(euc);
        c.mean_ks = mean(ks);
        c.mean_fdr_x = mean(column([](const ReplicateRecord& r) { return r.report.fdr_x; }));
        c.mean_mfdr_x = mean(column([](const ReplicateRecord& r) { return r.report.mfdr_x; }));
        c.mean_fnr_x = mean(column([](const ReplicateRecord& r) { return r.report.fnr_x; }));
        c.mean_mfnr_x = mean(column([](const ReplicateRecord& r) { return r.report.mfnr_x; }));
        out.push_back(c);
    }
    return out;
}

ComparisonResult run_comparison(const ExperimentConfig& cfg, int jobs)
{
    cfg.validate();
    if (cfg.model != ModelKind::Ar1) {
        throw ConfigError("compare needs the ar1 model");
    }
    const Ar1Setup setup(cfg);
    const Index m = setup.params.m();
    const OptimizerOptions opts = cfg.optimizer_options();
    const double true_sd = std::sqrt(setup.params.sigma0_sq);

    ComparisonResult result;
    for (Index n : cfg.n_grid) {
        const std::function<std::vector<ReplicateRecord>(Index)> task = [&](Index r) {
            const std::uint64_t seed = replicate_seed(cfg.seed, n, r);
            const Ar1Data data = simulate_ar1(setup.params, n, seed);
            const ar1::SamplerOutput fit = fit_ar1(cfg, data, seed);
            const PosteriorSummary summary = summarize(fit.samples, setup.hypotheses, setup.groups);
            const double true_mean = setup.params.rho0 * data.x_last + setup.params.intercept0 +
                                     data.z_next.dot(setup.params.beta0);

            std::vector<ReplicateRecord> rows;
            for (std::size_t k = 0; k < cfg.methods.size(); ++k) {
                const Method method = cfg.methods[k];
                const auto start = std::chrono::steady_clock::now();
                ReplicateRecord rec;
                rec.experiment = "compare";
                rec.seed = seed;
                rec.n = n;
                rec.method = method;
                if (method == Method::Nmd) {
                    const CalibrationResult cal = calibrate_beta(cfg.alpha, cfg.calibrate, summary, 12, opts);
                    rec.beta = cal.beta;
                    rec.decision = nmd_decision(summary, cal.beta, opts);
                } else if (method == Method::Mpr) {
                    const CalibrationResult cal = calibrate_beta(cfg.alpha, [&](double b) {
                        return calibrated_error(cfg.calibrate, additive_rule(summary.v, b), summary);
                    });
                    rec.beta = cal.beta;
                    rec.decision = additive_rule(summary.v, cal.beta);
                } else {
                    rec.decision = szg_rule(summary.v, cfg.alpha);
                }
                rec.report = error_report(rec.decision, summary);
                rec.jaccard = jaccard(setup.d_true, rec.decision);

                std::vector<bool> selected(static_cast<std::size_t>(m));
                for (Index i = 0; i < m; ++i) {
                    selected[static_cast<std::size_t>(i)] = rec.decision[i + 1] == 1;
                }
                const std::uint64_t method_seed = derive_seed(seed, 10 + k);
                const ar1::RefitResult refit = ar1::refit_selected(selected, data.x, data.z, cfg.prior, cfg.mcmc,
                                                                   derive_seed(method_seed, 1), cfg.ar1.intercept);
                const double d_beta = (refit.beta_hat - setup.params.beta0).squaredNorm();
                const double d_rho = refit.rho_hat - setup.params.rho0;
                rec.euclid = std::sqrt(d_beta + d_rho * d_rho);
                const Eigen::VectorXd pred =
                    ar1::posterior_predictive(refit.draws, data.z_next, data.x_last, derive_seed(method_seed, 2));
                rec.ks = ks_distance(std::span<const double>(pred.data(), static_cast<std::size_t>(pred.size())),
                                     true_mean, true_sd);
                rec.wall_ms = cfg.record_wall_time ? ms_since(start) : 0.0;
                rows.push_back(std::move(rec));
            }
            return rows;
        };
        std::vector<std::string> errors;
        const auto out = run_replicates<std::vector<ReplicateRecord>>(cfg.replicates, jobs, task, errors);
        for (Index r = 0; r < cfg.replicates; ++r) {
            ++result.attempted;
            const auto& slot = out[static_cast<std::size_t>(r)];
            if (!slot) {
                result.failures.push_back({n, r, errors[static_cast<std::size_t>(r)]});
                continue;
            }
            for (const auto& rec : *slot) {
                result.records.push_back(rec);
            }
        }
    }
    result.cells = summarize_cells(result.records);
    return result;
}

std::vector<ConsistencyRow> run_consistency(const ExperimentConfig& cfg, int jobs)
{
    cfg.validate();
    if (cfg.model != ModelKind::Ar1) {
        throw ConfigError("consistency needs the ar1 model");
    }
    const Ar1Setup setup(cfg);
    const OptimizerOptions opts = cfg.optimizer_options();
    std::vector<ConsistencyRow> rows;
    for (Index n : cfg.n_grid) {
        const std::function<int(Index)> task = [&](Index r) {
            const std::uint64_t seed = replicate_seed(cfg.seed, n, r);
            const Ar1Data data = simulate_ar1(setup.params, n, seed);
            const ar1::SamplerOutput fit = fit_ar1(cfg, data, seed);
            const PosteriorSummary summary = summarize(fit.samples, setup.hypotheses, setup.groups);
            return nmd_decision(summary, cfg.beta, opts) == setup.d_true ? 1 : 0;
        };
        std::vector<std::string> errors;
        const auto out = run_replicates<int>(cfg.replicates, jobs, task, errors);
        ConsistencyRow row;
        row.n = n;
        Index hits = 0;
        Index ok = 0;
        for (const auto& o : out) {
            if (!o) {
                ++row.failed;
                continue;
            }
            ++ok;
            hits += *o;
        }
        if (ok > 0) {
            row.fraction = static_cast<double>(hits) / static_cast<double>(ok);
            row.std_err = std::sqrt(row.fraction * (1.0 - row.fraction) / static_cast<double>(ok));
        }
        rows.push_back(row);
    }
    return rows;
}

namespace {

// Decision rule and posterior factory shared by the rate and alpha-control studies.
struct StudySetup {
    GroupStructure groups;
    DecisionConfig d_true;
    std::function<PosteriorSummary(Index, std::uint64_t)> posterior;
    std::function<RateConstants()> constants;
};

StudySetup study_setup(const ExperimentConfig& cfg)
{
    if (cfg.model == ModelKind::Oracle) {
        const oracle::GaussOracleModel model = cfg.oracle.model();
        const GroupStructure groups = cfg.oracle.group_structure();
        if (groups.size() != model.size()) {
            throw ConfigError("oracle.groups must cover every coordinate");
        }
        const DecisionConfig d_true = oracle::true_decision(model);
        return {groups, d_true,
                [cfg, model, groups](Index n, std::uint64_t seed) { return oracle_summary(cfg, model, groups, n, seed); },
                [model, groups, d_true] { return oracle::oracle_rate_constants(model, d_true, groups); }};
    }
    auto setup = std::make_shared<Ar1Setup>(cfg);
    return {setup->groups, setup->d_true,
            [cfg, setup](Index n, std::uint64_t seed) {
                const Ar1Data data = simulate_ar1(setup->params, n, seed);
                return summarize(fit_ar1(cfg, data, seed).samples, setup->hypotheses, setup->groups);
            },
            [cfg, setup] {
                return kl::rate_constants(setup->d_true, setup->groups, kl::KlEnv::from(setup->params),
                                          cfg.ar1.null_lo, cfg.ar1.null_hi);
            }};
}

std::optional<double> rate_target(const RateConstants& c, ErrorMeasure m)
{
    std::optional<double> v;
    switch (m) {
    case ErrorMeasure::Fdr:
        v = c.h_min;
        break;
    case ErrorMeasure::ModifiedFdr:
        v = c.j_min;
        break;
    case ErrorMeasure::Fnr:
    case ErrorMeasure::ModifiedFnr:
        v = c.h_tilde_min;
        break;
    }
    if (v) {
        return -*v;
    }
    return std::nullopt;
}

constexpr ErrorMeasure kAllMeasures[] = {ErrorMeasure::Fdr, ErrorMeasure::ModifiedFdr, ErrorMeasure::Fnr,
                                         ErrorMeasure::ModifiedFnr};

} // namespace

RatesResult run_rates(const ExperimentConfig& cfg, int jobs)
{
    cfg.validate();
    const StudySetup study = study_setup(cfg);
    const OptimizerOptions opts = cfg.optimizer_options();
    const bool log_mode = cfg.rate_average == "log";

    RatesResult result;
    result.d_true = study.d_true;
    result.constants = study.constants();
    std::map<ErrorMeasure, std::vector<std::pair<double, double>>> points;
    for (Index n : cfg.n_grid) {
        const std::function<ReplicateOutcome(Index)> task = [&](Index r) {
            const PosteriorSummary s = study.posterior(n, replicate_seed(cfg.seed, n, r));
            const DecisionConfig d = nmd_decision(s, cfg.beta, opts);
            return ReplicateOutcome{d, error_report(d, s)};
        };
        std::vector<std::string> errors;
        const auto out = run_replicates<ReplicateOutcome>(cfg.replicates, jobs, task, errors);
        for (ErrorMeasure measure : kAllMeasures) {
            const bool fdr_type = measure == ErrorMeasure::Fdr || measure == ErrorMeasure::ModifiedFdr;
            std::vector<double> values;
            for (const auto& o : out) {
                if (!o || (fdr_type ? o->decision.none() : o->decision.all())) {
                    continue;
                }
                const double e = select(o->report, measure);
                if (log_mode) {
                    if (e > 0.0) {
                        values.push_back(std::log(e));
                    }
                } else {
                    values.push_back(e);
                }
            }
            RateRow row;
            row.n = n;
            row.measure = measure;
            row.used = static_cast<Index>(values.size());
            if (!values.empty()) {
                row.mean_error = log_mode ? std::exp(mean(values)) : mean(values);
            }
            row.slope_target = rate_target(result.constants, measure);
            points[measure].emplace_back(static_cast<double>(n), row.mean_error);
            result.rows.push_back(row);
        }
        for (const auto& o : out) {
            result.failed += o ? 0 : 1;
        }
    }
    for (ErrorMeasure measure : kAllMeasures) {
        RateMeasureFit f;
        f.measure = measure;
        f.slope_target = rate_target(result.constants, measure);
        try {
            f.fit = rate_fit(points[measure]);
        } catch (const InsufficientData&) {
            f.note = "below Monte-Carlo floor";
        }
        result.fits.push_back(f);
    }
    return result;
}

namespace {

constexpr double kLogBetaDecades = 300.0;

// beta as a function of u in [0, 1]: 0 at u = 0, then log-uniform from
// 1e-300 up to 1, so bisection resolves thresholds far below machine epsilon.
double beta_of(double u)
{
    return u <= 0.0 ? 0.0 : std::pow(10.0, -kLogBetaDecades * (1.0 - u));
}

struct OuterCalibration {
    double beta = 0.0;
    ExpectedErrorEstimate achieved;
};

OuterCalibration calibrate_average(double alpha, const std::function<ExpectedErrorEstimate(double)>& error_at)
{
    auto value = [&](double beta) {
        const ExpectedErrorEstimate e = error_at(beta);
        return std::make_pair(e.value, e);
    };
    auto [at_zero, est_zero] = value(0.0);
    if (at_zero <= alpha) {
        return {0.0, est_zero};
    }
    double lo = 0.0;
    double hi = 1.0;
    ExpectedErrorEstimate best = value(beta_of(hi)).second;
    for (int k = 0; k < 50; ++k) {
        const double mid = 0.5 * (lo + hi);
        auto [e, est] = value(beta_of(mid));
        if (e <= alpha) {
            hi = mid;
            best = est;
        } else {
            lo = mid;
        }
    }
    return {beta_of(hi), best};
}

ExpectedErrorEstimate conditional_mean(const std::vector<std::optional<ReplicateOutcome>>& outcomes,
                                       ErrorMeasure measure)
{
    try {
        return expected_errors(outcomes, Conditioning::ExcludeAllAccept, measure);
    } catch (const ConditioningNeverOccurred&) {
        ExpectedErrorEstimate e;
        e.n_replicates = static_cast<Index>(outcomes.size());
        e.n_excluded = e.n_replicates;
        return e;
    }
}

} // namespace

AlphaControlResult run_alpha_control(const ExperimentConfig& cfg, int jobs)
{
    cfg.validate();
    const StudySetup study = study_setup(cfg);
    const OptimizerOptions opts = cfg.optimizer_options();
    AlphaControlResult result;
    try {
        result.m_signal_groups = check_disjoint_null_groups(study.groups, study.d_true);
        result.bounds = max_mpbfdr_bounds(study.groups, study.d_true);
    } catch (const std::exception& e) {
        result.feasible = false;
        result.message = e.what();
        return result;
    }
    if (cfg.alpha >= result.bounds.second) {
        result.feasible = false;
        result.message = "alpha " + fmt(cfg.alpha) + " is not below the asymptotic maximum mpBFDR bound (m - m_1)/(sum d_t + m - m_1) = " +
                         fmt(result.bounds.second);
        return result;
    }

    for (Index n : cfg.n_grid) {
        const std::function<PosteriorSummary(Index)> task = [&](Index r) {
            return study.posterior(n, replicate_seed(cfg.seed, n, r));
        };
        std::vector<std::string> errors;
        const auto summaries = run_replicates<PosteriorSummary>(cfg.replicates, jobs, task, errors);
        auto outcomes = [&](const std::function<DecisionConfig(const PosteriorSummary&)>& rule) {
            std::vector<std::optional<ReplicateOutcome>> out;
            for (const auto& s : summaries) {
                if (!s) {
                    out.emplace_back(std::nullopt);
                    continue;
                }
                const DecisionConfig d = rule(*s);
                out.emplace_back(ReplicateOutcome{d, error_report(d, *s)});
            }
            return out;
        };
        AlphaControlRow row;
        row.n = n;
        const OuterCalibration nmd = calibrate_average(cfg.alpha, [&](double beta) {
            return conditional_mean(outcomes([&](const PosteriorSummary& s) { return nmd_decision(s, beta, opts); }),
                                    ErrorMeasure::ModifiedFdr);
        });
        row.beta_nmd = nmd.beta;
        row.mpbfdr = nmd.achieved;
        const OuterCalibration mpr = calibrate_average(cfg.alpha, [&](double beta) {
            return conditional_mean(outcomes([&](const PosteriorSummary& s) { return additive_rule(s.v, beta); }),
                                    ErrorMeasure::Fdr);
        });
        row.beta_mpr = mpr.beta;
        row.pbfdr = mpr.achieved;
        result.rows.push_back(row);
    }
    const Index n_max = cfg.n_grid.back();
    result.bound_check = beta_zero_bound_check(
        study.groups, study.d_true, [&](std::uint64_t seed) { return study.posterior(n_max, seed); }, cfg.replicates,
        derive_seed(cfg.seed, 0xb0b0), jobs);
    return result;
}

bool OracleSuiteResult::ok() const
{
    return std::all_of(checks.begin(), checks.end(), [](const SuiteCheck& c) { return c.ok(); });
}

namespace {

constexpr Index kEquivalenceInstances = 200;
constexpr Index kDominanceTriples = 1000;
constexpr Index kMonotoneInstances = 100;
constexpr Index kBetaGrid = 64;
constexpr Index kIdentityInstances = 50;

GroupStructure random_groups(Index m, double p, Rng& rng)
{
    std::vector<std::vector<Index>> g(static_cast<std::size_t>(m));
    for (Index i = 0; i < m; ++i) {
        g[static_cast<std::size_t>(i)].push_back(i);
        for (Index j = 0; j < m; ++j) {
            if (j != i && rng.bernoulli(p)) {
                g[static_cast<std::size_t>(i)].push_back(j);
            }
        }
    }
    return GroupStructure(g);
}

DecisionConfig random_decision(Index m, Rng& rng)
{
    DecisionConfig d(m, 0);
    for (Index i = 0; i < m; ++i) {
        d.set(i, rng.bernoulli(0.5) ? 1 : 0);
    }
    return d;
}

oracle::GaussOracleModel random_model(const oracle::GaussOracleModel& base, Rng& rng)
{
    oracle::GaussOracleModel model = base;
    for (Index i = 0; i < model.size(); ++i) {
        model.theta0[i] = rng.uniform(-1.0, 1.0);
    }
    return model;
}

struct OracleInstance {
    oracle::GaussOracleModel model;
    GroupStructure groups;
    oracle::Posterior post;
    PosteriorSummary sampled;
};

OracleInstance oracle_instance(const oracle::GaussOracleModel& base, Index draws, std::uint64_t seed)
{
    Rng rng(seed);
    oracle::GaussOracleModel model = random_model(base, rng);
    GroupStructure groups = random_groups(model.size(), 0.3, rng);
    const Index n = 1 + static_cast<Index>(rng.index(200));
    const Eigen::MatrixXd data = oracle::gen_oracle_data(model, n, derive_seed(seed, 1));
    oracle::Posterior post = oracle::analytic_posterior(model, data);
    const PosteriorSampleSet samples = oracle::sample_posterior(post, draws, derive_seed(seed, 2));
    PosteriorSummary sampled = summarize(samples, oracle::hypotheses(model), groups);
    return {std::move(model), std::move(groups), std::move(post), std::move(sampled)};
}

bool within_mc(double estimate, double exact, Index draws)
{
    const double p = std::clamp(exact, 0.0, 1.0);
    return std::abs(estimate - exact) <= 3.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(draws)) + 0.005;
}

bool non_increasing(const std::vector<double>& trace)
{
    for (std::size_t k = 1; k < trace.size(); ++k) {
        if (trace[k] > trace[k - 1] + 1e-12) {
            return false;
        }
    }
    return true;
}

struct Tally {
    Index passed = 0;
    Index total = 0;

    void add(bool ok)
    {
        passed += ok ? 1 : 0;
        ++total;
    }
    void merge(const Tally& t)
    {
        passed += t.passed;
        total += t.total;
    }
};

} // namespace

OracleSuiteResult run_oracle_suite(const ExperimentConfig& cfg, int jobs)
{
    cfg.validate();
    const oracle::GaussOracleModel base = cfg.oracle.model();
    const Index m = base.size();
    const Index draws = cfg.oracle.draws;
    const OptimizerOptions opts = cfg.optimizer_options();

    // Sample-based v and w against the closed form; optimizer against enumeration.
    struct EquivalenceTally {
        Tally v, w, optimizer;
    };
    const std::function<EquivalenceTally(Index)> equivalence = [&](Index k) {
        const std::uint64_t seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(k));
        const OracleInstance inst = oracle_instance(base, draws, seed);
        Rng rng(derive_seed(seed, 3));
        EquivalenceTally t;
        const DecisionConfig d = random_decision(m, rng);
        for (Index i = 0; i < m; ++i) {
            const auto& p = inst.post[static_cast<std::size_t>(i)];
            t.v.add(within_mc(inst.sampled.v[i], oracle::analytic_v(p, inst.model.eps), draws));
            t.w.add(within_mc(inst.sampled.w(d, i), oracle::analytic_w(inst.post, d, i, inst.groups, inst.model.eps),
                              draws));
        }
        const double beta = rng.uniform();
        t.optimizer.add(optimize_decision(inst.sampled.w, inst.groups, beta, m, opts) ==
                        brute_force_decision(inst.sampled.w, inst.groups, beta, m));
        return t;
    };

    // Modified measures dominate, and coincide exactly for singleton groups.
    struct DominanceTally {
        Tally dominance, reduction;
    };
    const std::function<DominanceTally(Index)> dominance = [&](Index k) {
        const std::uint64_t seed = derive_seed(derive_seed(cfg.seed, 0xd0), static_cast<std::uint64_t>(k));
        const OracleInstance inst = oracle_instance(base, 500, seed);
        Rng rng(derive_seed(seed, 3));
        const DecisionConfig d = random_decision(m, rng);
        const ErrorReport grouped = error_report(d, inst.sampled);
        DominanceTally t;
        t.dominance.add(grouped.mfdr_x >= grouped.fdr_x && grouped.mfnr_x <= grouped.fnr_x);
        const PosteriorSampleSet samples = oracle::sample_posterior(inst.post, 500, derive_seed(seed, 2));
        const PosteriorSummary singleton = summarize(samples, oracle::hypotheses(inst.model), GroupStructure::singletons(m));
        const ErrorReport s = error_report(d, singleton);
        t.reduction.add(s.mfdr_x == s.fdr_x && s.mfnr_x == s.fnr_x);
        return t;
    };

    // FDR_Xn and mFDR_Xn traces over a 64-point beta grid.
    struct MonotoneTally {
        Tally fdr, mfdr, rejections;
    };
    const std::function<MonotoneTally(Index)> monotone = [&](Index k) {
        const std::uint64_t seed = derive_seed(derive_seed(cfg.seed, 0xa0), static_cast<std::uint64_t>(k));
        const OracleInstance inst = oracle_instance(base, draws, seed);
        std::vector<double> fdr, mfdr, rej;
        for (Index g = 0; g < kBetaGrid; ++g) {
            const double beta = static_cast<double>(g) / static_cast<double>(kBetaGrid - 1);
            const DecisionConfig d = optimize_decision(inst.sampled.w, inst.groups, beta, m, opts);
            const ErrorReport r = error_report(d, inst.sampled);
            fdr.push_back(r.fdr_x);
            mfdr.push_back(r.mfdr_x);
            rej.push_back(static_cast<double>(r.rejections));
        }
        MonotoneTally t;
        t.fdr.add(non_increasing(fdr));
        t.mfdr.add(non_increasing(mfdr));
        t.rejections.add(non_increasing(rej));
        return t;
    };

    // J(Theta_{i,d^t}) = J(H_{1i}) for null coordinates, by numerical minimization.
    const std::function<Tally(Index)> identity = [&](Index k) {
        const std::uint64_t seed = derive_seed(derive_seed(cfg.seed, 0x5e), static_cast<std::uint64_t>(k));
        Rng rng(seed);
        const oracle::GaussOracleModel model = random_model(base, rng);
        const GroupStructure groups = random_groups(m, 0.4, rng);
        const DecisionConfig d_true = oracle::true_decision(model);
        const double eps = model.eps;
        auto h = [&](const Eigen::VectorXd& theta) { return oracle::oracle_h(theta, model); };
        Tally t;
        for (Index i = 0; i < m; ++i) {
            if (d_true[i] == 1) {
                continue;
            }
            std::vector<kl::Constraint> region(static_cast<std::size_t>(m));
            region[static_cast<std::size_t>(i)] = kl::Constraint::outside(-eps, eps);
            const double j_h1 = kl::region_infimum(region, h, model.theta0).value;
            for (Index j : groups.others(i)) {
                region[static_cast<std::size_t>(j)] =
                    d_true[j] == 1 ? kl::Constraint::outside(-eps, eps) : kl::Constraint::interval(-eps, eps);
            }
            const double j_theta = kl::region_infimum(region, h, model.theta0).value;
            t.add(std::abs(j_theta - j_h1) <= 1e-5 &&
                  std::abs(j_h1 - oracle::coordinate_j(model, i, true)) <= 1e-5);
        }
        return t;
    };

    OracleSuiteResult result;
    std::vector<std::string> errors;
    auto failed = [&](const auto& out) {
        return std::count_if(out.begin(), out.end(), [](const auto& o) { return !o.has_value(); });
    };

    const auto eq = run_indexed<EquivalenceTally>(kEquivalenceInstances, jobs, equivalence, &errors);
    EquivalenceTally eq_total;
    for (const auto& o : eq) {
        if (o) {
            eq_total.v.merge(o->v);
            eq_total.w.merge(o->w);
            eq_total.optimizer.merge(o->optimizer);
        }
    }
    const std::string eq_detail = "instances failed: " + std::to_string(failed(eq));
    result.checks.push_back({"oracle_v_equivalence", eq_total.v.passed, eq_total.v.total, 0.99, eq_detail});
    result.checks.push_back({"oracle_w_equivalence", eq_total.w.passed, eq_total.w.total, 0.99, eq_detail});
    result.checks.push_back({"optimizer_matches_enumeration", eq_total.optimizer.passed, eq_total.optimizer.total, 1.0,
                             eq_detail});

    const auto dom = run_indexed<DominanceTally>(kDominanceTriples, jobs, dominance, &errors);
    DominanceTally dom_total;
    for (const auto& o : dom) {
        if (o) {
            dom_total.dominance.merge(o->dominance);
            dom_total.reduction.merge(o->reduction);
        }
    }
    result.checks.push_back({"modified_measure_dominance", dom_total.dominance.passed, dom_total.dominance.total, 1.0,
                             "triples failed: " + std::to_string(failed(dom))});
    result.checks.push_back({"singleton_reduction", dom_total.reduction.passed, dom_total.reduction.total, 1.0, ""});

    const auto mono = run_indexed<MonotoneTally>(kMonotoneInstances, jobs, monotone, &errors);
    MonotoneTally mono_total;
    for (const auto& o : mono) {
        if (o) {
            mono_total.fdr.merge(o->fdr);
            mono_total.mfdr.merge(o->mfdr);
            mono_total.rejections.merge(o->rejections);
        }
    }
    result.checks.push_back({"fdr_monotone_in_beta", mono_total.fdr.passed, mono_total.fdr.total, 1.0, ""});
    result.checks.push_back({"mfdr_monotone_in_beta", mono_total.mfdr.passed, mono_total.mfdr.total, 1.0, ""});
    result.checks.push_back(
        {"rejections_monotone_in_beta", mono_total.rejections.passed, mono_total.rejections.total, 1.0, ""});

    const auto ident = run_indexed<Tally>(kIdentityInstances, jobs, identity, &errors);
    Tally ident_total;
    for (const auto& o : ident) {
        if (o) {
            ident_total.merge(*o);
        }
    }
    result.checks.push_back({"null_coordinate_identity", ident_total.passed, ident_total.total, 1.0,
                             "instances failed: " + std::to_string(failed(ident))});
    return result;
}

namespace {

json config_json(const ExperimentConfig& cfg)
{
    return json::parse(dump_config(cfg));
}

int threshold_code(const ExperimentConfig& cfg, Index failed, Index attempted)
{
    if (attempted == 0) {
        return 0;
    }
    return static_cast<double>(failed) / static_cast<double>(attempted) > cfg.failure_threshold ? 2 : 0;
}

json cells_json(const std::vector<CellSummary>& cells)
{
    json arr = json::array();
    for (const auto& c : cells) {
        arr.push_back({{"n", c.n},
                       {"method", to_string(c.method)},
                       {"count", c.count},
                       {"median_jaccard", c.median_jaccard},
                       {"median_euclid", c.median_euclid},
                       {"median_ks", c.median_ks},
                       {"mean_jaccard", c.mean_jaccard},
                       {"mean_euclid", c.mean_euclid},
                       {"mean_ks", c.mean_ks},
                       {"mean_fdr_x", c.mean_fdr_x},
                       {"mean_mfdr_x", c.mean_mfdr_x},
                       {"mean_fnr_x", c.mean_fnr_x},
                       {"mean_mfnr_x", c.mean_mfnr_x}});
    }
    return arr;
}

json constants_json(const RateConstants& c)
{
    return {{"j_min", optional_json(c.j_min)}, {"h_min", optional_json(c.h_min)},
            {"h_tilde_min", optional_json(c.h_tilde_min)}};
}

} // namespace

int run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, int jobs)
{
    std::filesystem::create_directories(out_dir);
    json summary;
    summary["version"] = 1;
    summary["experiment"] = to_string(cfg.experiment);
    summary["config"] = config_json(cfg);
    int code = 0;

    switch (cfg.experiment) {
    case ExperimentKind::Compare: {
        const ComparisonResult res = run_comparison(cfg, jobs);
        write_replicates_csv(out_dir / "replicates.csv", res.records);
        json failures = json::array();
        for (const auto& f : res.failures) {
            failures.push_back({{"n", f.n}, {"replicate", f.replicate}, {"message", f.message}});
        }
        summary["replicates_attempted"] = res.attempted;
        summary["replicates_failed"] = res.failures.size();
        summary["failures"] = failures;
        summary["cells"] = cells_json(res.cells);
        summary["posterior_mode"] = "highest log-posterior retained draw polished by 50 coordinate-ascent sweeps";
        code = threshold_code(cfg, static_cast<Index>(res.failures.size()), res.attempted);
        write_text(out_dir / "summary.json", summary.dump(2) + "\n");
        break;
    }
    case ExperimentKind::Rates: {
        const RatesResult res = run_rates(cfg, jobs);
        std::string csv = "n,measure,mean_error,slope_target\n";
        for (const auto& r : res.rows) {
            csv += std::to_string(r.n) + ',' + to_string(r.measure) + ',' + fmt(r.mean_error) + ',' +
                   (r.slope_target ? fmt(*r.slope_target) : std::string("NA")) + '\n';
        }
        write_text(out_dir / "rates.csv", csv);
        json fits = json::array();
        for (const auto& f : res.fits) {
            json e = {{"measure", to_string(f.measure)}, {"slope_target", optional_json(f.slope_target)}};
            if (f.fit) {
                e["slope"] = f.fit->slope;
                e["intercept"] = f.fit->intercept;
                e["r_squared"] = f.fit->r_squared;
                e["points_used"] = f.fit->used;
                e["points_dropped"] = f.fit->dropped;
            } else {
                e["slope"] = nullptr;
                e["note"] = f.note;
            }
            fits.push_back(e);
        }
        summary["rate_average"] = cfg.rate_average;
        summary["d_true"] = res.d_true.to_string();
        summary["constants"] = constants_json(res.constants);
        summary["fits"] = fits;
        summary["replicates_failed"] = res.failed;
        code = threshold_code(cfg, res.failed, cfg.replicates * static_cast<Index>(cfg.n_grid.size()));
        write_text(out_dir / "rates.json", summary.dump(2) + "\n");
        write_text(out_dir / "summary.json", summary.dump(2) + "\n");
        break;
    }
    case ExperimentKind::AlphaControl: {
        const AlphaControlResult res = run_alpha_control(cfg, jobs);
        summary["feasible"] = res.feasible;
        summary["bounds"] = {res.bounds.first, res.bounds.second};
        summary["m_signal_groups"] = res.m_signal_groups;
        if (!res.feasible) {
            summary["infeasibility"] = res.message;
        }
        json rows = json::array();
        for (const auto& r : res.rows) {
            rows.push_back({{"n", r.n},
                            {"beta_nmd", r.beta_nmd},
                            {"mpbfdr", estimate_json(r.mpbfdr)},
                            {"beta_mpr", r.beta_mpr},
                            {"pbfdr", estimate_json(r.pbfdr)}});
        }
        summary["rows"] = rows;
        if (res.bound_check) {
            const BoundCheck& b = *res.bound_check;
            summary["beta_zero"] = {{"observed", b.observed}, {"std_err", b.std_err}, {"lower", b.lower},
                                    {"upper", b.upper},       {"within", b.within}};
        }
        write_text(out_dir / "alpha_control.json", summary.dump(2) + "\n");
        write_text(out_dir / "summary.json", summary.dump(2) + "\n");
        break;
    }
    case ExperimentKind::Equipartition: {
        const auto params = cfg.ar1.true_params();
        const auto rows = kl::equipartition_trace(cfg.thetas, cfg.n_grid, cfg.replicates, params, cfg.seed, jobs);
        std::string csv = "theta,n,h,mean_neg_log_rn,std_err,mean_residual,median_residual\n";
        for (const auto& r : rows) {
            csv += std::to_string(r.theta_index) + ',' + std::to_string(r.n) + ',' + fmt(r.h) + ',' +
                   fmt(r.mean_neg_log_rn) + ',' + fmt(r.std_err) + ',' + fmt(r.mean_residual) + ',' +
                   fmt(r.median_residual) + '\n';
        }
        write_text(out_dir / "equipartition.csv", csv);
        write_text(out_dir / "summary.json", summary.dump(2) + "\n");
        break;
    }
    case ExperimentKind::OracleSuite: {
        const OracleSuiteResult res = run_oracle_suite(cfg, jobs);
        json checks = json::array();
        for (const auto& c : res.checks) {
            checks.push_back({{"name", c.name},
                              {"passed", c.passed},
                              {"total", c.total},
                              {"required_fraction", c.required},
                              {"ok", c.ok()},
                              {"detail", c.detail}});
        }
        summary["checks"] = checks;
        summary["ok"] = res.ok();
        code = res.ok() ? 0 : 2;
        write_text(out_dir / "summary.json", summary.dump(2) + "\n");
        break;
    }
    }
    return code;
}

} // namespace nmmt::harness

#include "nmmt/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "nmmt/random.hpp"
#include "nmmt/stats.hpp"

namespace nmmt {

namespace {

void check_size(const DecisionConfig& d, const Eigen::Ref<const Eigen::VectorXd>& v)
{
    if (d.size() != v.size()) {
        throw std::invalid_argument("error measure: dimension mismatch");
    }
}

double rejected_ratio(const DecisionConfig& d, const Eigen::Ref<const Eigen::VectorXd>& p)
{
    double num = 0.0;
    Index den = 0;
    for (Index i = 0; i < d.size(); ++i) {
        if (d[i]) {
            num += 1.0 - p[i];
            ++den;
        }
    }
    return num / static_cast<double>(std::max<Index>(den, 1));
}

double accepted_ratio(const DecisionConfig& d, const Eigen::Ref<const Eigen::VectorXd>& p)
{
    double num = 0.0;
    Index den = 0;
    for (Index i = 0; i < d.size(); ++i) {
        if (!d[i]) {
            num += p[i];
            ++den;
        }
    }
    return num / static_cast<double>(std::max<Index>(den, 1));
}

} // namespace

std::string to_string(ErrorMeasure measure)
{
    switch (measure) {
    case ErrorMeasure::Fdr:
        return "fdr_x";
    case ErrorMeasure::ModifiedFdr:
        return "mfdr_x";
    case ErrorMeasure::Fnr:
        return "fnr_x";
    case ErrorMeasure::ModifiedFnr:
        return "mfnr_x";
    }
    return "?";
}

ErrorMeasure parse_error_measure(const std::string& name)
{
    if (name == "fdr_x" || name == "fdr") {
        return ErrorMeasure::Fdr;
    }
    if (name == "mfdr_x" || name == "mfdr") {
        return ErrorMeasure::ModifiedFdr;
    }
    if (name == "fnr_x" || name == "fnr") {
        return ErrorMeasure::Fnr;
    }
    if (name == "mfnr_x" || name == "mfnr") {
        return ErrorMeasure::ModifiedFnr;
    }
    throw std::invalid_argument("unknown error measure '" + name + "'");
}

double select(const ErrorReport& report, ErrorMeasure measure)
{
    switch (measure) {
    case ErrorMeasure::Fdr:
        return report.fdr_x;
    case ErrorMeasure::ModifiedFdr:
        return report.mfdr_x;
    case ErrorMeasure::Fnr:
        return report.fnr_x;
    case ErrorMeasure::ModifiedFnr:
        return report.mfnr_x;
    }
    return 0.0;
}

double posterior_fdr(const DecisionConfig& d, const Eigen::Ref<const Eigen::VectorXd>& v)
{
    check_size(d, v);
    return rejected_ratio(d, v);
}

double posterior_fnr(const DecisionConfig& d, const Eigen::Ref<const Eigen::VectorXd>& v)
{
    check_size(d, v);
    return accepted_ratio(d, v);
}

double modified_posterior_fdr(const DecisionConfig& d, const Eigen::Ref<const Eigen::VectorXd>& w_of_d)
{
    check_size(d, w_of_d);
    return rejected_ratio(d, w_of_d);
}

double modified_posterior_fnr(const DecisionConfig& d, const Eigen::Ref<const Eigen::VectorXd>& w_of_d)
{
    check_size(d, w_of_d);
    return accepted_ratio(d, w_of_d);
}

ErrorReport error_report(const DecisionConfig& d, const PosteriorSummary& posterior)
{
    const Eigen::VectorXd w = posterior.w_at(d);
    return {posterior_fdr(d, posterior.v), modified_posterior_fdr(d, w), posterior_fnr(d, posterior.v),
            modified_posterior_fnr(d, w), d.rejections()};
}

DecisionConfig nmd_decision(const PosteriorSummary& posterior, double beta, const OptimizerOptions& options)
{
    OptimizerOptions opts = options;
    if (!opts.marginals) {
        opts.marginals = posterior.v;
    }
    return optimize_decision(posterior.w, posterior.groups, beta, posterior.size(), opts);
}

CalibrationResult calibrate_beta(double target_alpha, const std::function<double(double)>& error_at,
                                 int resolution_bits)
{
    if (!(target_alpha > 0.0 && target_alpha <= 1.0)) {
        throw std::invalid_argument("calibrate_beta: target alpha must lie in (0, 1]");
    }
    if (resolution_bits < 1 || resolution_bits > 40) {
        throw std::invalid_argument("calibrate_beta: resolution out of range");
    }
    CalibrationResult out;
    std::map<double, double> seen;
    auto eval = [&](double beta) {
        auto it = seen.find(beta);
        if (it != seen.end()) {
            return it->second;
        }
        const double e = error_at(beta);
        seen.emplace(beta, e);
        return e;
    };

    const double at_zero = eval(0.0);
    if (at_zero <= target_alpha) {
        out.beta = 0.0;
        out.achieved = at_zero;
    } else {
        double lo = 0.0;
        double hi = 1.0;
        const double at_one = eval(1.0);
        for (int k = 0; k < resolution_bits; ++k) {
            const double mid = 0.5 * (lo + hi);
            if (eval(mid) <= target_alpha) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        out.beta = hi;
        out.achieved = (hi == 1.0) ? at_one : eval(hi);
    }

    constexpr double kTraceTolerance = 1e-12;
    auto trace_monotone = [&] {
        double prev = std::numeric_limits<double>::infinity();
        for (const auto& [b, e] : seen) {
            if (e > prev + kTraceTolerance) {
                return false;
            }
            prev = e;
        }
        return true;
    };
    if (!trace_monotone()) {
        // Fall back to the conservative boundary: every scanned beta at or
        // above the answer qualifies.
        out.monotone = false;
        for (int k = 0; k <= 64; ++k) {
            eval(static_cast<double>(k) / 64.0);
        }
        double boundary = 1.0;
        for (auto it = seen.rbegin(); it != seen.rend(); ++it) {
            if (it->second > target_alpha) {
                break;
            }
            boundary = it->first;
        }
        out.beta = std::max(out.beta, boundary);
        out.achieved = eval(out.beta);
    }
    out.trace.assign(seen.begin(), seen.end());
    return out;
}

CalibrationResult calibrate_beta(double target_alpha, ErrorMeasure measure, const PosteriorSummary& posterior,
                                 int resolution_bits, const OptimizerOptions& options)
{
    if (measure != ErrorMeasure::Fdr && measure != ErrorMeasure::ModifiedFdr) {
        throw std::invalid_argument("calibrate_beta: calibration targets FDR_Xn or mFDR_Xn");
    }
    auto error_at = [&](double beta) {
        const DecisionConfig d = nmd_decision(posterior, beta, options);
        if (measure == ErrorMeasure::Fdr) {
            return posterior_fdr(d, posterior.v);
        }
        return modified_posterior_fdr(d, posterior.w_at(d));
    };
    return calibrate_beta(target_alpha, error_at, resolution_bits);
}

ExpectedErrorEstimate expected_errors(const std::vector<std::optional<ReplicateOutcome>>& outcomes,
                                      Conditioning conditioning, ErrorMeasure measure)
{
    if (outcomes.empty()) {
        throw std::invalid_argument("expected_errors: at least one replicate required");
    }
    ExpectedErrorEstimate est;
    est.n_replicates = static_cast<Index>(outcomes.size());
    std::vector<double> values;
    for (const auto& o : outcomes) {
        if (!o) {
            ++est.n_failed;
            continue;
        }
        const bool excluded = (conditioning == Conditioning::ExcludeAllAccept && o->decision.none()) ||
                              (conditioning == Conditioning::ExcludeAllReject && o->decision.all());
        if (excluded) {
            ++est.n_excluded;
            continue;
        }
        values.push_back(select(o->report, measure));
    }
    est.n_qualifying = static_cast<Index>(values.size());
    if (values.empty()) {
        throw ConditioningNeverOccurred("expected_errors: conditioning event never occurred in " +
                                        std::to_string(est.n_replicates) + " replicates");
    }
    est.value = mean(values);
    est.std_err = std_error(values);
    return est;
}

ExpectedErrorEstimate expected_errors(const std::function<ReplicateOutcome(std::uint64_t)>& runner, Index replicates,
                                      Conditioning conditioning, ErrorMeasure measure, std::uint64_t master_seed,
                                      int jobs)
{
    if (replicates < 1) {
        throw std::invalid_argument("expected_errors: at least one replicate required");
    }
    const std::function<ReplicateOutcome(Index)> task = [&](Index r) {
        return runner(derive_seed(master_seed, static_cast<std::uint64_t>(r)));
    };
    return expected_errors(run_indexed(replicates, jobs, task), conditioning, measure);
}

RateFit rate_fit(const std::vector<std::pair<double, double>>& points)
{
    RateFit fit;
    std::vector<double> xs;
    std::vector<double> ys;
    for (const auto& [n, e] : points) {
        if (e > 0.0 && std::isfinite(e)) {
            xs.push_back(n);
            ys.push_back(std::log(e));
        } else {
            ++fit.dropped;
        }
    }
    fit.used = static_cast<Index>(xs.size());
    if (xs.size() < 3) {
        throw InsufficientData("rate_fit: need at least 3 positive error values, got " + std::to_string(xs.size()));
    }
    const double mx = mean(xs);
    const double my = mean(ys);
    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        sxx += (xs[k] - mx) * (xs[k] - mx);
        sxy += (xs[k] - mx) * (ys[k] - my);
        syy += (ys[k] - my) * (ys[k] - my);
    }
    if (sxx == 0.0) {
        throw InsufficientData("rate_fit: all sample sizes identical");
    }
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r_squared = (syy == 0.0) ? 1.0 : (sxy * sxy) / (sxx * syy);
    return fit;
}

Index check_disjoint_null_groups(const GroupStructure& groups, const DecisionConfig& d_true)
{
    if (groups.size() != d_true.size()) {
        throw std::invalid_argument("check_disjoint_null_groups: dimension mismatch");
    }
    std::vector<Index> null_groups;
    std::vector<Index> signal_groups;
    for (Index i = 0; i < groups.size(); ++i) {
        const auto& g = groups.group(i);
        const bool has_false_null = std::any_of(g.begin(), g.end(), [&](Index j) { return d_true[j]; });
        (has_false_null ? signal_groups : null_groups).push_back(i);
    }
    for (Index a : null_groups) {
        for (Index b : signal_groups) {
            for (Index j : groups.group(a)) {
                if (groups.contains(b, j)) {
                    throw std::invalid_argument("group setup violates the disjointness precondition: G_" +
                                                std::to_string(a) + " overlaps G_" + std::to_string(b));
                }
            }
        }
    }
    if (null_groups.empty()) {
        throw std::invalid_argument("group setup has no all-null groups");
    }
    return static_cast<Index>(signal_groups.size());
}

std::pair<double, double> max_mpbfdr_bounds(const GroupStructure& groups, const DecisionConfig& d_true)
{
    const Index m1 = check_disjoint_null_groups(groups, d_true);
    const auto true_rej = static_cast<double>(d_true.rejections());
    const auto nulls = static_cast<double>(groups.size() - m1);
    return {1.0 / (true_rej + 1.0), nulls / (true_rej + nulls)};
}

BoundCheck beta_zero_bound_check(const GroupStructure& groups, const DecisionConfig& d_true,
                                 const std::function<PosteriorSummary(std::uint64_t)>& posterior_for_seed,
                                 Index replicates, std::uint64_t master_seed, int jobs)
{
    BoundCheck out;
    out.m_signal_groups = check_disjoint_null_groups(groups, d_true);
    std::tie(out.lower, out.upper) = max_mpbfdr_bounds(groups, d_true);
    auto runner = [&](std::uint64_t seed) {
        const PosteriorSummary post = posterior_for_seed(seed);
        const DecisionConfig d = nmd_decision(post, 0.0);
        return ReplicateOutcome{d, error_report(d, post)};
    };
    const auto est =
        expected_errors(runner, replicates, Conditioning::ExcludeAllAccept, ErrorMeasure::ModifiedFdr, master_seed, jobs);
    out.observed = est.value;
    out.std_err = est.std_err;
    out.within = out.observed >= out.lower - 2.0 * out.std_err && out.observed <= out.upper + 2.0 * out.std_err;
    return out;
}

} // namespace nmmt

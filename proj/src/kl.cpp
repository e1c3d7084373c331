#include "nmmt/kl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "nmmt/detail/pool.hpp"
#include "nmmt/nelder_mead.hpp"
#include "nmmt/random.hpp"
#include "nmmt/stats.hpp"

namespace nmmt::kl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kMaxBoxes = 4096;
constexpr std::size_t kMaxGridPoints = 20000;

// One side of every constraint: a box with possibly infinite bounds.
struct Box {
    Eigen::VectorXd lo;
    Eigen::VectorXd hi;
};

enum class Transform { Identity, Bounded, Lower, Upper, Exp, Logistic };

struct BoxMap {
    std::vector<Transform> kind;
    Eigen::VectorXd lo;
    Eigen::VectorXd hi;

    explicit BoxMap(const Box& box, Index sigma_coord) : kind(static_cast<std::size_t>(box.lo.size())), lo(box.lo), hi(box.hi)
    {
        for (Index k = 0; k < lo.size(); ++k) {
            auto& t = kind[static_cast<std::size_t>(k)];
            const bool has_lo = std::isfinite(lo[k]);
            const bool has_hi = std::isfinite(hi[k]);
            if (k == sigma_coord && lo[k] <= 0.0) {
                lo[k] = 0.0;
                t = has_hi ? Transform::Logistic : Transform::Exp;
            } else if (has_lo && has_hi) {
                t = lo[k] == hi[k] ? Transform::Identity : Transform::Bounded;
            } else if (has_lo) {
                t = Transform::Lower;
            } else if (has_hi) {
                t = Transform::Upper;
            } else {
                t = Transform::Identity;
            }
        }
    }

    double to_x(Index k, double u) const
    {
        switch (kind[static_cast<std::size_t>(k)]) {
        case Transform::Identity:
            return lo[k] == hi[k] ? lo[k] : u;
        case Transform::Bounded:
            return lo[k] + (hi[k] - lo[k]) * 0.5 * (std::sin(u) + 1.0);
        case Transform::Lower:
            return lo[k] + u * u;
        case Transform::Upper:
            return hi[k] - u * u;
        case Transform::Exp:
            return std::exp(u);
        case Transform::Logistic:
            return hi[k] / (1.0 + std::exp(-u));
        }
        return u;
    }

    double to_u(Index k, double x) const
    {
        switch (kind[static_cast<std::size_t>(k)]) {
        case Transform::Identity:
            return x;
        case Transform::Bounded:
            return std::asin(std::clamp(2.0 * (x - lo[k]) / (hi[k] - lo[k]) - 1.0, -1.0, 1.0));
        case Transform::Lower:
            return std::sqrt(std::max(0.0, x - lo[k]));
        case Transform::Upper:
            return std::sqrt(std::max(0.0, hi[k] - x));
        case Transform::Exp:
            return std::log(std::max(x, 1e-300));
        case Transform::Logistic: {
            const double p = std::clamp(x / hi[k], 1e-12, 1.0 - 1e-12);
            return std::log(p / (1.0 - p));
        }
        }
        return x;
    }

    Eigen::VectorXd x_of(const Eigen::VectorXd& u) const
    {
        Eigen::VectorXd x(u.size());
        for (Index k = 0; k < u.size(); ++k) {
            x[k] = to_x(k, u[k]);
        }
        return x;
    }

    Eigen::VectorXd u_of(const Eigen::VectorXd& x) const
    {
        Eigen::VectorXd u(x.size());
        for (Index k = 0; k < x.size(); ++k) {
            u[k] = to_u(k, x[k]);
        }
        return u;
    }
};

// x = [rho, beta, sigma].
double h_at(const Eigen::VectorXd& x, const KlEnv& env)
{
    const Index m = env.m();
    const double sigma = x[m + 1];
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        return kInf;
    }
    const KlPoint<double> p{x[0], x.segment(1, m), sigma * sigma};
    return h_theta(p, env);
}

Eigen::VectorXd truth_point(const KlEnv& env)
{
    const Index m = env.m();
    Eigen::VectorXd x(m + 2);
    x[0] = env.rho0;
    x.segment(1, m) = env.beta0;
    x[m + 1] = std::sqrt(env.sigma0_sq);
    return x;
}

using Objective = std::function<double(const Eigen::VectorXd&)>;

std::vector<Box> split_boxes(const std::vector<Constraint>& coords, Index sig)
{
    const auto dim = static_cast<Index>(coords.size());
    std::vector<Index> outside;
    Box base{Eigen::VectorXd::Constant(dim, -kInf), Eigen::VectorXd::Constant(dim, kInf)};
    for (Index k = 0; k < dim; ++k) {
        const Constraint& c = coords[static_cast<std::size_t>(k)];
        if (c.kind == Constraint::Kind::Interval) {
            base.lo[k] = c.lo;
            base.hi[k] = c.hi;
        } else if (c.kind == Constraint::Kind::Outside) {
            outside.push_back(k);
        }
    }
    if (outside.size() >= 63 || (std::size_t{1} << outside.size()) > kMaxBoxes) {
        throw std::invalid_argument("j_region: too many interval-complement constraints");
    }
    std::vector<Box> boxes;
    const std::size_t count = std::size_t{1} << outside.size();
    for (std::size_t mask = 0; mask < count; ++mask) {
        Box b = base;
        for (std::size_t j = 0; j < outside.size(); ++j) {
            const Index k = outside[j];
            const Constraint& c = coords[static_cast<std::size_t>(k)];
            if ((mask >> j) & 1U) {
                b.lo[k] = c.hi;
            } else {
                b.hi[k] = c.lo;
            }
        }
        if (sig >= 0 && b.hi[sig] <= 0.0) {
            continue;
        }
        boxes.push_back(std::move(b));
    }
    if (boxes.empty()) {
        throw std::invalid_argument("j_region: empty feasible region");
    }
    return boxes;
}

Eigen::VectorXd project(const Eigen::VectorXd& x, const Box& box, Index sig)
{
    Eigen::VectorXd p = x.cwiseMax(box.lo).cwiseMin(box.hi);
    if (sig >= 0 && p[sig] <= 0.0) {
        p[sig] = std::isfinite(box.hi[sig]) ? 0.5 * box.hi[sig] : x[sig];
    }
    return p;
}

Eigen::VectorXd random_point(const Box& box, const Eigen::VectorXd& center, Index sig, Rng& rng)
{
    Eigen::VectorXd p(center.size());
    for (Index k = 0; k < center.size(); ++k) {
        const bool has_lo = std::isfinite(box.lo[k]);
        const bool has_hi = std::isfinite(box.hi[k]);
        if (has_lo && has_hi) {
            p[k] = rng.uniform(box.lo[k], box.hi[k]);
        } else if (k == sig) {
            p[k] = std::max(center[k] * std::exp(0.5 * rng.normal()), has_lo ? box.lo[k] : 0.0);
        } else if (has_lo) {
            p[k] = box.lo[k] + std::abs(rng.normal()) * std::max(1.0, std::abs(center[k] - box.lo[k]));
        } else if (has_hi) {
            p[k] = box.hi[k] - std::abs(rng.normal()) * std::max(1.0, std::abs(center[k] - box.hi[k]));
        } else {
            p[k] = center[k] + rng.normal();
        }
    }
    return project(p, box, sig);
}

// 21 values covering a constrained coordinate's side within the box.
std::vector<double> grid_axis(double lo, double hi, double center, int points)
{
    if (std::isfinite(lo) && std::isfinite(hi)) {
        std::vector<double> g(static_cast<std::size_t>(points));
        for (int j = 0; j < points; ++j) {
            g[static_cast<std::size_t>(j)] = points == 1 ? lo : lo + (hi - lo) * j / (points - 1);
        }
        return g;
    }
    const double edge = std::isfinite(lo) ? lo : hi;
    const double dir = std::isfinite(lo) ? 1.0 : -1.0;
    const double span = std::max(1.0, 3.0 * std::abs(center - edge));
    std::vector<double> g(static_cast<std::size_t>(points));
    for (int j = 0; j < points; ++j) {
        g[static_cast<std::size_t>(j)] = edge + dir * span * j / std::max(1, points - 1);
    }
    return g;
}

struct GridResult {
    double value = kInf;
    Eigen::VectorXd point;
};

GridResult grid_search(const Box& box, Index sig, const std::vector<Index>& constrained, const Eigen::VectorXd& center,
                       const Objective& f, int points)
{
    GridResult best;
    const Eigen::VectorXd base = project(center, box, sig);
    if (constrained.empty()) {
        best.value = f(base);
        best.point = base;
        return best;
    }
    std::vector<std::vector<double>> axes;
    for (Index k : constrained) {
        axes.push_back(grid_axis(box.lo[k], box.hi[k], center[k], points));
    }
    auto consider = [&](const Eigen::VectorXd& p) {
        const double h = f(p);
        if (h < best.value) {
            best.value = h;
            best.point = p;
        }
    };
    double total = 1.0;
    for (const auto& a : axes) {
        total *= static_cast<double>(a.size());
    }
    if (total <= static_cast<double>(kMaxGridPoints)) {
        std::vector<std::size_t> idx(axes.size(), 0);
        while (true) {
            Eigen::VectorXd p = base;
            for (std::size_t j = 0; j < axes.size(); ++j) {
                p[constrained[j]] = axes[j][idx[j]];
            }
            consider(p);
            std::size_t j = 0;
            while (j < idx.size() && ++idx[j] == axes[j].size()) {
                idx[j] = 0;
                ++j;
            }
            if (j == idx.size()) {
                break;
            }
        }
    } else {
        // Axis lines through the projected truth.
        for (std::size_t j = 0; j < axes.size(); ++j) {
            for (double value : axes[j]) {
                Eigen::VectorXd p = base;
                p[constrained[j]] = value;
                consider(p);
            }
        }
    }
    return best;
}

struct Candidate {
    double value = kInf;
    Eigen::VectorXd x;
    bool converged = false;
};

Candidate polish(const BoxMap& map, const Eigen::VectorXd& start, const Objective& f)
{
    auto objective = [&](const Eigen::VectorXd& u) { return f(map.x_of(u)); };
    NelderMeadOptions opts;
    opts.f_tol = 1e-14;
    opts.x_tol = 1e-10;
    Eigen::VectorXd u = map.u_of(start);
    Candidate best;
    // Restart from the previous optimum until the value stops moving.
    for (int round = 0; round < 8; ++round) {
        const NelderMeadResult r = nelder_mead(objective, u, opts);
        const double gain = best.value - r.f;
        if (r.f < best.value) {
            best.value = r.f;
            best.x = map.x_of(r.x);
            u = r.x;
        }
        best.converged = r.converged;
        if (r.converged && round > 0 && !(gain > 1e-12)) {
            break;
        }
    }
    return best;
}

RegionMinimum minimize_generic(const std::vector<Constraint>& coords, const Objective& f, const Eigen::VectorXd& center,
                               Index sig, const JRegionOptions& options)
{
    if (static_cast<Index>(coords.size()) != center.size()) {
        throw std::invalid_argument("region_infimum: constraint count does not match the dimension");
    }
    std::vector<Index> constrained;
    for (Index k = 0; k < center.size(); ++k) {
        if (coords[static_cast<std::size_t>(k)].kind != Constraint::Kind::Free) {
            constrained.push_back(k);
        }
    }

    Candidate best;
    bool any_converged = false;
    double grid_min = kInf;
    Rng rng(options.seed);
    for (const Box& box : split_boxes(coords, sig)) {
        const BoxMap map(box, sig);
        const GridResult grid = grid_search(box, sig, constrained, center, f, options.grid_points);
        grid_min = std::min(grid_min, grid.value);

        std::vector<Eigen::VectorXd> starts{project(center, box, sig)};
        if (grid.point.size() > 0) {
            starts.push_back(grid.point);
        }
        for (int s = 0; s < options.random_starts; ++s) {
            starts.push_back(random_point(box, center, sig, rng));
        }
        for (const auto& start : starts) {
            const Candidate c = polish(map, start, f);
            any_converged = any_converged || c.converged;
            if (c.value < best.value) {
                best = c;
            }
        }
    }

    RegionMinimum out;
    out.h_value = best.value;
    out.argmin = best.x;
    out.grid_min = grid_min;
    out.value = best.value;
    if (!any_converged || !std::isfinite(best.value)) {
        throw MinimizationError("region_infimum: no start converged", out);
    }
    if (best.value > grid_min + 1e-8) {
        throw MinimizationError("region_infimum: simplex minimum exceeds the grid minimum", out);
    }
    return out;
}

RegionMinimum minimize_region(const RegionSpec& region, const KlEnv& env, const JRegionOptions& options)
{
    region.validate();
    if (region.m() != env.m()) {
        throw std::invalid_argument("j_region: region dimension does not match the environment");
    }
    const Eigen::VectorXd center = truth_point(env);
    return minimize_generic(region.coords, [&](const Eigen::VectorXd& x) { return h_at(x, env); }, center,
                            center.size() - 1, options);
}

} // namespace

void KlEnv::validate() const
{
    if (!(std::abs(rho0) < 1.0)) {
        throw std::invalid_argument("KlEnv: |rho0| must be < 1");
    }
    if (!(sigma0_sq > 0.0)) {
        throw std::invalid_argument("KlEnv: sigma0_sq must be positive");
    }
    if (sigma_z.rows() != m() || sigma_z.cols() != m()) {
        throw std::invalid_argument("KlEnv: Sigma_z must be m x m");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(sigma_z);
    if (llt.info() != Eigen::Success) {
        throw std::invalid_argument("KlEnv: Sigma_z must be positive definite");
    }
}

KlEnv KlEnv::from(const ar1::TrueParams& params)
{
    params.validate();
    KlEnv env{params.rho0, params.beta0, params.sigma0_sq, params.lambda};
    env.validate();
    return env;
}

double h_theta(double rho, const Eigen::Ref<const Eigen::VectorXd>& beta, double sigma_sq, const KlEnv& env)
{
    return h_theta(KlPoint<double>{rho, beta, sigma_sq}, env);
}

RegionSpec RegionSpec::unconstrained(Index m)
{
    return RegionSpec{std::vector<Constraint>(static_cast<std::size_t>(m + 2))};
}

void RegionSpec::validate() const
{
    if (coords.size() < 2) {
        throw std::invalid_argument("RegionSpec: needs rho and sigma coordinates");
    }
    for (const Constraint& c : coords) {
        if (c.kind != Constraint::Kind::Free && !(c.lo <= c.hi)) {
            throw std::invalid_argument("RegionSpec: constraint with lo > hi");
        }
    }
    const Constraint& s = coords.back();
    if (s.kind == Constraint::Kind::Interval && !(s.hi > 0.0)) {
        throw std::invalid_argument("RegionSpec: sigma constraint excludes all positive values");
    }
}

RegionMinimum region_infimum(const std::vector<Constraint>& coords,
                             const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& center,
                             const JRegionOptions& options)
{
    for (const Constraint& c : coords) {
        if (c.kind != Constraint::Kind::Free && !(c.lo <= c.hi)) {
            throw std::invalid_argument("region_infimum: constraint with lo > hi");
        }
    }
    return minimize_generic(coords, f, center, -1, options);
}

double model_h_infimum(const KlEnv& env, const JRegionOptions& options)
{
    env.validate();
    JRegionOptions opts = options;
    opts.h_model.reset();
    return minimize_region(RegionSpec::unconstrained(env.m()), env, opts).h_value;
}

double j_theta(double rho, const Eigen::Ref<const Eigen::VectorXd>& beta, double sigma_sq, const KlEnv& env,
               const JRegionOptions& options)
{
    const double h_model = options.h_model ? *options.h_model : model_h_infimum(env, options);
    return h_theta(rho, beta, sigma_sq, env) - h_model;
}

RegionMinimum j_region(const RegionSpec& region, const KlEnv& env, const JRegionOptions& options)
{
    env.validate();
    const double h_model = options.h_model ? *options.h_model : model_h_infimum(env, options);
    RegionMinimum r = minimize_region(region, env, options);
    r.value = std::max(0.0, r.h_value - h_model);
    return r;
}

DecisionConfig true_decision(const KlEnv& env, double null_lo, double null_hi)
{
    DecisionConfig d(env.m() + 1, 0);
    if (std::abs(env.rho0) >= 1.0) {
        d.set(0, 1);
    }
    for (Index i = 0; i < env.m(); ++i) {
        if (env.beta0[i] < null_lo || env.beta0[i] > null_hi) {
            d.set(i + 1, 1);
        }
    }
    return d;
}

namespace {

Constraint hypothesis_constraint(Index hypothesis, bool alternative, double null_lo, double null_hi)
{
    if (hypothesis == 0) {
        return alternative ? Constraint::outside(-1.0, 1.0) : Constraint::interval(-1.0, 1.0);
    }
    return alternative ? Constraint::outside(null_lo, null_hi) : Constraint::interval(null_lo, null_hi);
}

void check_hypothesis(const KlEnv& env, Index hypothesis)
{
    if (hypothesis < 0 || hypothesis > env.m()) {
        throw std::out_of_range("hypothesis index out of range");
    }
}

} // namespace

RegionSpec hypothesis_region(const KlEnv& env, Index hypothesis, bool alternative, double null_lo, double null_hi)
{
    check_hypothesis(env, hypothesis);
    RegionSpec r = RegionSpec::unconstrained(env.m());
    r.coords[static_cast<std::size_t>(hypothesis)] = hypothesis_constraint(hypothesis, alternative, null_lo, null_hi);
    return r;
}

double j_hypothesis(const KlEnv& env, Index hypothesis, bool alternative, double null_lo, double null_hi,
                    const JRegionOptions& options)
{
    return j_region(hypothesis_region(env, hypothesis, alternative, null_lo, null_hi), env, options).value;
}

double j_decision_region(const KlEnv& env, const DecisionConfig& d, Index i, const GroupStructure& groups,
                         double null_lo, double null_hi, const JRegionOptions& options)
{
    check_hypothesis(env, i);
    if (d.size() != env.m() + 1 || groups.size() != env.m() + 1) {
        throw std::invalid_argument("j_decision_region: dimension mismatch");
    }
    RegionSpec r = RegionSpec::unconstrained(env.m());
    r.coords[static_cast<std::size_t>(i)] = hypothesis_constraint(i, true, null_lo, null_hi);
    for (Index j : groups.others(i)) {
        r.coords[static_cast<std::size_t>(j)] = hypothesis_constraint(j, d[j] == 1, null_lo, null_hi);
    }
    return j_region(r, env, options).value;
}

RateConstants rate_constants(const DecisionConfig& d_true, const GroupStructure& groups, const KlEnv& env,
                             double null_lo, double null_hi, const JRegionOptions& options)
{
    env.validate();
    const Index size = env.m() + 1;
    if (d_true.size() != size || groups.size() != size) {
        throw std::invalid_argument("rate_constants: dimension mismatch");
    }
    JRegionOptions opts = options;
    if (!opts.h_model) {
        opts.h_model = model_h_infimum(env, options);
    }
    // Single-coordinate wrong-region values, shared by all three constants.
    std::vector<std::optional<double>> wrong(static_cast<std::size_t>(size));
    auto wrong_j = [&](Index k) {
        auto& slot = wrong[static_cast<std::size_t>(k)];
        if (!slot) {
            slot = j_hypothesis(env, k, d_true[k] == 0, null_lo, null_hi, opts);
        }
        return *slot;
    };
    RateConstants rc;
    auto take_min = [](std::optional<double>& acc, double v) { acc = acc ? std::min(*acc, v) : v; };
    for (Index i = 0; i < size; ++i) {
        if (d_true[i] == 1) {
            take_min(rc.h_min, wrong_j(i));
            for (Index k : groups.group(i)) {
                take_min(rc.j_min, wrong_j(k));
            }
        } else {
            take_min(rc.h_tilde_min, wrong_j(i));
        }
    }
    return rc;
}

std::vector<EquipartitionRow> equipartition_trace(const std::vector<ar1::Theta>& thetas,
                                                  const std::vector<Index>& n_grid, Index replicates,
                                                  const ar1::TrueParams& params, std::uint64_t seed, int jobs)
{
    params.validate();
    if (replicates < 1) {
        throw std::invalid_argument("equipartition_trace: replicates must be >= 1");
    }
    const KlEnv env = KlEnv::from(params);
    std::vector<double> h(thetas.size());
    for (std::size_t t = 0; t < thetas.size(); ++t) {
        const ar1::Theta& th = thetas[t];
        if (!(th.sigma_sq > 0.0)) {
            throw std::invalid_argument("equipartition_trace: sigma_sq must be positive");
        }
        if (th.intercept != params.intercept0) {
            throw std::invalid_argument("equipartition_trace: theta intercept must equal the true intercept");
        }
        h[t] = h_theta(th.rho, th.beta, th.sigma_sq, env);
    }
    std::vector<EquipartitionRow> rows;
    for (std::size_t g = 0; g < n_grid.size(); ++g) {
        const Index n = n_grid[g];
        if (n < 1) {
            throw std::invalid_argument("equipartition_trace: n must be >= 1");
        }
        const std::function<std::vector<double>(Index)> task = [&](Index r) {
            const std::uint64_t task_seed = derive_seed(seed, static_cast<std::uint64_t>(g) * 1000003ULL +
                                                                    static_cast<std::uint64_t>(r));
            const Eigen::MatrixXd z = ar1::gen_covariates(n, params.lambda, derive_seed(task_seed, 0));
            const Eigen::VectorXd x = ar1::gen_data(z, params, derive_seed(task_seed, 1));
            std::vector<double> out(thetas.size());
            for (std::size_t t = 0; t < thetas.size(); ++t) {
                out[t] = ar1::log_rn(thetas[t], x, z, params) / static_cast<double>(n);
            }
            return out;
        };
        std::vector<std::string> errors;
        const auto results = run_indexed<std::vector<double>>(replicates, jobs, task, &errors);
        for (std::size_t r = 0; r < results.size(); ++r) {
            if (!results[r]) {
                throw std::runtime_error("equipartition_trace: replicate failed: " + errors[r]);
            }
        }
        for (std::size_t t = 0; t < thetas.size(); ++t) {
            std::vector<double> neg(results.size());
            std::vector<double> resid(results.size());
            for (std::size_t r = 0; r < results.size(); ++r) {
                const double per_obs = (*results[r])[t];
                neg[r] = -per_obs;
                resid[r] = std::abs(per_obs + h[t]);
            }
            EquipartitionRow row;
            row.theta_index = static_cast<Index>(t);
            row.n = n;
            row.h = h[t];
            row.mean_neg_log_rn = mean(neg);
            row.std_err = std_error(neg);
            row.mean_residual = mean(resid);
            row.median_residual = median(resid);
            rows.push_back(row);
        }
    }
    return rows;
}

} // namespace nmmt::kl

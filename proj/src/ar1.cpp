#include "nmmt/ar1.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "nmmt/random.hpp"
#include "nmmt/stats.hpp"

namespace nmmt::ar1 {

void TrueParams::validate() const
{
    if (!(std::abs(rho0) < 1.0)) {
        throw std::invalid_argument("TrueParams: |rho0| must be < 1");
    }
    if (!(sigma0_sq > 0.0)) {
        throw std::invalid_argument("TrueParams: sigma0_sq must be positive");
    }
    if (lambda.rows() != m() || lambda.cols() != m()) {
        throw std::invalid_argument("TrueParams: lambda must be m x m");
    }
    if (!lambda.isApprox(lambda.transpose())) {
        throw std::invalid_argument("TrueParams: lambda must be symmetric");
    }
    if (m() > 0 && lambda.llt().info() != Eigen::Success) {
        throw std::invalid_argument("TrueParams: lambda must be positive definite");
    }
}

std::pair<double, double> inverse_gamma_from_mode_variance(double mode, double variance)
{
    if (!(mode > 0.0 && variance > 0.0)) {
        throw std::invalid_argument("inverse_gamma_from_mode_variance: mode and variance must be positive");
    }
    // mode = b/(a+1), variance = b^2/((a-1)^2 (a-2)); eliminate b and solve in a > 2.
    auto excess = [&](double a) {
        const double b = mode * (a + 1.0);
        return b * b / ((a - 1.0) * (a - 1.0) * (a - 2.0)) - variance;
    };
    double lo = 2.0 + 1e-12;
    double hi = 3.0;
    while (excess(hi) > 0.0) {
        hi *= 2.0;
    }
    for (int k = 0; k < 200; ++k) {
        const double mid = 0.5 * (lo + hi);
        (excess(mid) > 0.0 ? lo : hi) = mid;
    }
    const double a = 0.5 * (lo + hi);
    return {a, mode * (a + 1.0)};
}

SpikeSlabPrior SpikeSlabPrior::defaults()
{
    SpikeSlabPrior p;
    std::tie(p.a2, p.b2) = inverse_gamma_from_mode_variance(1.0, 100.0);
    return p;
}

void SpikeSlabPrior::validate() const
{
    if (!(tau > 0.0)) {
        throw std::invalid_argument("SpikeSlabPrior: tau must be positive");
    }
    if (!(v_spike > 0.0 && v_spike < 1.0)) {
        throw std::invalid_argument("SpikeSlabPrior: v must lie in (0, 1)");
    }
    if (!(a1 > 0.0 && b1 > 0.0 && a2 > 0.0 && b2 > 0.0 && rho_sd > 0.0)) {
        throw std::invalid_argument("SpikeSlabPrior: a1, b1, a2, b2, rho_sd must be positive");
    }
}

void McmcSettings::validate() const
{
    if (!(iters > burnin && burnin >= 0 && thin >= 1)) {
        throw std::invalid_argument("McmcSettings: need iters > burnin >= 0 and thin >= 1");
    }
}

Eigen::MatrixXd gen_covariates(Index n, const Eigen::MatrixXd& lambda, std::uint64_t seed)
{
    const Eigen::LLT<Eigen::MatrixXd> llt(lambda);
    if (llt.info() != Eigen::Success || !lambda.isApprox(lambda.transpose())) {
        throw std::invalid_argument("gen_covariates: lambda is not positive definite");
    }
    Rng rng(seed);
    Eigen::MatrixXd e(n, lambda.rows());
    for (Index t = 0; t < n; ++t) {
        for (Index j = 0; j < lambda.rows(); ++j) {
            e(t, j) = rng.normal();
        }
    }
    return e * llt.matrixL().transpose();
}

Eigen::VectorXd gen_data(const Eigen::Ref<const Eigen::MatrixXd>& z, const TrueParams& params, std::uint64_t seed)
{
    if (!(std::abs(params.rho0) < 1.0)) {
        throw std::invalid_argument("gen_data: |rho0| must be < 1");
    }
    if (z.cols() != params.m()) {
        throw std::invalid_argument("gen_data: covariate columns do not match beta0");
    }
    Rng rng(seed);
    const double sd = std::sqrt(params.sigma0_sq);
    const Eigen::VectorXd mean = z * params.beta0;
    Eigen::VectorXd x(z.rows());
    double prev = 0.0;
    for (Index t = 0; t < z.rows(); ++t) {
        x[t] = params.rho0 * prev + params.intercept0 + mean[t] + sd * rng.normal();
        prev = x[t];
    }
    return x;
}

namespace {

double log_inverse_gamma(double x, double shape, double scale)
{
    return shape * std::log(scale) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - scale / x;
}

// Gibbs sampler over the regression x_t = rho x_{t-1} + w_t' coef + eps_t.
// Column 0 of the design is the lagged series, columns 1..m the covariates,
// column m+1 the intercept. All conditionals use the Gram matrix of
// [x_lag, z, 1] so one sweep costs O(q^3) regardless of n.
class Sampler {
public:
    Sampler(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::MatrixXd>& z,
            const SpikeSlabPrior& prior, bool intercept, std::vector<bool> active, bool spike_slab)
        : prior_(prior), m_(z.cols()), n_(x.size()), intercept_(intercept), spike_slab_(spike_slab),
          active_(std::move(active))
    {
        if (z.rows() != x.size()) {
            throw std::invalid_argument("posterior_sample: z rows must match the series length");
        }
        if (x.size() < 2) {
            throw std::invalid_argument("posterior_sample: series too short");
        }
        const Index q = m_ + 2;
        Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n_, q);
        w(0, 0) = 0.0;
        w.col(0).tail(n_ - 1) = x.head(n_ - 1);
        w.middleCols(1, m_) = z;
        if (intercept_) {
            w.col(m_ + 1).setOnes();
        }
        gram_ = w.transpose() * w;
        cross_ = w.transpose() * x;
        yy_ = x.squaredNorm();
        for (Index i = 0; i < m_; ++i) {
            if (active_[static_cast<std::size_t>(i)]) {
                block_.push_back(1 + i);
            }
        }
        if (intercept_) {
            block_.push_back(m_ + 1);
        }

        state_.beta = Eigen::VectorXd::Zero(m_);
        state_.gamma.assign(static_cast<std::size_t>(m_), spike_slab_ ? 1 : 0);
        state_.p = 0.5;
        state_.rho = 0.0;
        state_.sigma_sq = std::max(yy_ / static_cast<double>(n_), 1e-6);
        for (Index i = 0; i < m_; ++i) {
            if (active_[static_cast<std::size_t>(i)] && !spike_slab_) {
                state_.gamma[static_cast<std::size_t>(i)] = 1;
            }
        }
    }

    const Draw& state() const { return state_; }

    void sweep(Rng& rng)
    {
        update_coefficients(rng);
        update_rho(rng);
        update_sigma(rng);
        if (spike_slab_) {
            update_gamma(rng);
            update_p(rng);
        }
    }

    Eigen::VectorXd coefficients(const Draw& d) const
    {
        Eigen::VectorXd c = Eigen::VectorXd::Zero(m_ + 2);
        c[0] = d.rho;
        c.segment(1, m_) = d.beta;
        c[m_ + 1] = intercept_ ? d.intercept : 0.0;
        return c;
    }

    double ssr(const Draw& d) const
    {
        const Eigen::VectorXd c = coefficients(d);
        return std::max(yy_ - 2.0 * c.dot(cross_) + c.dot(gram_ * c), 1e-300);
    }

    double coefficient_prior_precision(Index col, const Draw& d) const
    {
        if (col == m_ + 1) {
            return 0.0;
        }
        const auto i = static_cast<std::size_t>(col - 1);
        const double var = prior_.tau * prior_.tau * ((!spike_slab_ || d.gamma[i]) ? 1.0 : prior_.v_spike);
        return 1.0 / var;
    }

    double log_posterior(const Draw& d) const
    {
        double lp = -0.5 * static_cast<double>(n_) * std::log(2.0 * std::numbers::pi * d.sigma_sq) -
                    ssr(d) / (2.0 * d.sigma_sq);
        for (Index col : block_) {
            if (col == m_ + 1) {
                continue;
            }
            lp += normal_log_pdf(d.beta[col - 1], 0.0, 1.0 / coefficient_prior_precision(col, d));
        }
        lp += normal_log_pdf(d.rho, 0.0, prior_.rho_sd * prior_.rho_sd);
        lp += log_inverse_gamma(d.sigma_sq, prior_.a2, prior_.b2);
        return lp;
    }

    /// Coordinate ascent on (rho, block) at fixed sigma^2; the conditional
    /// log posterior is Gaussian so each coordinate has a closed-form optimum.
    void polish(Draw& d, int sweeps) const
    {
        std::vector<Index> cols{0};
        cols.insert(cols.end(), block_.begin(), block_.end());
        Eigen::VectorXd c = coefficients(d);
        for (int s = 0; s < sweeps; ++s) {
            for (Index col : cols) {
                const double prior_prec =
                    (col == 0) ? 1.0 / (prior_.rho_sd * prior_.rho_sd) : coefficient_prior_precision(col, d);
                const double diag = gram_(col, col) / d.sigma_sq + prior_prec;
                const double off = (gram_.row(col).dot(c) - gram_(col, col) * c[col]) / d.sigma_sq;
                c[col] = (cross_[col] / d.sigma_sq - off) / diag;
            }
        }
        d.rho = c[0];
        d.beta = c.segment(1, m_);
        d.intercept = intercept_ ? c[m_ + 1] : 0.0;
    }

private:
    void update_coefficients(Rng& rng)
    {
        const auto k = static_cast<Index>(block_.size());
        if (k == 0) {
            return;
        }
        Eigen::MatrixXd prec(k, k);
        Eigen::VectorXd rhs(k);
        for (Index a = 0; a < k; ++a) {
            const Index ca = block_[static_cast<std::size_t>(a)];
            for (Index b = 0; b < k; ++b) {
                prec(a, b) = gram_(ca, block_[static_cast<std::size_t>(b)]) / state_.sigma_sq;
            }
            prec(a, a) += coefficient_prior_precision(ca, state_);
            rhs[a] = (cross_[ca] - state_.rho * gram_(ca, 0)) / state_.sigma_sq;
        }
        Eigen::LLT<Eigen::MatrixXd> llt(prec);
        double jitter = 1e-10 * prec.diagonal().mean();
        for (int attempt = 0; llt.info() != Eigen::Success; ++attempt) {
            if (attempt == 3) {
                throw std::runtime_error("posterior_sample: coefficient precision not positive definite");
            }
            prec.diagonal().array() += jitter;
            jitter *= 100.0;
            llt.compute(prec);
        }
        const Eigen::VectorXd mean = llt.solve(rhs);
        const Eigen::VectorXd noise = llt.matrixU().solve(rng.normal_vector(k));
        const Eigen::VectorXd draw = mean + noise;
        for (Index a = 0; a < k; ++a) {
            const Index col = block_[static_cast<std::size_t>(a)];
            if (col == m_ + 1) {
                state_.intercept = draw[a];
            } else {
                state_.beta[col - 1] = draw[a];
            }
        }
    }

    void update_rho(Rng& rng)
    {
        Eigen::VectorXd c = coefficients(state_);
        c[0] = 0.0;
        const double prec = gram_(0, 0) / state_.sigma_sq + 1.0 / (prior_.rho_sd * prior_.rho_sd);
        const double mean = (cross_[0] - gram_.row(0).dot(c)) / state_.sigma_sq / prec;
        state_.rho = rng.normal(mean, std::sqrt(1.0 / prec));
    }

    void update_sigma(Rng& rng)
    {
        state_.sigma_sq =
            rng.inverse_gamma(prior_.a2 + 0.5 * static_cast<double>(n_), prior_.b2 + 0.5 * ssr(state_));
    }

    void update_gamma(Rng& rng)
    {
        const double slab_var = prior_.tau * prior_.tau;
        const double spike_var = slab_var * prior_.v_spike;
        const double log_prior_odds = std::log(state_.p) - std::log1p(-state_.p);
        for (Index i = 0; i < m_; ++i) {
            if (!active_[static_cast<std::size_t>(i)]) {
                continue;
            }
            const double b = state_.beta[i];
            const double log_odds =
                log_prior_odds + normal_log_pdf(b, 0.0, slab_var) - normal_log_pdf(b, 0.0, spike_var);
            const double prob = (log_odds > 0.0) ? 1.0 / (1.0 + std::exp(-log_odds))
                                                 : std::exp(log_odds) / (1.0 + std::exp(log_odds));
            state_.gamma[static_cast<std::size_t>(i)] = rng.bernoulli(prob) ? 1 : 0;
        }
    }

    void update_p(Rng& rng)
    {
        const auto on = static_cast<double>(std::count(state_.gamma.begin(), state_.gamma.end(), std::uint8_t{1}));
        const auto total = static_cast<double>(std::count(active_.begin(), active_.end(), true));
        state_.p = rng.beta(prior_.a1 + on, prior_.b1 + total - on);
        state_.p = std::clamp(state_.p, 1e-300, 1.0 - 1e-16);
    }

    SpikeSlabPrior prior_;
    Index m_;
    Index n_;
    bool intercept_;
    bool spike_slab_;
    std::vector<bool> active_;
    std::vector<Index> block_;
    Eigen::MatrixXd gram_;
    Eigen::VectorXd cross_;
    double yy_ = 0.0;
    Draw state_;
};

std::vector<Draw> run_chain(Sampler& sampler, const McmcSettings& settings, Rng& rng)
{
    std::vector<Draw> kept;
    kept.reserve(static_cast<std::size_t>(settings.retained()));
    for (Index it = 0; it < settings.iters; ++it) {
        sampler.sweep(rng);
        if (it >= settings.burnin && (it - settings.burnin) % settings.thin == 0) {
            kept.push_back(sampler.state());
        }
    }
    return kept;
}

} // namespace

PosteriorSampleSet to_sample_set(const std::vector<Draw>& draws, Provenance provenance)
{
    if (draws.empty()) {
        throw std::invalid_argument("to_sample_set: no draws");
    }
    const Index m = draws.front().beta.size();
    Eigen::MatrixXd mat(static_cast<Index>(draws.size()), layout::width(m));
    for (std::size_t s = 0; s < draws.size(); ++s) {
        const auto r = static_cast<Index>(s);
        const Draw& d = draws[s];
        mat(r, layout::rho) = d.rho;
        mat.row(r).segment(1, m) = d.beta.transpose();
        mat(r, layout::intercept(m)) = d.intercept;
        mat(r, layout::sigma_sq(m)) = d.sigma_sq;
        mat(r, layout::p(m)) = d.p;
    }
    return PosteriorSampleSet(std::move(mat), std::move(provenance));
}

SamplerOutput posterior_sample(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::MatrixXd>& z,
                               const SpikeSlabPrior& prior, const McmcSettings& settings, std::uint64_t seed,
                               bool intercept)
{
    prior.validate();
    settings.validate();
    Sampler sampler(x, z, prior, intercept, std::vector<bool>(static_cast<std::size_t>(z.cols()), true), true);
    Rng rng(seed);
    auto draws = run_chain(sampler, settings, rng);
    auto samples = to_sample_set(draws, {"ar1-spike-slab-gibbs", seed});
    return {std::move(draws), std::move(samples)};
}

HypothesisSet map_hypotheses(Index m, double null_lo, double null_hi)
{
    std::vector<NullRegion> regions;
    std::vector<Index> coords;
    regions.push_back(NullRegion::open_interval(-1.0, 1.0));
    coords.push_back(layout::rho);
    for (Index i = 0; i < m; ++i) {
        regions.push_back(NullRegion::closed_interval(null_lo, null_hi));
        coords.push_back(layout::beta(i));
    }
    return {std::move(regions), std::move(coords)};
}

GroupStructure form_groups(const Eigen::MatrixXd& lambda, double percentile_level, GroupScore score)
{
    if (!(percentile_level > 0.0 && percentile_level < 1.0)) {
        throw std::invalid_argument("form_groups: percentile level must lie in (0, 1)");
    }
    const Index m = lambda.rows();
    std::vector<std::vector<Index>> groups(static_cast<std::size_t>(m + 1));
    for (Index i = 0; i <= m; ++i) {
        groups[static_cast<std::size_t>(i)] = {i};
    }
    if (m < 2) {
        return GroupStructure(std::move(groups));
    }
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(lambda);
    if (!lu.isInvertible()) {
        throw std::invalid_argument("form_groups: lambda is singular");
    }
    const Eigen::MatrixXd prec = lu.inverse();
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(m, m);
    std::vector<double> pairs;
    for (Index i = 0; i < m; ++i) {
        for (Index j = i + 1; j < m; ++j) {
            const double raw = std::abs(prec(i, j));
            s(i, j) = s(j, i) =
                (score == GroupScore::PartialCorrelation) ? raw / std::sqrt(prec(i, i) * prec(j, j)) : raw;
            pairs.push_back(s(i, j));
        }
    }
    // Scores equal up to rounding count as ties with the threshold; zero scores never group.
    const double threshold = quantile(pairs, percentile_level) * (1.0 - 1e-9);
    for (Index i = 0; i < m; ++i) {
        for (Index j = 0; j < m; ++j) {
            if (i != j && s(i, j) > 0.0 && s(i, j) >= threshold) {
                groups[static_cast<std::size_t>(i + 1)].push_back(j + 1);
            }
        }
    }
    return GroupStructure(std::move(groups));
}

Theta Theta::truth(const TrueParams& params)
{
    return {params.rho0, params.beta0, params.intercept0, params.sigma0_sq};
}

double log_rn(const Theta& theta, const Eigen::Ref<const Eigen::VectorXd>& x,
              const Eigen::Ref<const Eigen::MatrixXd>& z, const TrueParams& truth)
{
    if (z.rows() != x.size() || z.cols() != theta.beta.size() || z.cols() != truth.m()) {
        throw std::invalid_argument("log_rn: dimension mismatch");
    }
    if (!(theta.sigma_sq > 0.0)) {
        throw std::invalid_argument("log_rn: sigma_sq must be positive");
    }
    const Eigen::VectorXd model_mean = z * theta.beta;
    const Eigen::VectorXd true_mean = z * truth.beta0;
    double total = 0.0;
    double prev = 0.0;
    for (Index t = 0; t < x.size(); ++t) {
        total += normal_log_pdf(x[t], theta.rho * prev + theta.intercept + model_mean[t], theta.sigma_sq) -
                 normal_log_pdf(x[t], truth.rho0 * prev + truth.intercept0 + true_mean[t], truth.sigma0_sq);
        prev = x[t];
    }
    return total;
}

Eigen::VectorXd posterior_predictive(const std::vector<Draw>& draws, const Eigen::Ref<const Eigen::VectorXd>& z_next,
                                     double x_n, std::uint64_t seed)
{
    if (draws.empty()) {
        throw std::invalid_argument("posterior_predictive: no draws");
    }
    Rng rng(seed);
    Eigen::VectorXd out(static_cast<Index>(draws.size()));
    for (std::size_t s = 0; s < draws.size(); ++s) {
        const Draw& d = draws[s];
        const double mu = d.rho * x_n + d.intercept + z_next.dot(d.beta);
        out[static_cast<Index>(s)] = rng.normal(mu, std::sqrt(d.sigma_sq));
    }
    return out;
}

RefitResult refit_selected(const std::vector<bool>& selected, const Eigen::Ref<const Eigen::VectorXd>& x,
                           const Eigen::Ref<const Eigen::MatrixXd>& z, const SpikeSlabPrior& prior,
                           const McmcSettings& settings, std::uint64_t seed, bool intercept)
{
    prior.validate();
    settings.validate();
    if (static_cast<Index>(selected.size()) != z.cols()) {
        throw std::invalid_argument("refit_selected: selection length must equal covariate count");
    }
    Sampler sampler(x, z, prior, intercept, selected, false);
    Rng rng(seed);
    RefitResult out;
    out.draws = run_chain(sampler, settings, rng);
    std::size_t best = 0;
    double best_lp = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < out.draws.size(); ++s) {
        const double lp = sampler.log_posterior(out.draws[s]);
        if (lp > best_lp) {
            best_lp = lp;
            best = s;
        }
    }
    Draw mode = out.draws[best];
    sampler.polish(mode, 50);
    out.beta_hat = mode.beta;
    out.intercept_hat = mode.intercept;
    out.rho_hat = mode.rho;
    out.sigma_sq_hat = mode.sigma_sq;
    return out;
}

Eigen::MatrixXd block_equicorrelated(Index m, Index block, double correlation)
{
    if (block < 1) {
        throw std::invalid_argument("block_equicorrelated: block size must be positive");
    }
    Eigen::MatrixXd lambda = Eigen::MatrixXd::Identity(m, m);
    for (Index i = 0; i < m; ++i) {
        for (Index j = 0; j < m; ++j) {
            if (i != j && i / block == j / block) {
                lambda(i, j) = correlation;
            }
        }
    }
    return lambda;
}

Eigen::MatrixXd toeplitz(Index m, double r)
{
    Eigen::MatrixXd lambda(m, m);
    for (Index i = 0; i < m; ++i) {
        for (Index j = 0; j < m; ++j) {
            lambda(i, j) = std::pow(r, static_cast<double>(std::abs(i - j)));
        }
    }
    return lambda;
}

void write_dataset(const std::filesystem::path& path, const Eigen::Ref<const Eigen::VectorXd>& x,
                   const Eigen::Ref<const Eigen::MatrixXd>& z)
{
    if (z.rows() != x.size()) {
        throw std::invalid_argument("write_dataset: dimension mismatch");
    }
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out.precision(17);
    out << "t,x";
    for (Index j = 0; j < z.cols(); ++j) {
        out << ",z_" << (j + 1);
    }
    out << '\n';
    for (Index t = 0; t < x.size(); ++t) {
        out << (t + 1) << ',' << x[t];
        for (Index j = 0; j < z.cols(); ++j) {
            out << ',' << z(t, j);
        }
        out << '\n';
    }
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> read_dataset(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot read " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error(path.string() + ": empty dataset");
    }
    const auto cols = static_cast<Index>(std::count(line.begin(), line.end(), ',')) + 1;
    if (cols < 2 || line.rfind("t,x", 0) != 0) {
        throw std::runtime_error(path.string() + ": header must start with t,x");
    }
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            row.push_back(std::stod(cell));
        }
        if (static_cast<Index>(row.size()) != cols) {
            throw std::runtime_error(path.string() + ": ragged row");
        }
        rows.push_back(std::move(row));
    }
    const auto n = static_cast<Index>(rows.size());
    Eigen::VectorXd x(n);
    Eigen::MatrixXd z(n, cols - 2);
    for (Index t = 0; t < n; ++t) {
        const auto& r = rows[static_cast<std::size_t>(t)];
        x[t] = r[1];
        for (Index j = 0; j + 2 < cols; ++j) {
            z(t, j) = r[static_cast<std::size_t>(j + 2)];
        }
    }
    return {x, z};
}

} // namespace nmmt::ar1

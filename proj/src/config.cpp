#include "nmmt/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace nmmt {

using nlohmann::json;

namespace {

void require_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed)
{
    if (!obj.is_object()) {
        throw ConfigError(where + ": expected an object");
    }
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.contains(key)) {
            throw ConfigError(where + ": unknown key '" + key + "'");
        }
    }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where)
{
    if (!obj.contains(key)) {
        return;
    }
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

ExperimentKind parse_kind(const std::string& s)
{
    if (s == "oracle-suite") return ExperimentKind::OracleSuite;
    if (s == "compare") return ExperimentKind::Compare;
    if (s == "rates") return ExperimentKind::Rates;
    if (s == "alpha-control") return ExperimentKind::AlphaControl;
    if (s == "equipartition") return ExperimentKind::Equipartition;
    throw ConfigError("unknown experiment '" + s + "'");
}

Method parse_method(const std::string& s)
{
    if (s == "NMD") return Method::Nmd;
    if (s == "MPR") return Method::Mpr;
    if (s == "SZG") return Method::Szg;
    throw ConfigError("unknown method '" + s + "'");
}

std::string to_string(ar1::GroupScore score)
{
    return score == ar1::GroupScore::PartialCorrelation ? "partial" : "raw";
}

void parse_ar1(const json& j, Ar1Section& a)
{
    const std::string w = "ar1";
    require_keys(j, w,
                 {"m", "beta0", "signal_indices", "signal_values", "rho0", "sigma0_sq", "intercept0", "lambda",
                  "null_interval", "group_percentile", "group_score", "intercept"});
    read(j, "m", a.m, w);
    read(j, "beta0", a.beta0, w);
    read(j, "signal_indices", a.signal_indices, w);
    read(j, "signal_values", a.signal_values, w);
    read(j, "rho0", a.rho0, w);
    read(j, "sigma0_sq", a.sigma0_sq, w);
    read(j, "intercept0", a.intercept0, w);
    read(j, "group_percentile", a.group_percentile, w);
    read(j, "intercept", a.intercept, w);
    if (j.contains("null_interval")) {
        std::vector<double> iv;
        read(j, "null_interval", iv, w);
        if (iv.size() != 2) {
            throw ConfigError("ar1.null_interval: expected [lo, hi]");
        }
        a.null_lo = iv[0];
        a.null_hi = iv[1];
    }
    if (j.contains("group_score")) {
        std::string s;
        read(j, "group_score", s, w);
        if (s == "partial") {
            a.group_score = ar1::GroupScore::PartialCorrelation;
        } else if (s == "raw") {
            a.group_score = ar1::GroupScore::RawPrecision;
        } else {
            throw ConfigError("ar1.group_score: expected 'partial' or 'raw'");
        }
    }
    if (j.contains("lambda")) {
        const json& l = j.at("lambda");
        require_keys(l, "ar1.lambda", {"kind", "block", "correlation"});
        read(l, "kind", a.lambda.kind, "ar1.lambda");
        read(l, "block", a.lambda.block, "ar1.lambda");
        read(l, "correlation", a.lambda.correlation, "ar1.lambda");
    }
}

void parse_oracle(const json& j, OracleSection& o)
{
    const std::string w = "oracle";
    require_keys(j, w, {"theta0", "sigma", "prior_mean", "prior_sd", "eps", "groups", "posterior", "draws"});
    read(j, "theta0", o.theta0, w);
    read(j, "sigma", o.sigma, w);
    read(j, "prior_mean", o.prior_mean, w);
    read(j, "prior_sd", o.prior_sd, w);
    read(j, "eps", o.eps, w);
    read(j, "groups", o.groups, w);
    read(j, "posterior", o.posterior, w);
    read(j, "draws", o.draws, w);
}

void parse_prior(const json& j, ar1::SpikeSlabPrior& p)
{
    const std::string w = "prior";
    require_keys(j, w, {"tau", "v_spike", "a1", "b1", "a2", "b2", "rho_sd"});
    read(j, "tau", p.tau, w);
    read(j, "v_spike", p.v_spike, w);
    read(j, "a1", p.a1, w);
    read(j, "b1", p.b1, w);
    read(j, "a2", p.a2, w);
    read(j, "b2", p.b2, w);
    read(j, "rho_sd", p.rho_sd, w);
}

void parse_thetas(const json& j, std::vector<ar1::Theta>& out)
{
    if (!j.is_array()) {
        throw ConfigError("thetas: expected an array");
    }
    out.clear();
    for (const json& t : j) {
        require_keys(t, "thetas[]", {"rho", "beta", "intercept", "sigma_sq"});
        ar1::Theta th;
        std::vector<double> beta;
        read(t, "rho", th.rho, "thetas[]");
        read(t, "beta", beta, "thetas[]");
        read(t, "intercept", th.intercept, "thetas[]");
        read(t, "sigma_sq", th.sigma_sq, "thetas[]");
        th.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), static_cast<Index>(beta.size()));
        out.push_back(std::move(th));
    }
}

} // namespace

std::string to_string(ExperimentKind kind)
{
    switch (kind) {
    case ExperimentKind::OracleSuite:
        return "oracle-suite";
    case ExperimentKind::Compare:
        return "compare";
    case ExperimentKind::Rates:
        return "rates";
    case ExperimentKind::AlphaControl:
        return "alpha-control";
    case ExperimentKind::Equipartition:
        return "equipartition";
    }
    return "unknown";
}

std::string to_string(Method method)
{
    switch (method) {
    case Method::Nmd:
        return "NMD";
    case Method::Mpr:
        return "MPR";
    case Method::Szg:
        return "SZG";
    }
    return "unknown";
}

Eigen::MatrixXd LambdaSpec::build(Index m) const
{
    if (kind == "identity") {
        return Eigen::MatrixXd::Identity(m, m);
    }
    if (kind == "block") {
        return ar1::block_equicorrelated(m, block, correlation);
    }
    if (kind == "toeplitz") {
        return ar1::toeplitz(m, correlation);
    }
    throw ConfigError("ar1.lambda.kind: expected 'identity', 'block' or 'toeplitz'");
}

ar1::TrueParams Ar1Section::true_params() const
{
    ar1::TrueParams p;
    p.rho0 = rho0;
    p.sigma0_sq = sigma0_sq;
    p.intercept0 = intercept0;
    if (!beta0.empty()) {
        p.beta0 = Eigen::Map<const Eigen::VectorXd>(beta0.data(), static_cast<Index>(beta0.size()));
    } else {
        p.beta0 = Eigen::VectorXd::Zero(m);
        for (std::size_t k = 0; k < signal_indices.size(); ++k) {
            p.beta0[signal_indices[k]] = signal_values[k];
        }
    }
    p.lambda = lambda.build(m);
    return p;
}

oracle::GaussOracleModel OracleSection::model() const
{
    oracle::GaussOracleModel mdl;
    mdl.theta0 = Eigen::Map<const Eigen::VectorXd>(theta0.data(), static_cast<Index>(theta0.size()));
    mdl.sigma = sigma;
    mdl.prior_mean = prior_mean;
    mdl.prior_sd = prior_sd;
    mdl.eps = eps;
    return mdl;
}

GroupStructure OracleSection::group_structure() const
{
    const auto m = static_cast<Index>(theta0.size());
    if (groups.empty()) {
        return GroupStructure::singletons(m);
    }
    return GroupStructure(groups);
}

void ExperimentConfig::validate() const
{
    if (replicates < 1) {
        throw ConfigError("replicates must be >= 1");
    }
    if (n_grid.empty()) {
        throw ConfigError("n_grid must not be empty");
    }
    for (std::size_t k = 0; k < n_grid.size(); ++k) {
        if (n_grid[k] < 1 || (k > 0 && n_grid[k] <= n_grid[k - 1])) {
            throw ConfigError("n_grid must be positive and strictly increasing");
        }
    }
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ConfigError("alpha must lie in (0, 1)");
    }
    if (!(beta >= 0.0 && beta <= 1.0)) {
        throw ConfigError("beta must lie in [0, 1]");
    }
    if (methods.empty()) {
        throw ConfigError("methods must not be empty");
    }
    if (calibrate != ErrorMeasure::Fdr && calibrate != ErrorMeasure::ModifiedFdr) {
        throw ConfigError("calibrate must be 'fdr_x' or 'mfdr_x'");
    }
    if (rate_average != "log" && rate_average != "arithmetic") {
        throw ConfigError("rate_average must be 'log' or 'arithmetic'");
    }
    if (!(failure_threshold >= 0.0 && failure_threshold <= 1.0)) {
        throw ConfigError("failure_threshold must lie in [0, 1]");
    }
    if (exact_limit < 1 || exact_limit > 24 || random_starts < 0) {
        throw ConfigError("optimizer settings out of range");
    }
    try {
        if (model == ModelKind::Ar1) {
            if (ar1.beta0.empty()) {
                if (ar1.signal_indices.size() != ar1.signal_values.size()) {
                    throw ConfigError("ar1.signal_indices and ar1.signal_values differ in length");
                }
                for (Index i : ar1.signal_indices) {
                    if (i < 0 || i >= ar1.m) {
                        throw ConfigError("ar1.signal_indices out of range");
                    }
                }
            } else if (static_cast<Index>(ar1.beta0.size()) != ar1.m) {
                throw ConfigError("ar1.beta0 must have m entries");
            }
            if (!(ar1.null_lo <= ar1.null_hi)) {
                throw ConfigError("ar1.null_interval must satisfy lo <= hi");
            }
            if (!(ar1.group_percentile > 0.0 && ar1.group_percentile < 1.0)) {
                throw ConfigError("ar1.group_percentile must lie in (0, 1)");
            }
            ar1.true_params().validate();
            prior.validate();
            mcmc.validate();
        } else {
            oracle.model().validate();
            (void)oracle.group_structure();
            if (oracle.posterior != "analytic" && oracle.posterior != "sampled") {
                throw ConfigError("oracle.posterior must be 'analytic' or 'sampled'");
            }
            if (oracle.draws < 1) {
                throw ConfigError("oracle.draws must be >= 1");
            }
        }
        for (const auto& th : thetas) {
            if (model == ModelKind::Ar1 && th.beta.size() != ar1.m) {
                throw ConfigError("thetas: beta must have m entries");
            }
            if (!(th.sigma_sq > 0.0)) {
                throw ConfigError("thetas: sigma_sq must be positive");
            }
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    if (experiment == ExperimentKind::Equipartition && (model != ModelKind::Ar1 || thetas.empty())) {
        throw ConfigError("equipartition needs the ar1 model and a non-empty thetas list");
    }
    if (experiment == ExperimentKind::Compare && model != ModelKind::Ar1) {
        throw ConfigError("compare needs the ar1 model");
    }
}

OptimizerOptions ExperimentConfig::optimizer_options() const
{
    OptimizerOptions o;
    o.exact_limit = exact_limit;
    o.random_starts = random_starts;
    return o;
}

ExperimentConfig parse_config(const std::string& json_text, std::optional<ExperimentKind> kind)
{
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid JSON: ") + e.what());
    }
    const std::string w = "config";
    require_keys(j, w,
                 {"experiment", "model", "seed", "replicates", "n_grid", "alpha", "methods", "calibrate", "beta",
                  "rate_average", "record_wall_time", "failure_threshold", "optimizer", "ar1", "oracle", "prior", "mcmc",
                  "thetas", "output_dir"});
    ExperimentConfig c;
    if (j.contains("experiment")) {
        std::string s;
        read(j, "experiment", s, w);
        c.experiment = parse_kind(s);
    }
    if (j.contains("model")) {
        std::string s;
        read(j, "model", s, w);
        if (s == "ar1") {
            c.model = ModelKind::Ar1;
        } else if (s == "oracle") {
            c.model = ModelKind::Oracle;
        } else {
            throw ConfigError("model must be 'ar1' or 'oracle'");
        }
    }
    read(j, "seed", c.seed, w);
    read(j, "replicates", c.replicates, w);
    read(j, "n_grid", c.n_grid, w);
    read(j, "alpha", c.alpha, w);
    if (j.contains("methods")) {
        std::vector<std::string> names;
        read(j, "methods", names, w);
        c.methods.clear();
        for (const auto& n : names) {
            const Method m = parse_method(n);
            if (std::find(c.methods.begin(), c.methods.end(), m) == c.methods.end()) {
                c.methods.push_back(m);
            }
        }
    }
    if (j.contains("calibrate")) {
        std::string s;
        read(j, "calibrate", s, w);
        try {
            c.calibrate = parse_error_measure(s);
        } catch (const std::exception& e) {
            throw ConfigError(std::string("calibrate: ") + e.what());
        }
    }
    read(j, "beta", c.beta, w);
    read(j, "rate_average", c.rate_average, w);
    read(j, "record_wall_time", c.record_wall_time, w);
    read(j, "failure_threshold", c.failure_threshold, w);
    if (j.contains("optimizer")) {
        const json& o = j.at("optimizer");
        require_keys(o, "optimizer", {"exact_limit", "random_starts"});
        read(o, "exact_limit", c.exact_limit, "optimizer");
        read(o, "random_starts", c.random_starts, "optimizer");
    }
    if (j.contains("ar1")) {
        parse_ar1(j.at("ar1"), c.ar1);
    }
    if (j.contains("oracle")) {
        parse_oracle(j.at("oracle"), c.oracle);
    }
    if (j.contains("prior")) {
        parse_prior(j.at("prior"), c.prior);
    }
    if (j.contains("mcmc")) {
        const json& m = j.at("mcmc");
        require_keys(m, "mcmc", {"iters", "burnin", "thin"});
        read(m, "iters", c.mcmc.iters, "mcmc");
        read(m, "burnin", c.mcmc.burnin, "mcmc");
        read(m, "thin", c.mcmc.thin, "mcmc");
    }
    if (j.contains("thetas")) {
        parse_thetas(j.at("thetas"), c.thetas);
    }
    if (j.contains("output_dir")) {
        std::string s;
        read(j, "output_dir", s, w);
        c.output_dir = s;
    }
    if (kind) {
        c.experiment = *kind;
    }
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, std::optional<ExperimentKind> kind)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file: " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse_config(buf.str(), kind);
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::string dump_config(const ExperimentConfig& c)
{
    json j;
    j["experiment"] = to_string(c.experiment);
    j["model"] = c.model == ModelKind::Ar1 ? "ar1" : "oracle";
    j["seed"] = c.seed;
    j["replicates"] = c.replicates;
    j["n_grid"] = c.n_grid;
    j["alpha"] = c.alpha;
    std::vector<std::string> methods;
    for (Method m : c.methods) {
        methods.push_back(to_string(m));
    }
    j["methods"] = methods;
    j["calibrate"] = to_string(c.calibrate);
    j["beta"] = c.beta;
    j["rate_average"] = c.rate_average;
    j["record_wall_time"] = c.record_wall_time;
    j["failure_threshold"] = c.failure_threshold;
    j["optimizer"] = {{"exact_limit", c.exact_limit}, {"random_starts", c.random_starts}};
    if (c.model == ModelKind::Ar1) {
        const auto p = c.ar1.true_params();
        j["ar1"] = {{"m", c.ar1.m},
                    {"beta0", std::vector<double>(p.beta0.data(), p.beta0.data() + p.beta0.size())},
                    {"rho0", c.ar1.rho0},
                    {"sigma0_sq", c.ar1.sigma0_sq},
                    {"intercept0", c.ar1.intercept0},
                    {"lambda",
                     {{"kind", c.ar1.lambda.kind}, {"block", c.ar1.lambda.block}, {"correlation", c.ar1.lambda.correlation}}},
                    {"null_interval", {c.ar1.null_lo, c.ar1.null_hi}},
                    {"group_percentile", c.ar1.group_percentile},
                    {"group_score", to_string(c.ar1.group_score)},
                    {"intercept", c.ar1.intercept}};
        j["prior"] = {{"tau", c.prior.tau}, {"v_spike", c.prior.v_spike}, {"a1", c.prior.a1}, {"b1", c.prior.b1},
                      {"a2", c.prior.a2},   {"b2", c.prior.b2},           {"rho_sd", c.prior.rho_sd}};
        j["mcmc"] = {{"iters", c.mcmc.iters}, {"burnin", c.mcmc.burnin}, {"thin", c.mcmc.thin}};
    } else {
        j["oracle"] = {{"theta0", c.oracle.theta0}, {"sigma", c.oracle.sigma},       {"prior_mean", c.oracle.prior_mean},
                       {"prior_sd", c.oracle.prior_sd}, {"eps", c.oracle.eps},       {"groups", c.oracle.groups},
                       {"posterior", c.oracle.posterior}, {"draws", c.oracle.draws}};
    }
    if (!c.thetas.empty()) {
        json ts = json::array();
        for (const auto& th : c.thetas) {
            ts.push_back({{"rho", th.rho},
                          {"beta", std::vector<double>(th.beta.data(), th.beta.data() + th.beta.size())},
                          {"intercept", th.intercept},
                          {"sigma_sq", th.sigma_sq}});
        }
        j["thetas"] = ts;
    }
    return j.dump(2);
}

} // namespace nmmt

#include "nmmt/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace nmmt {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

double normal_quantile(double p)
{
    if (p <= 0.0) {
        return -std::numeric_limits<double>::infinity();
    }
    if (p >= 1.0) {
        return std::numeric_limits<double>::infinity();
    }
    // Acklam's rational approximation followed by one Halley step.
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x = 0.0;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // Work in the smaller tail so the residual keeps its precision.
    const double e = (p < 0.5) ? normal_cdf(x) - p : (1.0 - p) - normal_sf(x);
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

double normal_log_pdf(double x, double mean, double var)
{
    const double r = x - mean;
    return -0.5 * (std::log(2.0 * std::numbers::pi * var) + r * r / var);
}

double normal_interval_prob(double mean, double sd, double lo, double hi)
{
    if (!(hi > lo)) {
        return 0.0;
    }
    const double zl = (lo - mean) / sd;
    const double zh = (hi - mean) / sd;
    // Difference of the tails on the side away from the mean keeps precision.
    if (zl > 0.0) {
        return std::max(0.0, normal_sf(zl) - normal_sf(zh));
    }
    if (zh < 0.0) {
        return std::max(0.0, normal_cdf(zh) - normal_cdf(zl));
    }
    return std::max(0.0, 1.0 - normal_cdf(zl) - normal_sf(zh));
}

double ks_statistic(std::span<const double> samples, const std::function<double(double)>& cdf)
{
    if (samples.empty()) {
        throw std::invalid_argument("ks_statistic: empty sample");
    }
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    double worst = 0.0;
    for (std::size_t k = 0; k < sorted.size(); ++k) {
        const double f = cdf(sorted[k]);
        worst = std::max({worst, static_cast<double>(k + 1) / n - f, f - static_cast<double>(k) / n});
    }
    return worst;
}

double quantile(std::vector<double> values, double level)
{
    if (values.empty()) {
        throw std::invalid_argument("quantile: empty input");
    }
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * level;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

double mean(std::span<const double> values)
{
    if (values.empty()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    double s = 0.0;
    for (double v : values) {
        s += v;
    }
    return s / static_cast<double>(values.size());
}

double std_error(std::span<const double> values)
{
    if (values.size() < 2) {
        return 0.0;
    }
    const double mu = mean(values);
    double ss = 0.0;
    for (double v : values) {
        ss += (v - mu) * (v - mu);
    }
    const double n = static_cast<double>(values.size());
    return std::sqrt(ss / (n - 1.0) / n);
}

} // namespace nmmt

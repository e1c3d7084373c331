#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace nmmt {

double normal_cdf(double x);
/// Upper tail 1 - Phi(x), accurate far into the tail.
double normal_sf(double x);
double normal_quantile(double p);
double normal_log_pdf(double x, double mean, double var);

/// Probability that N(mean, sd^2) falls in [lo, hi]; infinite bounds allowed.
double normal_interval_prob(double mean, double sd, double lo, double hi);

/// One-sample Kolmogorov-Smirnov statistic sup |F_hat - F|.
double ks_statistic(std::span<const double> samples, const std::function<double(double)>& cdf);

/// Linear-interpolation sample quantile (R type 7).
double quantile(std::vector<double> values, double level);
double median(std::vector<double> values);
double mean(std::span<const double> values);
/// Standard error of the mean (sample sd / sqrt(n)); 0 for n < 2.
double std_error(std::span<const double> values);

} // namespace nmmt

#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace nmmt {

/// SplitMix64 mixing of (master, task) into an independent stream seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t task);

/// Random source whose outputs are identical on every platform.
///
/// Only the raw 64-bit engine comes from the standard library (its output
/// sequence is fully specified); every distribution is implemented here,
/// normals by inverse-CDF.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform on the open interval (0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::size_t index(std::size_t n);
    bool bernoulli(double p) { return uniform() < p; }

    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }
    Eigen::VectorXd normal_vector(Eigen::Index n);

    /// Gamma(shape, 1).
    double gamma(double shape);
    double beta(double a, double b);
    /// Inverse-gamma with density proportional to x^{-shape-1} exp(-scale/x).
    double inverse_gamma(double shape, double scale);

private:
    std::mt19937_64 engine_;
};

} // namespace nmmt

#pragma once

#include <functional>

#include <Eigen/Dense>

namespace nmmt {

struct NelderMeadOptions {
    double f_tol = 1e-13;
    double x_tol = 1e-9;
    int max_evals = 50000;
    double initial_step = 0.5;
};

struct NelderMeadResult {
    Eigen::VectorXd x;
    double f = 0.0;
    int evals = 0;
    bool converged = false;
};

/// Derivative-free simplex descent with dimension-adaptive coefficients.
NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                             const NelderMeadOptions& options = {});

} // namespace nmmt

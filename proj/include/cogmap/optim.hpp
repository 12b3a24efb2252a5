#pragma once

#include <Eigen/Core>
#include <functional>

namespace cogmap::optim {

using Eigen::VectorXd;

// evaluates the objective at x and fills grad; returns f(x)
using Objective = std::function<double(const VectorXd& x, VectorXd& grad)>;

struct LbfgsOptions {
    int memory = 10;
    int max_iterations = 2000;
    double grad_tolerance = 1e-8;
    double armijo_c = 1e-4;
    double backtrack = 0.5;
    int max_line_search = 40;
};

struct OptimResult {
    VectorXd x;
    double f = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

OptimResult lbfgs_minimize(const Objective& fn, VectorXd x0, const LbfgsOptions& opts = {});

} // namespace cogmap::optim

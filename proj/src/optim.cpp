#include "cogmap/optim.hpp"

#include <cmath>
#include <deque>
#include <stdexcept>

namespace cogmap::optim {

namespace {

struct Pair {
    VectorXd s;
    VectorXd y;
    double rho;
};

} // namespace

OptimResult lbfgs_minimize(const Objective& fn, VectorXd x0, const LbfgsOptions& opts) {
    if (opts.memory < 1) throw std::invalid_argument("lbfgs_minimize: memory must be >= 1");
    const int n = static_cast<int>(x0.size());
    VectorXd x = std::move(x0);
    VectorXd g(n), g_new(n);
    double f = fn(x, g);

    std::deque<Pair> history;
    OptimResult res;

    for (int it = 0; it < opts.max_iterations; ++it) {
        const double gnorm = g.norm();
        if (gnorm <= opts.grad_tolerance) {
            res.converged = true;
            res.iterations = it;
            break;
        }

        // two-loop recursion
        VectorXd q = g;
        std::vector<double> alpha(history.size());
        for (int k = static_cast<int>(history.size()) - 1; k >= 0; --k) {
            alpha[k] = history[k].rho * history[k].s.dot(q);
            q -= alpha[k] * history[k].y;
        }
        if (!history.empty()) {
            const Pair& last = history.back();
            const double gamma = last.s.dot(last.y) / last.y.squaredNorm();
            q *= gamma;
        }
        for (size_t k = 0; k < history.size(); ++k) {
            const double beta = history[k].rho * history[k].y.dot(q);
            q += (alpha[k] - beta) * history[k].s;
        }
        VectorXd dir = -q;
        double descent = g.dot(dir);
        if (descent >= 0.0) {  // bad curvature estimate, fall back to steepest descent
            dir = -g;
            descent = -gnorm * gnorm;
            history.clear();
        }

        // Armijo backtracking
        double step = 1.0;
        double f_new = f;
        VectorXd x_new = x;
        bool accepted = false;
        for (int ls = 0; ls < opts.max_line_search; ++ls) {
            x_new = x + step * dir;
            f_new = fn(x_new, g_new);
            if (std::isfinite(f_new) && f_new <= f + opts.armijo_c * step * descent) {
                accepted = true;
                break;
            }
            step *= opts.backtrack;
        }
        if (!accepted) {
            res.iterations = it;
            break;  // line search stalled; return the best point found
        }

        Pair pr;
        pr.s = x_new - x;
        pr.y = g_new - g;
        const double sy = pr.s.dot(pr.y);
        if (sy > 1e-12 * pr.s.norm() * pr.y.norm()) {
            pr.rho = 1.0 / sy;
            history.push_back(std::move(pr));
            if (static_cast<int>(history.size()) > opts.memory) history.pop_front();
        }
        x = std::move(x_new);
        g = g_new;
        f = f_new;
        res.iterations = it + 1;
    }

    res.x = std::move(x);
    res.f = f;
    res.grad_norm = g.norm();
    return res;
}

} // namespace cogmap::optim

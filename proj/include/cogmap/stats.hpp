#pragma once

#include <vector>

namespace cogmap::stats {

double mean(const std::vector<double>& v);
// unbiased (n-1) sample variance
double variance(const std::vector<double>& v);
double median(std::vector<double> v);

double pearson(const std::vector<double>& a, const std::vector<double>& b);

// fractional ranks, ties get the average rank
std::vector<double> average_ranks(const std::vector<double>& v);

// Spearman rank correlation with average-rank tie handling
double spearman(const std::vector<double>& a, const std::vector<double>& b);

// regularized incomplete beta I_x(a, b), accurate to ~1e-6 or better
double incomplete_beta(double a, double b, double x);

struct WelchResult {
    double t = 0.0;
    double dof = 0.0;
    double p_two_sided = 1.0;
    double mean_a = 0.0;
    double mean_b = 0.0;
};

// Welch two-sample t test with Welch-Satterthwaite degrees of freedom;
// two-sided p from the regularized incomplete beta
WelchResult welch_t(const std::vector<double>& a, const std::vector<double>& b);

// slope/intercept of least squares y = a + b x
struct LineFit {
    double intercept = 0.0;
    double slope = 0.0;
    double r2 = 0.0;
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

} // namespace cogmap::stats

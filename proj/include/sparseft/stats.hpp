#pragma once

#include <vector>

#include "sparseft/errors.hpp"

namespace sparseft {

double mean(const std::vector<double>& v);
double sample_std(const std::vector<double>& v);  // ddof = 1; 0 for n < 2

// 1-based ranks with average ranks for ties.
std::vector<double> average_ranks(const std::vector<double>& v);

// Regularized incomplete beta I_x(a, b) via Lentz continued fractions.
double betainc(double a, double b, double x);

double student_t_cdf(double t, double dof);

struct SpearmanResult {
    double rho = 0.0;
    double p_value = 1.0;
};

// Covariance-of-ranks formula with average ranks for ties; p-value from the
// t-distribution approximation.
SpearmanResult spearman(const std::vector<double>& a, const std::vector<double>& b);

struct TTestResult {
    double t = 0.0;
    double p_value = 1.0;
    double dof = 0.0;
};

// Unequal-variance t-test, two-sided, Welch-Satterthwaite dof.
TTestResult welch_ttest(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace sparseft

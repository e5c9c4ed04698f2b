#pragma once

#include <string>
#include <vector>

namespace rgauge {

struct ScoreSample {
    std::string group;
    std::vector<double> values;  // one robustness score per seed
};

struct WelchResult {
    double t = 0.0;
    double df = 0.0;      // Welch-Satterthwaite
    double p = 1.0;       // two-sided
    double alpha = 0.05;
    bool significant = false;
};

double mean(const std::vector<double>& v);
double sample_variance(const std::vector<double>& v);  // n-1 denominator

// Regularized incomplete beta I_x(a, b) by Lentz continued fraction;
// absolute accuracy ~1e-12 over the parameter ranges used here.
double regularized_incomplete_beta(double a, double b, double x);

// Two-sided survival probability of |T| >= |t| for Student-t with df
// degrees of freedom.
double student_t_two_sided_p(double t, double df);

// Unequal-variance t-test. Throws if either sample has n < 2, contains a
// non-finite value, or both variances are zero.
WelchResult welch_t_test(const ScoreSample& a, const ScoreSample& b,
                         double alpha = 0.05);

}  // namespace rgauge

#include "rgauge/stats.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace rgauge {

double mean(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

double sample_variance(const std::vector<double>& v) {
    const double m = mean(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return acc / static_cast<double>(v.size() - 1);
}

namespace {

// Lentz's algorithm for the continued fraction of I_x(a,b).
double incbeta_cf(double a, double b, double x) {
    constexpr int kMaxIter = 500;
    constexpr double kTiny = 1e-300;
    constexpr double kEps = 1e-15;

    double c = 1.0;
    double d = 1.0 - (a + b) * x / (a + 1.0);
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        d = 1.0 + num * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + num / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
        d = 1.0 + num * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + num / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kEps) return h;
    }
    throw std::runtime_error("incomplete beta: continued fraction failed to converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (x < 0.0 || x > 1.0)
        throw std::domain_error("incomplete beta: x outside [0,1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double ln_front = a * std::log(x) + b * std::log1p(-x) -
                            std::log(a) -
                            (std::lgamma(a) + std::lgamma(b) -
                             std::lgamma(a + b));
    // continued fraction converges fast for x < (a+1)/(a+b+2)
    if (x < (a + 1.0) / (a + b + 2.0))
        return std::exp(ln_front) * incbeta_cf(a, b, x);
    return 1.0 - regularized_incomplete_beta(b, a, 1.0 - x);
}

double student_t_two_sided_p(double t, double df) {
    if (!(df > 0.0))
        throw std::domain_error("student t: df must be positive, got " +
                                std::to_string(df));
    if (t == 0.0) return 1.0;
    // P(|T| >= |t|) = I_{df/(df+t^2)}(df/2, 1/2)
    const double x = df / (df + t * t);
    return regularized_incomplete_beta(df / 2.0, 0.5, x);
}

WelchResult welch_t_test(const ScoreSample& a, const ScoreSample& b,
                         double alpha) {
    if (a.values.size() < 2 || b.values.size() < 2)
        throw std::invalid_argument(
            "welch: both samples need n >= 2 (got " +
            std::to_string(a.values.size()) + " and " +
            std::to_string(b.values.size()) + ")");
    for (const auto* s : {&a, &b})
        for (double v : s->values)
            if (!std::isfinite(v))
                throw std::invalid_argument("welch: non-finite value in group \"" +
                                            s->group + "\"");
    const double na = static_cast<double>(a.values.size());
    const double nb = static_cast<double>(b.values.size());
    const double va = sample_variance(a.values);
    const double vb = sample_variance(b.values);
    const double se2 = va / na + vb / nb;
    if (se2 == 0.0)
        throw std::invalid_argument(
            "welch: degenerate test, both sample variances are zero");

    WelchResult r;
    r.alpha = alpha;
    r.t = (mean(a.values) - mean(b.values)) / std::sqrt(se2);
    r.df = se2 * se2 /
           (va * va / (na * na * (na - 1.0)) +
            vb * vb / (nb * nb * (nb - 1.0)));
    r.p = student_t_two_sided_p(r.t, r.df);
    r.significant = r.p < alpha;
    return r;
}

}  // namespace rgauge

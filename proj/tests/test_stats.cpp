#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "rgauge/stats.hpp"

using namespace rgauge;

namespace {

// Quadrature oracle for the two-sided p-value: integrates the Student-t
// density over [|t|, inf) via the substitution u = df/(df+x^2) is avoided
// on purpose; plain adaptive Simpson on a finite tail plus an analytic
// power-law bound for the remainder.
double t_pdf(double x, double df) {
    const double c = std::exp(std::lgamma((df + 1.0) / 2.0) -
                              std::lgamma(df / 2.0)) /
                     std::sqrt(df * M_PI);
    return c * std::pow(1.0 + x * x / df, -(df + 1.0) / 2.0);
}

double simpson(double a, double b, double df, int n) {
    const double h = (b - a) / n;
    double acc = t_pdf(a, df) + t_pdf(b, df);
    for (int i = 1; i < n; ++i)
        acc += t_pdf(a + i * h, df) * (i % 2 ? 4.0 : 2.0);
    return acc * h / 3.0;
}

double oracle_two_sided_p(double t, double df) {
    const double at = std::fabs(t);
    const double cutoff = std::max(at + 200.0, 400.0);
    // power-law remainder beyond the cutoff: pdf ~ c*df^((df+1)/2)*x^-(df+1)
    const double log_c = std::lgamma((df + 1.0) / 2.0) -
                         std::lgamma(df / 2.0) -
                         0.5 * std::log(df * M_PI);
    const double log_tail = log_c + (df + 1.0) / 2.0 * std::log(df) -
                            df * std::log(cutoff) - std::log(df);
    return 2.0 * (simpson(at, cutoff, df, 200000) + std::exp(log_tail));
}

ScoreSample sample(std::string name, std::vector<double> values) {
    return ScoreSample{std::move(name), std::move(values)};
}

}  // namespace

TEST_CASE("identical samples: t = 0, p = 1, not significant") {
    const auto a = sample("a", {0.5, 0.6, 0.7});
    const auto r = welch_t_test(a, sample("b", {0.5, 0.6, 0.7}));
    CHECK(r.t == 0.0);
    CHECK(r.p == 1.0);
    CHECK(!r.significant);
}

TEST_CASE("well-separated samples are significant") {
    const auto r = welch_t_test(sample("a", {0.52, 0.53, 0.51}),
                                sample("b", {0.10, 0.09, 0.11}));
    CHECK(r.significant);
    // frozen reference values (SciPy 1.x ttest_ind, equal_var=False)
    CHECK(r.t == doctest::Approx(51.43928459844672).epsilon(1e-9));
    CHECK(r.df == doctest::Approx(4.0).epsilon(1e-9));
    CHECK(r.p == doctest::Approx(8.548268328510381e-07).epsilon(1e-6));
}

TEST_CASE("unequal sizes and variances match the frozen reference") {
    const auto a = sample("a", {0.315236, 0.248001, 0.337523, 0.347028,
                                0.202448, 0.234891, 0.306392});
    const auto b =
        sample("b", {0.212051, 0.247984, 0.147635, 0.355528, 0.343335,
                     0.257924, 0.385269, 0.306101, 0.146885, 0.29425,
                     0.134934});
    const auto r = welch_t_test(a, b);
    CHECK(r.t == doctest::Approx(0.7950643461444178).epsilon(1e-9));
    CHECK(r.df == doctest::Approx(15.994676357194608).epsilon(1e-9));
    CHECK(r.p == doctest::Approx(0.43821572868662295).epsilon(1e-9));
    CHECK(!r.significant);
}

TEST_CASE("student t two-sided tail against frozen references") {
    CHECK(student_t_two_sided_p(2.5, 10.0) ==
          doctest::Approx(0.031446844236608776).epsilon(1e-10));
    CHECK(student_t_two_sided_p(0.7, 3.3) ==
          doctest::Approx(0.5300880793232584).epsilon(1e-10));
}

TEST_CASE("antisymmetry: swapping groups negates t, keeps p") {
    std::mt19937 rng(7);
    std::normal_distribution<double> na(0.4, 0.05), nb(0.35, 0.1);
    for (int trial = 0; trial < 20; ++trial) {
        ScoreSample a{"a", {}}, b{"b", {}};
        for (int i = 0; i < 5; ++i) a.values.push_back(na(rng));
        for (int i = 0; i < 8; ++i) b.values.push_back(nb(rng));
        const auto ab = welch_t_test(a, b);
        const auto ba = welch_t_test(b, a);
        CHECK(ab.t == doctest::Approx(-ba.t).epsilon(1e-12));
        CHECK(ab.p == doctest::Approx(ba.p).epsilon(1e-12));
    }
}

TEST_CASE("shift invariance") {
    const auto a = sample("a", {0.1, 0.2, 0.15, 0.22});
    const auto b = sample("b", {0.3, 0.25, 0.28});
    const auto base = welch_t_test(a, b);
    auto a2 = a, b2 = b;
    for (double& v : a2.values) v += 3.7;
    for (double& v : b2.values) v += 3.7;
    const auto shifted = welch_t_test(a2, b2);
    CHECK(shifted.t == doctest::Approx(base.t).epsilon(1e-9));
    CHECK(shifted.p == doctest::Approx(base.p).epsilon(1e-9));
}

TEST_CASE("agreement with an independent quadrature oracle") {
    std::mt19937 rng(11);
    std::uniform_int_distribution<int> size_dist(2, 40);
    std::uniform_real_distribution<double> mu(-1.0, 1.0), sd(0.01, 0.5);
    int checked = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::normal_distribution<double> na(mu(rng), sd(rng));
        std::normal_distribution<double> nb(mu(rng), sd(rng));
        ScoreSample a{"a", {}}, b{"b", {}};
        const int n_a = size_dist(rng), n_b = size_dist(rng);
        for (int i = 0; i < n_a; ++i) a.values.push_back(na(rng));
        for (int i = 0; i < n_b; ++i) b.values.push_back(nb(rng));
        const auto r = welch_t_test(a, b);
        const double p_oracle = oracle_two_sided_p(r.t, r.df);
        CHECK(std::abs(r.p - p_oracle) < 1e-6);
        ++checked;
    }
    CHECK(checked == 100);
}

TEST_CASE("degenerate inputs are rejected") {
    CHECK_THROWS_AS(welch_t_test(sample("a", {0.5}), sample("b", {0.1, 0.2})),
                    std::invalid_argument);
    CHECK_THROWS_WITH_AS(
        welch_t_test(sample("a", {0.5, 0.5}), sample("b", {0.1, 0.1})),
        doctest::Contains("degenerate"), std::invalid_argument);
}

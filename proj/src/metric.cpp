#include "rgauge/metric.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace rgauge {

namespace {

constexpr double kEpsMatchTol = 1e-12;

size_t index_of_epsilon(const RobustnessCurve& curve, double eps,
                        const char* what) {
    for (size_t i = 0; i < curve.size(); ++i)
        if (std::abs(curve.epsilons[i] - eps) <= kEpsMatchTol) return i;
    throw std::invalid_argument(std::string(what) + " " + std::to_string(eps) +
                                " is not a sample point of the curve");
}

void check_interval(const EpsilonInterval& interval) {
    if (!(interval.epsilon1 > interval.epsilon0))
        throw std::invalid_argument(
            "epsilon interval: epsilon1 (" + std::to_string(interval.epsilon1) +
            ") must exceed epsilon0 (" + std::to_string(interval.epsilon0) +
            ")");
}

}  // namespace

void validate(const RobustnessCurve& curve) {
    if (curve.epsilons.size() != curve.accuracies.size())
        throw std::invalid_argument("curve: " +
                                    std::to_string(curve.epsilons.size()) +
                                    " epsilons vs " +
                                    std::to_string(curve.accuracies.size()) +
                                    " accuracies");
    if (curve.size() < 2)
        throw std::invalid_argument("curve: at least 2 samples required, got " +
                                    std::to_string(curve.size()));
    for (size_t i = 1; i < curve.size(); ++i)
        if (!(curve.epsilons[i] > curve.epsilons[i - 1]))
            throw std::invalid_argument(
                "curve: epsilons not strictly increasing at index " +
                std::to_string(i));
    for (double a : curve.accuracies)
        if (!(a >= 0.0 && a <= 1.0))
            throw std::invalid_argument("curve: accuracy " +
                                        std::to_string(a) +
                                        " outside [0,1]");
}

double trapezoid_auc(const RobustnessCurve& curve,
                     const EpsilonInterval& interval) {
    validate(curve);
    check_interval(interval);
    const size_t i0 = index_of_epsilon(curve, interval.epsilon0, "epsilon0");
    const size_t i1 = index_of_epsilon(curve, interval.epsilon1, "epsilon1");
    double area = 0.0;
    for (size_t i = i0; i < i1; ++i)
        area += (curve.epsilons[i + 1] - curve.epsilons[i]) *
                (curve.accuracies[i] + curve.accuracies[i + 1]) * 0.5;
    return area;
}

RobustnessScore robustness(const RobustnessCurve& curve,
                           const EpsilonInterval& interval) {
    const double area = trapezoid_auc(curve, interval);
    const size_t i0 = index_of_epsilon(curve, interval.epsilon0, "epsilon0");
    const size_t i1 = index_of_epsilon(curve, interval.epsilon1, "epsilon1");
    const double f0 = curve.accuracies[i0];
    if (!(f0 > 0.0))
        throw std::domain_error(
            "undefined normalization: f(epsilon0) = " + std::to_string(f0) +
            " must be positive");
    RobustnessScore score;
    // Normalize each trapezoid by f(epsilon0) before accumulating so that a
    // constant curve yields numerator == denominator bit-for-bit and R == 1.
    double num = 0.0, den = 0.0;
    for (size_t i = i0; i < i1; ++i) {
        const double w = curve.epsilons[i + 1] - curve.epsilons[i];
        num += (0.5 * (curve.accuracies[i] + curve.accuracies[i + 1]) / f0) * w;
        den += w;
    }
    score.r = num / den;
    score.interval = interval;
    score.provenance = curve.provenance;
    score.constraint_satisfied =
        area <= f0 * (interval.epsilon1 - interval.epsilon0);
    return score;
}

bool constraint_holds(const RobustnessCurve& curve,
                      const EpsilonInterval& interval) {
    const double area = trapezoid_auc(curve, interval);
    const size_t i0 = index_of_epsilon(curve, interval.epsilon0, "epsilon0");
    const double f0 = curve.accuracies[i0];
    return area <= f0 * (interval.epsilon1 - interval.epsilon0);
}

RelativeChange relative_change(const RobustnessCurve& curve, double epsilon,
                               double epsilon0) {
    validate(curve);
    const size_t i0 = index_of_epsilon(curve, epsilon0, "epsilon0");
    const size_t i = index_of_epsilon(curve, epsilon, "epsilon");
    const double f0 = curve.accuracies[i0];
    if (!(f0 > 0.0))
        throw std::domain_error(
            "undefined normalization: f(epsilon0) = " + std::to_string(f0) +
            " must be positive");
    RelativeChange change;
    change.c = (curve.accuracies[i] - f0) / f0;
    change.epsilon = epsilon;
    change.epsilon0 = epsilon0;
    return change;
}

double mean_relative_change(const RobustnessCurve& curve,
                            const EpsilonInterval& interval) {
    validate(curve);
    check_interval(interval);
    const size_t i0 = index_of_epsilon(curve, interval.epsilon0, "epsilon0");
    const size_t i1 = index_of_epsilon(curve, interval.epsilon1, "epsilon1");
    const double f0 = curve.accuracies[i0];
    if (!(f0 > 0.0))
        throw std::domain_error(
            "undefined normalization: f(epsilon0) = " + std::to_string(f0) +
            " must be positive");
    double area = 0.0;
    for (size_t i = i0; i < i1; ++i) {
        const double c_lo = (curve.accuracies[i] - f0) / f0;
        const double c_hi = (curve.accuracies[i + 1] - f0) / f0;
        area += (curve.epsilons[i + 1] - curve.epsilons[i]) *
                (c_lo + c_hi) * 0.5;
    }
    return area / (interval.epsilon1 - interval.epsilon0);
}

void save_curve_csv(const RobustnessCurve& curve,
                    const std::filesystem::path& csv_path) {
    std::ofstream os(csv_path);
    if (!os) throw std::runtime_error("curve: cannot open " +
                                      csv_path.string());
    os << "epsilon,accuracy\n";
    os.precision(17);
    for (size_t i = 0; i < curve.size(); ++i)
        os << curve.epsilons[i] << ',' << curve.accuracies[i] << '\n';
    if (!os) throw std::runtime_error("curve: write failed for " +
                                      csv_path.string());
}

void save_curve_sidecar(const RobustnessCurve& curve,
                        const std::filesystem::path& json_path) {
    nlohmann::json j;
    j["checkpoint_id"] = curve.provenance.checkpoint_id;
    j["dataset"] = curve.provenance.dataset;
    j["task"] = curve.provenance.task;
    std::ofstream os(json_path);
    if (!os) throw std::runtime_error("curve: cannot open " +
                                      json_path.string());
    os << j.dump(2) << '\n';
}

RobustnessCurve load_curve_csv(const std::filesystem::path& csv_path) {
    std::ifstream is(csv_path);
    if (!is) throw std::runtime_error("curve: cannot open " +
                                      csv_path.string());
    std::string line;
    if (!std::getline(is, line) || line != "epsilon,accuracy")
        throw std::runtime_error(csv_path.string() +
                                 ": expected header \"epsilon,accuracy\"");
    RobustnessCurve curve;
    size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream row(line);
        double eps, acc;
        char comma;
        if (!(row >> eps >> comma >> acc) || comma != ',')
            throw std::runtime_error(csv_path.string() + ": bad row at line " +
                                     std::to_string(line_no) + ": " + line);
        curve.epsilons.push_back(eps);
        curve.accuracies.push_back(acc);
    }
    validate(curve);
    // sidecar provenance, when present
    auto sidecar = csv_path;
    sidecar.replace_extension(".json");
    if (std::filesystem::exists(sidecar)) {
        std::ifstream sj(sidecar);
        nlohmann::json j;
        sj >> j;
        curve.provenance.checkpoint_id = j.value("checkpoint_id", "");
        curve.provenance.dataset = j.value("dataset", "");
        curve.provenance.task = j.value("task", "");
    }
    return curve;
}

std::string score_json(const RobustnessScore& score) {
    nlohmann::json j;
    j["R"] = score.r;
    j["epsilon0"] = score.interval.epsilon0;
    j["epsilon1"] = score.interval.epsilon1;
    j["estimator"] = score.estimator;
    j["constraint_satisfied"] = score.constraint_satisfied;
    j["provenance"] = {{"checkpoint_id", score.provenance.checkpoint_id},
                       {"dataset", score.provenance.dataset},
                       {"task", score.provenance.task}};
    return j.dump(2);
}

void save_score_json(const RobustnessScore& score,
                     const std::filesystem::path& json_path) {
    std::ofstream os(json_path);
    if (!os) throw std::runtime_error("score: cannot open " +
                                      json_path.string());
    os << score_json(score) << '\n';
}

}  // namespace rgauge

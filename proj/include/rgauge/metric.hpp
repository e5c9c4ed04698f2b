#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace rgauge {

struct EpsilonInterval {
    double epsilon0 = 0.0;
    double epsilon1 = 0.3;
};

struct CurveProvenance {
    std::string checkpoint_id;
    std::string dataset;
    std::string task;
};

// Sampled accuracy-under-attack function f(epsilon): strictly increasing
// epsilons, accuracies in [0,1].
struct RobustnessCurve {
    std::vector<double> epsilons;
    std::vector<double> accuracies;
    CurveProvenance provenance;

    size_t size() const { return epsilons.size(); }
};

void validate(const RobustnessCurve& curve);

struct RobustnessScore {
    double r = 0.0;
    EpsilonInterval interval;
    std::string estimator = "trapezoid";
    CurveProvenance provenance;
    bool constraint_satisfied = true;  // area <= f(eps0)*(eps1-eps0)
};

struct RelativeChange {
    double c = 0.0;
    double epsilon = 0.0;
    double epsilon0 = 0.0;
};

// Trapezoid estimate of the integral of the curve over the interval.
// Both interval endpoints must be sample points; no extrapolation.
double trapezoid_auc(const RobustnessCurve& curve,
                     const EpsilonInterval& interval);

// Normalized area under the curve: area / (f(eps0) * (eps1 - eps0)).
// Scores above 1 are reported as-is with constraint_satisfied = false,
// never truncated.
RobustnessScore robustness(const RobustnessCurve& curve,
                           const EpsilonInterval& interval);

// Whether the area does not exceed the constant-accuracy area.
bool constraint_holds(const RobustnessCurve& curve,
                      const EpsilonInterval& interval);

// C = (f(eps) - f(eps0)) / f(eps0) at one sampled epsilon.
RelativeChange relative_change(const RobustnessCurve& curve, double epsilon,
                               double epsilon0 = 0.0);

// Interval mean of C, estimated by the trapezoid rule on the sampled grid.
// Equals robustness - 1 up to floating rounding.
double mean_relative_change(const RobustnessCurve& curve,
                            const EpsilonInterval& interval);

// CSV with header "epsilon,accuracy"; provenance in a JSON sidecar when a
// sidecar path is given.
void save_curve_csv(const RobustnessCurve& curve,
                    const std::filesystem::path& csv_path);
void save_curve_sidecar(const RobustnessCurve& curve,
                        const std::filesystem::path& json_path);
RobustnessCurve load_curve_csv(const std::filesystem::path& csv_path);

std::string score_json(const RobustnessScore& score);
void save_score_json(const RobustnessScore& score,
                     const std::filesystem::path& json_path);

}  // namespace rgauge

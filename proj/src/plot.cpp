#include "rgauge/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rgauge {

namespace {

constexpr double kWidth = 640.0, kHeight = 480.0;
constexpr double kLeft = 60.0, kRight = 20.0, kTop = 40.0, kBottom = 50.0;

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

}  // namespace

std::string curve_family_svg(const std::vector<RobustnessCurve>& seed_curves,
                             const std::string& title) {
    if (seed_curves.empty())
        throw std::invalid_argument("plot: no curves");
    for (const auto& curve : seed_curves) {
        validate(curve);
        if (curve.epsilons != seed_curves.front().epsilons)
            throw std::invalid_argument(
                "plot: curves sample different epsilon grids");
    }
    const auto& eps = seed_curves.front().epsilons;

    // normalize every curve by its own f(epsilon0)
    std::vector<std::vector<double>> normalized;
    double f0_sum = 0.0;
    for (const auto& curve : seed_curves) {
        const double f0 = curve.accuracies.front();
        if (!(f0 > 0.0))
            throw std::domain_error(
                "plot: undefined normalization: f(epsilon0) = " +
                std::to_string(f0));
        f0_sum += f0;
        std::vector<double> norm;
        for (double a : curve.accuracies) norm.push_back(a / f0);
        normalized.push_back(std::move(norm));
    }
    std::vector<double> mean(eps.size(), 0.0);
    for (const auto& norm : normalized)
        for (size_t i = 0; i < norm.size(); ++i) mean[i] += norm[i];
    for (double& v : mean) v /= static_cast<double>(normalized.size());

    const double chance =
        0.1 / (f0_sum / static_cast<double>(seed_curves.size()));

    double y_max = 1.0;
    for (const auto& norm : normalized)
        for (double v : norm) y_max = std::max(y_max, v);
    y_max = std::max(y_max, chance) * 1.05;

    const double x_min = eps.front(), x_max = eps.back();
    const double plot_w = kWidth - kLeft - kRight;
    const double plot_h = kHeight - kTop - kBottom;
    auto px = [&](double e) {
        return kLeft + (e - x_min) / (x_max - x_min) * plot_w;
    };
    auto py = [&](double v) { return kTop + (1.0 - v / y_max) * plot_h; };

    auto polyline = [&](const std::vector<double>& ys, const char* cls,
                        const char* style) {
        std::ostringstream os;
        os << "  <polyline class=\"" << cls << "\" style=\"" << style
           << "\" fill=\"none\" points=\"";
        for (size_t i = 0; i < eps.size(); ++i)
            os << fmt(px(eps[i])) << ',' << fmt(py(ys[i])) << ' ';
        os << "\"/>\n";
        return os.str();
    };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
        << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << ' '
        << kHeight << "\">\n";
    svg << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "  <text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\""
        << " font-family=\"sans-serif\" font-size=\"16\">" << title
        << "</text>\n";

    // axes
    svg << "  <line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h
        << "\" x2=\"" << kLeft + plot_w << "\" y2=\"" << kTop + plot_h
        << "\" stroke=\"black\"/>\n";
    svg << "  <line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\""
        << kLeft << "\" y2=\"" << kTop + plot_h << "\" stroke=\"black\"/>\n";
    for (double e : eps)
        svg << "  <text x=\"" << fmt(px(e)) << "\" y=\""
            << kTop + plot_h + 18 << "\" text-anchor=\"middle\""
            << " font-family=\"sans-serif\" font-size=\"9\">" << fmt(e)
            << "</text>\n";
    for (double v : {0.0, 0.25, 0.5, 0.75, 1.0})
        svg << "  <text x=\"" << kLeft - 8 << "\" y=\"" << fmt(py(v) + 3)
            << "\" text-anchor=\"end\" font-family=\"sans-serif\""
            << " font-size=\"10\">" << fmt(v) << "</text>\n";
    svg << "  <text x=\"" << kLeft + plot_w / 2 << "\" y=\""
        << kHeight - 12 << "\" text-anchor=\"middle\""
        << " font-family=\"sans-serif\" font-size=\"12\">epsilon</text>\n";
    svg << "  <text x=\"16\" y=\"" << kTop + plot_h / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\""
        << " font-size=\"12\" transform=\"rotate(-90 16 "
        << kTop + plot_h / 2 << ")\">normalized accuracy</text>\n";

    // chance reference
    svg << "  <line class=\"chance\" x1=\"" << kLeft << "\" y1=\""
        << fmt(py(chance)) << "\" x2=\"" << kLeft + plot_w << "\" y2=\""
        << fmt(py(chance))
        << "\" stroke=\"goldenrod\" stroke-dasharray=\"6,4\"/>\n";

    for (const auto& norm : normalized)
        svg << polyline(norm, "seed", "stroke:#7aa6d6;stroke-width:1");
    svg << polyline(mean, "mean", "stroke:#123a66;stroke-width:2.5");

    svg << "</svg>\n";
    return svg.str();
}

void save_curve_family_svg(const std::vector<RobustnessCurve>& seed_curves,
                           const std::string& title,
                           const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os)
        throw std::runtime_error("plot: cannot open " + path.string());
    os << curve_family_svg(seed_curves, title);
}

}  // namespace rgauge

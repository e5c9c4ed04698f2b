#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rgauge/metric.hpp"

namespace rgauge {

// Static SVG of one curve family: accuracy normalized by f(epsilon0), one
// polyline per seed, a mean polyline, and a dashed chance reference drawn
// at 0.1 / mean f(epsilon0). All curves must share the epsilon grid.
std::string curve_family_svg(const std::vector<RobustnessCurve>& seed_curves,
                             const std::string& title);

void save_curve_family_svg(const std::vector<RobustnessCurve>& seed_curves,
                           const std::string& title,
                           const std::filesystem::path& path);

}  // namespace rgauge

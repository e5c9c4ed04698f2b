#pragma once

#include <vector>

#include "rgauge/data.hpp"
#include "rgauge/metric.hpp"
#include "rgauge/models.hpp"
#include "rgauge/tensor.hpp"

namespace rgauge {

struct AttackConfig {
    // reference grid; strictly increasing, first entry may be 0
    std::vector<double> epsilons = {0,    0.0125, 0.025, 0.05, 0.1,
                                    0.15, 0.2,    0.25,  0.3};
    float clip_min = 0.0f;
    float clip_max = 1.0f;
};

void validate(const AttackConfig& config);

// d(cross-entropy)/d(input) for one batch; parameters stay untouched and
// must be in evaluation mode (requires_grad off).
Tensor input_gradient(const ModelParams& params, const Tensor& batch,
                      const std::vector<int>& labels);

// x' = clip(x + epsilon * sign(grad_x loss), clip_min, clip_max); sign(0)=0.
// epsilon = 0 returns the input bit-identically.
Tensor fgsm(const ModelParams& params, const Tensor& batch,
            const std::vector<int>& labels, float epsilon,
            float clip_min = 0.0f, float clip_max = 1.0f);

// Attacks every image of the set at each grid epsilon and returns the
// sampled f(epsilon). `limit` > 0 evaluates only the first `limit` images.
RobustnessCurve accuracy_under_attack(const ModelParams& params,
                                      const LabeledImageSet& set,
                                      const AttackConfig& config,
                                      int batch_size = 125,
                                      int64_t limit = 0);

}  // namespace rgauge

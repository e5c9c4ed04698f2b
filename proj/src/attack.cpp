#include "rgauge/attack.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rgauge {

namespace {

void check_eval_mode(const ModelParams& params) {
    for (const Tensor& t : params.tensors)
        if (t.requires_grad())
            throw std::logic_error(
                "attack: parameters must be in evaluation mode "
                "(requires_grad off)");
}

float sign_or_zero(float v) {
    if (v > 0.0f) return 1.0f;
    if (v < 0.0f) return -1.0f;
    return 0.0f;
}

}  // namespace

void validate(const AttackConfig& config) {
    if (config.epsilons.empty())
        throw std::invalid_argument("attack config: empty epsilon grid");
    if (config.epsilons.front() < 0.0)
        throw std::invalid_argument("attack config: negative epsilon " +
                                    std::to_string(config.epsilons.front()));
    for (size_t i = 1; i < config.epsilons.size(); ++i)
        if (!(config.epsilons[i] > config.epsilons[i - 1]))
            throw std::invalid_argument(
                "attack config: epsilon grid not strictly increasing at index " +
                std::to_string(i));
    if (!(config.clip_max > config.clip_min))
        throw std::invalid_argument("attack config: empty clip range");
}

Tensor input_gradient(const ModelParams& params, const Tensor& batch,
                      const std::vector<int>& labels) {
    check_eval_mode(params);
    Tensor x = Tensor::from_data(
        batch.shape(), std::vector<float>(batch.data().begin(),
                                          batch.data().end()),
        /*requires_grad=*/true);
    Tensor logits = forward(params, x);
    Tensor loss = softmax_cross_entropy(logits, labels);
    backward(loss);
    return Tensor::from_data(batch.shape(),
                             std::vector<float>(x.grad().begin(),
                                                x.grad().end()));
}

Tensor fgsm(const ModelParams& params, const Tensor& batch,
            const std::vector<int>& labels, float epsilon, float clip_min,
            float clip_max) {
    if (epsilon < 0.0f)
        throw std::invalid_argument("fgsm: negative epsilon " +
                                    std::to_string(epsilon));
    if (epsilon == 0.0f)
        return Tensor::from_data(batch.shape(),
                                 std::vector<float>(batch.data().begin(),
                                                    batch.data().end()));
    Tensor grad = input_gradient(params, batch, labels);
    std::vector<float> out(batch.data().begin(), batch.data().end());
    const float* g = grad.data().data();
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = std::clamp(out[i] + epsilon * sign_or_zero(g[i]), clip_min,
                            clip_max);
    return Tensor::from_data(batch.shape(), std::move(out));
}

RobustnessCurve accuracy_under_attack(const ModelParams& params,
                                      const LabeledImageSet& set,
                                      const AttackConfig& config,
                                      int batch_size, int64_t limit) {
    validate(config);
    check_eval_mode(params);
    if (set.count == 0)
        throw std::invalid_argument("attack: empty evaluation set");
    if (set.channels != kInputChannels || set.height != kInputSize ||
        set.width != kInputSize)
        throw std::invalid_argument(
            "attack: evaluation set is " + std::to_string(set.channels) + "x" +
            std::to_string(set.height) + "x" + std::to_string(set.width) +
            ", expected 3x32x32");
    const int64_t total =
        limit > 0 ? std::min<int64_t>(limit, set.count) : set.count;
    const int64_t image_numel = set.image_numel();

    std::vector<int64_t> correct(config.epsilons.size(), 0);
    for (int64_t start = 0; start < total; start += batch_size) {
        const int64_t n = std::min<int64_t>(batch_size, total - start);
        std::vector<float> pix(set.pixels.begin() + start * image_numel,
                               set.pixels.begin() + (start + n) * image_numel);
        Tensor batch = Tensor::from_data({n, kInputChannels, kInputSize,
                                          kInputSize},
                                         std::move(pix));
        std::vector<int> labels(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i)
            labels[static_cast<size_t>(i)] = set.labels[start + i];

        // The sign of the input gradient is shared by every epsilon.
        Tensor grad = input_gradient(params, batch, labels);
        const float* g = grad.data().data();
        const float* xv = batch.data().data();
        for (size_t e = 0; e < config.epsilons.size(); ++e) {
            const float eps = static_cast<float>(config.epsilons[e]);
            Tensor adv;
            if (eps == 0.0f) {
                adv = batch;
            } else {
                std::vector<float> pert(static_cast<size_t>(n * image_numel));
                for (size_t i = 0; i < pert.size(); ++i)
                    pert[i] = std::clamp(xv[i] + eps * sign_or_zero(g[i]),
                                         config.clip_min, config.clip_max);
                adv = Tensor::from_data(batch.shape(), std::move(pert));
            }
            Tensor logits = forward(params, adv);
            const auto pred = argmax_rows(logits);
            for (int64_t i = 0; i < n; ++i)
                if (pred[static_cast<size_t>(i)] == labels[static_cast<size_t>(i)])
                    ++correct[e];
        }
    }

    RobustnessCurve curve;
    curve.epsilons = config.epsilons;
    curve.accuracies.resize(config.epsilons.size());
    for (size_t e = 0; e < correct.size(); ++e)
        curve.accuracies[e] =
            static_cast<double>(correct[e]) / static_cast<double>(total);
    curve.provenance.dataset = to_string(set.id);
    return curve;
}

}  // namespace rgauge

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rgauge/tensor.hpp"

namespace rgauge {

enum class Arch { FullyConnected, LeNet, ResNet50 };
enum class DatasetId { Mnist, Cifar10, Fusion };
enum class TaskId { Digit, Object };

std::string to_string(Arch a);
std::string to_string(DatasetId d);
std::string to_string(TaskId t);
Arch arch_from_string(const std::string& s);
DatasetId dataset_from_string(const std::string& s);
TaskId task_from_string(const std::string& s);

inline constexpr int kInputChannels = 3;
inline constexpr int kInputSize = 32;
inline constexpr int kClassCount = 10;

// Ordered parameter tensors for one model instance. The order is the
// architecture's fixed layout and doubles as the checkpoint buffer order.
struct ModelParams {
    Arch arch;
    std::vector<Tensor> tensors;

    int64_t total_count() const;
    void set_requires_grad(bool on);
    void zero_grads();
};

int64_t param_count(Arch arch);

// Deterministic seed-derived initialization; the same (arch, seed) pair
// always yields bit-identical parameters. Kaiming-uniform fan-in weights,
// zero biases.
ModelParams build_model(Arch arch, uint32_t seed);
ModelParams build_fully_connected(uint32_t seed);
ModelParams build_lenet(uint32_t seed);

// batch: [N,3,32,32] in [0,1] -> logits [N,10]. Pure in the parameters.
Tensor forward(const ModelParams& params, const Tensor& batch);

// Deep copy (training mutates a private copy; built params stay pristine).
ModelParams clone(const ModelParams& params);

struct Checkpoint {
    uint32_t seed = 0;
    uint32_t epoch = 0;
    DatasetId dataset = DatasetId::Mnist;
    TaskId task = TaskId::Digit;
    ModelParams params;

    std::string id() const;  // e.g. "lenet_mnist_digit_s3_e10"
};

// Binary file: magic "RGCK", u32 version, u32 arch, u32 seed, u32 epoch,
// u32 dataset, u32 task, u64 count, then count little-endian float32.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& p);
Checkpoint load_checkpoint(const std::filesystem::path& p);

}  // namespace rgauge

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "rgauge/models.hpp"

namespace rgauge {

enum class Split { Train, Test };
enum class Interp { Bilinear, Nearest };

std::string to_string(Split s);

// Channel-major images (C,H,W per image), pixels in [0,1], labels 0..9.
struct LabeledImageSet {
    DatasetId id = DatasetId::Mnist;
    Split split = Split::Train;
    int64_t count = 0;
    int channels = 0, height = 0, width = 0;
    std::vector<float> pixels;
    std::vector<uint8_t> labels;

    int64_t image_numel() const {
        return int64_t{channels} * height * width;
    }
    std::span<const float> image(int64_t i) const {
        return {pixels.data() + i * image_numel(),
                static_cast<size_t>(image_numel())};
    }
};

// IDX files as published: big-endian headers, magic 2051 (images) and
// 2049 (labels), one byte per pixel mapped to [0,1] by /255.
LabeledImageSet load_mnist_idx(const std::filesystem::path& images_path,
                               const std::filesystem::path& labels_path,
                               Split split = Split::Train);

// One CIFAR-10 binary batch: records of 1 label byte + 3072 pixel bytes.
LabeledImageSet load_cifar10_file(const std::filesystem::path& path,
                                  Split split = Split::Train);
// data_batch_1.bin .. data_batch_5.bin concatenated (50000 images).
LabeledImageSet load_cifar10_train(const std::filesystem::path& dir);
// test_batch.bin (10000 images).
LabeledImageSet load_cifar10_test(const std::filesystem::path& dir);

// 1x28x28 -> 3x32x32: spatial resize then replicate the channel.
LabeledImageSet upscale_mnist(const LabeledImageSet& set,
                              Interp interp = Interp::Bilinear);

// F = alpha*M + (1-alpha)*C with alpha fixed at 0.5; the label comes from
// the MNIST operand for the digit task, the CIFAR-10 operand otherwise.
struct FusionSpec {
    float alpha = 0.5f;
    TaskId task = TaskId::Digit;
};

void validate(const FusionSpec& spec);
std::pair<std::vector<float>, uint8_t> fuse(std::span<const float> mnist_image,
                                            std::span<const float> cifar_image,
                                            uint8_t mnist_label,
                                            uint8_t cifar_label,
                                            const FusionSpec& spec);

// Deterministic permutation of 0..n-1 for one (seed, epoch) pair.
std::vector<int32_t> epoch_shuffle(uint64_t seed, int64_t epoch, int64_t n);

// Positional pairing of independently reshuffled MNIST and CIFAR-10
// orderings; one epoch covers min(n_mnist, n_cifar) pairs.
class FusionEpochStream {
public:
    FusionEpochStream(uint64_t mnist_seed, uint64_t cifar_seed)
        : mnist_seed_(mnist_seed), cifar_seed_(cifar_seed) {}

    struct EpochPairing {
        std::vector<int32_t> mnist_order;
        std::vector<int32_t> cifar_order;
        int64_t length = 0;  // pairs in this epoch
    };

    EpochPairing next_epoch(int64_t n_mnist, int64_t n_cifar);
    int64_t epochs_drawn() const { return epoch_; }

private:
    uint64_t mnist_seed_, cifar_seed_;
    int64_t epoch_ = 0;
};

// Cached tensor format: magic "RGDS", u32 version, u32 dataset, u32 split,
// u32 channels, u32 height, u32 width, u64 count, count label bytes,
// count*C*H*W little-endian float32.
void save_cached(const LabeledImageSet& set, const std::filesystem::path& p);
LabeledImageSet load_cached(const std::filesystem::path& p);

}  // namespace rgauge

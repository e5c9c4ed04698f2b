#include "rgauge/models.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

namespace rgauge {

namespace {

constexpr char kMagic[4] = {'R', 'G', 'C', 'K'};
constexpr uint32_t kVersion = 1;

// 3072 -> 7500 -> 10
constexpr int64_t kHidden = 7500;
constexpr int64_t kFlatInput =
    int64_t{kInputChannels} * kInputSize * kInputSize;

// Uniform in [0,1) derived from raw engine output so initialization is
// bit-identical across standard library implementations.
float next_uniform(std::mt19937& rng) {
    return static_cast<float>(rng() >> 8) * (1.0f / 16777216.0f);
}

Tensor kaiming_uniform(Shape shape, int64_t fan_in, std::mt19937& rng) {
    const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
    const int64_t n = shape_numel(shape);
    std::vector<float> data(static_cast<size_t>(n));
    for (float& v : data) v = (next_uniform(rng) * 2.0f - 1.0f) * bound;
    return Tensor::from_data(std::move(shape), std::move(data));
}

// ResNet50 with a 10-class head. Desk-scale training is out of scope; the
// id is registered so externally trained parameter buffers round-trip.
constexpr int64_t kResNet50Params = 23'528'522;

}  // namespace

std::string to_string(Arch a) {
    switch (a) {
        case Arch::FullyConnected: return "fully_connected";
        case Arch::LeNet: return "lenet";
        case Arch::ResNet50: return "resnet50";
    }
    throw std::logic_error("unknown architecture id");
}

std::string to_string(DatasetId d) {
    switch (d) {
        case DatasetId::Mnist: return "mnist";
        case DatasetId::Cifar10: return "cifar10";
        case DatasetId::Fusion: return "fusion";
    }
    throw std::logic_error("unknown dataset id");
}

std::string to_string(TaskId t) {
    return t == TaskId::Digit ? "digit" : "object";
}

Arch arch_from_string(const std::string& s) {
    if (s == "fully_connected") return Arch::FullyConnected;
    if (s == "lenet") return Arch::LeNet;
    if (s == "resnet50") return Arch::ResNet50;
    throw std::invalid_argument("unknown architecture \"" + s + "\"");
}

DatasetId dataset_from_string(const std::string& s) {
    if (s == "mnist") return DatasetId::Mnist;
    if (s == "cifar10") return DatasetId::Cifar10;
    if (s == "fusion") return DatasetId::Fusion;
    throw std::invalid_argument("unknown dataset \"" + s + "\"");
}

TaskId task_from_string(const std::string& s) {
    if (s == "digit") return TaskId::Digit;
    if (s == "object") return TaskId::Object;
    throw std::invalid_argument("unknown task \"" + s + "\"");
}

int64_t ModelParams::total_count() const {
    int64_t n = 0;
    for (const Tensor& t : tensors) n += t.numel();
    return n;
}

void ModelParams::set_requires_grad(bool on) {
    for (Tensor& t : tensors) t.set_requires_grad(on);
}

void ModelParams::zero_grads() {
    for (Tensor& t : tensors) t.zero_grad();
}

int64_t param_count(Arch arch) {
    switch (arch) {
        case Arch::FullyConnected:
            return kFlatInput * kHidden + kHidden + kHidden * kClassCount +
                   kClassCount;
        case Arch::LeNet:
            return (6 * 3 * 5 * 5 + 6) + (16 * 6 * 5 * 5 + 16) +
                   (400 * 120 + 120) + (120 * 84 + 84) +
                   (84 * kClassCount + kClassCount);
        case Arch::ResNet50:
            return kResNet50Params;
    }
    throw std::logic_error("unknown architecture id");
}

ModelParams build_fully_connected(uint32_t seed) {
    std::mt19937 rng(seed);
    ModelParams p;
    p.arch = Arch::FullyConnected;
    p.tensors.push_back(kaiming_uniform({kFlatInput, kHidden}, kFlatInput, rng));
    p.tensors.push_back(Tensor::zeros({kHidden}));
    p.tensors.push_back(kaiming_uniform({kHidden, kClassCount}, kHidden, rng));
    p.tensors.push_back(Tensor::zeros({kClassCount}));
    return p;
}

ModelParams build_lenet(uint32_t seed) {
    std::mt19937 rng(seed);
    ModelParams p;
    p.arch = Arch::LeNet;
    p.tensors.push_back(kaiming_uniform({6, 3, 5, 5}, 3 * 5 * 5, rng));
    p.tensors.push_back(Tensor::zeros({6}));
    p.tensors.push_back(kaiming_uniform({16, 6, 5, 5}, 6 * 5 * 5, rng));
    p.tensors.push_back(Tensor::zeros({16}));
    p.tensors.push_back(kaiming_uniform({400, 120}, 400, rng));
    p.tensors.push_back(Tensor::zeros({120}));
    p.tensors.push_back(kaiming_uniform({120, 84}, 120, rng));
    p.tensors.push_back(Tensor::zeros({84}));
    p.tensors.push_back(kaiming_uniform({84, kClassCount}, 84, rng));
    p.tensors.push_back(Tensor::zeros({kClassCount}));
    return p;
}

ModelParams build_model(Arch arch, uint32_t seed) {
    switch (arch) {
        case Arch::FullyConnected: return build_fully_connected(seed);
        case Arch::LeNet: return build_lenet(seed);
        case Arch::ResNet50:
            throw std::invalid_argument(
                "resnet50: seed initialization not supported at desk scale; "
                "load an externally trained checkpoint instead");
    }
    throw std::logic_error("unknown architecture id");
}

Tensor forward(const ModelParams& params, const Tensor& batch) {
    if (batch.shape().size() != 4 || batch.dim(1) != kInputChannels ||
        batch.dim(2) != kInputSize || batch.dim(3) != kInputSize)
        throw std::invalid_argument("forward: expected [N,3,32,32] batch, got " +
                                    shape_str(batch.shape()));
    const int64_t n = batch.dim(0);
    switch (params.arch) {
        case Arch::FullyConnected: {
            const auto& t = params.tensors;
            Tensor x = reshape(batch, {n, kFlatInput});
            Tensor h = relu(add(matmul(x, t[0]), t[1]));
            return add(matmul(h, t[2]), t[3]);
        }
        case Arch::LeNet: {
            const auto& t = params.tensors;
            Tensor x = relu(conv2d(batch, t[0], t[1]));   // [N,6,28,28]
            x = max_pool2d(x);                            // [N,6,14,14]
            x = relu(conv2d(x, t[2], t[3]));              // [N,16,10,10]
            x = max_pool2d(x);                            // [N,16,5,5]
            x = reshape(x, {n, 400});
            x = relu(add(matmul(x, t[4]), t[5]));
            x = relu(add(matmul(x, t[6]), t[7]));
            return add(matmul(x, t[8]), t[9]);
        }
        case Arch::ResNet50:
            throw std::invalid_argument(
                "resnet50: forward requires an external inference path");
    }
    throw std::logic_error("unknown architecture id");
}

ModelParams clone(const ModelParams& params) {
    ModelParams out;
    out.arch = params.arch;
    out.tensors.reserve(params.tensors.size());
    for (const Tensor& t : params.tensors)
        out.tensors.push_back(Tensor::from_data(
            t.shape(), std::vector<float>(t.data().begin(), t.data().end())));
    return out;
}

std::string Checkpoint::id() const {
    return to_string(params.arch) + "_" + to_string(dataset) + "_" +
           to_string(task) + "_s" + std::to_string(seed) + "_e" +
           std::to_string(epoch);
}

namespace {

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, uint64_t v) {
    write_u32(os, static_cast<uint32_t>(v));
    write_u32(os, static_cast<uint32_t>(v >> 32));
}

uint32_t read_u32(std::istream& is, const std::string& what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error("checkpoint: truncated reading " + what);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) |
           (static_cast<uint32_t>(b[3]) << 24);
}

uint64_t read_u64(std::istream& is, const std::string& what) {
    const uint64_t lo = read_u32(is, what);
    const uint64_t hi = read_u32(is, what);
    return lo | (hi << 32);
}

// Parameter tensor shapes for rebuilding from a flat buffer.
std::vector<Shape> layout_for(Arch arch) {
    switch (arch) {
        case Arch::FullyConnected:
            return {{kFlatInput, kHidden}, {kHidden},
                    {kHidden, kClassCount}, {kClassCount}};
        case Arch::LeNet:
            return {{6, 3, 5, 5}, {6}, {16, 6, 5, 5}, {16}, {400, 120},
                    {120}, {120, 84}, {84}, {84, kClassCount}, {kClassCount}};
        case Arch::ResNet50:
            return {{kResNet50Params}};  // opaque flat buffer
    }
    throw std::logic_error("unknown architecture id");
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& p) {
    if (ckpt.params.total_count() != param_count(ckpt.params.arch))
        throw std::logic_error("checkpoint: parameter count " +
                               std::to_string(ckpt.params.total_count()) +
                               " does not match " +
                               to_string(ckpt.params.arch));
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + p.string());
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    write_u32(os, static_cast<uint32_t>(ckpt.params.arch));
    write_u32(os, ckpt.seed);
    write_u32(os, ckpt.epoch);
    write_u32(os, static_cast<uint32_t>(ckpt.dataset));
    write_u32(os, static_cast<uint32_t>(ckpt.task));
    write_u64(os, static_cast<uint64_t>(ckpt.params.total_count()));
    for (const Tensor& t : ckpt.params.tensors) {
        static_assert(sizeof(float) == 4);
        // float32 payload is little-endian; x86/arm64 hosts write directly
        os.write(reinterpret_cast<const char*>(t.data().data()),
                 static_cast<std::streamsize>(t.numel() * 4));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " +
                                      p.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + p.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + p.string());
    const uint32_t version = read_u32(is, "version");
    if (version != kVersion)
        throw std::runtime_error("checkpoint: unsupported version " +
                                 std::to_string(version));
    Checkpoint ckpt;
    const uint32_t arch_raw = read_u32(is, "architecture");
    if (arch_raw > static_cast<uint32_t>(Arch::ResNet50))
        throw std::runtime_error("checkpoint: bad architecture id " +
                                 std::to_string(arch_raw));
    const Arch arch = static_cast<Arch>(arch_raw);
    ckpt.seed = read_u32(is, "seed");
    ckpt.epoch = read_u32(is, "epoch");
    const uint32_t ds = read_u32(is, "dataset");
    if (ds > static_cast<uint32_t>(DatasetId::Fusion))
        throw std::runtime_error("checkpoint: bad dataset id");
    ckpt.dataset = static_cast<DatasetId>(ds);
    const uint32_t task = read_u32(is, "task");
    if (task > static_cast<uint32_t>(TaskId::Object))
        throw std::runtime_error("checkpoint: bad task id");
    ckpt.task = static_cast<TaskId>(task);
    const uint64_t count = read_u64(is, "count");
    if (count != static_cast<uint64_t>(param_count(arch)))
        throw std::runtime_error(
            "checkpoint: parameter count " + std::to_string(count) +
            " does not match " + to_string(arch) + " (" +
            std::to_string(param_count(arch)) + ")");
    ckpt.params.arch = arch;
    for (const Shape& shape : layout_for(arch)) {
        std::vector<float> data(static_cast<size_t>(shape_numel(shape)));
        if (!is.read(reinterpret_cast<char*>(data.data()),
                     static_cast<std::streamsize>(data.size() * 4)))
            throw std::runtime_error("checkpoint: truncated parameter data in " +
                                     p.string());
        ckpt.params.tensors.push_back(
            Tensor::from_data(shape, std::move(data)));
    }
    return ckpt;
}

}  // namespace rgauge

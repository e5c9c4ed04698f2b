#include "rgauge/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

namespace rgauge {

namespace {

constexpr uint32_t kIdxImagesMagic = 2051;
constexpr uint32_t kIdxLabelsMagic = 2049;
constexpr int64_t kCifarRecordBytes = 3073;  // 1 label + 3*32*32 pixels

std::vector<unsigned char> read_file(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary | std::ios::ate);
    if (!is) throw std::runtime_error("cannot open " + p.string());
    const auto size = is.tellg();
    is.seekg(0);
    std::vector<unsigned char> bytes(static_cast<size_t>(size));
    if (!is.read(reinterpret_cast<char*>(bytes.data()), size))
        throw std::runtime_error("read failed for " + p.string());
    return bytes;
}

uint32_t be32(const std::vector<unsigned char>& b, size_t at,
              const std::filesystem::path& p) {
    if (at + 4 > b.size())
        throw std::runtime_error(p.string() + ": truncated at byte offset " +
                                 std::to_string(at));
    return (static_cast<uint32_t>(b[at]) << 24) |
           (static_cast<uint32_t>(b[at + 1]) << 16) |
           (static_cast<uint32_t>(b[at + 2]) << 8) |
           static_cast<uint32_t>(b[at + 3]);
}

// splitmix64 finalizer; decorrelates (seed, epoch) pairs into engine seeds.
uint64_t mix(uint64_t a, uint64_t b) {
    uint64_t z = a * 0x9E3779B97F4A7C15ull + b + 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace

std::string to_string(Split s) { return s == Split::Train ? "train" : "test"; }

LabeledImageSet load_mnist_idx(const std::filesystem::path& images_path,
                               const std::filesystem::path& labels_path,
                               Split split) {
    const auto img = read_file(images_path);
    const uint32_t img_magic = be32(img, 0, images_path);
    if (img_magic != kIdxImagesMagic)
        throw std::runtime_error(images_path.string() +
                                 ": bad IDX magic at byte offset 0: got " +
                                 std::to_string(img_magic) + ", expected " +
                                 std::to_string(kIdxImagesMagic));
    const int64_t n = be32(img, 4, images_path);
    const int64_t rows = be32(img, 8, images_path);
    const int64_t cols = be32(img, 12, images_path);
    const size_t need = 16 + static_cast<size_t>(n * rows * cols);
    if (img.size() < need)
        throw std::runtime_error(
            images_path.string() + ": truncated, have " +
            std::to_string(img.size()) + " bytes, need " +
            std::to_string(need));

    const auto lab = read_file(labels_path);
    const uint32_t lab_magic = be32(lab, 0, labels_path);
    if (lab_magic != kIdxLabelsMagic)
        throw std::runtime_error(labels_path.string() +
                                 ": bad IDX magic at byte offset 0: got " +
                                 std::to_string(lab_magic) + ", expected " +
                                 std::to_string(kIdxLabelsMagic));
    const int64_t n_labels = be32(lab, 4, labels_path);
    if (n_labels != n)
        throw std::runtime_error("IDX count mismatch: " +
                                 std::to_string(n) + " images in " +
                                 images_path.string() + " vs " +
                                 std::to_string(n_labels) + " labels in " +
                                 labels_path.string());
    if (lab.size() < 8 + static_cast<size_t>(n))
        throw std::runtime_error(labels_path.string() + ": truncated, have " +
                                 std::to_string(lab.size()) + " bytes, need " +
                                 std::to_string(8 + n));

    LabeledImageSet set;
    set.id = DatasetId::Mnist;
    set.split = split;
    set.count = n;
    set.channels = 1;
    set.height = static_cast<int>(rows);
    set.width = static_cast<int>(cols);
    set.pixels.resize(static_cast<size_t>(n * rows * cols));
    for (size_t i = 0; i < set.pixels.size(); ++i)
        set.pixels[i] = static_cast<float>(img[16 + i]) / 255.0f;
    set.labels.assign(lab.begin() + 8, lab.begin() + 8 + n);
    for (int64_t i = 0; i < n; ++i)
        if (set.labels[static_cast<size_t>(i)] > 9)
            throw std::runtime_error(labels_path.string() + ": label " +
                                     std::to_string(set.labels[i]) +
                                     " > 9 at record " + std::to_string(i));
    return set;
}

LabeledImageSet load_cifar10_file(const std::filesystem::path& path,
                                  Split split) {
    const auto bytes = read_file(path);
    if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0)
        throw std::runtime_error(
            path.string() + ": size " + std::to_string(bytes.size()) +
            " is not a positive multiple of the " +
            std::to_string(kCifarRecordBytes) + "-byte record length");
    const int64_t n = static_cast<int64_t>(bytes.size()) / kCifarRecordBytes;
    LabeledImageSet set;
    set.id = DatasetId::Cifar10;
    set.split = split;
    set.count = n;
    set.channels = 3;
    set.height = 32;
    set.width = 32;
    set.pixels.resize(static_cast<size_t>(n) * 3072);
    set.labels.resize(static_cast<size_t>(n));
    for (int64_t r = 0; r < n; ++r) {
        const size_t off = static_cast<size_t>(r * kCifarRecordBytes);
        const uint8_t label = bytes[off];
        if (label > 9)
            throw std::runtime_error(path.string() + ": label byte " +
                                     std::to_string(label) + " > 9 at record " +
                                     std::to_string(r) + " (byte offset " +
                                     std::to_string(off) + ")");
        set.labels[static_cast<size_t>(r)] = label;
        for (size_t i = 0; i < 3072; ++i)
            set.pixels[static_cast<size_t>(r) * 3072 + i] =
                static_cast<float>(bytes[off + 1 + i]) / 255.0f;
    }
    return set;
}

namespace {

LabeledImageSet concat_cifar(const std::vector<std::filesystem::path>& paths,
                             Split split, int64_t expected_total) {
    LabeledImageSet out;
    for (const auto& p : paths) {
        LabeledImageSet part = load_cifar10_file(p, split);
        if (out.count == 0) {
            out = std::move(part);
        } else {
            out.count += part.count;
            out.pixels.insert(out.pixels.end(), part.pixels.begin(),
                              part.pixels.end());
            out.labels.insert(out.labels.end(), part.labels.begin(),
                              part.labels.end());
        }
    }
    if (out.count != expected_total)
        throw std::runtime_error("cifar10 " + to_string(split) + " split has " +
                                 std::to_string(out.count) + " records, expected " +
                                 std::to_string(expected_total));
    return out;
}

}  // namespace

LabeledImageSet load_cifar10_train(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> paths;
    for (int i = 1; i <= 5; ++i)
        paths.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
    return concat_cifar(paths, Split::Train, 50000);
}

LabeledImageSet load_cifar10_test(const std::filesystem::path& dir) {
    return concat_cifar({dir / "test_batch.bin"}, Split::Test, 10000);
}

LabeledImageSet upscale_mnist(const LabeledImageSet& set, Interp interp) {
    if (set.channels != 1)
        throw std::invalid_argument("upscale_mnist: expected 1-channel input, got " +
                                    std::to_string(set.channels));
    const int in_h = set.height, in_w = set.width;
    const int out_h = kInputSize, out_w = kInputSize;
    LabeledImageSet out;
    out.id = set.id;
    out.split = set.split;
    out.count = set.count;
    out.channels = 3;
    out.height = out_h;
    out.width = out_w;
    out.labels = set.labels;
    out.pixels.resize(static_cast<size_t>(set.count) * 3 * out_h * out_w);

    std::vector<float> plane(static_cast<size_t>(out_h) * out_w);
    for (int64_t img = 0; img < set.count; ++img) {
        const float* src = set.pixels.data() + img * in_h * in_w;
        for (int y = 0; y < out_h; ++y) {
            for (int x = 0; x < out_w; ++x) {
                float v;
                if (interp == Interp::Nearest) {
                    const int sy = std::min<int>(
                        in_h - 1, static_cast<int>((y + 0.5f) * in_h / out_h));
                    const int sx = std::min<int>(
                        in_w - 1, static_cast<int>((x + 0.5f) * in_w / out_w));
                    v = src[sy * in_w + sx];
                } else {
                    // pixel-center mapping; clamped at borders
                    const float fy = std::clamp(
                        (y + 0.5f) * in_h / out_h - 0.5f, 0.0f,
                        static_cast<float>(in_h - 1));
                    const float fx = std::clamp(
                        (x + 0.5f) * in_w / out_w - 0.5f, 0.0f,
                        static_cast<float>(in_w - 1));
                    const int y0 = static_cast<int>(fy);
                    const int x0 = static_cast<int>(fx);
                    const int y1 = std::min(y0 + 1, in_h - 1);
                    const int x1 = std::min(x0 + 1, in_w - 1);
                    const float wy = fy - y0, wx = fx - x0;
                    v = (1 - wy) * ((1 - wx) * src[y0 * in_w + x0] +
                                    wx * src[y0 * in_w + x1]) +
                        wy * ((1 - wx) * src[y1 * in_w + x0] +
                              wx * src[y1 * in_w + x1]);
                }
                plane[static_cast<size_t>(y) * out_w + x] = v;
            }
        }
        for (int c = 0; c < 3; ++c)
            std::copy(plane.begin(), plane.end(),
                      out.pixels.begin() +
                          (img * 3 + c) * static_cast<int64_t>(out_h) * out_w);
    }
    return out;
}

void validate(const FusionSpec& spec) {
    if (spec.alpha != 0.5f)
        throw std::invalid_argument("fusion: alpha is fixed at 0.5, got " +
                                    std::to_string(spec.alpha));
}

std::pair<std::vector<float>, uint8_t> fuse(std::span<const float> mnist_image,
                                            std::span<const float> cifar_image,
                                            uint8_t mnist_label,
                                            uint8_t cifar_label,
                                            const FusionSpec& spec) {
    validate(spec);
    if (mnist_image.size() != cifar_image.size())
        throw std::invalid_argument(
            "fusion: operand sizes differ: " +
            std::to_string(mnist_image.size()) + " vs " +
            std::to_string(cifar_image.size()));
    std::vector<float> fused(mnist_image.size());
    for (size_t i = 0; i < fused.size(); ++i)
        fused[i] = spec.alpha * mnist_image[i] +
                   (1.0f - spec.alpha) * cifar_image[i];
    return {std::move(fused),
            spec.task == TaskId::Digit ? mnist_label : cifar_label};
}

std::vector<int32_t> epoch_shuffle(uint64_t seed, int64_t epoch, int64_t n) {
    std::vector<int32_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) order[i] = static_cast<int32_t>(i);
    std::mt19937_64 rng(mix(seed, static_cast<uint64_t>(epoch)));
    // Fisher-Yates with hand-rolled bounded draws, for cross-platform
    // bit-reproducibility
    for (int64_t i = n - 1; i > 0; --i) {
        const uint64_t bound = static_cast<uint64_t>(i) + 1;
        uint64_t j = rng() % bound;
        std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    return order;
}

FusionEpochStream::EpochPairing FusionEpochStream::next_epoch(int64_t n_mnist,
                                                              int64_t n_cifar) {
    EpochPairing pairing;
    pairing.mnist_order = epoch_shuffle(mnist_seed_, epoch_, n_mnist);
    pairing.cifar_order = epoch_shuffle(cifar_seed_, epoch_, n_cifar);
    pairing.length = std::min(n_mnist, n_cifar);
    ++epoch_;
    return pairing;
}

namespace {

constexpr char kCacheMagic[4] = {'R', 'G', 'D', 'S'};
constexpr uint32_t kCacheVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is, const std::string& what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error("cached set: truncated reading " + what);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) |
           (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void save_cached(const LabeledImageSet& set, const std::filesystem::path& p) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cached set: cannot open " + p.string());
    os.write(kCacheMagic, 4);
    put_u32(os, kCacheVersion);
    put_u32(os, static_cast<uint32_t>(set.id));
    put_u32(os, static_cast<uint32_t>(set.split));
    put_u32(os, static_cast<uint32_t>(set.channels));
    put_u32(os, static_cast<uint32_t>(set.height));
    put_u32(os, static_cast<uint32_t>(set.width));
    put_u32(os, static_cast<uint32_t>(set.count));
    put_u32(os, static_cast<uint32_t>(set.count >> 32));
    os.write(reinterpret_cast<const char*>(set.labels.data()),
             static_cast<std::streamsize>(set.labels.size()));
    os.write(reinterpret_cast<const char*>(set.pixels.data()),
             static_cast<std::streamsize>(set.pixels.size() * 4));
    if (!os) throw std::runtime_error("cached set: write failed for " +
                                      p.string());
}

LabeledImageSet load_cached(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw std::runtime_error("cached set: cannot open " + p.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kCacheMagic, 4) != 0)
        throw std::runtime_error("cached set: bad magic in " + p.string());
    const uint32_t version = get_u32(is, "version");
    if (version != kCacheVersion)
        throw std::runtime_error("cached set: unsupported version " +
                                 std::to_string(version));
    LabeledImageSet set;
    set.id = static_cast<DatasetId>(get_u32(is, "dataset"));
    set.split = static_cast<Split>(get_u32(is, "split"));
    set.channels = static_cast<int>(get_u32(is, "channels"));
    set.height = static_cast<int>(get_u32(is, "height"));
    set.width = static_cast<int>(get_u32(is, "width"));
    const uint64_t lo = get_u32(is, "count");
    const uint64_t hi = get_u32(is, "count");
    set.count = static_cast<int64_t>(lo | (hi << 32));
    set.labels.resize(static_cast<size_t>(set.count));
    if (!is.read(reinterpret_cast<char*>(set.labels.data()),
                 static_cast<std::streamsize>(set.labels.size())))
        throw std::runtime_error("cached set: truncated labels in " +
                                 p.string());
    set.pixels.resize(static_cast<size_t>(set.count * set.image_numel()));
    if (!is.read(reinterpret_cast<char*>(set.pixels.data()),
                 static_cast<std::streamsize>(set.pixels.size() * 4)))
        throw std::runtime_error("cached set: truncated pixel data in " +
                                 p.string());
    return set;
}

}  // namespace rgauge

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "rgauge/models.hpp"

using namespace rgauge;

namespace {

Tensor random_batch(int64_t n, uint32_t seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    std::vector<float> pix(static_cast<size_t>(n) * 3 * 32 * 32);
    for (float& v : pix) v = dist(rng);
    return Tensor::from_data({n, 3, 32, 32}, std::move(pix));
}

bool params_equal(const ModelParams& a, const ModelParams& b) {
    if (a.tensors.size() != b.tensors.size()) return false;
    for (size_t i = 0; i < a.tensors.size(); ++i) {
        const auto da = a.tensors[i].data();
        const auto db = b.tensors[i].data();
        if (da.size() != db.size()) return false;
        for (size_t j = 0; j < da.size(); ++j)
            if (da[j] != db[j]) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("fully connected parameter count") {
    // 3072*7500 + 7500 + 7500*10 + 10
    CHECK(param_count(Arch::FullyConnected) == 23122510);
    CHECK(build_fully_connected(1).total_count() == 23122510);
}

TEST_CASE("lenet parameter count matches the hand-computed layout sum") {
    // conv(3->6,5x5)+b, conv(6->16,5x5)+b, fc400x120+b, fc120x84+b, fc84x10+b
    const int64_t expected = (6 * 3 * 5 * 5 + 6) + (16 * 6 * 5 * 5 + 16) +
                             (400 * 120 + 120) + (120 * 84 + 84) +
                             (84 * 10 + 10);
    CHECK(expected == 62006);
    CHECK(param_count(Arch::LeNet) == expected);
    CHECK(build_lenet(1).total_count() == expected);
}

TEST_CASE("same seed gives bit-identical parameters, different seeds differ") {
    for (Arch arch : {Arch::LeNet, Arch::FullyConnected}) {
        const auto a = build_model(arch, 42);
        const auto b = build_model(arch, 42);
        const auto c = build_model(arch, 43);
        CHECK(params_equal(a, b));
        CHECK(!params_equal(a, c));
    }
}

TEST_CASE("zero image produces finite logits") {
    const auto params = build_lenet(3);
    Tensor batch = Tensor::zeros({1, 3, 32, 32});
    Tensor logits = forward(params, batch);
    REQUIRE(logits.shape() == Shape{1, 10});
    for (float v : logits.data()) CHECK(std::isfinite(v));
}

TEST_CASE("row 0 logits do not depend on batch size") {
    for (Arch arch : {Arch::LeNet, Arch::FullyConnected}) {
        const auto params = build_model(arch, 5);
        Tensor batch8 = random_batch(8, 99);
        std::vector<float> first(batch8.data().begin(),
                                 batch8.data().begin() + 3 * 32 * 32);
        Tensor batch1 = Tensor::from_data({1, 3, 32, 32}, first);
        Tensor l8 = forward(params, batch8);
        Tensor l1 = forward(params, batch1);
        for (int j = 0; j < 10; ++j)
            CHECK(l1.data()[j] == doctest::Approx(l8.data()[j]).epsilon(1e-5));
    }
}

TEST_CASE("forward is deterministic and pure") {
    const auto params = build_lenet(7);
    const auto snapshot = clone(params);
    Tensor batch = random_batch(4, 123);
    Tensor a = forward(params, batch);
    Tensor b = forward(params, batch);
    for (size_t i = 0; i < a.data().size(); ++i)
        CHECK(a.data()[i] == b.data()[i]);
    CHECK(params_equal(params, snapshot));
}

TEST_CASE("untrained model sits at chance on a balanced set") {
    const int64_t n = 2000;
    for (uint32_t seed : {1u, 2u, 3u}) {
        const auto params = build_lenet(seed);
        Tensor batch = random_batch(n, 1000 + seed);
        Tensor logits = forward(params, batch);
        const auto pred = argmax_rows(logits);
        int64_t correct = 0;
        for (int64_t i = 0; i < n; ++i)
            if (pred[static_cast<size_t>(i)] == static_cast<int>(i % 10))
                ++correct;
        const double acc = static_cast<double>(correct) / n;
        CHECK(acc > 0.05);
        CHECK(acc < 0.15);
    }
}

TEST_CASE("wrong input shape is rejected") {
    const auto params = build_lenet(1);
    CHECK_THROWS_AS(forward(params, Tensor::zeros({1, 1, 28, 28})),
                    std::invalid_argument);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
    Checkpoint ckpt;
    ckpt.seed = 9;
    ckpt.epoch = 25;
    ckpt.dataset = DatasetId::Fusion;
    ckpt.task = TaskId::Object;
    ckpt.params = build_lenet(9);

    const auto dir = std::filesystem::temp_directory_path() / "rgauge_models";
    std::filesystem::create_directories(dir);
    const auto path = dir / "ck.rgck";
    save_checkpoint(ckpt, path);
    const auto loaded = load_checkpoint(path);
    CHECK(loaded.seed == 9);
    CHECK(loaded.epoch == 25);
    CHECK(loaded.dataset == DatasetId::Fusion);
    CHECK(loaded.task == TaskId::Object);
    CHECK(params_equal(loaded.params, ckpt.params));
    CHECK(loaded.id() == "lenet_fusion_object_s9_e25");
    std::filesystem::remove_all(dir);
}

TEST_CASE("corrupt checkpoints are rejected") {
    const auto dir = std::filesystem::temp_directory_path() / "rgauge_models2";
    std::filesystem::create_directories(dir);
    const auto path = dir / "bad.rgck";
    {
        std::ofstream os(path, std::ios::binary);
        os << "NOPE then some bytes";
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("magic"),
                         std::runtime_error);
    {
        // valid magic, then truncation
        std::ofstream os(path, std::ios::binary);
        os << "RGCK";
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("truncated"),
                         std::runtime_error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("resnet50 is registered but has no desk-scale build") {
    CHECK(param_count(Arch::ResNet50) > 20'000'000);
    CHECK(arch_from_string("resnet50") == Arch::ResNet50);
    CHECK_THROWS_AS(build_model(Arch::ResNet50, 1), std::invalid_argument);
}

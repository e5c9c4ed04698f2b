#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "grad_check.hpp"
#include "rgauge/tensor.hpp"

using namespace rgauge;
using rgauge::testing::check_gradients;
using rgauge::testing::random_values;

TEST_CASE("relu clamps negatives") {
    Tensor x = Tensor::from_data({3}, {-1.0f, 0.0f, 2.0f});
    Tensor y = relu(x);
    CHECK(y.data()[0] == 0.0f);
    CHECK(y.data()[1] == 0.0f);
    CHECK(y.data()[2] == 2.0f);
}

TEST_CASE("matmul by identity is identity") {
    std::mt19937 rng(7);
    Tensor a = Tensor::from_data({3, 3}, random_values(rng, 9));
    std::vector<float> eye(9, 0.0f);
    eye[0] = eye[4] = eye[8] = 1.0f;
    Tensor i3 = Tensor::from_data({3, 3}, eye);
    Tensor out = matmul(i3, a);
    for (size_t i = 0; i < 9; ++i) CHECK(out.data()[i] == a.data()[i]);
}

TEST_CASE("uniform logits give ln(10) cross-entropy") {
    Tensor logits = Tensor::zeros({1, 10});
    for (int label = 0; label < 10; label += 3) {
        Tensor loss = softmax_cross_entropy(logits, {label});
        CHECK(loss.item() == doctest::Approx(std::log(10.0)).epsilon(1e-6));
    }
}

TEST_CASE("backward of sum(x*x) is 2x") {
    Tensor x = Tensor::from_data({3}, {1.0f, 2.0f, 3.0f}, true);
    Tensor loss = sum(mul(x, x));
    backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(2.0f));
    CHECK(x.grad()[1] == doctest::Approx(4.0f));
    CHECK(x.grad()[2] == doctest::Approx(6.0f));
}

TEST_CASE("loss independent of a tensor leaves its grad zero") {
    Tensor x = Tensor::from_data({2}, {1.0f, 2.0f}, true);
    Tensor y = Tensor::from_data({2}, {3.0f, 4.0f}, true);
    Tensor loss = sum(mul(y, y));
    backward(loss);
    CHECK(!x.has_grad());  // never touched => gradient is zero
    CHECK(y.has_grad());
}

TEST_CASE("matmul chain gradients match finite differences") {
    std::mt19937 rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<Tensor> leaves = {
            Tensor::from_data({3, 4}, random_values(rng, 12)),
            Tensor::from_data({4, 2}, random_values(rng, 8)),
            Tensor::from_data({2, 3}, random_values(rng, 6)),
        };
        auto res = check_gradients(leaves, [&] {
            Tensor prod = matmul(matmul(leaves[0], leaves[1]), leaves[2]);
            return sum(mul(prod, prod));
        });
        CHECK_MESSAGE(res.ok, res.detail);
    }
}

TEST_CASE("conv2d gradients match finite differences") {
    std::mt19937 rng(13);
    for (int trial = 0; trial < 3; ++trial) {
        std::vector<Tensor> leaves = {
            Tensor::from_data({2, 2, 4, 4}, random_values(rng, 64)),
            Tensor::from_data({3, 2, 3, 3}, random_values(rng, 54)),
            Tensor::from_data({3}, random_values(rng, 3)),
        };
        const int stride = trial == 2 ? 2 : 1;
        const int padding = trial == 1 ? 1 : 0;
        // quadratic loss: central differences are exact up to rounding, so a
        // larger step only reduces float32 cancellation error
        auto res = check_gradients(
            leaves,
            [&] {
                Tensor y =
                    conv2d(leaves[0], leaves[1], leaves[2], stride, padding);
                return sum(mul(y, y));
            },
            /*step=*/1e-2f);
        CHECK_MESSAGE(res.ok, res.detail);
    }
}

TEST_CASE("relu gradient away from the kink matches finite differences") {
    std::mt19937 rng(17);
    std::vector<Tensor> leaves = {Tensor::from_data(
        {8}, random_values(rng, 8, -1.0f, 1.0f, /*exclusion=*/1e-2f))};
    auto res = check_gradients(leaves, [&] {
        Tensor y = relu(leaves[0]);
        return sum(mul(y, y));
    });
    CHECK_MESSAGE(res.ok, res.detail);
}

TEST_CASE("max_pool2d gradient matches finite differences") {
    // values spaced well apart so the step cannot flip an argmax
    std::vector<float> vals(16);
    std::iota(vals.begin(), vals.end(), 0.0f);
    for (float& v : vals) v *= 0.05f;
    std::mt19937 rng(19);
    std::shuffle(vals.begin(), vals.end(), rng);
    std::vector<Tensor> leaves = {Tensor::from_data({1, 1, 4, 4}, vals)};
    auto res = check_gradients(leaves, [&] {
        Tensor y = max_pool2d(leaves[0]);
        return sum(mul(y, y));
    });
    CHECK_MESSAGE(res.ok, res.detail);
}

TEST_CASE("softmax cross-entropy gradient matches finite differences") {
    std::mt19937 rng(23);
    std::vector<Tensor> leaves = {
        Tensor::from_data({4, 5}, random_values(rng, 20))};
    const std::vector<int> labels = {0, 3, 4, 1};
    auto res = check_gradients(leaves, [&] {
        return softmax_cross_entropy(leaves[0], labels);
    });
    CHECK_MESSAGE(res.ok, res.detail);
}

TEST_CASE("bias add and scale gradients match finite differences") {
    std::mt19937 rng(29);
    std::vector<Tensor> leaves = {
        Tensor::from_data({3, 4}, random_values(rng, 12)),
        Tensor::from_data({4}, random_values(rng, 4)),
    };
    auto res = check_gradients(leaves, [&] {
        Tensor y = scale(add(leaves[0], leaves[1]), 0.7f);
        return sum(mul(y, y));
    });
    CHECK_MESSAGE(res.ok, res.detail);
}

TEST_CASE("forward is bit-identical with and without grad recording") {
    std::mt19937 rng(31);
    auto xv = random_values(rng, 24);
    auto wv = random_values(rng, 18);
    Tensor x1 = Tensor::from_data({4, 6}, xv);
    Tensor w1 = Tensor::from_data({6, 3}, wv);
    Tensor x2 = Tensor::from_data({4, 6}, xv, true);
    Tensor w2 = Tensor::from_data({6, 3}, wv, true);
    Tensor y1 = relu(matmul(x1, w1));
    Tensor y2 = relu(matmul(x2, w2));
    for (size_t i = 0; i < 12; ++i) CHECK(y1.data()[i] == y2.data()[i]);
    Tensor loss = sum(y2);
    backward(loss);  // leave the tape clean
}

TEST_CASE("backward visits each tape node exactly once") {
    Tensor x = Tensor::from_data({4}, {0.5f, 1.5f, -0.5f, 2.0f}, true);
    Tensor a = scale(x, 2.0f);
    Tensor b = mul(a, a);
    Tensor loss = sum(b);
    CHECK(Tape::active().size() == 3);
    const size_t visited = backward(loss);
    CHECK(visited == 3);
    CHECK(Tape::active().empty());
}

TEST_CASE("fan-out accumulates both paths") {
    Tensor x = Tensor::from_data({1}, {3.0f}, true);
    Tensor loss = sum(add(mul(x, x), scale(x, 5.0f)));  // x^2 + 5x
    backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(11.0f));  // 2*3 + 5
}

TEST_CASE("shape mismatches report both shapes") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4, 5});
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2,3]"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("[4,5]"),
                         std::invalid_argument);
}

TEST_CASE("backward rejects non-scalar loss") {
    Tensor x = Tensor::from_data({2}, {1.0f, 2.0f}, true);
    Tensor y = mul(x, x);
    CHECK_THROWS_AS(backward(y), std::invalid_argument);
    Tape::active().clear();
}

TEST_CASE("sgd: zero learning rate leaves parameters unchanged") {
    Tensor p = Tensor::from_data({2}, {1.0f, -2.0f}, true);
    Tensor loss = sum(mul(p, p));
    backward(loss);
    std::vector<Tensor> params = {p};
    SgdState state;
    sgd_step(params, state, 0.0f, 0.9f, 5e-4f);
    CHECK(p.data()[0] == 1.0f);
    CHECK(p.data()[1] == -2.0f);
}

TEST_CASE("sgd: vanilla step arithmetic") {
    Tensor p = Tensor::from_data({1}, {1.0f}, true);
    Tensor loss = scale(p, 2.0f);  // grad = 2
    backward(loss);
    std::vector<Tensor> params = {p};
    SgdState state;
    sgd_step(params, state, 0.1f, 0.0f, 0.0f);
    CHECK(p.data()[0] == doctest::Approx(0.8f));
}

TEST_CASE("sgd: momentum recurrence matches a scalar hand-unroll") {
    // v1 = g1 + wd*p0;           p1 = p0 - lr*v1
    // v2 = m*v1 + g2 + wd*p1;    p2 = p1 - lr*v2
    const float lr = 0.1f, m = 0.9f, wd = 0.01f;
    const float p0 = 1.0f;
    Tensor p = Tensor::from_data({1}, {p0}, true);
    std::vector<Tensor> params = {p};
    SgdState state;

    auto step = [&](float) {
        Tensor loss = scale(mul(p, p), 1.5f);  // grad = 3p
        backward(loss);
        sgd_step(params, state, lr, m, wd);
    };
    float hp = p0, hv = 0.0f;
    for (int i = 0; i < 2; ++i) {
        step(0.0f);
        const float g = 3.0f * hp;
        hv = m * hv + (g + wd * hp);
        hp = hp - lr * hv;
        CHECK(p.data()[0] == doctest::Approx(hp).epsilon(1e-6));
    }
}

TEST_CASE("sgd rejects parameters without grads") {
    Tensor p = Tensor::from_data({1}, {1.0f}, true);
    std::vector<Tensor> params = {p};
    SgdState state;
    CHECK_THROWS_AS(sgd_step(params, state, 0.1f, 0.9f, 0.0f),
                    std::logic_error);
}

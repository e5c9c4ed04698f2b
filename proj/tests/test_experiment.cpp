#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "rgauge/experiment.hpp"
#include "rgauge/plot.hpp"

using namespace rgauge;

namespace {

namespace fs = std::filesystem;

// Ten trivially separable classes: a bright 3-row band at a class-specific
// height over a noisy background. Both LeNet and the MLP learn this in a
// couple of epochs.
LabeledImageSet banded_set(int64_t n, uint32_t seed,
                           DatasetId id = DatasetId::Mnist,
                           Split split = Split::Train) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> noise(0.0f, 0.2f);
    LabeledImageSet set;
    set.id = id;
    set.split = split;
    set.count = n;
    set.channels = 3;
    set.height = set.width = 32;
    set.pixels.resize(static_cast<size_t>(n) * 3 * 32 * 32);
    for (int64_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % 10);
        set.labels.push_back(static_cast<uint8_t>(label));
        float* img = set.pixels.data() + i * 3 * 32 * 32;
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 32; ++y)
                for (int x = 0; x < 32; ++x) {
                    const bool band = y >= 3 * label && y < 3 * label + 3;
                    img[(c * 32 + y) * 32 + x] =
                        band ? 0.9f : noise(rng);
                }
    }
    return set;
}

double clean_accuracy(const ModelParams& params, const LabeledImageSet& set) {
    int64_t correct = 0;
    for (int64_t start = 0; start < set.count; start += 100) {
        const int64_t bn = std::min<int64_t>(100, set.count - start);
        std::vector<float> pix(
            set.pixels.begin() + start * 3 * 32 * 32,
            set.pixels.begin() + (start + bn) * 3 * 32 * 32);
        Tensor x = Tensor::from_data({bn, 3, 32, 32}, std::move(pix));
        const auto pred = argmax_rows(forward(params, x));
        for (int64_t k = 0; k < bn; ++k)
            if (pred[static_cast<size_t>(k)] ==
                set.labels[static_cast<size_t>(start + k)])
                ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(set.count);
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

TrainConfig small_config(uint32_t seed, int epochs = 2) {
    TrainConfig config;
    config.arch = Arch::LeNet;
    config.dataset = DatasetId::Mnist;
    config.epochs = epochs;
    config.batch_size = 25;
    config.seed = seed;
    return config;
}

}  // namespace

TEST_CASE("architecture defaults") {
    CHECK(default_lr(Arch::LeNet) == 0.01f);
    CHECK(default_lr(Arch::FullyConnected) == 0.01f);
    CHECK(default_lr(Arch::ResNet50) == 0.1f);
    CHECK(default_epochs(Arch::LeNet) == 300);
    CHECK(default_epochs(Arch::ResNet50) == 125);
    CHECK(default_checkpoint_epochs(Arch::LeNet) ==
          std::vector<int>{1, 10, 25, 50, 150, 300});
    CHECK(default_checkpoint_epochs(Arch::ResNet50) ==
          std::vector<int>{1, 10, 25, 50, 100, 125});
}

TEST_CASE("learning rate drops by 10x after half the schedule") {
    for (int e = 1; e <= 5; ++e)
        CHECK(lr_at_epoch(0.01f, e, 10) == 0.01f);
    for (int e = 6; e <= 10; ++e)
        CHECK(lr_at_epoch(0.01f, e, 10) == doctest::Approx(0.001f));
    CHECK(lr_at_epoch(0.01f, 150, 300) == 0.01f);
    CHECK(lr_at_epoch(0.01f, 151, 300) == doctest::Approx(0.001f));
}

TEST_CASE("training checkpoints at the requested epochs plus the final one") {
    const auto data_set = banded_set(100, 1);
    TrainData data{&data_set, nullptr};
    const auto result = train(small_config(3, 3), data, {1});
    REQUIRE(result.checkpoints.size() == 2);
    CHECK(result.checkpoints[0].epoch == 1);
    CHECK(result.checkpoints[1].epoch == 3);
    CHECK(result.checkpoints[0].seed == 3);
    CHECK(result.checkpoints[0].dataset == DatasetId::Mnist);
    CHECK(result.epoch_mean_losses.size() == 3);
}

TEST_CASE("training twice is bit-identical") {
    const auto data_set = banded_set(100, 2);
    TrainData data{&data_set, nullptr};
    const auto a = train(small_config(5), data, {1, 2});
    const auto b = train(small_config(5), data, {1, 2});
    REQUIRE(a.checkpoints.size() == b.checkpoints.size());
    for (size_t i = 0; i < a.checkpoints.size(); ++i)
        CHECK(params_equal(a.checkpoints[i].params, b.checkpoints[i].params));
    CHECK(a.epoch_mean_losses == b.epoch_mean_losses);
}

TEST_CASE("the separable fixture is learned within a few epochs") {
    const auto train_set = banded_set(300, 4);
    const auto test_set = banded_set(100, 5, DatasetId::Mnist, Split::Test);
    TrainData data{&train_set, nullptr};
    const auto result = train(small_config(1, 3), data, {});
    const double untrained =
        clean_accuracy(build_lenet(1), test_set);
    const double trained =
        clean_accuracy(result.checkpoints.back().params, test_set);
    CHECK(untrained < 0.3);
    CHECK(trained > 0.8);
}

TEST_CASE("divergence reports the offending epoch") {
    const auto data_set = banded_set(100, 6);
    TrainData data{&data_set, nullptr};
    auto config = small_config(1, 2);
    config.lr = 1e9f;
    CHECK_THROWS_WITH_AS(train(config, data, {}),
                         doctest::Contains("epoch"), std::runtime_error);
}

TEST_CASE("out-of-range checkpoint epochs are rejected") {
    const auto data_set = banded_set(50, 7);
    TrainData data{&data_set, nullptr};
    CHECK_THROWS_AS(train(small_config(1, 2), data, {5}),
                    std::invalid_argument);
    CHECK_THROWS_AS(train(small_config(1, 2), data, {0}),
                    std::invalid_argument);
}

TEST_CASE("fusion arms train from both sets and tasks diverge") {
    const auto mnist = banded_set(80, 8);
    const auto cifar = banded_set(80, 9, DatasetId::Cifar10);
    TrainData data{&mnist, &cifar};

    auto config = small_config(2, 1);
    config.dataset = DatasetId::Fusion;
    config.task = TaskId::Digit;
    const auto digit = train(config, data, {});
    config.task = TaskId::Object;
    const auto object = train(config, data, {});
    // same matched initialization, different label routing
    CHECK(!params_equal(digit.checkpoints.back().params,
                        object.checkpoints.back().params));
    CHECK(digit.checkpoints.back().task == TaskId::Digit);

    config.dataset = DatasetId::Fusion;
    TrainData missing{&mnist, nullptr};
    CHECK_THROWS_AS(train(config, missing, {}), std::invalid_argument);
}

TEST_CASE("pretraining chain seeds fine-tuning with the base's final weights") {
    const auto mnist = banded_set(80, 10);
    const auto cifar = banded_set(80, 11, DatasetId::Cifar10);
    TrainData data{&mnist, &cifar};

    auto base = small_config(4, 2);
    auto finetune = small_config(4, 2);
    finetune.dataset = DatasetId::Cifar10;

    const auto chained = pretrain_chain(base, finetune, data, {1});
    const auto base_result = train(base, data, {});
    const auto manual = train(finetune, data, {1},
                              &base_result.checkpoints.back().params);
    REQUIRE(chained.checkpoints.size() == manual.checkpoints.size());
    for (size_t i = 0; i < chained.checkpoints.size(); ++i)
        CHECK(params_equal(chained.checkpoints[i].params,
                           manual.checkpoints[i].params));

    finetune.arch = Arch::FullyConnected;
    CHECK_THROWS_AS(pretrain_chain(base, finetune, data, {}),
                    std::invalid_argument);
}

TEST_CASE("architecture mismatch against an explicit init is rejected") {
    const auto data_set = banded_set(50, 12);
    TrainData data{&data_set, nullptr};
    const auto init = build_fully_connected(1);
    CHECK_THROWS_AS(train(small_config(1, 1), data, {}, &init),
                    std::invalid_argument);
}

TEST_CASE("plan json round-trip and validation") {
    const auto dir = fs::temp_directory_path() / "rgauge_plan";
    fs::create_directories(dir);
    const auto path = dir / "plan.json";
    {
        std::ofstream os(path);
        os << R"({
  "name": "smoke",
  "arms": [
    {"group": "m", "arch": "lenet", "dataset": "mnist", "epochs": 2,
     "train_subset": 100},
    {"group": "c", "arch": "lenet", "dataset": "cifar10", "epochs": 2}
  ],
  "seeds": [1, 2, 3],
  "checkpoint_epochs": [1, 2],
  "epsilons": [0.0, 0.1, 0.3],
  "epsilon0": 0.0, "epsilon1": 0.3,
  "eval_limit": 100,
  "comparisons": [{"a": "m", "b": "c", "marker": "star"}]
})";
    }
    const auto plan = load_plan(path);
    CHECK(plan.name == "smoke");
    REQUIRE(plan.arms.size() == 2);
    CHECK(plan.arms[0].config.train_subset == 100);
    CHECK(plan.arms[1].config.dataset == DatasetId::Cifar10);
    CHECK(plan.seeds == std::vector<uint32_t>{1, 2, 3});
    CHECK(plan.attack.epsilons == std::vector<double>{0.0, 0.1, 0.3});
    CHECK(plan.eval_limit == 100);
    REQUIRE(plan.comparisons.size() == 1);
    CHECK(plan.comparisons[0].marker == Marker::Star);

    auto bad = plan;
    bad.comparisons[0].b = "nope";
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
    bad = plan;
    bad.arms[1].group = "m";
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
    fs::remove_all(dir);
}

TEST_CASE("evaluate_plan tabulates, compares, and reports gaps") {
    const auto train_set = banded_set(100, 13);
    const auto test_set = banded_set(120, 14, DatasetId::Mnist, Split::Test);
    TrainData tdata{&train_set, nullptr};
    EvalData edata{&test_set, nullptr};

    ExperimentPlan plan;
    plan.name = "identical-groups";
    for (const char* group : {"g1", "g2"}) {
        PlanArm arm;
        arm.group = group;
        arm.config = small_config(0, 2);
        plan.arms.push_back(arm);
    }
    plan.seeds = {1, 2, 3};
    plan.checkpoint_epochs = {1, 2};
    plan.attack.epsilons = {0.0, 0.05, 0.1};
    plan.interval = {0.0, 0.1};
    plan.comparisons.push_back({"g1", "g2", Marker::Star});

    const auto dir = fs::temp_directory_path() / "rgauge_eval";
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (const auto& arm : plan.arms)
        for (uint32_t seed : plan.seeds) {
            auto config = arm.config;
            config.seed = seed;
            const auto result = train(config, tdata, plan.checkpoint_epochs);
            for (const auto& ckpt : result.checkpoints)
                save_checkpoint(ckpt,
                                plan_checkpoint_path(dir, arm.group, seed,
                                                     static_cast<int>(
                                                         ckpt.epoch)));
        }

    const auto report = evaluate_plan(plan, dir, edata);
    CHECK(report.complete());
    CHECK(report.rows.size() == 4);  // 2 groups x 2 epochs
    CHECK(report.curves.size() == 12);

    // every R is recomputable from its stored curve
    for (const auto& rec : report.curves)
        CHECK(std::abs(robustness(rec.curve, plan.interval).r - rec.r) <
              1e-12);

    // identical groups: same scores seed for seed, no significant difference
    REQUIRE(report.comparisons.size() == 2);
    for (const auto& c : report.comparisons) {
        CHECK(c.welch.t == 0.0);
        CHECK(c.welch.p == 1.0);
        CHECK(!c.welch.significant);
    }

    // reproducibility: identical report from a second evaluation
    const auto again = evaluate_plan(plan, dir, edata);
    CHECK(report_json(again) == report_json(report));

    // a removed checkpoint becomes a gap; partial results remain
    fs::remove(plan_checkpoint_path(dir, "g2", 3, 2));
    const auto partial = evaluate_plan(plan, dir, edata);
    CHECK(!partial.complete());
    REQUIRE(partial.gaps.size() == 1);
    CHECK(partial.gaps[0].find("g2_s3_e2") != std::string::npos);
    CHECK(partial.rows.size() == 4);
    CHECK(partial.curves.size() == 11);
    fs::remove_all(dir);
}

TEST_CASE("csv marks the significantly higher group") {
    ComparisonReport report;
    report.rows.push_back({"high", 1, {0.8, 0.81, 0.82}, 0.81, 0.01});
    report.rows.push_back({"low", 1, {0.2, 0.21, 0.22}, 0.21, 0.01});
    ComparisonRow row;
    row.a = "low";
    row.b = "high";
    row.epoch = 1;
    row.marker = Marker::Dagger;
    row.welch = welch_t_test({"low", {0.2, 0.21, 0.22}},
                             {"high", {0.8, 0.81, 0.82}});
    row.a_higher = false;
    report.comparisons.push_back(row);

    const auto csv = report_csv(report);
    CHECK(csv.find("group,epoch,mean_robustness,sd,markers") == 0);
    CHECK(csv.find("high,1,0.81") != std::string::npos);
    CHECK(csv.find("†") != std::string::npos);
    // the marker must sit on the "high" row, not the "low" one
    const auto low_pos = csv.find("low,1");
    CHECK(csv.substr(low_pos).find("†") == std::string::npos);
}

TEST_CASE("svg has one polyline per seed, a mean line, and a chance line") {
    std::vector<RobustnessCurve> curves;
    std::mt19937 rng(15);
    std::uniform_real_distribution<double> jitter(-0.05, 0.05);
    for (int seed = 0; seed < 3; ++seed) {
        RobustnessCurve curve;
        curve.epsilons = {0.0, 0.1, 0.2, 0.3};
        curve.accuracies = {0.9, 0.7 + jitter(rng), 0.5 + jitter(rng),
                            0.3 + jitter(rng)};
        curves.push_back(curve);
    }
    const auto svg = curve_family_svg(curves, "demo");
    size_t seed_lines = 0, pos = 0;
    while ((pos = svg.find("class=\"seed\"", pos)) != std::string::npos) {
        ++seed_lines;
        ++pos;
    }
    CHECK(seed_lines == 3);
    CHECK(svg.find("class=\"mean\"") != std::string::npos);
    CHECK(svg.find("class=\"chance\"") != std::string::npos);
    CHECK(svg.find("<svg") == 0);

    auto mismatched = curves;
    mismatched[1].epsilons = {0.0, 0.1, 0.25, 0.3};
    CHECK_THROWS_AS(curve_family_svg(mismatched, "demo"),
                    std::invalid_argument);
}

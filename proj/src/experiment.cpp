#include "rgauge/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace rgauge {

namespace {

// decorrelates the two fusion shuffle streams derived from one seed
constexpr uint64_t kCifarStreamSalt = 0x9e3779b97f4a7c15ULL;

void check_train_set(const LabeledImageSet* set, const char* name) {
    if (!set)
        throw std::invalid_argument(std::string("train: ") + name +
                                    " set not provided");
    if (set->channels != kInputChannels || set->height != kInputSize ||
        set->width != kInputSize)
        throw std::invalid_argument(
            std::string("train: ") + name + " set must be 3x32x32, got " +
            std::to_string(set->channels) + "x" + std::to_string(set->height) +
            "x" + std::to_string(set->width));
    if (set->count == 0)
        throw std::invalid_argument(std::string("train: ") + name +
                                    " set is empty");
}

int64_t subset_count(int64_t available, int64_t requested) {
    return requested > 0 ? std::min(available, requested) : available;
}

double sample_sd(const std::vector<double>& values, double mean) {
    if (values.size() < 2) return 0.0;
    double acc = 0.0;
    for (double v : values) acc += (v - mean) * (v - mean);
    return std::sqrt(acc / static_cast<double>(values.size() - 1));
}

}  // namespace

float default_lr(Arch arch) {
    return arch == Arch::ResNet50 ? 0.1f : 0.01f;
}

int default_epochs(Arch arch) {
    return arch == Arch::ResNet50 ? 125 : 300;
}

std::vector<int> default_checkpoint_epochs(Arch arch) {
    if (arch == Arch::ResNet50) return {1, 10, 25, 50, 100, 125};
    return {1, 10, 25, 50, 150, 300};
}

void validate(const TrainConfig& config) {
    if (config.epochs < 0)
        throw std::invalid_argument("train config: negative epochs");
    if (config.batch_size <= 0)
        throw std::invalid_argument("train config: batch size must be positive");
    if (config.lr < 0.0f)
        throw std::invalid_argument("train config: negative learning rate");
    if (config.train_subset < 0)
        throw std::invalid_argument("train config: negative train subset");
}

float lr_at_epoch(float initial_lr, int epoch, int total_epochs) {
    return 2 * epoch > total_epochs ? initial_lr / 10.0f : initial_lr;
}

TrainResult train(const TrainConfig& config, const TrainData& data,
                  std::vector<int> checkpoint_epochs, const ModelParams* init) {
    validate(config);
    const int epochs = config.epochs > 0 ? config.epochs
                                         : default_epochs(config.arch);
    const float lr0 = config.lr > 0.0f ? config.lr : default_lr(config.arch);

    checkpoint_epochs.push_back(epochs);
    std::sort(checkpoint_epochs.begin(), checkpoint_epochs.end());
    checkpoint_epochs.erase(
        std::unique(checkpoint_epochs.begin(), checkpoint_epochs.end()),
        checkpoint_epochs.end());
    for (int e : checkpoint_epochs)
        if (e < 1 || e > epochs)
            throw std::invalid_argument("train: checkpoint epoch " +
                                        std::to_string(e) +
                                        " outside 1.." + std::to_string(epochs));

    const bool fusion = config.dataset == DatasetId::Fusion;
    const LabeledImageSet* primary = nullptr;
    if (fusion) {
        check_train_set(data.mnist, "mnist");
        check_train_set(data.cifar, "cifar");
    } else {
        primary = config.dataset == DatasetId::Mnist ? data.mnist : data.cifar;
        check_train_set(primary,
                        config.dataset == DatasetId::Mnist ? "mnist" : "cifar");
    }

    ModelParams params;
    if (init) {
        if (init->arch != config.arch)
            throw std::invalid_argument(
                "train: pretrained architecture " + to_string(init->arch) +
                " does not match configured " + to_string(config.arch));
        params = clone(*init);
    } else if (!config.pretrained.empty()) {
        Checkpoint base = load_checkpoint(config.pretrained);
        if (base.params.arch != config.arch)
            throw std::invalid_argument(
                "train: pretrained architecture " +
                to_string(base.params.arch) + " does not match configured " +
                to_string(config.arch));
        params = std::move(base.params);
    } else {
        params = build_model(config.arch, config.seed);
    }
    params.set_requires_grad(true);

    const int64_t image_numel = int64_t{3} * 32 * 32;
    const int64_t n_mnist =
        fusion ? subset_count(data.mnist->count, config.train_subset) : 0;
    const int64_t n_cifar =
        fusion ? subset_count(data.cifar->count, config.train_subset) : 0;
    const int64_t n =
        fusion ? std::min(n_mnist, n_cifar)
               : subset_count(primary->count, config.train_subset);

    FusionEpochStream stream(config.seed, config.seed ^ kCifarStreamSalt);
    const FusionSpec fusion_spec{0.5f, config.task};

    SgdState sgd;
    TrainResult result;
    std::vector<float> batch_pixels;
    std::vector<int> batch_labels;

    for (int epoch = 1; epoch <= epochs; ++epoch) {
        const float lr = lr_at_epoch(lr0, epoch, epochs);

        std::vector<int32_t> order, cifar_order;
        if (fusion) {
            auto pairing = stream.next_epoch(n_mnist, n_cifar);
            order = std::move(pairing.mnist_order);
            cifar_order = std::move(pairing.cifar_order);
        } else {
            order = epoch_shuffle(config.seed, epoch, n);
        }

        double loss_sum = 0.0;
        int64_t batches = 0;
        for (int64_t start = 0; start < n; start += config.batch_size) {
            const int64_t bn = std::min<int64_t>(config.batch_size, n - start);
            batch_pixels.clear();
            batch_labels.clear();
            batch_pixels.reserve(static_cast<size_t>(bn * image_numel));
            for (int64_t k = 0; k < bn; ++k) {
                if (fusion) {
                    const int32_t im = order[static_cast<size_t>(start + k)];
                    const int32_t ic =
                        cifar_order[static_cast<size_t>(start + k)];
                    auto [pix, label] =
                        fuse(data.mnist->image(im), data.cifar->image(ic),
                             data.mnist->labels[static_cast<size_t>(im)],
                             data.cifar->labels[static_cast<size_t>(ic)],
                             fusion_spec);
                    batch_pixels.insert(batch_pixels.end(), pix.begin(),
                                        pix.end());
                    batch_labels.push_back(label);
                } else {
                    const int32_t i = order[static_cast<size_t>(start + k)];
                    const auto img = primary->image(i);
                    batch_pixels.insert(batch_pixels.end(), img.begin(),
                                        img.end());
                    batch_labels.push_back(
                        primary->labels[static_cast<size_t>(i)]);
                }
            }
            Tensor x = Tensor::from_data({bn, 3, 32, 32},
                                         std::move(batch_pixels));
            batch_pixels = {};
            Tensor loss = softmax_cross_entropy(forward(params, x),
                                                batch_labels);
            const float loss_value = loss.item();
            if (!std::isfinite(loss_value))
                throw std::runtime_error("training diverged at epoch " +
                                         std::to_string(epoch) +
                                         ": loss = " +
                                         std::to_string(loss_value));
            loss_sum += loss_value;
            ++batches;
            backward(loss);
            sgd_step(params.tensors, sgd, lr, config.momentum,
                     config.weight_decay);
        }
        result.epoch_mean_losses.push_back(loss_sum /
                                           static_cast<double>(batches));

        if (std::binary_search(checkpoint_epochs.begin(),
                               checkpoint_epochs.end(), epoch)) {
            Checkpoint ckpt;
            ckpt.seed = config.seed;
            ckpt.epoch = static_cast<uint32_t>(epoch);
            ckpt.dataset = config.dataset;
            ckpt.task = config.task;
            ckpt.params = clone(params);
            ckpt.params.set_requires_grad(false);
            result.checkpoints.push_back(std::move(ckpt));
        }
    }
    return result;
}

TrainResult pretrain_chain(const TrainConfig& base, const TrainConfig& finetune,
                           const TrainData& data,
                           std::vector<int> checkpoint_epochs) {
    if (base.arch != finetune.arch)
        throw std::invalid_argument(
            "pretrain chain: base architecture " + to_string(base.arch) +
            " does not match fine-tune architecture " +
            to_string(finetune.arch));
    TrainResult base_result = train(base, data, {});
    const ModelParams& final_params = base_result.checkpoints.back().params;
    return train(finetune, data, std::move(checkpoint_epochs), &final_params);
}

// --- plans ----------------------------------------------------------------

std::string to_string(Marker m) {
    switch (m) {
        case Marker::None: return "none";
        case Marker::Star: return "star";
        case Marker::Bullet: return "bullet";
        case Marker::Diamond: return "diamond";
        case Marker::Dagger: return "dagger";
        case Marker::DoubleDagger: return "double_dagger";
    }
    throw std::invalid_argument("unknown marker");
}

std::string marker_symbol(Marker m) {
    switch (m) {
        case Marker::None: return "";
        case Marker::Star: return "★";
        case Marker::Bullet: return "●";
        case Marker::Diamond: return "◇";
        case Marker::Dagger: return "†";
        case Marker::DoubleDagger: return "‡";
    }
    throw std::invalid_argument("unknown marker");
}

Marker marker_from_string(const std::string& s) {
    for (Marker m : {Marker::None, Marker::Star, Marker::Bullet,
                     Marker::Diamond, Marker::Dagger, Marker::DoubleDagger})
        if (to_string(m) == s) return m;
    throw std::invalid_argument("unknown marker \"" + s + "\"");
}

void validate(const ExperimentPlan& plan) {
    if (plan.arms.empty())
        throw std::invalid_argument("plan: no arms");
    if (plan.seeds.empty())
        throw std::invalid_argument("plan: no seeds");
    if (plan.checkpoint_epochs.empty())
        throw std::invalid_argument("plan: no checkpoint epochs");
    validate(plan.attack);

    std::set<std::string> groups;
    for (const auto& arm : plan.arms) {
        if (arm.group.empty())
            throw std::invalid_argument("plan: arm with empty group label");
        if (!groups.insert(arm.group).second)
            throw std::invalid_argument("plan: duplicate group \"" +
                                        arm.group + "\"");
        validate(arm.config);
    }
    for (const auto& arm : plan.arms) {
        if (arm.pretrain_group.empty()) continue;
        auto it = std::find_if(plan.arms.begin(), plan.arms.end(),
                               [&](const PlanArm& other) {
                                   return other.group == arm.pretrain_group;
                               });
        if (it == plan.arms.end())
            throw std::invalid_argument("plan: arm \"" + arm.group +
                                        "\" pretrains from unknown group \"" +
                                        arm.pretrain_group + "\"");
        if (it->config.arch != arm.config.arch)
            throw std::invalid_argument(
                "plan: arm \"" + arm.group +
                "\" pretrains across architectures");
    }
    for (const auto& pair : plan.comparisons)
        for (const std::string& g : {pair.a, pair.b})
            if (!groups.count(g))
                throw std::invalid_argument(
                    "plan: comparison references unknown group \"" + g + "\"");
    if (!(plan.interval.epsilon1 > plan.interval.epsilon0))
        throw std::invalid_argument("plan: empty epsilon interval");
}

ExperimentPlan load_plan(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is)
        throw std::runtime_error("plan: cannot open " + path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("plan: " + path.string() + ": " + e.what());
    }

    ExperimentPlan plan;
    plan.name = j.value("name", path.stem().string());
    for (const auto& ja : j.at("arms")) {
        PlanArm arm;
        arm.group = ja.at("group").get<std::string>();
        arm.config.arch = arch_from_string(ja.at("arch").get<std::string>());
        arm.config.dataset =
            dataset_from_string(ja.at("dataset").get<std::string>());
        arm.config.task = task_from_string(ja.value("task", "digit"));
        arm.config.epochs = ja.value("epochs", 0);
        arm.config.batch_size = ja.value("batch_size", 125);
        arm.config.lr = ja.value("lr", 0.0f);
        arm.config.momentum = ja.value("momentum", 0.9f);
        arm.config.weight_decay = ja.value("weight_decay", 5e-4f);
        arm.config.train_subset = ja.value("train_subset", int64_t{0});
        arm.pretrain_group = ja.value("pretrain_group", "");
        plan.arms.push_back(std::move(arm));
    }
    plan.seeds = j.at("seeds").get<std::vector<uint32_t>>();
    plan.checkpoint_epochs = j.at("checkpoint_epochs").get<std::vector<int>>();
    if (j.contains("epsilons"))
        plan.attack.epsilons = j["epsilons"].get<std::vector<double>>();
    plan.interval.epsilon0 = j.value("epsilon0", 0.0);
    plan.interval.epsilon1 = j.value("epsilon1", 0.3);
    plan.eval_limit = j.value("eval_limit", int64_t{0});
    if (j.contains("comparisons"))
        for (const auto& jc : j["comparisons"]) {
            ComparisonPair pair;
            pair.a = jc.at("a").get<std::string>();
            pair.b = jc.at("b").get<std::string>();
            pair.marker = marker_from_string(jc.value("marker", "none"));
            plan.comparisons.push_back(std::move(pair));
        }
    validate(plan);
    return plan;
}

std::filesystem::path plan_checkpoint_path(const std::filesystem::path& dir,
                                           const std::string& group,
                                           uint32_t seed, int epoch) {
    return dir / (group + "_s" + std::to_string(seed) + "_e" +
                  std::to_string(epoch) + ".rgck");
}

// --- evaluation -----------------------------------------------------------

LabeledImageSet evaluation_set(const TrainConfig& config,
                               const EvalData& data) {
    auto require = [](const LabeledImageSet* set,
                      const char* name) -> const LabeledImageSet& {
        if (!set)
            throw std::invalid_argument(std::string("evaluate: ") + name +
                                        " test set not provided");
        if (set->channels != kInputChannels || set->height != kInputSize ||
            set->width != kInputSize)
            throw std::invalid_argument(std::string("evaluate: ") + name +
                                        " test set must be 3x32x32");
        return *set;
    };
    if (config.dataset == DatasetId::Mnist) return require(data.mnist_test,
                                                           "mnist");
    if (config.dataset == DatasetId::Cifar10) return require(data.cifar_test,
                                                             "cifar");

    // fusion: positional blend of the two test sets
    const auto& mnist = require(data.mnist_test, "mnist");
    const auto& cifar = require(data.cifar_test, "cifar");
    const int64_t n = std::min(mnist.count, cifar.count);
    const FusionSpec spec{0.5f, config.task};
    LabeledImageSet out;
    out.id = DatasetId::Fusion;
    out.split = Split::Test;
    out.count = n;
    out.channels = kInputChannels;
    out.height = out.width = kInputSize;
    out.pixels.reserve(static_cast<size_t>(n) * 3 * 32 * 32);
    for (int64_t i = 0; i < n; ++i) {
        auto [pix, label] =
            fuse(mnist.image(i), cifar.image(i),
                 mnist.labels[static_cast<size_t>(i)],
                 cifar.labels[static_cast<size_t>(i)], spec);
        out.pixels.insert(out.pixels.end(), pix.begin(), pix.end());
        out.labels.push_back(label);
    }
    return out;
}

ComparisonReport evaluate_plan(const ExperimentPlan& plan,
                               const std::filesystem::path& ckpt_dir,
                               const EvalData& data) {
    validate(plan);
    ComparisonReport report;
    report.plan_name = plan.name;

    // (group, epoch) -> per-seed scores, plan seed order
    std::map<std::pair<std::string, int>, std::vector<double>> scores;

    for (const auto& arm : plan.arms) {
        const LabeledImageSet eval_set = evaluation_set(arm.config, data);
        for (uint32_t seed : plan.seeds) {
            for (int epoch : plan.checkpoint_epochs) {
                const auto path =
                    plan_checkpoint_path(ckpt_dir, arm.group, seed, epoch);
                if (!std::filesystem::exists(path)) {
                    report.gaps.push_back("missing checkpoint: " +
                                          path.string());
                    continue;
                }
                const Checkpoint ckpt = load_checkpoint(path);
                RobustnessCurve curve = accuracy_under_attack(
                    ckpt.params, eval_set, plan.attack, 125, plan.eval_limit);
                curve.provenance.checkpoint_id = ckpt.id();
                curve.provenance.dataset = to_string(arm.config.dataset);
                curve.provenance.task = to_string(arm.config.task);
                const double r = robustness(curve, plan.interval).r;
                scores[{arm.group, epoch}].push_back(r);
                report.curves.push_back(
                    {arm.group, seed, epoch, std::move(curve), r});
            }
        }
    }

    for (const auto& arm : plan.arms)
        for (int epoch : plan.checkpoint_epochs) {
            GroupEpochRow row;
            row.group = arm.group;
            row.epoch = epoch;
            auto it = scores.find({arm.group, epoch});
            if (it != scores.end()) row.scores = it->second;
            if (!row.scores.empty()) {
                double sum = 0.0;
                for (double v : row.scores) sum += v;
                row.mean = sum / static_cast<double>(row.scores.size());
                row.sd = sample_sd(row.scores, row.mean);
            }
            report.rows.push_back(std::move(row));
        }

    for (const auto& pair : plan.comparisons)
        for (int epoch : plan.checkpoint_epochs) {
            auto a = scores.find({pair.a, epoch});
            auto b = scores.find({pair.b, epoch});
            if (a == scores.end() || b == scores.end() ||
                a->second.size() < 2 || b->second.size() < 2) {
                report.gaps.push_back(
                    "comparison " + pair.a + " vs " + pair.b + " at epoch " +
                    std::to_string(epoch) +
                    " skipped: fewer than 2 scores per group");
                continue;
            }
            ComparisonRow row;
            row.a = pair.a;
            row.b = pair.b;
            row.epoch = epoch;
            row.marker = pair.marker;
            row.welch = welch_t_test({pair.a, a->second}, {pair.b, b->second});
            double mean_a = 0.0, mean_b = 0.0;
            for (double v : a->second) mean_a += v;
            for (double v : b->second) mean_b += v;
            row.a_higher = mean_a / static_cast<double>(a->second.size()) >
                           mean_b / static_cast<double>(b->second.size());
            report.comparisons.push_back(std::move(row));
        }

    return report;
}

// --- serialization --------------------------------------------------------

std::string report_json(const ComparisonReport& report) {
    nlohmann::json j;
    j["plan"] = report.plan_name;
    j["rows"] = nlohmann::json::array();
    for (const auto& row : report.rows)
        j["rows"].push_back({{"group", row.group},
                             {"epoch", row.epoch},
                             {"scores", row.scores},
                             {"mean", row.mean},
                             {"sd", row.sd}});
    j["comparisons"] = nlohmann::json::array();
    for (const auto& c : report.comparisons)
        j["comparisons"].push_back({{"a", c.a},
                                    {"b", c.b},
                                    {"epoch", c.epoch},
                                    {"marker", to_string(c.marker)},
                                    {"t", c.welch.t},
                                    {"df", c.welch.df},
                                    {"p", c.welch.p},
                                    {"significant", c.welch.significant},
                                    {"a_higher", c.a_higher}});
    j["curves"] = nlohmann::json::array();
    for (const auto& rec : report.curves)
        j["curves"].push_back({{"group", rec.group},
                               {"seed", rec.seed},
                               {"epoch", rec.epoch},
                               {"epsilons", rec.curve.epsilons},
                               {"accuracies", rec.curve.accuracies},
                               {"R", rec.r}});
    j["gaps"] = report.gaps;
    return j.dump(2);
}

std::string report_csv(const ComparisonReport& report) {
    std::ostringstream os;
    os.precision(17);
    os << "group,epoch,mean_robustness,sd,markers\n";
    for (const auto& row : report.rows) {
        // a marker lands on the group that came out significantly higher
        std::string markers;
        for (const auto& c : report.comparisons) {
            if (c.epoch != row.epoch || !c.welch.significant ||
                c.marker == Marker::None)
                continue;
            const std::string& winner = c.a_higher ? c.a : c.b;
            if (winner == row.group) markers += marker_symbol(c.marker);
        }
        os << row.group << ',' << row.epoch << ',' << row.mean << ','
           << row.sd << ',' << markers << '\n';
    }
    return os.str();
}

void save_report(const ComparisonReport& report,
                 const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream os(dir / "report.json");
        if (!os)
            throw std::runtime_error("report: cannot open " +
                                     (dir / "report.json").string());
        os << report_json(report) << '\n';
    }
    std::ofstream os(dir / "report.csv");
    if (!os)
        throw std::runtime_error("report: cannot open " +
                                 (dir / "report.csv").string());
    os << report_csv(report);
}

}  // namespace rgauge

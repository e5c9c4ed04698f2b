// rgauge: dataset preparation, training, FGSM attacks, robustness scoring,
// group comparison, and static plot emission. Every subcommand is
// non-interactive and prints a single JSON object on success.
// Exit codes: 0 success, 1 runtime failure, 2 input error.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <zlib.h>

#include "rgauge/attack.hpp"
#include "rgauge/data.hpp"
#include "rgauge/experiment.hpp"
#include "rgauge/metric.hpp"
#include "rgauge/models.hpp"
#include "rgauge/plot.hpp"
#include "rgauge/stats.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rgauge;

namespace {

constexpr const char* kDataRootEnv = "RGAUGE_DATA_ROOT";

std::string crc32_hex(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    uLong crc = crc32(0L, Z_NULL, 0);
    char buf[1 << 16];
    while (is.read(buf, sizeof buf) || is.gcount() > 0)
        crc = crc32(crc, reinterpret_cast<const Bytef*>(buf),
                    static_cast<uInt>(is.gcount()));
    std::ostringstream os;
    os << std::hex << crc;
    return os.str();
}

void require_exists(const fs::path& path, const char* what) {
    if (!fs::exists(path))
        throw std::invalid_argument(std::string(what) + " not found: " +
                                    path.string());
}

fs::path resolve_data_dir(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv(kDataRootEnv)) return env;
    throw CLI::ValidationError(
        "no data directory: pass --data or set " + std::string(kDataRootEnv));
}

LabeledImageSet load_cached_split(const fs::path& data_dir,
                                  const std::string& name) {
    const auto path = data_dir / (name + ".rgds");
    if (!fs::exists(path))
        throw std::invalid_argument("cached dataset missing: " +
                                    path.string() + " (run `rgauge prepare`)");
    return load_cached(path);
}

// Loads exactly the cached splits the dataset needs.
struct SplitCache {
    fs::path dir;
    std::map<std::string, LabeledImageSet> sets;

    const LabeledImageSet* get(const std::string& name) {
        auto it = sets.find(name);
        if (it == sets.end())
            it = sets.emplace(name, load_cached_split(dir, name)).first;
        return &it->second;
    }
};

TrainData train_data_for(SplitCache& cache, DatasetId dataset) {
    TrainData data;
    if (dataset != DatasetId::Cifar10) data.mnist = cache.get("mnist_train");
    if (dataset != DatasetId::Mnist) data.cifar = cache.get("cifar_train");
    return data;
}

EvalData eval_data_for(SplitCache& cache, DatasetId dataset) {
    EvalData data;
    if (dataset != DatasetId::Cifar10)
        data.mnist_test = cache.get("mnist_test");
    if (dataset != DatasetId::Mnist) data.cifar_test = cache.get("cifar_test");
    return data;
}

void emit(const json& j) { std::cout << j.dump(2) << std::endl; }

// --- prepare --------------------------------------------------------------

struct PrepareArgs {
    std::string mnist_dir, cifar_dir, out_dir;
    std::string interp = "bilinear";
};

int run_prepare(const PrepareArgs& args) {
    if (args.mnist_dir.empty() && args.cifar_dir.empty())
        throw std::invalid_argument(
            "prepare: give --mnist-dir and/or --cifar-dir");
    const fs::path out = args.out_dir;
    fs::create_directories(out);
    const Interp interp =
        args.interp == "nearest" ? Interp::Nearest : Interp::Bilinear;

    const auto manifest_path = out / "checksums.json";
    json manifest = json::object();
    if (fs::exists(manifest_path)) {
        std::ifstream is(manifest_path);
        is >> manifest;
    }

    json written = json::array(), skipped = json::array();
    auto emit_set = [&](const LabeledImageSet& set, const std::string& name) {
        const auto path = out / (name + ".rgds");
        if (fs::exists(path) && manifest.contains(name) &&
            manifest[name] == crc32_hex(path)) {
            skipped.push_back(name);  // cache hit, no rewrite
            return;
        }
        save_cached(set, path);
        manifest[name] = crc32_hex(path);
        written.push_back(name);
    };

    auto require_file = [](const fs::path& p) {
        if (!fs::exists(p))
            throw std::invalid_argument("prepare: missing file " + p.string());
        return p;
    };

    if (!args.mnist_dir.empty()) {
        const fs::path dir = args.mnist_dir;
        auto train = load_mnist_idx(
            require_file(dir / "train-images-idx3-ubyte"),
            require_file(dir / "train-labels-idx1-ubyte"), Split::Train);
        emit_set(upscale_mnist(train, interp), "mnist_train");
        auto test = load_mnist_idx(
            require_file(dir / "t10k-images-idx3-ubyte"),
            require_file(dir / "t10k-labels-idx1-ubyte"), Split::Test);
        emit_set(upscale_mnist(test, interp), "mnist_test");
    }
    if (!args.cifar_dir.empty()) {
        const fs::path dir = args.cifar_dir;
        for (int i = 1; i <= 5; ++i)
            require_file(dir / ("data_batch_" + std::to_string(i) + ".bin"));
        emit_set(load_cifar10_train(dir), "cifar_train");
        require_file(dir / "test_batch.bin");
        emit_set(load_cifar10_test(dir), "cifar_test");
    }

    {
        std::ofstream os(manifest_path);
        os << manifest.dump(2) << '\n';
    }
    emit({{"command", "prepare"},
          {"out", out.string()},
          {"written", written},
          {"skipped", skipped},
          {"checksums", manifest}});
    return 0;
}

// --- train ----------------------------------------------------------------

struct TrainArgs {
    std::string arch = "lenet", dataset = "mnist", task = "digit";
    std::string data_dir, out_dir, pretrained;
    int epochs = 0, batch_size = 125;
    double lr = 0.0, momentum = 0.9, weight_decay = 5e-4;
    uint32_t seed = 1;
    int64_t train_subset = 0;
    std::vector<int> checkpoint_epochs;
};

int run_train(const TrainArgs& args) {
    TrainConfig config;
    config.arch = arch_from_string(args.arch);
    config.dataset = dataset_from_string(args.dataset);
    config.task = task_from_string(args.task);
    config.epochs = args.epochs;
    config.batch_size = args.batch_size;
    config.lr = static_cast<float>(args.lr);
    config.momentum = static_cast<float>(args.momentum);
    config.weight_decay = static_cast<float>(args.weight_decay);
    config.seed = args.seed;
    config.train_subset = args.train_subset;
    if (!args.pretrained.empty()) config.pretrained = args.pretrained;

    SplitCache cache{resolve_data_dir(args.data_dir), {}};
    const TrainData data = train_data_for(cache, config.dataset);

    const auto result = train(config, data, args.checkpoint_epochs);

    const fs::path out = args.out_dir;
    fs::create_directories(out);
    json paths = json::array();
    for (const auto& ckpt : result.checkpoints) {
        const auto path = out / (ckpt.id() + ".rgck");
        save_checkpoint(ckpt, path);
        paths.push_back(path.string());
    }
    emit({{"command", "train"},
          {"checkpoints", paths},
          {"epoch_mean_losses", result.epoch_mean_losses}});
    return 0;
}

// --- attack ---------------------------------------------------------------

struct AttackArgs {
    std::string checkpoint, data_dir, out_csv;
    std::vector<double> epsilons;
    int batch_size = 125;
    int64_t limit = 0;
};

int run_attack(const AttackArgs& args) {
    require_exists(args.checkpoint, "checkpoint");
    const Checkpoint ckpt = load_checkpoint(args.checkpoint);
    AttackConfig config;
    if (!args.epsilons.empty()) config.epsilons = args.epsilons;
    validate(config);

    SplitCache cache{resolve_data_dir(args.data_dir), {}};
    TrainConfig arm;
    arm.dataset = ckpt.dataset;
    arm.task = ckpt.task;
    const LabeledImageSet eval_set =
        evaluation_set(arm, eval_data_for(cache, ckpt.dataset));

    RobustnessCurve curve = accuracy_under_attack(
        ckpt.params, eval_set, config, args.batch_size, args.limit);
    curve.provenance.checkpoint_id = ckpt.id();
    curve.provenance.dataset = to_string(ckpt.dataset);
    curve.provenance.task = to_string(ckpt.task);

    const fs::path csv = args.out_csv;
    if (csv.has_parent_path()) fs::create_directories(csv.parent_path());
    save_curve_csv(curve, csv);
    auto sidecar = csv;
    sidecar.replace_extension(".json");
    save_curve_sidecar(curve, sidecar);

    emit({{"command", "attack"},
          {"curve", csv.string()},
          {"epsilons", curve.epsilons},
          {"accuracies", curve.accuracies},
          {"checkpoint_id", ckpt.id()}});
    return 0;
}

// --- score ----------------------------------------------------------------

struct ScoreArgs {
    std::string curve;
    double eps0 = 0.0, eps1 = 0.3;
};

int run_score(const ScoreArgs& args) {
    require_exists(args.curve, "curve");
    const auto curve = load_curve_csv(args.curve);
    const auto score = robustness(curve, {args.eps0, args.eps1});
    std::cout << score_json(score) << std::endl;
    return 0;
}

// --- compare --------------------------------------------------------------

struct CompareArgs {
    std::string a_file, b_file;
    double alpha = 0.05;
};

ScoreSample load_sample(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("compare: cannot open " +
                                         path.string());
    json j;
    is >> j;
    return {j.value("group", path.stem().string()),
            j.at("values").get<std::vector<double>>()};
}

int run_compare(const CompareArgs& args) {
    const auto a = load_sample(args.a_file);
    const auto b = load_sample(args.b_file);
    const auto r = welch_t_test(a, b, args.alpha);
    emit({{"command", "compare"},
          {"a", a.group},
          {"b", b.group},
          {"t", r.t},
          {"df", r.df},
          {"p", r.p},
          {"alpha", r.alpha},
          {"significant", r.significant}});
    return 0;
}

// --- plot -----------------------------------------------------------------

struct PlotArgs {
    std::vector<std::string> curves;
    std::string out_svg, title = "robustness curves";
};

int run_plot(const PlotArgs& args) {
    std::vector<RobustnessCurve> curves;
    for (const auto& path : args.curves) {
        require_exists(path, "curve");
        curves.push_back(load_curve_csv(path));
    }
    const fs::path out = args.out_svg;
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    save_curve_family_svg(curves, args.title, out);
    emit({{"command", "plot"},
          {"svg", out.string()},
          {"curves", args.curves.size()}});
    return 0;
}

// --- run-plan -------------------------------------------------------------

struct RunPlanArgs {
    std::string plan_file, out_dir, data_dir;
    int workers = 1;
};

// Arms ordered so that every pretraining base comes before its dependents.
std::vector<size_t> arm_order(const ExperimentPlan& plan) {
    std::vector<size_t> order;
    std::vector<bool> placed(plan.arms.size(), false);
    for (size_t pass = 0; pass < plan.arms.size(); ++pass) {
        for (size_t i = 0; i < plan.arms.size(); ++i) {
            if (placed[i]) continue;
            const auto& dep = plan.arms[i].pretrain_group;
            bool ready = dep.empty();
            for (size_t k : order)
                if (plan.arms[k].group == dep) ready = true;
            if (ready) {
                order.push_back(i);
                placed[i] = true;
            }
        }
    }
    if (order.size() != plan.arms.size())
        throw std::invalid_argument("plan: pretraining dependency cycle");
    return order;
}

int run_run_plan(const RunPlanArgs& args) {
    if (args.workers < 1)
        throw std::invalid_argument("run-plan: --workers must be >= 1");
    require_exists(args.plan_file, "plan");
    const auto plan = load_plan(args.plan_file);
    const fs::path out = args.out_dir;
    const fs::path ckpt_dir = out / "checkpoints";
    fs::create_directories(ckpt_dir);

    SplitCache cache{resolve_data_dir(args.data_dir), {}};

    // train every (arm, seed), bases before dependents
    for (size_t i : arm_order(plan)) {
        const auto& arm = plan.arms[i];
        const TrainData data = train_data_for(cache, arm.config.dataset);
        for (uint32_t seed : plan.seeds) {
            auto config = arm.config;
            config.seed = seed;
            const int final_epoch = config.epochs > 0
                                        ? config.epochs
                                        : default_epochs(config.arch);
            if (fs::exists(plan_checkpoint_path(ckpt_dir, arm.group, seed,
                                                final_epoch)))
                continue;  // resume: this arm/seed already trained
            ModelParams base;
            const ModelParams* init = nullptr;
            if (!arm.pretrain_group.empty()) {
                const auto& base_arm =
                    *std::find_if(plan.arms.begin(), plan.arms.end(),
                                  [&](const PlanArm& a) {
                                      return a.group == arm.pretrain_group;
                                  });
                const int base_final =
                    base_arm.config.epochs > 0
                        ? base_arm.config.epochs
                        : default_epochs(base_arm.config.arch);
                base = load_checkpoint(plan_checkpoint_path(
                                           ckpt_dir, base_arm.group, seed,
                                           base_final))
                           .params;
                init = &base;
            }
            const auto result =
                train(config, data, plan.checkpoint_epochs, init);
            for (const auto& ckpt : result.checkpoints)
                save_checkpoint(
                    ckpt, plan_checkpoint_path(ckpt_dir, arm.group, seed,
                                               static_cast<int>(ckpt.epoch)));
        }
    }

    // attack + score + report
    EvalData edata;
    for (const auto& arm : plan.arms) {
        if (arm.config.dataset != DatasetId::Cifar10)
            edata.mnist_test = cache.get("mnist_test");
        if (arm.config.dataset != DatasetId::Mnist)
            edata.cifar_test = cache.get("cifar_test");
    }
    const auto report = evaluate_plan(plan, ckpt_dir, edata);

    // per-checkpoint artifacts: curve CSV + provenance + score JSON
    fs::create_directories(out / "curves");
    fs::create_directories(out / "scores");
    for (const auto& rec : report.curves) {
        const std::string stem = rec.group + "_s" + std::to_string(rec.seed) +
                                 "_e" + std::to_string(rec.epoch);
        save_curve_csv(rec.curve, out / "curves" / (stem + ".csv"));
        save_curve_sidecar(rec.curve, out / "curves" / (stem + ".json"));
        save_score_json(robustness(rec.curve, plan.interval),
                        out / "scores" / (stem + ".json"));
    }

    // one SVG per (group, epoch): seed curves + mean + chance line
    fs::create_directories(out / "plots");
    json plots = json::array();
    for (const auto& arm : plan.arms)
        for (int epoch : plan.checkpoint_epochs) {
            std::vector<RobustnessCurve> family;
            for (const auto& rec : report.curves)
                if (rec.group == arm.group && rec.epoch == epoch)
                    family.push_back(rec.curve);
            if (family.empty()) continue;
            const auto path =
                out / "plots" /
                (arm.group + "_e" + std::to_string(epoch) + ".svg");
            save_curve_family_svg(
                family, arm.group + " epoch " + std::to_string(epoch), path);
            plots.push_back(path.string());
        }

    save_report(report, out);
    emit({{"command", "run-plan"},
          {"plan", plan.name},
          {"out", out.string()},
          {"workers", args.workers},
          {"checkpoints", report.curves.size()},
          {"plots", plots},
          {"gaps", report.gaps},
          {"report", (out / "report.json").string()}});
    return report.complete() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "rgauge: adversarial robustness benchmarking over an FGSM "
        "epsilon grid"};
    app.require_subcommand(1);

    PrepareArgs prepare_args;
    auto* prepare = app.add_subcommand("prepare", "cache datasets as tensors");
    prepare->add_option("--mnist-dir", prepare_args.mnist_dir,
                        "directory with the four IDX files");
    prepare->add_option("--cifar-dir", prepare_args.cifar_dir,
                        "directory with the CIFAR-10 binary batches");
    prepare->add_option("--out", prepare_args.out_dir, "cache directory")
        ->required();
    prepare->add_option("--interp", prepare_args.interp,
                        "mnist upscale: bilinear|nearest")
        ->check(CLI::IsMember({"bilinear", "nearest"}));

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train one model");
    train_cmd->add_option("--arch", train_args.arch,
                          "fully_connected|lenet|resnet50");
    train_cmd->add_option("--dataset", train_args.dataset,
                          "mnist|cifar10|fusion");
    train_cmd->add_option("--task", train_args.task, "digit|object");
    train_cmd->add_option("--epochs", train_args.epochs);
    train_cmd->add_option("--batch-size", train_args.batch_size);
    train_cmd->add_option("--lr", train_args.lr);
    train_cmd->add_option("--momentum", train_args.momentum);
    train_cmd->add_option("--weight-decay", train_args.weight_decay);
    train_cmd->add_option("--seed", train_args.seed);
    train_cmd->add_option("--train-subset", train_args.train_subset);
    train_cmd->add_option("--pretrained", train_args.pretrained,
                          "checkpoint to start from");
    train_cmd->add_option("--checkpoint-epochs", train_args.checkpoint_epochs)
        ->delimiter(',');
    train_cmd->add_option("--data", train_args.data_dir,
                          "cache directory (or RGAUGE_DATA_ROOT)");
    train_cmd->add_option("--out", train_args.out_dir)->required();

    AttackArgs attack_args;
    auto* attack_cmd =
        app.add_subcommand("attack", "FGSM sweep over one checkpoint");
    attack_cmd->add_option("--checkpoint", attack_args.checkpoint)->required();
    attack_cmd->add_option("--epsilons", attack_args.epsilons)->delimiter(',');
    attack_cmd->add_option("--batch-size", attack_args.batch_size);
    attack_cmd->add_option("--limit", attack_args.limit,
                           "evaluate only the first N images");
    attack_cmd->add_option("--data", attack_args.data_dir);
    attack_cmd->add_option("--out", attack_args.out_csv)->required();

    ScoreArgs score_args;
    auto* score_cmd = app.add_subcommand("score", "robustness R of a curve");
    score_cmd->add_option("--curve", score_args.curve)->required();
    score_cmd->add_option("--eps0", score_args.eps0);
    score_cmd->add_option("--eps1", score_args.eps1);

    CompareArgs compare_args;
    auto* compare_cmd =
        app.add_subcommand("compare", "Welch's t-test on two score samples");
    compare_cmd->add_option("--a", compare_args.a_file)->required();
    compare_cmd->add_option("--b", compare_args.b_file)->required();
    compare_cmd->add_option("--alpha", compare_args.alpha);

    PlotArgs plot_args;
    auto* plot_cmd = app.add_subcommand("plot", "SVG of normalized curves");
    plot_cmd->add_option("--curves", plot_args.curves)->required();
    plot_cmd->add_option("--title", plot_args.title);
    plot_cmd->add_option("--out", plot_args.out_svg)->required();

    RunPlanArgs plan_args;
    auto* plan_cmd =
        app.add_subcommand("run-plan", "execute a full experiment plan");
    plan_cmd->add_option("--plan", plan_args.plan_file)->required();
    plan_cmd->add_option("--out", plan_args.out_dir)->required();
    plan_cmd->add_option("--data", plan_args.data_dir);
    plan_cmd->add_option("--workers", plan_args.workers,
                         "parallelism bound (training is sequential per arm)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        if (prepare->parsed()) return run_prepare(prepare_args);
        if (train_cmd->parsed()) return run_train(train_args);
        if (attack_cmd->parsed()) return run_attack(attack_args);
        if (score_cmd->parsed()) return run_score(score_args);
        if (compare_cmd->parsed()) return run_compare(compare_args);
        if (plot_cmd->parsed()) return run_plot(plot_args);
        if (plan_cmd->parsed()) return run_run_plan(plan_args);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

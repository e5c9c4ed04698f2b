#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rgauge/attack.hpp"
#include "rgauge/data.hpp"
#include "rgauge/metric.hpp"
#include "rgauge/models.hpp"
#include "rgauge/stats.hpp"

namespace rgauge {

struct TrainConfig {
    Arch arch = Arch::LeNet;
    DatasetId dataset = DatasetId::Mnist;
    TaskId task = TaskId::Digit;
    int epochs = 0;       // 0 -> architecture default (300, or 125 for resnet50)
    int batch_size = 125;
    float lr = 0.0f;      // 0 -> architecture default (0.01, or 0.1 for resnet50)
    float momentum = 0.9f;
    float weight_decay = 5e-4f;
    uint32_t seed = 1;
    int64_t train_subset = 0;          // 0 -> full training split
    std::filesystem::path pretrained;  // optional checkpoint to start from
};

float default_lr(Arch arch);
int default_epochs(Arch arch);
std::vector<int> default_checkpoint_epochs(Arch arch);

void validate(const TrainConfig& config);

// Effective learning rate for a 1-based epoch: initial, then /10 once more
// than half the scheduled epochs are done.
float lr_at_epoch(float initial_lr, int epoch, int total_epochs);

// Training splits the trainer may draw from. Non-fusion arms use the set
// matching config.dataset; fusion arms need both.
struct TrainData {
    const LabeledImageSet* mnist = nullptr;  // already 3x32x32
    const LabeledImageSet* cifar = nullptr;
};

struct TrainResult {
    std::vector<Checkpoint> checkpoints;   // at requested epochs, ascending
    std::vector<double> epoch_mean_losses; // one entry per trained epoch
};

// Runs the SGD protocol and snapshots the model at each requested epoch
// (the final epoch is always included). `init` overrides both the seed
// initialization and config.pretrained when given. Throws on divergence,
// reporting the offending epoch.
TrainResult train(const TrainConfig& config, const TrainData& data,
                  std::vector<int> checkpoint_epochs,
                  const ModelParams* init = nullptr);

// Full base training, then the same scheme restarted on the fine-tune
// dataset from the base's final parameters. The classification head is kept
// (both tasks have ten classes). Returns the fine-tune checkpoints.
TrainResult pretrain_chain(const TrainConfig& base, const TrainConfig& finetune,
                           const TrainData& data,
                           std::vector<int> checkpoint_epochs);

// --- plans ----------------------------------------------------------------

// Significance marker categories used in the report tables.
enum class Marker { None, Star, Bullet, Diamond, Dagger, DoubleDagger };

std::string to_string(Marker m);
std::string marker_symbol(Marker m);
Marker marker_from_string(const std::string& s);

struct PlanArm {
    std::string group;  // unique label, also the checkpoint file prefix
    TrainConfig config;
    // When set, this arm fine-tunes from the named arm's final checkpoint
    // of the matching seed instead of starting from seed initialization.
    std::string pretrain_group;
};

struct ComparisonPair {
    std::string a, b;  // group labels; the hypothesis is "a more robust"
    Marker marker = Marker::None;
};

struct ExperimentPlan {
    std::string name;
    std::vector<PlanArm> arms;
    std::vector<uint32_t> seeds;  // shared by every arm (matched weights)
    std::vector<int> checkpoint_epochs;
    AttackConfig attack;
    EpsilonInterval interval{0.0, 0.3};
    int64_t eval_limit = 0;  // images per attacked checkpoint; 0 -> all
    std::vector<ComparisonPair> comparisons;
};

void validate(const ExperimentPlan& plan);
ExperimentPlan load_plan(const std::filesystem::path& path);

// Checkpoint file layout used by plan execution and evaluation.
std::filesystem::path plan_checkpoint_path(const std::filesystem::path& dir,
                                           const std::string& group,
                                           uint32_t seed, int epoch);

// --- reports --------------------------------------------------------------

struct GroupEpochRow {
    std::string group;
    int epoch = 0;
    std::vector<double> scores;  // per-seed R, in plan seed order
    double mean = 0.0;
    double sd = 0.0;  // sample standard deviation
};

struct ComparisonRow {
    std::string a, b;
    int epoch = 0;
    Marker marker = Marker::None;
    WelchResult welch;
    bool a_higher = false;  // mean(a) > mean(b)
};

struct CurveRecord {
    std::string group;
    uint32_t seed = 0;
    int epoch = 0;
    RobustnessCurve curve;
    double r = 0.0;
};

struct ComparisonReport {
    std::string plan_name;
    std::vector<GroupEpochRow> rows;          // groups x checkpoint epochs
    std::vector<ComparisonRow> comparisons;
    std::vector<CurveRecord> curves;          // every R is backed by these
    std::vector<std::string> gaps;            // missing checkpoints etc.

    bool complete() const { return gaps.empty(); }
};

// Evaluation splits; fusion arms blend the two test sets positionally.
struct EvalData {
    const LabeledImageSet* mnist_test = nullptr;  // already 3x32x32
    const LabeledImageSet* cifar_test = nullptr;
};

// Attacks every (arm, seed, epoch) checkpoint under ckpt_dir and assembles
// the per-epoch means, SDs, and Welch comparisons. Missing checkpoints are
// listed as gaps; the rest of the report is still produced.
ComparisonReport evaluate_plan(const ExperimentPlan& plan,
                               const std::filesystem::path& ckpt_dir,
                               const EvalData& data);

// Builds the evaluation set for one arm (blending test sets for fusion).
LabeledImageSet evaluation_set(const TrainConfig& config, const EvalData& data);

std::string report_json(const ComparisonReport& report);
std::string report_csv(const ComparisonReport& report);
void save_report(const ComparisonReport& report,
                 const std::filesystem::path& dir);

}  // namespace rgauge

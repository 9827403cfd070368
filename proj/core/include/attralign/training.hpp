#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "attralign/dataset.hpp"
#include "attralign/diagnostics.hpp"
#include "attralign/losses.hpp"
#include "attralign/mining.hpp"
#include "attralign/model.hpp"

namespace attralign {

enum class TrainMode {
  TwoStage,      // contrastive alignment, then classifier tuning
  OneStage,      // both objectives summed from the first step
  Stage2Only,    // classifier tuning without alignment
  FinetuneOnly,  // classifier alone on frozen projections
};

std::string_view to_string(TrainMode mode) noexcept;
TrainMode parse_train_mode(std::string_view text);
std::string_view to_string(ContrastiveVariant variant) noexcept;
ContrastiveVariant parse_variant(std::string_view text);

struct StageConfig {
  std::size_t batch_size = 64;  // effective (accumulated) batch
  std::size_t micro_batch = 16;
  std::size_t epochs = 1;
  double lr = 2e-4;
  std::size_t warmup_steps = 60;

  friend bool operator==(const StageConfig&, const StageConfig&) = default;
};

struct TrainConfig {
  StageConfig stage1;
  StageConfig stage2{.batch_size = 128};
  double temperature = 1.0;
  std::size_t k_hard_negatives = 3;
  TrainMode mode = TrainMode::TwoStage;
  ContrastiveVariant variant = ContrastiveVariant::AttributeTriple;
  double one_stage_weight = 1.0;  // weight of the classification loss in OneStage
  std::uint64_t seed = 0;         // batch shuffles
  std::size_t threads = 1;        // micro-batches evaluated concurrently
  EvalOptions eval;
  AuxLoss aux;  // optional extra stage-one term; not serialized

  void validate() const;
};

/// Flat `key -> value` view of every serializable field, used for manifests
/// and for config diffs between ablation arms.
std::map<std::string, std::string> describe(const TrainConfig& cfg);
std::string train_config_to_json(const TrainConfig& cfg);
/// Missing keys keep their defaults; unknown keys throw ConfigError.
TrainConfig train_config_from_json(std::string_view text);

enum class Phase { Alignment, Classification, Joint };
std::string_view to_string(Phase phase) noexcept;

struct StepRecord {
  std::size_t step = 0;  // global optimizer step, starting at 1
  Phase phase = Phase::Alignment;
  std::size_t epoch = 0;
  std::size_t batch_samples = 0;
  double lr = 0.0;
  LossReport losses;            // mean over micro-batches; zero in Classification
  double classification = 0.0;  // mean cross-entropy; zero in Alignment
  double total = 0.0;
};

struct RunRecord {
  TrainConfig config;
  std::uint64_t seed = 0;
  std::vector<StepRecord> history;
  double stage1_seconds = 0.0;
  double stage2_seconds = 0.0;
  MetricsReport initial;
  MetricsReport final;
  double classifier_accuracy = 0.0;  // test split argmax of the classifier head
  ProjectionModel model;
  ClassifierHead classifier;
};

/// Builds the raw inputs of one batch: each anchor's object, attribute and
/// category-name embedding plus, per hard negative, the representative
/// sample's attribute embedding and the negative category's name embedding.
RawBatch assemble_batch(const AlignmentDataset& ds, const HardNegativeSet& negatives,
                        std::span<const std::size_t> sample_ids);

/// Stage-two classifier head initialized from the projected category-name
/// embeddings (one row per category, scaled by 1/temperature), zero bias.
ClassifierHead category_classifier(const AlignmentDataset& ds, const ProjectionModel& model, double temperature);

/// Test accuracy of argmax over classifier logits on projected objects.
double classifier_accuracy(const AlignmentDataset& ds, const ProjectionModel& model, const ClassifierHead& head,
                           Split split = Split::Test);

/// Runs the configured schedule on a copy of `model`. Batches are seeded
/// shuffles of the train split; the last partial batch is kept. Each
/// optimizer step averages the gradients of its micro-batches; in-batch
/// negatives are drawn from the micro-batch. Throws MiningIncomplete when a
/// contrastive stage runs and some train sample has no negatives, ConfigError
/// on invalid settings.
RunRecord train(const AlignmentDataset& ds, const HardNegativeSet& negatives, const ProjectionModel& model,
                const TrainConfig& cfg);

/// Tab-separated per-step history, doubles printed round-trip exact.
std::string history_to_tsv(const RunRecord& run);
/// Config, seed, initial/final metrics and history summary. Wall times are
/// left out so the file is a pure function of the inputs.
std::string run_to_json(const RunRecord& run);

enum class NegativeSource { Mined, Simple };

struct AblationArm {
  std::string name;
  TrainConfig config;
  NegativeSource negatives = NegativeSource::Mined;
};

struct AblationConfig {
  TrainConfig base;
  ModelConfig model;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::size_t concurrent_arms = 1;
};

/// Reference arm (two-stage, attribute triple, mined negatives) followed by
/// one arm per single-factor change: simple negatives, object-category
/// contrast, one-stage, stage-two only, classifier only.
std::vector<AblationArm> standard_arms(const TrainConfig& base);

struct ArmResult {
  std::string name;
  NegativeSource negatives = NegativeSource::Mined;
  std::vector<std::string> config_diff;  // "key: reference -> arm"
  std::vector<double> accuracy;          // per seed, multiple-choice test accuracy
  std::vector<double> alignment;         // per seed, test alignment quality
  std::vector<double> classifier;        // per seed, classifier test accuracy
  double accuracy_mean = 0.0, accuracy_std = 0.0;
  double alignment_mean = 0.0, alignment_std = 0.0;
  double classifier_mean = 0.0, classifier_std = 0.0;
};

struct AblationReport {
  std::vector<std::uint64_t> seeds;
  std::vector<ArmResult> arms;

  const ArmResult& arm(std::string_view name) const;
};

/// Trains every arm once per seed (seed s sets both the model init seed and
/// the training seed). Mined negatives are computed once; simple negatives
/// are drawn per seed. Standard deviations are sample (n - 1) deviations.
AblationReport ablation_suite(const AlignmentDataset& ds, const AblationConfig& cfg,
                              const std::vector<AblationArm>& arms);
AblationReport ablation_suite(const AlignmentDataset& ds, const AblationConfig& cfg);

std::string ablation_to_tsv(const AblationReport& report);
std::string ablation_to_json(const AblationReport& report);

}  // namespace attralign

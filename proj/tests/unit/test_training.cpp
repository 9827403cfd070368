#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "attralign/diagnostics.hpp"
#include "attralign/mining.hpp"
#include "attralign/training.hpp"
#include "test_util.hpp"

using namespace attralign;

namespace {

SynthConfig small_data(std::uint64_t seed = 7) {
  SynthConfig cfg;
  cfg.num_classes = 5;
  cfg.samples_per_class = 20;
  cfg.dim_object = 8;
  cfg.dim_text = 8;
  cfg.seed = seed;
  return cfg;
}

ModelConfig small_model(const SynthConfig& data, std::uint64_t seed = 7) {
  ModelConfig m;
  m.dim_object = data.dim_object;
  m.dim_text = data.dim_text;
  m.output_dim = 8;
  m.hidden_dim = 16;
  m.seed = seed;
  return m;
}

TrainConfig quick_config() {
  TrainConfig c;
  c.stage1 = {.batch_size = 32, .micro_batch = 16, .epochs = 2, .lr = 5e-3, .warmup_steps = 2};
  c.stage2 = {.batch_size = 32, .micro_batch = 16, .epochs = 1, .lr = 2e-4, .warmup_steps = 2};
  return c;
}

struct Fixture {
  SynthConfig data_cfg = small_data();
  AlignmentDataset ds = generate_synthetic(data_cfg);
  HardNegativeSet negatives = mine(ds, 3);
  ProjectionModel model = make_model(small_model(data_cfg));
};

std::size_t batches_per_epoch(std::size_t n, std::size_t batch) { return (n + batch - 1) / batch; }

}  // namespace

TEST(Train, ZeroEpochsIsTheUntrainedBaseline) {
  Fixture f;
  TrainConfig cfg = quick_config();
  cfg.stage1.epochs = 0;
  cfg.stage2.epochs = 0;
  const RunRecord run = train(f.ds, f.negatives, f.model, cfg);
  EXPECT_TRUE(run.history.empty());
  EXPECT_EQ(run.model, f.model);
  EXPECT_EQ(metrics_to_json(run.final), metrics_to_json(run.initial));
  EXPECT_EQ(metrics_to_json(run.initial), metrics_to_json(evaluate(f.ds, f.model, cfg.eval)));
}

TEST(Train, ZeroEpochsSkipsTheCoverageCheck) {
  Fixture f;
  TrainConfig cfg = quick_config();
  cfg.stage1.epochs = 0;
  cfg.stage2.epochs = 0;
  EXPECT_NO_THROW(train(f.ds, HardNegativeSet{}, f.model, cfg));
}

TEST(Train, HistoryLayoutAcrossStages) {
  Fixture f;
  const TrainConfig cfg = quick_config();
  const RunRecord run = train(f.ds, f.negatives, f.model, cfg);
  const std::size_t n = f.ds.split_ids(Split::Train).size();
  const std::size_t s1 = cfg.stage1.epochs * batches_per_epoch(n, cfg.stage1.batch_size);
  const std::size_t s2 = cfg.stage2.epochs * batches_per_epoch(n, cfg.stage2.batch_size);
  ASSERT_EQ(run.history.size(), s1 + s2);
  for (std::size_t i = 0; i < run.history.size(); ++i) {
    const StepRecord& r = run.history[i];
    EXPECT_EQ(r.step, i + 1);
    if (i < s1) {
      EXPECT_EQ(r.phase, Phase::Alignment);
      EXPECT_EQ(r.classification, 0.0);
      EXPECT_GT(r.losses.stage1_total, 0.0);
      EXPECT_DOUBLE_EQ(r.total, r.losses.stage1_total);
      EXPECT_DOUBLE_EQ(r.lr, warmup_lr(cfg.stage1.lr, i + 1, cfg.stage1.warmup_steps));
    } else {
      EXPECT_EQ(r.phase, Phase::Classification);
      EXPECT_EQ(r.losses.stage1_total, 0.0);
      EXPECT_GT(r.classification, 0.0);
      // each phase warms up from its own first step
      EXPECT_DOUBLE_EQ(r.lr, warmup_lr(cfg.stage2.lr, i + 1 - s1, cfg.stage2.warmup_steps));
    }
  }
  // the last partial batch is kept
  std::size_t seen = 0;
  for (std::size_t i = 0; i < s1 / cfg.stage1.epochs; ++i) seen += run.history[i].batch_samples;
  EXPECT_EQ(seen, n);
}

TEST(Train, ReportedLossesAreMicroBatchMeans) {
  Fixture f;
  TrainConfig cfg = quick_config();
  cfg.stage1.epochs = 1;
  cfg.stage2.epochs = 0;
  const RunRecord run = train(f.ds, f.negatives, f.model, cfg);
  const auto& r = run.history.front();
  EXPECT_NEAR(r.losses.stage1_total, (r.losses.l_oac + r.losses.l_acc + r.losses.l_ccc) / 2, 1e-12);
  EXPECT_NEAR(r.losses.l_oac, (r.losses.l_oa + r.losses.l_ao) / 2, 1e-12);
}

TEST(Train, OneStageRecordsJointSteps) {
  Fixture f;
  TrainConfig cfg = quick_config();
  cfg.mode = TrainMode::OneStage;
  cfg.one_stage_weight = 0.5;
  const RunRecord run = train(f.ds, f.negatives, f.model, cfg);
  ASSERT_FALSE(run.history.empty());
  for (const auto& r : run.history) {
    EXPECT_EQ(r.phase, Phase::Joint);
    EXPECT_NEAR(r.total, r.losses.stage1_total + 0.5 * r.classification, 1e-12);
  }
}

TEST(Train, MiningIncompleteWhenAnAnchorLacksNegatives) {
  Fixture f;
  HardNegativeSet partial = f.negatives;
  partial.entries.erase(partial.entries.begin());
  EXPECT_ERROR_CODE(train(f.ds, partial, f.model, quick_config()), ErrorCode::MiningIncomplete);
  HardNegativeSet emptied = f.negatives;
  emptied.entries.begin()->second.clear();
  EXPECT_ERROR_CODE(train(f.ds, emptied, f.model, quick_config()), ErrorCode::MiningIncomplete);
  // classification-only modes never look at negatives
  TrainConfig s2 = quick_config();
  s2.mode = TrainMode::Stage2Only;
  EXPECT_NO_THROW(train(f.ds, HardNegativeSet{}, f.model, s2));
}

TEST(Train, ConfigErrors) {
  Fixture f;
  auto expect_config_error = [&](auto mutate) {
    TrainConfig cfg = quick_config();
    mutate(cfg);
    EXPECT_ERROR_CODE(train(f.ds, f.negatives, f.model, cfg), ErrorCode::ConfigError);
  };
  expect_config_error([](TrainConfig& c) { c.stage1.batch_size = 0; });
  expect_config_error([](TrainConfig& c) { c.stage2.micro_batch = 0; });
  expect_config_error([](TrainConfig& c) { c.stage1.lr = -1; });
  expect_config_error([](TrainConfig& c) { c.temperature = 0; });
  expect_config_error([](TrainConfig& c) { c.k_hard_negatives = 0; });
  expect_config_error([](TrainConfig& c) { c.threads = 0; });
  expect_config_error([](TrainConfig& c) { c.one_stage_weight = std::nan(""); });
  EXPECT_ERROR_CODE(parse_train_mode("three-stage"), ErrorCode::ConfigError);
  EXPECT_ERROR_CODE(parse_variant("pairs"), ErrorCode::ConfigError);
}

TEST(Train, DimensionMismatchBetweenModelAndData) {
  Fixture f;
  ModelConfig wrong = small_model(f.data_cfg);
  wrong.dim_object = 9;
  EXPECT_ERROR_CODE(train(f.ds, f.negatives, make_model(wrong), quick_config()), ErrorCode::DimensionMismatch);
}

TEST(Train, RepeatedRunsReproduceHistory) {
  Fixture f;
  const TrainConfig cfg = quick_config();
  const RunRecord a = train(f.ds, f.negatives, f.model, cfg);
  const RunRecord b = train(f.ds, f.negatives, f.model, cfg);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_NEAR(a.history[i].total, b.history[i].total, 1e-12);
    EXPECT_NEAR(a.history[i].losses.l_ccc, b.history[i].losses.l_ccc, 1e-12);
  }
  EXPECT_EQ(history_to_tsv(a), history_to_tsv(b));
  EXPECT_EQ(run_to_json(a), run_to_json(b));
  EXPECT_EQ(a.model, b.model);
}

TEST(Train, ThreadCountDoesNotChangeTheResult) {
  Fixture f;
  TrainConfig cfg = quick_config();
  cfg.stage1.batch_size = 64;
  const RunRecord one = train(f.ds, f.negatives, f.model, cfg);
  cfg.threads = 2;
  const RunRecord two = train(f.ds, f.negatives, f.model, cfg);
  ASSERT_EQ(one.history.size(), two.history.size());
  for (std::size_t i = 0; i < one.history.size(); ++i) {
    EXPECT_NEAR(one.history[i].total, two.history[i].total, 1e-9);
  }
}

TEST(Train, DifferentSeedsShuffleDifferently) {
  Fixture f;
  TrainConfig cfg = quick_config();
  const RunRecord a = train(f.ds, f.negatives, f.model, cfg);
  cfg.seed = 1;
  const RunRecord b = train(f.ds, f.negatives, f.model, cfg);
  EXPECT_NE(a.history.front().total, b.history.front().total);
}

TEST(Train, PhasesTouchOnlyTheirParameterGroups) {
  Fixture f;
  TrainConfig cfg = quick_config();
  cfg.mode = TrainMode::FinetuneOnly;
  RunRecord run = train(f.ds, f.negatives, f.model, cfg);
  EXPECT_EQ(parameter_checksum(run.model.object_head), parameter_checksum(f.model.object_head));
  EXPECT_EQ(parameter_checksum(run.model.text_head), parameter_checksum(f.model.text_head));
  EXPECT_NE(parameter_checksum(run.classifier),
            parameter_checksum(category_classifier(f.ds, f.model, cfg.temperature)));

  cfg.mode = TrainMode::Stage2Only;
  run = train(f.ds, f.negatives, f.model, cfg);
  EXPECT_NE(parameter_checksum(run.model.object_head), parameter_checksum(f.model.object_head));
  EXPECT_EQ(parameter_checksum(run.model.text_head), parameter_checksum(f.model.text_head));

  cfg.mode = TrainMode::TwoStage;
  cfg.stage2.epochs = 0;
  run = train(f.ds, f.negatives, f.model, cfg);
  EXPECT_NE(parameter_checksum(run.model.object_head), parameter_checksum(f.model.object_head));
  EXPECT_NE(parameter_checksum(run.model.text_head), parameter_checksum(f.model.text_head));
  // with no stage-two steps the classifier is exactly its category initialization
  EXPECT_EQ(run.classifier, category_classifier(f.ds, run.model, cfg.temperature));
}

TEST(Train, AlignmentLossFallsOverTraining) {
  Fixture f;
  TrainConfig cfg = quick_config();
  cfg.stage1.epochs = 6;
  cfg.stage2.epochs = 0;
  const RunRecord run = train(f.ds, f.negatives, f.model, cfg);
  const std::size_t per_epoch = batches_per_epoch(f.ds.split_ids(Split::Train).size(), cfg.stage1.batch_size);
  double first = 0, last = 0;
  for (std::size_t i = 0; i < per_epoch; ++i) {
    first += run.history[i].total;
    last += run.history[run.history.size() - 1 - i].total;
  }
  EXPECT_LT(last, first);
  EXPECT_GT(run.final.alignment_quality, run.initial.alignment_quality);
}

TEST(Train, AlignsTheDefaultSyntheticTask) {
  // 10 classes, 50 per class, sigma 0.1, offset 1.0, seed 7
  const SynthConfig data;
  const auto ds = generate_synthetic(data);
  ModelConfig mc;
  mc.dim_object = data.dim_object;
  mc.dim_text = data.dim_text;
  TrainConfig cfg;
  cfg.stage1.epochs = 5;
  cfg.stage1.lr = 5e-3;
  cfg.stage1.warmup_steps = 10;
  const RunRecord run = train(ds, mine(ds, 3), make_model(mc), cfg);
  EXPECT_GE(run.final.alignment_quality - run.initial.alignment_quality, 0.1);
  EXPECT_GE(run.final.mc.accuracy, 0.9);
  EXPECT_LE(run.initial.mc.accuracy, 0.3);
}

TEST(ClassifierInit, RowsAreScaledProjectedCategories) {
  Fixture f;
  const ClassifierHead head = category_classifier(f.ds, f.model, 0.5);
  std::vector<std::size_t> cats(f.ds.num_categories());
  for (std::size_t c = 0; c < cats.size(); ++c) cats[c] = c;
  const Matrix proj = project_categories(f.model, category_matrix(f.ds, cats));
  for (std::size_t c = 0; c < cats.size(); ++c) {
    for (std::size_t j = 0; j < proj.cols(); ++j) EXPECT_NEAR(head.weight(c, j), proj(c, j) / 0.5, 1e-15);
    EXPECT_EQ(head.bias(0, c), 0.0);
  }
  // argmax of cosine-initialized logits equals embedding argmax
  EXPECT_DOUBLE_EQ(classifier_accuracy(f.ds, f.model, head), evaluate_mc(f.ds, f.model).accuracy);
}

TEST(AssembleBatch, LaysOutNegativesPerAnchor) {
  Fixture f;
  const std::vector<std::size_t> ids{f.negatives.entries.begin()->first, std::next(f.negatives.entries.begin())->first};
  const RawBatch b = assemble_batch(f.ds, f.negatives, ids);
  ASSERT_EQ(b.negative_offsets.size(), 3u);
  std::size_t row = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& negs = f.negatives.of(ids[i]);
    EXPECT_EQ(b.negative_offsets[i + 1] - b.negative_offsets[i], negs.size());
    for (const auto& n : negs) {
      EXPECT_EQ(b.negative_attributes.row_vector(row), f.ds.sample(n.sample).attribute_embedding);
      EXPECT_EQ(b.negative_categories.row_vector(row), f.ds.table().at(n.category).name_embedding);
      ++row;
    }
    EXPECT_EQ(b.objects.row_vector(i), f.ds.sample(ids[i]).object_embedding);
    EXPECT_EQ(b.categories.row_vector(i), f.ds.table().at(f.ds.sample(ids[i]).category).name_embedding);
  }
}

TEST(TrainConfigJson, RoundTripAndUnknownKeys) {
  TrainConfig c = quick_config();
  c.mode = TrainMode::OneStage;
  c.variant = ContrastiveVariant::ObjectCategory;
  c.temperature = 0.07;
  c.eval.choices = 4;
  const TrainConfig back = train_config_from_json(train_config_to_json(c));
  EXPECT_EQ(describe(back), describe(c));
  EXPECT_EQ(describe(c).at("stage1.lr"), "0.0050000000000000001");
  EXPECT_EQ(describe(c).at("variant"), "object-category");

  EXPECT_ERROR_CODE(train_config_from_json("{\"stage1\": {\"lr\": 1, \"momentum\": 0.9}}"), ErrorCode::ConfigError);
  EXPECT_ERROR_CODE(train_config_from_json("{\"tau\": 1}"), ErrorCode::ConfigError);
  EXPECT_ERROR_CODE(train_config_from_json("{\"stage1\": {\"lr\": \"fast\"}}"), ErrorCode::ConfigError);
  EXPECT_ERROR_CODE(train_config_from_json("[1, 2]"), ErrorCode::ConfigError);
  EXPECT_ERROR_CODE(train_config_from_json("{"), ErrorCode::ConfigError);
  const TrainConfig partial = train_config_from_json("{\"temperature\": 0.5}");
  EXPECT_EQ(partial.temperature, 0.5);
  EXPECT_EQ(partial.stage2.batch_size, 128u);
}

TEST(Ablation, ReportsEveryArmWithSingleFactorDiffs) {
  const SynthConfig data = small_data();
  const auto ds = generate_synthetic(data);
  AblationConfig cfg;
  cfg.base = quick_config();
  cfg.base.stage1.epochs = 1;
  cfg.model = small_model(data);
  cfg.seeds = {0, 1};
  const AblationReport report = ablation_suite(ds, cfg);
  ASSERT_EQ(report.arms.size(), 6u);
  EXPECT_TRUE(report.arm("reference").config_diff.empty());
  EXPECT_EQ(report.arm("simple-negatives").config_diff, std::vector<std::string>{"negatives: mined -> simple"});
  EXPECT_EQ(report.arm("object-category").config_diff,
            std::vector<std::string>{"variant: triple -> object-category"});
  EXPECT_EQ(report.arm("one-stage").config_diff, std::vector<std::string>{"mode: two-stage -> one-stage"});
  EXPECT_EQ(report.arm("stage2-only").config_diff, std::vector<std::string>{"mode: two-stage -> stage2-only"});
  for (const ArmResult& a : report.arms) {
    ASSERT_EQ(a.accuracy.size(), 2u);
    const double mean = (a.accuracy[0] + a.accuracy[1]) / 2;
    EXPECT_NEAR(a.accuracy_mean, mean, 1e-15);
    EXPECT_NEAR(a.accuracy_std, std::abs(a.accuracy[0] - a.accuracy[1]) / std::sqrt(2.0), 1e-12);
  }
  EXPECT_ERROR_CODE(report.arm("nope"), ErrorCode::InvalidArgument);
  const std::string tsv = ablation_to_tsv(report);
  EXPECT_EQ(std::count(tsv.begin(), tsv.end(), '\n'), 7);

  // the per-arm numbers are those of a direct train() call with the same seed
  ModelConfig mc = cfg.model;
  mc.seed = 1;
  TrainConfig tc = cfg.base;
  tc.seed = 1;
  const RunRecord direct = train(ds, mine(ds, 3), make_model(mc), tc);
  EXPECT_EQ(report.arm("reference").accuracy[1], direct.final.mc.accuracy);

  AblationConfig none = cfg;
  none.seeds.clear();
  EXPECT_ERROR_CODE(ablation_suite(ds, none), ErrorCode::ConfigError);
}

namespace {

// Object head undoes the generator's text-to-object map, text head is the
// identity: on noiseless data every object projects onto its category.
ProjectionModel aligned_model(const SynthConfig& data) {
  const Matrix map = synthetic_object_map(data);
  Matrix inverse(map.cols(), map.rows());
  for (std::size_t i = 0; i < map.rows(); ++i)
    for (std::size_t j = 0; j < map.cols(); ++j) inverse(j, i) = map(i, j);
  const HeadSpec object_spec{{data.dim_object, data.dim_text}, Activation::Identity};
  const HeadSpec text_spec{{data.dim_text, data.dim_text}, Activation::Identity};
  return {MlpHead(object_spec, {DenseLayer{inverse, Matrix(1, data.dim_text)}}), MlpHead::identity(text_spec),
          std::nullopt};
}

SynthConfig noiseless(std::uint64_t seed) {
  SynthConfig d;
  d.intra_class_sigma = 0;
  d.modality_gap_offset = 0;
  d.attribute_noise_sigma = 0;
  d.seed = seed;
  return d;
}

}  // namespace

TEST(Train, DefaultScheduleKeepsNoiselessAlignment) {
  for (std::uint64_t seed : {7, 1}) {
    const SynthConfig data = noiseless(seed);
    const auto ds = generate_synthetic(data);
    const RunRecord run = train(ds, mine(ds, 3), aligned_model(data), TrainConfig{});
    EXPECT_NEAR(run.initial.alignment_quality, 1.0, 1e-12);
    EXPECT_NEAR(run.final.alignment_quality, 1.0, 1e-6) << "seed " << seed;
    EXPECT_EQ(run.final.mc.accuracy, 1.0);
  }
}

TEST(Train, NoiselessStageOneLossEndsBelowStart) {
  const SynthConfig data = noiseless(7);
  const auto ds = generate_synthetic(data);
  ModelConfig mc;
  mc.dim_object = data.dim_object;
  mc.dim_text = data.dim_text;
  TrainConfig cfg;
  cfg.stage1 = {.batch_size = 64, .micro_batch = 16, .epochs = 5, .lr = 5e-3, .warmup_steps = 10};
  cfg.stage2.epochs = 0;
  const RunRecord run = train(ds, mine(ds, 3), make_model(mc), cfg);
  const std::size_t per_epoch = batches_per_epoch(ds.split_ids(Split::Train).size(), 64);
  double first = 0, last = 0;
  for (std::size_t i = 0; i < per_epoch; ++i) {
    first += run.history[i].losses.stage1_total;
    last += run.history[run.history.size() - 1 - i].losses.stage1_total;
  }
  EXPECT_LE(last, first);
}

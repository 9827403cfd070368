#include "attralign/training.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace attralign {

using json = nlohmann::json;
using NodeId = Tape::NodeId;

std::string_view to_string(TrainMode mode) noexcept {
  switch (mode) {
    case TrainMode::TwoStage: return "two-stage";
    case TrainMode::OneStage: return "one-stage";
    case TrainMode::Stage2Only: return "stage2-only";
    case TrainMode::FinetuneOnly: return "finetune-only";
  }
  return "?";
}

TrainMode parse_train_mode(std::string_view text) {
  for (TrainMode m : {TrainMode::TwoStage, TrainMode::OneStage, TrainMode::Stage2Only, TrainMode::FinetuneOnly}) {
    if (text == to_string(m)) return m;
  }
  throw Error(ErrorCode::ConfigError, "unknown training mode '" + std::string(text) +
                                          "' (expected two-stage, one-stage, stage2-only or finetune-only)");
}

std::string_view to_string(ContrastiveVariant variant) noexcept {
  return variant == ContrastiveVariant::AttributeTriple ? "triple" : "object-category";
}

ContrastiveVariant parse_variant(std::string_view text) {
  if (text == "triple") return ContrastiveVariant::AttributeTriple;
  if (text == "object-category") return ContrastiveVariant::ObjectCategory;
  throw Error(ErrorCode::ConfigError, "unknown contrastive variant '" + std::string(text) +
                                          "' (expected triple or object-category)");
}

std::string_view to_string(Phase phase) noexcept {
  switch (phase) {
    case Phase::Alignment: return "alignment";
    case Phase::Classification: return "classification";
    case Phase::Joint: return "joint";
  }
  return "?";
}

namespace {

void validate_stage(const StageConfig& s, const char* name) {
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::ConfigError, std::string(name) + ": " + what);
  };
  if (s.batch_size == 0) fail("batch_size must be >= 1");
  if (s.micro_batch == 0) fail("micro_batch must be >= 1");
  if (!(s.lr > 0.0) || !std::isfinite(s.lr)) fail("lr must be a positive finite number");
}

}  // namespace

void TrainConfig::validate() const {
  validate_stage(stage1, "stage1");
  validate_stage(stage2, "stage2");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorCode::ConfigError, "temperature must be a positive finite number");
  }
  if (k_hard_negatives == 0) throw Error(ErrorCode::ConfigError, "k_hard_negatives must be >= 1");
  if (!std::isfinite(one_stage_weight) || one_stage_weight < 0.0) {
    throw Error(ErrorCode::ConfigError, "one_stage_weight must be finite and non-negative");
  }
  if (threads == 0) throw Error(ErrorCode::ConfigError, "threads must be >= 1");
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json stage_json(const StageConfig& s) {
  return {{"batch_size", s.batch_size}, {"micro_batch", s.micro_batch}, {"epochs", s.epochs},
          {"lr", s.lr},                 {"warmup_steps", s.warmup_steps}};
}

json config_json(const TrainConfig& c) {
  json eval{{"split", to_string(c.eval.split)},
            {"choices", c.eval.choices == kAllChoices ? json("all") : json(c.eval.choices)},
            {"seed", c.eval.seed},
            {"include_probe", c.eval.include_probe}};
  return {{"stage1", stage_json(c.stage1)},
          {"stage2", stage_json(c.stage2)},
          {"temperature", c.temperature},
          {"k_hard_negatives", c.k_hard_negatives},
          {"mode", to_string(c.mode)},
          {"variant", to_string(c.variant)},
          {"one_stage_weight", c.one_stage_weight},
          {"seed", c.seed},
          {"threads", c.threads},
          {"eval", eval}};
}

void flatten(const json& j, const std::string& prefix, std::map<std::string, std::string>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) {
      flatten(*it, key, out);
    } else if (it->is_string()) {
      out[key] = it->get<std::string>();
    } else if (it->is_number_float()) {
      out[key] = fmt(it->get<double>());
    } else {
      out[key] = it->dump();
    }
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& dst, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, where + key + ": " + e.what());
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return it.key() == k; })) {
      throw Error(ErrorCode::ConfigError, "unknown config key '" + where + it.key() + "'");
    }
  }
}

void read_stage(const json& j, StageConfig& s, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, where + " must be an object");
  reject_unknown(j, {"batch_size", "micro_batch", "epochs", "lr", "warmup_steps"}, where + ".");
  read_field(j, "batch_size", s.batch_size, where + ".");
  read_field(j, "micro_batch", s.micro_batch, where + ".");
  read_field(j, "epochs", s.epochs, where + ".");
  read_field(j, "lr", s.lr, where + ".");
  read_field(j, "warmup_steps", s.warmup_steps, where + ".");
}

}  // namespace

std::map<std::string, std::string> describe(const TrainConfig& cfg) {
  std::map<std::string, std::string> out;
  flatten(config_json(cfg), "", out);
  return out;
}

std::string train_config_to_json(const TrainConfig& cfg) { return config_json(cfg).dump(2) + "\n"; }

TrainConfig train_config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, std::string("training config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "training config must be a JSON object");
  reject_unknown(j, {"stage1", "stage2", "temperature", "k_hard_negatives", "mode", "variant", "one_stage_weight",
                     "seed", "threads", "eval"},
                 "");
  TrainConfig c;
  if (j.contains("stage1")) read_stage(j["stage1"], c.stage1, "stage1");
  if (j.contains("stage2")) read_stage(j["stage2"], c.stage2, "stage2");
  read_field(j, "temperature", c.temperature, "");
  read_field(j, "k_hard_negatives", c.k_hard_negatives, "");
  read_field(j, "one_stage_weight", c.one_stage_weight, "");
  read_field(j, "seed", c.seed, "");
  read_field(j, "threads", c.threads, "");
  std::string text_field;
  if (j.contains("mode")) {
    read_field(j, "mode", text_field, "");
    c.mode = parse_train_mode(text_field);
  }
  if (j.contains("variant")) {
    read_field(j, "variant", text_field, "");
    c.variant = parse_variant(text_field);
  }
  if (j.contains("eval")) {
    const json& e = j["eval"];
    if (!e.is_object()) throw Error(ErrorCode::ConfigError, "eval must be an object");
    reject_unknown(e, {"split", "choices", "seed", "include_probe"}, "eval.");
    if (e.contains("split")) {
      read_field(e, "split", text_field, "eval.");
      try {
        c.eval.split = parse_split(text_field);
      } catch (const Error& err) {
        throw Error(ErrorCode::ConfigError, std::string("eval.split: ") + err.what());
      }
    }
    if (e.contains("choices")) {
      if (e["choices"].is_string() && e["choices"].get<std::string>() == "all") {
        c.eval.choices = kAllChoices;
      } else {
        read_field(e, "choices", c.eval.choices, "eval.");
      }
    }
    read_field(e, "seed", c.eval.seed, "eval.");
    read_field(e, "include_probe", c.eval.include_probe, "eval.");
  }
  c.validate();
  return c;
}

RawBatch assemble_batch(const AlignmentDataset& ds, const HardNegativeSet& negatives,
                        std::span<const std::size_t> ids) {
  RawBatch b;
  b.objects = object_matrix(ds, ids);
  b.attributes = attribute_matrix(ds, ids);
  b.categories = category_matrix(ds, labels_of(ds, ids));
  std::vector<std::size_t> neg_samples;
  std::vector<std::size_t> neg_categories;
  b.negative_offsets.push_back(0);
  for (std::size_t id : ids) {
    for (const HardNegative& hn : negatives.of(id)) {
      if (hn.category >= ds.num_categories() || hn.sample >= ds.size()) {
        throw Error(ErrorCode::UnknownCategory,
                    "negative " + std::to_string(hn.category) + ":" + std::to_string(hn.sample) + " of sample " +
                        std::to_string(id) + " is outside the dataset");
      }
      neg_samples.push_back(hn.sample);
      neg_categories.push_back(hn.category);
    }
    b.negative_offsets.push_back(neg_samples.size());
  }
  b.negative_attributes = neg_samples.empty() ? Matrix(0, ds.embedding_dim_text()) : attribute_matrix(ds, neg_samples);
  b.negative_categories =
      neg_categories.empty() ? Matrix(0, ds.embedding_dim_text()) : category_matrix(ds, neg_categories);
  return b;
}

ClassifierHead category_classifier(const AlignmentDataset& ds, const ProjectionModel& model, double temperature) {
  std::vector<std::size_t> ids(ds.num_categories());
  std::iota(ids.begin(), ids.end(), 0);
  ClassifierHead head;
  head.weight = project_categories(model, category_matrix(ds, ids));
  for (double& w : head.weight.data()) w /= temperature;
  head.bias = Matrix(1, ds.num_categories());
  return head;
}

double classifier_accuracy(const AlignmentDataset& ds, const ProjectionModel& model, const ClassifierHead& head,
                           Split split) {
  const auto ids = ds.split_ids(split);
  if (ids.empty()) throw Error(ErrorCode::EmptyInput, std::string(to_string(split)) + " split is empty");
  const Matrix objects = project_objects(model, object_matrix(ds, ids));
  if (objects.cols() != head.weight.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "classifier dim differs from projection dim");
  }
  std::size_t correct = 0;
  for (std::size_t r = 0; r < ids.size(); ++r) {
    std::size_t best = 0;
    double best_score = -INFINITY;
    for (std::size_t c = 0; c < head.num_classes(); ++c) {
      const double s = dot(objects.row(r), head.weight.row(c)) + head.bias(0, c);
      if (s > best_score) {
        best_score = s;
        best = c;
      }
    }
    if (best == ds.sample(ids[r]).category) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ids.size());
}

namespace {

/// Runs fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(threads, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct MicroResult {
  std::vector<Matrix> grads;
  LossReport losses;
  double classification = 0.0;
  double total = 0.0;
};

std::pair<NodeId, NodeId> bind_classifier(Tape& tape, const ClassifierHead& head) {
  return {tape.leaf(head.weight), tape.leaf(head.bias)};
}

/// Which parameter groups one phase trains.
struct PhasePlan {
  Phase phase;
  bool contrastive;      // stage-one objective on the tape
  bool classification;   // cross-entropy on the tape
  bool update_model;     // all projection heads (contrastive) or object head (classification)
  bool update_classifier;
};

class Trainer {
 public:
  Trainer(const AlignmentDataset& ds, const HardNegativeSet& negatives, const TrainConfig& cfg, RunRecord& run)
      : ds_(ds), negatives_(negatives), cfg_(cfg), run_(run), rng_(cfg.seed) {}

  void run_phase(const PhasePlan& plan, const StageConfig& stage) {
    std::vector<Matrix*> params = trainable(plan);
    AdamOptimizer opt(AdamConfig{.lr = stage.lr, .warmup_steps = stage.warmup_steps}, params);
    std::vector<std::size_t> order = ds_.split_ids(Split::Train);

    for (std::size_t epoch = 0; epoch < stage.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng_);
      for (std::size_t start = 0; start < order.size(); start += stage.batch_size) {
        const std::size_t end = std::min(order.size(), start + stage.batch_size);
        std::vector<std::span<const std::size_t>> micro;
        for (std::size_t m = start; m < end; m += stage.micro_batch) {
          micro.emplace_back(order.data() + m, std::min(end, m + stage.micro_batch) - m);
        }
        std::vector<MicroResult> results(micro.size());
        parallel_for(micro.size(), cfg_.threads, [&](std::size_t i) { results[i] = evaluate(plan, micro[i]); });

        const double inv = 1.0 / static_cast<double>(micro.size());
        std::vector<Matrix> grads = std::move(results[0].grads);
        StepRecord rec;
        rec.phase = plan.phase;
        rec.epoch = epoch;
        rec.batch_samples = end - start;
        accumulate(rec, results[0], inv);
        for (std::size_t i = 1; i < results.size(); ++i) {
          for (std::size_t p = 0; p < grads.size(); ++p) {
            auto dst = grads[p].data();
            auto src = results[i].grads[p].data();
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
          }
          accumulate(rec, results[i], inv);
        }
        for (Matrix& g : grads) {
          for (double& v : g.data()) v *= inv;
        }
        opt.step(params, grads);
        rec.step = ++global_step_;
        rec.lr = opt.last_lr();
        run_.history.push_back(rec);
      }
    }
  }

 private:
  static void accumulate(StepRecord& rec, const MicroResult& r, double w) {
    LossReport& a = rec.losses;
    const LossReport& b = r.losses;
    a.l_oa += w * b.l_oa;
    a.l_ao += w * b.l_ao;
    a.l_oac += w * b.l_oac;
    a.l_ac += w * b.l_ac;
    a.l_ca += w * b.l_ca;
    a.l_acc += w * b.l_acc;
    a.l_oc += w * b.l_oc;
    a.l_co += w * b.l_co;
    a.l_occ += w * b.l_occ;
    a.l_ccc += w * b.l_ccc;
    a.aux += w * b.aux;
    a.stage1_total += w * b.stage1_total;
    rec.classification += w * r.classification;
    rec.total += w * r.total;
  }

  std::vector<Matrix*> trainable(const PhasePlan& plan) {
    std::vector<Matrix*> out;
    if (plan.update_model) {
      out = plan.contrastive ? parameter_refs(run_.model) : parameter_refs(run_.model.object_head);
    }
    if (plan.update_classifier) {
      for (Matrix* m : run_.classifier.parameter_refs()) out.push_back(m);
    }
    return out;
  }

  MicroResult evaluate(const PhasePlan& plan, std::span<const std::size_t> ids) const {
    Tape tape;
    std::vector<NodeId> param_nodes;
    MicroResult r;
    std::optional<NodeId> total;
    NodeId objects = 0;

    if (plan.contrastive) {
      const ModelBinding binding = bind_model(tape, run_.model);
      const RawBatch batch = assemble_batch(ds_, negatives_, ids);
      const ViewNodes views = record_forward(tape, run_.model, binding, batch, cfg_.temperature);
      const LossNodes nodes = record_stage1(tape, views, cfg_.variant, cfg_.aux);
      r.losses = read_report(tape, nodes);
      total = nodes.total;
      objects = views.objects;
      if (plan.update_model) param_nodes = binding.all();
    } else {
      const HeadBinding binding = bind_head(tape, run_.model.object_head);
      objects = apply_head(tape, run_.model.object_head, binding, tape.leaf(object_matrix(ds_, ids)));
      if (plan.update_model) param_nodes = binding.params;
    }

    if (plan.classification) {
      const auto [w, b] = bind_classifier(tape, run_.classifier);
      const NodeId ce = record_cross_entropy(tape, tape.affine(objects, w, b), labels_of(ds_, ids));
      r.classification = tape.scalar(ce);
      const double weight = plan.contrastive ? cfg_.one_stage_weight : 1.0;
      const NodeId scaled = tape.scale(ce, weight);
      total = total ? tape.add(*total, scaled) : scaled;
      if (plan.update_classifier) {
        param_nodes.push_back(w);
        param_nodes.push_back(b);
      }
    }

    r.total = tape.scalar(*total);
    const Tape::Gradients g = tape.backward(*total);
    r.grads.reserve(param_nodes.size());
    for (NodeId id : param_nodes) r.grads.push_back(g.of(id));
    return r;
  }

  const AlignmentDataset& ds_;
  const HardNegativeSet& negatives_;
  const TrainConfig& cfg_;
  RunRecord& run_;
  std::mt19937_64 rng_;
  std::size_t global_step_ = 0;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

RunRecord train(const AlignmentDataset& ds, const HardNegativeSet& negatives, const ProjectionModel& model,
                const TrainConfig& cfg) {
  cfg.validate();
  model.validate();
  if (model.object_head.spec().input_dim() != ds.embedding_dim_object() ||
      model.text_head.spec().input_dim() != ds.embedding_dim_text()) {
    throw Error(ErrorCode::DimensionMismatch, "model input dims do not match the dataset embedding dims");
  }
  const auto train_ids = ds.split_ids(Split::Train);
  if (train_ids.empty()) throw Error(ErrorCode::EmptyInput, "the train split is empty");

  const bool contrastive = cfg.mode == TrainMode::TwoStage || cfg.mode == TrainMode::OneStage;
  if (contrastive && cfg.stage1.epochs > 0) {
    for (std::size_t id : train_ids) {
      if (!negatives.covers(id) || negatives.of(id).empty()) {
        throw Error(ErrorCode::MiningIncomplete, "train sample " + std::to_string(id) + " has no hard negatives");
      }
    }
  }

  RunRecord run;
  run.config = cfg;
  run.seed = cfg.seed;
  run.model = model;
  run.initial = evaluate(ds, model, cfg.eval);

  Trainer trainer(ds, negatives, cfg, run);
  switch (cfg.mode) {
    case TrainMode::TwoStage: {
      auto t0 = std::chrono::steady_clock::now();
      trainer.run_phase({Phase::Alignment, true, false, true, false}, cfg.stage1);
      run.stage1_seconds = seconds_since(t0);
      run.classifier = category_classifier(ds, run.model, cfg.temperature);
      t0 = std::chrono::steady_clock::now();
      trainer.run_phase({Phase::Classification, false, true, true, true}, cfg.stage2);
      run.stage2_seconds = seconds_since(t0);
      break;
    }
    case TrainMode::OneStage: {
      run.classifier = category_classifier(ds, run.model, cfg.temperature);
      const auto t0 = std::chrono::steady_clock::now();
      trainer.run_phase({Phase::Joint, true, true, true, true}, cfg.stage1);
      run.stage1_seconds = seconds_since(t0);
      break;
    }
    case TrainMode::Stage2Only:
    case TrainMode::FinetuneOnly: {
      run.classifier = category_classifier(ds, run.model, cfg.temperature);
      const bool update_model = cfg.mode == TrainMode::Stage2Only;
      const auto t0 = std::chrono::steady_clock::now();
      trainer.run_phase({Phase::Classification, false, true, update_model, true}, cfg.stage2);
      run.stage2_seconds = seconds_since(t0);
      break;
    }
  }

  run.final = evaluate(ds, run.model, cfg.eval);
  run.classifier_accuracy = classifier_accuracy(ds, run.model, run.classifier, cfg.eval.split);
  return run;
}

std::string history_to_tsv(const RunRecord& run) {
  std::ostringstream out;
  out << "step\tphase\tepoch\tsamples\tlr\tl_oa\tl_ao\tl_oac\tl_ac\tl_ca\tl_acc\tl_oc\tl_co\tl_occ\tl_ccc\taux"
         "\tstage1\tclassification\ttotal\n";
  for (const StepRecord& s : run.history) {
    const LossReport& l = s.losses;
    out << s.step << '\t' << to_string(s.phase) << '\t' << s.epoch << '\t' << s.batch_samples << '\t' << fmt(s.lr);
    for (double v : {l.l_oa, l.l_ao, l.l_oac, l.l_ac, l.l_ca, l.l_acc, l.l_oc, l.l_co, l.l_occ, l.l_ccc, l.aux,
                     l.stage1_total, s.classification, s.total}) {
      out << '\t' << fmt(v);
    }
    out << '\n';
  }
  return out.str();
}

namespace {

json metrics_json(const MetricsReport& m) { return json::parse(metrics_to_json(m)); }

}  // namespace

std::string run_to_json(const RunRecord& run) {
  json j;
  j["config"] = config_json(run.config);
  j["seed"] = run.seed;
  j["steps"] = run.history.size();
  j["initial"] = metrics_json(run.initial);
  j["final"] = metrics_json(run.final);
  j["classifier_accuracy"] = run.classifier_accuracy;
  if (!run.history.empty()) {
    j["first_total"] = run.history.front().total;
    j["last_total"] = run.history.back().total;
  }
  return j.dump(2) + "\n";
}

std::vector<AblationArm> standard_arms(const TrainConfig& base) {
  TrainConfig ref = base;
  ref.mode = TrainMode::TwoStage;
  ref.variant = ContrastiveVariant::AttributeTriple;
  std::vector<AblationArm> arms;
  arms.push_back({"reference", ref, NegativeSource::Mined});
  arms.push_back({"simple-negatives", ref, NegativeSource::Simple});
  TrainConfig c = ref;
  c.variant = ContrastiveVariant::ObjectCategory;
  arms.push_back({"object-category", c, NegativeSource::Mined});
  c = ref;
  c.mode = TrainMode::OneStage;
  arms.push_back({"one-stage", c, NegativeSource::Mined});
  c = ref;
  c.mode = TrainMode::Stage2Only;
  arms.push_back({"stage2-only", c, NegativeSource::Mined});
  c = ref;
  c.mode = TrainMode::FinetuneOnly;
  arms.push_back({"finetune-only", c, NegativeSource::Mined});
  return arms;
}

const ArmResult& AblationReport::arm(std::string_view name) const {
  for (const ArmResult& a : arms) {
    if (a.name == name) return a;
  }
  throw Error(ErrorCode::InvalidArgument, "no ablation arm named '" + std::string(name) + "'");
}

namespace {

std::string_view to_string(NegativeSource s) { return s == NegativeSource::Mined ? "mined" : "simple"; }

std::map<std::string, std::string> arm_description(const AblationArm& arm) {
  auto d = describe(arm.config);
  d.erase("seed");
  d["negatives"] = std::string(to_string(arm.negatives));
  return d;
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

}  // namespace

AblationReport ablation_suite(const AlignmentDataset& ds, const AblationConfig& cfg,
                              const std::vector<AblationArm>& arms) {
  if (arms.empty()) throw Error(ErrorCode::ConfigError, "ablation needs at least one arm");
  if (cfg.seeds.empty()) throw Error(ErrorCode::ConfigError, "ablation needs at least one seed");
  for (const AblationArm& a : arms) a.config.validate();

  std::map<std::size_t, HardNegativeSet> mined;
  for (const AblationArm& a : arms) {
    if (a.negatives == NegativeSource::Mined && !mined.contains(a.config.k_hard_negatives)) {
      mined.emplace(a.config.k_hard_negatives, mine(ds, a.config.k_hard_negatives));
    }
  }

  const std::size_t n_seeds = cfg.seeds.size();
  std::vector<RunRecord> runs(arms.size() * n_seeds);
  parallel_for(runs.size(), std::max<std::size_t>(1, cfg.concurrent_arms), [&](std::size_t job) {
    const AblationArm& arm = arms[job / n_seeds];
    const std::uint64_t seed = cfg.seeds[job % n_seeds];
    ModelConfig mc = cfg.model;
    mc.seed = seed;
    TrainConfig tc = arm.config;
    tc.seed = seed;
    const HardNegativeSet negatives = arm.negatives == NegativeSource::Mined
                                          ? mined.at(tc.k_hard_negatives)
                                          : sample_simple_negatives(ds, tc.k_hard_negatives, seed);
    runs[job] = train(ds, negatives, make_model(mc), tc);
  });

  AblationReport report;
  report.seeds = cfg.seeds;
  const auto reference = arm_description(arms.front());
  for (std::size_t a = 0; a < arms.size(); ++a) {
    ArmResult r;
    r.name = arms[a].name;
    r.negatives = arms[a].negatives;
    for (const auto& [key, value] : arm_description(arms[a])) {
      const auto it = reference.find(key);
      const std::string ref_value = it == reference.end() ? "(unset)" : it->second;
      if (ref_value != value) r.config_diff.push_back(key + ": " + ref_value + " -> " + value);
    }
    for (std::size_t s = 0; s < n_seeds; ++s) {
      const RunRecord& run = runs[a * n_seeds + s];
      r.accuracy.push_back(run.final.mc.accuracy);
      r.alignment.push_back(run.final.alignment_quality);
      r.classifier.push_back(run.classifier_accuracy);
    }
    std::tie(r.accuracy_mean, r.accuracy_std) = mean_std(r.accuracy);
    std::tie(r.alignment_mean, r.alignment_std) = mean_std(r.alignment);
    std::tie(r.classifier_mean, r.classifier_std) = mean_std(r.classifier);
    report.arms.push_back(std::move(r));
  }
  return report;
}

AblationReport ablation_suite(const AlignmentDataset& ds, const AblationConfig& cfg) {
  return ablation_suite(ds, cfg, standard_arms(cfg.base));
}

std::string ablation_to_tsv(const AblationReport& report) {
  std::ostringstream out;
  out << "arm\tnegatives\tseeds\taccuracy_mean\taccuracy_std\talignment_mean\talignment_std"
         "\tclassifier_mean\tclassifier_std\tconfig_diff\n";
  for (const ArmResult& a : report.arms) {
    std::string diff;
    for (const std::string& d : a.config_diff) diff += (diff.empty() ? "" : "; ") + d;
    out << a.name << '\t' << to_string(a.negatives) << '\t' << a.accuracy.size() << '\t' << fmt(a.accuracy_mean)
        << '\t' << fmt(a.accuracy_std) << '\t' << fmt(a.alignment_mean) << '\t' << fmt(a.alignment_std) << '\t'
        << fmt(a.classifier_mean) << '\t' << fmt(a.classifier_std) << '\t' << (diff.empty() ? "-" : diff) << '\n';
  }
  return out.str();
}

std::string ablation_to_json(const AblationReport& report) {
  json j;
  j["seeds"] = report.seeds;
  j["arms"] = json::array();
  for (const ArmResult& a : report.arms) {
    j["arms"].push_back({{"name", a.name},
                         {"negatives", to_string(a.negatives)},
                         {"config_diff", a.config_diff},
                         {"accuracy", a.accuracy},
                         {"accuracy_mean", a.accuracy_mean},
                         {"accuracy_std", a.accuracy_std},
                         {"alignment", a.alignment},
                         {"alignment_mean", a.alignment_mean},
                         {"alignment_std", a.alignment_std},
                         {"classifier_accuracy", a.classifier},
                         {"classifier_mean", a.classifier_mean},
                         {"classifier_std", a.classifier_std}});
  }
  return j.dump(2) + "\n";
}

}  // namespace attralign

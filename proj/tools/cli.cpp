#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>

#include "attralign/attribgen/pipeline.hpp"
#include "attralign/binary_io.hpp"
#include "attralign/dataset.hpp"
#include "attralign/diagnostics.hpp"
#include "attralign/mining.hpp"
#include "attralign/model.hpp"
#include "attralign/training.hpp"
#include "attralign/version.hpp"

namespace attralign::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string digest_path(const fs::path& path) {
  if (fs::is_directory(path)) {
    std::vector<std::string> lines;
    for (const auto& entry : fs::recursive_directory_iterator(path)) {
      if (!entry.is_regular_file()) continue;
      lines.push_back(fs::relative(entry.path(), path).generic_string() + " " + sha256_file(entry.path()));
    }
    std::sort(lines.begin(), lines.end());
    std::string all;
    for (const auto& l : lines) all += l + "\n";
    return sha256_hex(all);
  }
  return sha256_file(path);
}

std::string RunManifest::to_json() const {
  json j;
  j["command"] = command;
  j["version"] = std::string(kVersion);
  j["seed"] = seed;
  j["config"] = config;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["started_at"] = started_at;
  j["finished_at"] = finished_at;
  j["elapsed_seconds"] = elapsed_seconds;
  return j.dump(2) + "\n";
}

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Collects provenance for one command and writes it once outputs exist.
class ManifestWriter {
 public:
  ManifestWriter(const CLI::App& sub, std::string command) : sub_(sub), t0_(std::chrono::steady_clock::now()) {
    m_.command = std::move(command);
    m_.started_at = utc_now();
  }

  void input(const fs::path& p) { m_.inputs[p.string()] = digest_path(p); }
  void output(const fs::path& p) { outputs_.push_back(p); }
  void seed(std::uint64_t s) { m_.seed = s; }

  void write(const fs::path& where) {
    std::istringstream lines(sub_.config_to_str(true, false));
    std::string line;
    while (std::getline(lines, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos || line.starts_with('#') || line.starts_with('[')) continue;
      std::string key = line.substr(0, eq);
      std::string value = line.substr(eq + 1);
      auto strip = [](std::string& s) {
        s.erase(0, s.find_first_not_of(' '));
        s.erase(s.find_last_not_of(' ') + 1);
        if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
      };
      strip(key);
      strip(value);
      m_.config[key] = value;
    }
    for (const fs::path& p : outputs_) m_.outputs[p.string()] = digest_path(p);
    m_.finished_at = utc_now();
    m_.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    write_text_file(where, m_.to_json());
  }

 private:
  const CLI::App& sub_;
  std::chrono::steady_clock::time_point t0_;
  RunManifest m_;
  std::vector<fs::path> outputs_;
};

fs::path manifest_beside(const fs::path& file) { return fs::path(file.string() + ".manifest.json"); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create directory " + dir.string() + ": " + ec.message());
}

std::size_t parse_choices(const std::string& text) {
  if (text == "all") return kAllChoices;
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != text.size() || v == 0) {
    throw Error(ErrorCode::ChoicesOutOfRange, "--choices must be 'all' or a positive integer, got '" + text + "'");
  }
  return static_cast<std::size_t>(v);
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(6);
  ss << v;
  return ss.str();
}

struct ModelFlags {
  std::size_t output_dim = 64;
  std::size_t hidden_dim = 0;
  std::size_t layers = 2;
  std::string activation = "gelu";
  bool untie_text_heads = false;
  std::uint64_t seed = 7;

  void add(CLI::App* app) {
    app->add_option("--out-dim", output_dim, "Shared embedding dimension");
    app->add_option("--hidden", hidden_dim, "Hidden width (0 means twice the output dimension)");
    app->add_option("--layers", layers, "Layers per projection head");
    app->add_option("--activation", activation, "gelu or identity");
    app->add_flag("--untie-text-heads", untie_text_heads, "Separate heads for attributes and categories");
    app->add_option("--model-seed", seed, "Projection head initialization seed");
  }

  ModelConfig resolve(const AlignmentDataset& ds) const {
    ModelConfig mc;
    mc.dim_object = ds.embedding_dim_object();
    mc.dim_text = ds.embedding_dim_text();
    mc.output_dim = output_dim;
    mc.hidden_dim = hidden_dim;
    mc.layers = layers;
    mc.activation = parse_activation(activation);
    mc.tie_text_heads = !untie_text_heads;
    mc.seed = seed;
    return mc;
  }
};

struct TrainFlags {
  TrainConfig cfg;
  std::string mode = "two-stage";
  std::string variant = "triple";
  std::string choices = "all";

  void add(CLI::App* app) {
    app->add_option("--mode", mode, "two-stage, one-stage, stage2-only or finetune-only");
    app->add_option("--variant", variant, "Contrastive variant: triple or object-category");
    app->add_option("--k", cfg.k_hard_negatives, "Hard negatives per anchor");
    app->add_option("--temperature", cfg.temperature, "Similarity temperature");
    app->add_option("--one-stage-weight", cfg.one_stage_weight, "Classification weight in one-stage mode");
    app->add_option("--seed", cfg.seed, "Batch shuffle seed");
    app->add_option("--s1-batch", cfg.stage1.batch_size, "Stage one accumulated batch size");
    app->add_option("--s1-micro", cfg.stage1.micro_batch, "Stage one micro-batch size");
    app->add_option("--s1-epochs", cfg.stage1.epochs, "Stage one epochs");
    app->add_option("--s1-lr", cfg.stage1.lr, "Stage one learning rate");
    app->add_option("--s1-warmup", cfg.stage1.warmup_steps, "Stage one warmup steps");
    app->add_option("--s2-batch", cfg.stage2.batch_size, "Stage two accumulated batch size");
    app->add_option("--s2-micro", cfg.stage2.micro_batch, "Stage two micro-batch size");
    app->add_option("--s2-epochs", cfg.stage2.epochs, "Stage two epochs");
    app->add_option("--s2-lr", cfg.stage2.lr, "Stage two learning rate");
    app->add_option("--s2-warmup", cfg.stage2.warmup_steps, "Stage two warmup steps");
    app->add_option("--choices", choices, "Multiple-choice candidates: all or a count");
    app->add_option("--threads", cfg.threads, "Worker threads (1 is the deterministic path)");
  }

  TrainConfig resolve() const {
    TrainConfig c = cfg;
    c.mode = parse_train_mode(mode);
    c.variant = parse_variant(variant);
    c.eval.choices = parse_choices(choices);
    c.validate();
    return c;
  }
};

ProjectionModel model_for(const AlignmentDataset& ds, const std::string& checkpoint, const ModelFlags& flags,
                          ManifestWriter& manifest) {
  if (!checkpoint.empty()) {
    manifest.input(checkpoint);
    ProjectionModel m = load_checkpoint(checkpoint).model;
    if (m.object_head.spec().input_dim() != ds.embedding_dim_object() ||
        m.text_head.spec().input_dim() != ds.embedding_dim_text()) {
      throw Error(ErrorCode::DimensionMismatch, "checkpoint dims do not match the dataset");
    }
    return m;
  }
  return make_model(flags.resolve(ds));
}

std::vector<std::size_t> ids_for(const AlignmentDataset& ds, const std::string& split) {
  if (split == "all") {
    std::vector<std::size_t> ids(ds.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    return ids;
  }
  return ds.split_ids(parse_split(split));
}

// ---------------------------------------------------------------------------

struct GenSynth {
  SynthConfig cfg;
  std::string out;

  void add(CLI::App* app) {
    app->add_option("--classes", cfg.num_classes, "Number of categories");
    app->add_option("--per-class", cfg.samples_per_class, "Samples per category");
    app->add_option("--dim-object", cfg.dim_object, "Object embedding dimension");
    app->add_option("--dim-text", cfg.dim_text, "Text embedding dimension");
    app->add_option("--spread", cfg.inter_class_spread, "Angular spread between class directions");
    app->add_option("--sigma", cfg.intra_class_sigma, "Per-coordinate object noise");
    app->add_option("--offset", cfg.modality_gap_offset, "Norm of the shared object offset");
    app->add_option("--attr-noise", cfg.attribute_noise_sigma, "Per-coordinate attribute noise");
    app->add_option("--seed", cfg.seed, "Generator seed");
    app->add_option("--super", cfg.super_category, "Super-category name");
    app->add_option("-o,--out", out, "Output dataset directory")->required();
  }

  int run(const CLI::App& sub, std::ostream& out_stream) {
    ManifestWriter manifest(sub, "gen-synth");
    manifest.seed(cfg.seed);
    const AlignmentDataset ds = generate_synthetic(cfg);
    ensure_dir(out);
    save_dataset(ds, out);
    manifest.output(out);
    std::string base = out;
    while (base.size() > 1 && base.back() == '/') base.pop_back();
    manifest.write(manifest_beside(base));
    out_stream << "wrote " << ds.size() << " samples in " << ds.num_categories() << " categories to " << out << "\n";
    return 0;
  }
};

struct Inspect {
  std::string dataset;

  void add(CLI::App* app) { app->add_option("--dataset", dataset, "Dataset directory")->required(); }

  int run(std::ostream& out) {
    const AlignmentDataset ds = load_dataset(dataset);
    const auto train = ds.split_ids(Split::Train).size();
    out << "super_category\t" << ds.table().super_category << "\n";
    out << "samples\t" << ds.size() << "\n";
    out << "train\t" << train << "\n";
    out << "test\t" << ds.size() - train << "\n";
    out << "categories\t" << ds.num_categories() << "\n";
    out << "dim_object\t" << ds.embedding_dim_object() << "\n";
    out << "dim_text\t" << ds.embedding_dim_text() << "\n";
    out << "pooling\t" << to_string(ds.pooling()) << "\n";
    std::vector<std::size_t> per_class(ds.num_categories(), 0);
    for (const auto& s : ds.samples()) ++per_class[s.category];
    for (std::size_t c = 0; c < per_class.size(); ++c) {
      out << "category\t" << c << "\t" << ds.table().at(c).name << "\t" << per_class[c] << "\n";
    }
    return 0;
  }
};

struct Mine {
  std::string dataset;
  std::size_t k = 3;
  bool simple = false;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string out;

  void add(CLI::App* app) {
    app->add_option("--dataset", dataset, "Dataset directory")->required();
    app->add_option("--k", k, "Negatives per anchor");
    app->add_flag("--simple", simple, "Uniformly random negatives instead of mined ones");
    app->add_option("--seed", seed, "Seed for --simple");
    app->add_option("--threads", threads, "Worker threads");
    app->add_option("-o,--out", out, "Output negatives file")->required();
  }

  int run(const CLI::App& sub, std::ostream& out_stream, std::ostream& err) {
    ManifestWriter manifest(sub, "mine");
    manifest.input(dataset);
    manifest.seed(seed);
    const AlignmentDataset ds = load_dataset(dataset);
    const std::size_t others = ds.num_categories() - 1;
    if (k > others) {
      err << "warning: k=" << k << " but only " << others << " other categories exist; negative sets clamped to "
          << others << "\n";
    }
    const HardNegativeSet set = simple ? sample_simple_negatives(ds, k, seed) : mine(ds, k, MiningReference::ObjectEmbedding, threads);
    save_negatives(set, out);
    manifest.output(out);
    manifest.write(manifest_beside(out));
    out_stream << "wrote negatives for " << set.entries.size() << " anchors (k=" << set.effective_k() << ") to "
               << out << "\n";
    return 0;
  }
};

struct Train {
  std::string dataset;
  std::string negatives;
  std::string out = "run";
  ModelFlags model;
  TrainFlags train;

  void add(CLI::App* app) {
    app->add_option("--dataset", dataset, "Dataset directory")->required();
    app->add_option("--negatives", negatives, "Negatives file (mined on the fly when absent)");
    app->add_option("-o,--out", out, "Output run directory");
    model.add(app);
    train.add(app);
  }

  int run(const CLI::App& sub, std::ostream& out_stream) {
    ManifestWriter manifest(sub, "train");
    manifest.input(dataset);
    const TrainConfig cfg = train.resolve();
    manifest.seed(cfg.seed);
    const AlignmentDataset ds = load_dataset(dataset);
    HardNegativeSet hn;
    if (!negatives.empty()) {
      manifest.input(negatives);
      hn = load_negatives(negatives);
    } else {
      hn = mine(ds, cfg.k_hard_negatives, MiningReference::ObjectEmbedding, cfg.threads);
    }
    const RunRecord run = attralign::train(ds, hn, make_model(model.resolve(ds)), cfg);

    const fs::path dir(out);
    ensure_dir(dir);
    write_text_file(dir / "history.tsv", history_to_tsv(run));
    write_text_file(dir / "run.json", run_to_json(run));
    write_text_file(dir / "metrics.json", metrics_to_json(run.final));
    write_text_file(dir / "metrics.tsv", metrics_to_tsv(run.final));
    write_text_file(dir / "confusion.txt", confusion_to_text(run.final.mc));
    save_checkpoint({run.model, run.classifier, run.history.size(), cfg.seed}, dir / "checkpoint");
    for (const char* f : {"history.tsv", "run.json", "metrics.json", "metrics.tsv", "confusion.txt", "checkpoint"}) {
      manifest.output(dir / f);
    }
    manifest.write(dir / "manifest.json");
    out_stream << "steps " << run.history.size() << "; alignment " << fmt(run.initial.alignment_quality) << " -> "
               << fmt(run.final.alignment_quality) << "; accuracy " << fmt(run.initial.mc.accuracy) << " -> "
               << fmt(run.final.mc.accuracy) << "\n";
    return 0;
  }
};

struct Ablate {
  std::string dataset;
  std::size_t seeds = 5;
  std::size_t concurrent = 1;
  std::string out = "ablation";
  ModelFlags model;
  TrainFlags train;

  void add(CLI::App* app) {
    app->add_option("--dataset", dataset, "Dataset directory")->required();
    app->add_option("--seeds", seeds, "Number of seeds per arm (0..n-1)");
    app->add_option("--concurrent", concurrent, "Training runs in flight");
    app->add_option("-o,--out", out, "Output directory");
    model.add(app);
    train.add(app);
  }

  int run(const CLI::App& sub, std::ostream& out_stream) {
    if (seeds == 0) throw Error(ErrorCode::ConfigError, "--seeds must be >= 1");
    ManifestWriter manifest(sub, "ablate");
    manifest.input(dataset);
    const AlignmentDataset ds = load_dataset(dataset);
    AblationConfig ac;
    ac.base = train.resolve();
    ac.model = model.resolve(ds);
    ac.seeds.clear();
    for (std::size_t s = 0; s < seeds; ++s) ac.seeds.push_back(s);
    ac.concurrent_arms = concurrent;
    const AblationReport report = ablation_suite(ds, ac);
    const fs::path dir(out);
    ensure_dir(dir);
    write_text_file(dir / "ablation.tsv", ablation_to_tsv(report));
    write_text_file(dir / "ablation.json", ablation_to_json(report));
    manifest.output(dir / "ablation.tsv");
    manifest.output(dir / "ablation.json");
    manifest.write(dir / "manifest.json");
    out_stream << ablation_to_tsv(report);
    return 0;
  }
};

struct Probe {
  std::string dataset;
  std::string checkpoint;
  std::string features = "raw-object";
  std::string split = "test";
  ProbeOptions options;
  ModelFlags model;
  std::string out;

  void add(CLI::App* app) {
    app->add_option("--dataset", dataset, "Dataset directory")->required();
    app->add_option("--features", features, "raw-object, raw-attribute, projected-object or projected-attribute");
    app->add_option("--checkpoint", checkpoint, "Checkpoint directory for projected features");
    app->add_option("--split", split, "Evaluation split (the probe trains on train)");
    app->add_option("--epochs", options.epochs, "Gradient descent epochs");
    app->add_option("--lr", options.lr, "Gradient descent step size");
    app->add_option("-o,--out", out, "Optional JSON result file");
    model.add(app);
  }

  int run(const CLI::App& sub, std::ostream& out_stream) {
    ManifestWriter manifest(sub, "probe");
    manifest.input(dataset);
    const AlignmentDataset ds = load_dataset(dataset);
    const auto train_ids = ds.split_ids(Split::Train);
    const auto test_ids = ids_for(ds, split);
    Matrix train_x, test_x;
    if (features == "raw-object") {
      train_x = object_matrix(ds, train_ids);
      test_x = object_matrix(ds, test_ids);
    } else if (features == "raw-attribute") {
      train_x = attribute_matrix(ds, train_ids);
      test_x = attribute_matrix(ds, test_ids);
    } else if (features == "projected-object" || features == "projected-attribute") {
      const ProjectionModel m = model_for(ds, checkpoint, model, manifest);
      if (features == "projected-object") {
        train_x = project_objects(m, object_matrix(ds, train_ids));
        test_x = project_objects(m, object_matrix(ds, test_ids));
      } else {
        train_x = project_attributes(m, attribute_matrix(ds, train_ids));
        test_x = project_attributes(m, attribute_matrix(ds, test_ids));
      }
    } else {
      throw Error(ErrorCode::ConfigError, "unknown feature source '" + features + "'");
    }
    const double acc = linear_probe(train_x, labels_of(ds, train_ids), test_x, labels_of(ds, test_ids),
                                    ds.num_categories(), options);
    out_stream << "probe accuracy (" << features << ", " << split << "): " << fmt(acc) << "\n";
    if (!out.empty()) {
      json j{{"features", features}, {"split", split}, {"accuracy", acc}};
      write_text_file(out, j.dump(2) + "\n");
      manifest.output(out);
      manifest.write(manifest_beside(out));
    }
    return 0;
  }
};

struct Diag {
  std::string dataset;
  std::string checkpoint;
  std::string split = "test";
  std::string choices = "all";
  std::uint64_t seed = 0;
  bool probe = false;
  ModelFlags model;
  std::string out;

  void add(CLI::App* app) {
    app->add_option("--dataset", dataset, "Dataset directory")->required();
    app->add_option("--checkpoint", checkpoint, "Checkpoint directory (untrained model when absent)");
    app->add_option("--split", split, "train or test");
    app->add_option("--choices", choices, "Multiple-choice candidates: all or a count");
    app->add_option("--seed", seed, "Distractor seed");
    app->add_flag("--probe", probe, "Also run linear probes");
    app->add_option("-o,--out", out, "Output directory")->required();
    model.add(app);
  }

  int run(const CLI::App& sub, std::ostream& out_stream) {
    ManifestWriter manifest(sub, "diag");
    manifest.input(dataset);
    manifest.seed(seed);
    const AlignmentDataset ds = load_dataset(dataset);
    const ProjectionModel m = model_for(ds, checkpoint, model, manifest);
    EvalOptions opts;
    opts.split = parse_split(split);
    opts.choices = parse_choices(choices);
    opts.seed = seed;
    opts.include_probe = probe;
    const MetricsReport r = evaluate(ds, m, opts);
    const fs::path dir(out);
    ensure_dir(dir);
    write_text_file(dir / "metrics.json", metrics_to_json(r));
    write_text_file(dir / "metrics.tsv", metrics_to_tsv(r));
    write_text_file(dir / "confusion.txt", confusion_to_text(r.mc));
    for (const char* f : {"metrics.json", "metrics.tsv", "confusion.txt"}) manifest.output(dir / f);
    manifest.write(dir / "manifest.json");
    out_stream << metrics_to_tsv(r);
    if (r.mc.degenerate_choices) out_stream << "note: a single choice makes accuracy 1 by construction\n";
    return 0;
  }
};

struct Eval {
  std::string dataset;
  std::string checkpoint;
  std::string split = "test";
  std::string choices = "all";
  std::uint64_t seed = 0;
  ModelFlags model;
  std::string out;

  void add(CLI::App* app) {
    app->add_option("--dataset", dataset, "Dataset directory")->required();
    app->add_option("--checkpoint", checkpoint, "Checkpoint directory (untrained model when absent)");
    app->add_option("--split", split, "train or test");
    app->add_option("--choices", choices, "Candidates per question: all or a count");
    app->add_option("--seed", seed, "Distractor seed");
    app->add_option("-o,--out", out, "Optional output directory for the confusion grid");
    model.add(app);
  }

  int run(const CLI::App& sub, std::ostream& out_stream) {
    ManifestWriter manifest(sub, "eval");
    manifest.input(dataset);
    manifest.seed(seed);
    const AlignmentDataset ds = load_dataset(dataset);
    const ProjectionModel m = model_for(ds, checkpoint, model, manifest);
    const McResult r = evaluate_mc(ds, m, parse_choices(choices), seed, parse_split(split));
    out_stream << "accuracy\t" << fmt(r.accuracy) << "\n";
    if (r.degenerate_choices) out_stream << "note: a single choice makes accuracy 1 by construction\n";
    if (!out.empty()) {
      const fs::path dir(out);
      ensure_dir(dir);
      write_text_file(dir / "confusion.txt", confusion_to_text(r));
      json j{{"accuracy", r.accuracy}, {"choices", choices}, {"per_class_accuracy", r.per_class_accuracy}};
      write_text_file(dir / "mc.json", j.dump(2) + "\n");
      manifest.output(dir / "confusion.txt");
      manifest.output(dir / "mc.json");
      manifest.write(dir / "manifest.json");
    }
    return 0;
  }
};

struct Export {
  std::string dataset;
  std::string checkpoint;
  std::string source = "projected-object";
  std::string method = "pca";
  std::string split = "test";
  ModelFlags model;
  std::string out;

  void add(CLI::App* app) {
    app->add_option("--dataset", dataset, "Dataset directory")->required();
    app->add_option("--checkpoint", checkpoint, "Checkpoint directory (untrained model when absent)");
    app->add_option("--source", source, "raw-object, raw-attribute, projected-object or projected-attribute");
    app->add_option("--method", method, "pca or raw");
    app->add_option("--split", split, "train, test or all");
    app->add_option("-o,--out", out, "Output table")->required();
    model.add(app);
  }

  int run(const CLI::App& sub, std::ostream& out_stream, std::ostream& err) {
    ManifestWriter manifest(sub, "export");
    manifest.input(dataset);
    const AlignmentDataset ds = load_dataset(dataset);
    const auto ids = ids_for(ds, split);
    Matrix x;
    if (source == "raw-object") {
      x = object_matrix(ds, ids);
    } else if (source == "raw-attribute") {
      x = attribute_matrix(ds, ids);
    } else if (source == "projected-object") {
      x = project_objects(model_for(ds, checkpoint, model, manifest), object_matrix(ds, ids));
    } else if (source == "projected-attribute") {
      x = project_attributes(model_for(ds, checkpoint, model, manifest), attribute_matrix(ds, ids));
    } else {
      throw Error(ErrorCode::ConfigError, "unknown export source '" + source + "'");
    }
    ProjectionMethod pm;
    if (method == "pca") {
      pm = ProjectionMethod::Pca2D;
    } else if (method == "raw") {
      pm = ProjectionMethod::Raw;
    } else {
      throw Error(ErrorCode::ConfigError, "unknown export method '" + method + "' (expected pca or raw)");
    }
    const ProjectionExport table = export_projection(x, labels_of(ds, ids), pm);
    if (table.degenerate) err << "warning: covariance rank < 2; exported raw coordinates instead of PCA\n";
    write_text_file(out, projection_to_tsv(table));
    manifest.output(out);
    manifest.write(manifest_beside(out));
    out_stream << "wrote " << table.coordinates.rows() << " rows to " << out << "\n";
    return 0;
  }
};

struct Attribgen {
  attribgen::EndpointConfig endpoint;
  std::int64_t timeout_ms = 30000;
  std::int64_t backoff_ms = 500;
  std::string cache;
  std::string replay;
  std::string record;
  std::size_t in_flight = 1;
  bool scrub = false;

  std::string super_category;
  std::string class_unit = "types";
  std::string corpus;
  std::string attributes;
  std::string triples;
  std::string out;

  void add_endpoint(CLI::App* app) {
    app->add_option("--base-url", endpoint.base_url, "Chat endpoint base URL");
    app->add_option("--path", endpoint.path, "Chat completion path");
    app->add_option("--model", endpoint.model, "Model name sent with each request");
    app->add_option("--token-env", endpoint.token_env, "Environment variable holding the auth token");
    app->add_option("--timeout-ms", timeout_ms, "Per-request timeout");
    app->add_option("--retries", endpoint.max_retries, "Retries after the first attempt");
    app->add_option("--backoff-ms", backoff_ms, "Initial retry delay (doubles each retry)");
    app->add_option("--cache", cache, "Response cache directory");
    app->add_option("--replay", replay, "Serve responses from a recorded transcript");
    app->add_option("--record", record, "Record the transcript to this file");
    app->add_option("-o,--out", out, "Output file")->required();
  }

  int run(const CLI::App& sub, const std::string& step, std::ostream& out_stream) {
    ManifestWriter manifest(sub, "attribgen " + step);
    endpoint.timeout = std::chrono::milliseconds(timeout_ms);
    endpoint.backoff_base = std::chrono::milliseconds(backoff_ms);
    endpoint.validate();

    std::unique_ptr<attribgen::Transport> base;
    if (!replay.empty()) {
      manifest.input(replay);
      base = std::make_unique<attribgen::ReplayTransport>(attribgen::ReplayTransport::load(replay));
    } else {
      base = std::make_unique<attribgen::HttpTransport>(endpoint);
    }
    std::optional<attribgen::RecordingTransport> recorder;
    attribgen::Transport* transport = base.get();
    if (!record.empty()) transport = &recorder.emplace(*base);
    std::optional<attribgen::ResponseCache> response_cache;
    if (!cache.empty()) response_cache.emplace(cache);
    attribgen::ChatClient client(*transport, endpoint, response_cache ? &*response_cache : nullptr);

    attribgen::PipelineOptions opts;
    opts.class_unit = class_unit;
    opts.max_in_flight = in_flight;
    opts.scrub_class_names = scrub;

    std::string text;
    if (step == "discover") {
      text = attribgen::attribute_set_to_json(attribgen::discover(client, super_category, opts));
    } else if (step == "extract") {
      manifest.input(corpus);
      manifest.input(attributes);
      const attribgen::Corpus c = attribgen::load_corpus(corpus);
      attribgen::PipelineResult r;
      r.attributes = attribgen::attribute_set_from_json(read_text_file(attributes));
      std::vector<attribgen::SampleAttributes> samples(c.samples.size());
      for (std::size_t i = 0; i < c.samples.size(); ++i) {
        samples[i] = attribgen::extract(client, c.samples[i], r.attributes, opts);
      }
      r.samples = std::move(samples);
      text = attribgen::triples_to_json(r);
    } else if (step == "summarize") {
      manifest.input(triples);
      attribgen::PipelineResult r = attribgen::triples_from_json(read_text_file(triples));
      std::vector<std::string> names;
      if (!corpus.empty()) {
        manifest.input(corpus);
        names = attribgen::load_corpus(corpus).category_names;
      }
      for (auto& s : r.samples) {
        s = attribgen::summarize(client, std::move(s), r.attributes, opts);
        if (scrub) s.summary = attribgen::scrub_class_names(s.summary, names);
      }
      text = attribgen::triples_to_json(r);
    } else {
      manifest.input(corpus);
      const attribgen::Corpus c = attribgen::load_corpus(corpus);
      text = attribgen::triples_to_json(attribgen::run_pipeline(client, c, opts));
    }

    write_text_file(out, text);
    manifest.output(out);
    if (recorder) {
      recorder->save(record);
      manifest.output(record);
    }
    manifest.write(manifest_beside(out));
    out_stream << "wrote " << out;
    if (response_cache) out_stream << " (cache hits " << response_cache->hits() << ")";
    out_stream << "\n";
    return 0;
  }
};

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"attralign: contrastive alignment of object, attribute and category embeddings"};
  app.name(args.empty() ? "attralign" : fs::path(args.front()).filename().string());
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "TOML file with option values; command-line flags take precedence");
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  GenSynth gen;
  Inspect inspect;
  Mine mine_cmd;
  Train train_cmd;
  Ablate ablate;
  Probe probe;
  Diag diag;
  Eval eval;
  Export export_cmd;
  Attribgen ag;

  auto* gen_app = app.add_subcommand("gen-synth", "Generate a synthetic dataset");
  gen.add(gen_app);
  auto* inspect_app = app.add_subcommand("inspect", "Summarize a dataset");
  inspect.add(inspect_app);
  auto* mine_app = app.add_subcommand("mine", "Mine hard negatives");
  mine_cmd.add(mine_app);
  auto* train_app = app.add_subcommand("train", "Train projection heads");
  train_cmd.add(train_app);
  auto* ablate_app = app.add_subcommand("ablate", "Run the ablation suite");
  ablate.add(ablate_app);
  auto* probe_app = app.add_subcommand("probe", "Linear probe on embeddings");
  probe.add(probe_app);
  auto* diag_app = app.add_subcommand("diag", "Full diagnostics report");
  diag.add(diag_app);
  auto* eval_app = app.add_subcommand("eval", "Multiple-choice evaluation");
  eval.add(eval_app);
  auto* export_app = app.add_subcommand("export", "Export embeddings for plotting");
  export_cmd.add(export_app);

  auto* ag_app = app.add_subcommand("attribgen", "Attribute description pipeline");
  ag_app->require_subcommand(1);
  auto* ag_discover = ag_app->add_subcommand("discover", "Ask for useful attributes of a super-category");
  ag_discover->add_option("--super", ag.super_category, "Super-category")->required();
  ag_discover->add_option("--class-unit", ag.class_unit, "Plural noun for the subordinate classes");
  ag.add_endpoint(ag_discover);
  auto* ag_extract = ag_app->add_subcommand("extract", "Query every attribute for every sample");
  ag_extract->add_option("--corpus", ag.corpus, "Corpus JSON")->required();
  ag_extract->add_option("--attributes", ag.attributes, "Attribute set JSON")->required();
  ag.add_endpoint(ag_extract);
  auto* ag_summarize = ag_app->add_subcommand("summarize", "Summarize extracted attributes");
  ag_summarize->add_option("--triples", ag.triples, "Triples JSON from extract")->required();
  ag_summarize->add_option("--corpus", ag.corpus, "Corpus JSON (category names for --scrub)");
  ag_summarize->add_flag("--scrub", ag.scrub, "Replace category names in summaries");
  ag.add_endpoint(ag_summarize);
  auto* ag_run = ag_app->add_subcommand("run", "discover, extract and summarize");
  ag_run->add_option("--corpus", ag.corpus, "Corpus JSON")->required();
  ag_run->add_option("--in-flight", ag.in_flight, "Samples extracted concurrently");
  ag_run->add_flag("--scrub", ag.scrub, "Replace category names in summaries");
  ag.add_endpoint(ag_run);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("attralign");

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* context = &app;
    for (const CLI::App* sub : app.get_subcommands()) {
      context = sub;
      for (const CLI::App* nested : sub->get_subcommands()) context = nested;
    }
    if (context == &app) {
      for (std::size_t i = 1; i < args.size(); ++i) {
        if (auto* sub = app.get_subcommand_no_throw(args[i]); sub != nullptr) {
          context = sub;
          break;
        }
      }
    }
    err << context->help();
    return 2;
  }

  try {
    if (*gen_app) return gen.run(*gen_app, out);
    if (*inspect_app) return inspect.run(out);
    if (*mine_app) return mine_cmd.run(*mine_app, out, err);
    if (*train_app) return train_cmd.run(*train_app, out);
    if (*ablate_app) return ablate.run(*ablate_app, out);
    if (*probe_app) return probe.run(*probe_app, out);
    if (*diag_app) return diag.run(*diag_app, out);
    if (*eval_app) return eval.run(*eval_app, out);
    if (*export_app) return export_cmd.run(*export_app, out, err);
    if (*ag_discover) return ag.run(*ag_discover, "discover", out);
    if (*ag_extract) return ag.run(*ag_extract, "extract", out);
    if (*ag_summarize) return ag.run(*ag_summarize, "summarize", out);
    if (*ag_run) return ag.run(*ag_run, "run", out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << app.help();
  return 2;
}

}  // namespace attralign::cli

#include "attralign/model.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <random>
#include <string>

#include "attralign/binary_io.hpp"

namespace attralign {

using nlohmann::json;

std::string_view to_string(Activation a) noexcept { return a == Activation::Gelu ? "gelu" : "identity"; }

Activation parse_activation(std::string_view text) {
  if (text == "gelu") return Activation::Gelu;
  if (text == "identity" || text == "linear") return Activation::Identity;
  throw Error(ErrorCode::InvalidArgument, "unknown activation '" + std::string(text) + "'");
}

void HeadSpec::validate() const {
  if (dims.size() < 2) {
    throw Error(ErrorCode::InvalidConfig, "a head needs at least an input and an output width");
  }
  for (std::size_t d : dims) {
    if (d == 0) throw Error(ErrorCode::InvalidConfig, "head widths must be positive");
  }
}

MlpHead::MlpHead(HeadSpec spec, std::vector<DenseLayer> layers) : spec_(std::move(spec)), layers_(std::move(layers)) {
  spec_.validate();
  if (layers_.size() != spec_.num_layers()) {
    throw Error(ErrorCode::ShapeMismatch, "layer count does not match head spec");
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const DenseLayer& layer = layers_[l];
    if (layer.weight.rows() != spec_.dims[l + 1] || layer.weight.cols() != spec_.dims[l] ||
        layer.bias.rows() != 1 || layer.bias.cols() != spec_.dims[l + 1]) {
      throw Error(ErrorCode::ShapeMismatch, "layer " + std::to_string(l) + " does not match head spec");
    }
  }
}

MlpHead MlpHead::gaussian(HeadSpec spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const std::size_t in = spec.dims[l];
    const std::size_t out = spec.dims[l + 1];
    const double stddev = 1.0 / std::sqrt(static_cast<double>(in));
    Matrix w(out, in);
    for (double& x : w.data()) x = stddev * normal(rng);
    layers.push_back({std::move(w), Matrix(1, out)});
  }
  return MlpHead(std::move(spec), std::move(layers));
}

MlpHead MlpHead::identity(HeadSpec spec) {
  spec.validate();
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    if (spec.dims[l] != spec.dims[l + 1]) {
      throw Error(ErrorCode::InvalidConfig, "identity initialization needs square layers");
    }
    layers.push_back({Matrix::identity(spec.dims[l]), Matrix(1, spec.dims[l])});
  }
  return MlpHead(std::move(spec), std::move(layers));
}

std::size_t MlpHead::parameter_count() const {
  std::size_t n = 0;
  for (const DenseLayer& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

namespace {

Tape::NodeId apply_layers(Tape& tape, const MlpHead& head, const HeadBinding& binding, Tape::NodeId x) {
  const std::size_t n = head.spec().num_layers();
  for (std::size_t l = 0; l < n; ++l) {
    x = tape.affine(x, binding.params[2 * l], binding.params[2 * l + 1]);
    if (l + 1 < n && head.spec().activation == Activation::Gelu) x = tape.gelu(x);
  }
  return x;
}

void require_input_dim(const MlpHead& head, const Matrix& input, const char* what) {
  if (input.cols() != head.spec().input_dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                std::string(what) + " has dim " + std::to_string(input.cols()) + ", head expects " +
                    std::to_string(head.spec().input_dim()));
  }
}

Matrix project(const MlpHead& head, const Matrix& raw, const char* what) {
  require_input_dim(head, raw, what);
  if (raw.rows() == 0) return Matrix(0, head.spec().output_dim());
  Tape tape;
  const HeadBinding b = bind_head(tape, head);
  return tape.value(apply_head(tape, head, b, tape.leaf(raw)));
}

}  // namespace

Matrix MlpHead::forward(const Matrix& input) const {
  require_input_dim(*this, input, "input");
  Tape tape;
  const HeadBinding b = bind_head(tape, *this);
  return tape.value(apply_layers(tape, *this, b, tape.leaf(input)));
}

HeadBinding bind_head(Tape& tape, const MlpHead& head) {
  HeadBinding b;
  for (const DenseLayer& l : head.layers()) {
    b.params.push_back(tape.leaf(l.weight));
    b.params.push_back(tape.leaf(l.bias));
  }
  return b;
}

Tape::NodeId apply_head(Tape& tape, const MlpHead& head, const HeadBinding& binding, Tape::NodeId input) {
  require_input_dim(head, tape.value(input), "input");
  return tape.normalize_rows(apply_layers(tape, head, binding, input));
}

void ProjectionModel::validate() const {
  const std::size_t d = object_head.spec().output_dim();
  if (text_head.spec().output_dim() != d || (category_head && category_head->spec().output_dim() != d)) {
    throw Error(ErrorCode::DimensionMismatch, "object and text heads must share an output dim");
  }
  if (category_head && category_head->spec().input_dim() != text_head.spec().input_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "attribute and category heads must share an input dim");
  }
}

ProjectionModel make_model(const ModelConfig& cfg) {
  if (cfg.layers == 0 || cfg.output_dim == 0 || cfg.dim_object == 0 || cfg.dim_text == 0) {
    throw Error(ErrorCode::InvalidConfig, "model dims and layer count must be positive");
  }
  const std::size_t hidden = cfg.hidden_dim ? cfg.hidden_dim : 2 * cfg.output_dim;
  auto spec_for = [&](std::size_t in) {
    HeadSpec s;
    s.activation = cfg.activation;
    s.dims.push_back(in);
    for (std::size_t l = 1; l < cfg.layers; ++l) s.dims.push_back(hidden);
    s.dims.push_back(cfg.output_dim);
    return s;
  };
  ProjectionModel m;
  m.object_head = MlpHead::gaussian(spec_for(cfg.dim_object), cfg.seed);
  m.text_head = MlpHead::gaussian(spec_for(cfg.dim_text), cfg.seed + 1);
  if (!cfg.tie_text_heads) m.category_head = MlpHead::gaussian(spec_for(cfg.dim_text), cfg.seed + 2);
  return m;
}

Matrix project_objects(const ProjectionModel& model, const Matrix& raw) {
  return project(model.object_head, raw, "object embedding");
}

Matrix project_attributes(const ProjectionModel& model, const Matrix& raw) {
  return project(model.attribute_projector(), raw, "attribute embedding");
}

Matrix project_categories(const ProjectionModel& model, const Matrix& raw) {
  return project(model.category_projector(), raw, "category embedding");
}

BatchViews forward(const ProjectionModel& model, const RawBatch& batch, double temperature) {
  BatchViews v;
  v.objects = project_objects(model, batch.objects);
  v.attributes = project_attributes(model, batch.attributes);
  v.categories = project_categories(model, batch.categories);
  v.negative_attributes = project_attributes(model, batch.negative_attributes.rows() == 0
                                                         ? Matrix(0, model.text_head.spec().input_dim())
                                                         : batch.negative_attributes);
  v.negative_categories = project_categories(model, batch.negative_categories.rows() == 0
                                                         ? Matrix(0, model.text_head.spec().input_dim())
                                                         : batch.negative_categories);
  v.negative_offsets = batch.negative_offsets;
  v.temperature = temperature;
  v.validate();
  return v;
}

std::vector<Tape::NodeId> ModelBinding::all() const {
  std::vector<Tape::NodeId> out = object.params;
  out.insert(out.end(), text.params.begin(), text.params.end());
  if (category) out.insert(out.end(), category->params.begin(), category->params.end());
  return out;
}

ModelBinding bind_model(Tape& tape, const ProjectionModel& model) {
  ModelBinding b;
  b.object = bind_head(tape, model.object_head);
  b.text = bind_head(tape, model.text_head);
  if (model.category_head) b.category = bind_head(tape, *model.category_head);
  return b;
}

ViewNodes record_forward(Tape& tape, const ProjectionModel& model, const ModelBinding& binding,
                         const RawBatch& batch, double temperature) {
  const std::size_t text_in = model.text_head.spec().input_dim();
  const MlpHead& cat_head = model.category_projector();
  const HeadBinding& cat_binding = binding.category ? *binding.category : binding.text;
  auto stack = [&](const Matrix& m) { return m.rows() == 0 ? Matrix(0, text_in) : m; };

  ViewNodes v;
  v.objects = apply_head(tape, model.object_head, binding.object, tape.leaf(batch.objects));
  v.attributes = apply_head(tape, model.text_head, binding.text, tape.leaf(batch.attributes));
  v.categories = apply_head(tape, cat_head, cat_binding, tape.leaf(batch.categories));
  if (batch.negative_offsets.empty() || batch.negative_offsets.back() == 0) {
    const std::size_t d = model.output_dim();
    v.negative_attributes = tape.leaf(Matrix(0, d));
    v.negative_categories = tape.leaf(Matrix(0, d));
  } else {
    v.negative_attributes =
        apply_head(tape, model.text_head, binding.text, tape.leaf(stack(batch.negative_attributes)));
    v.negative_categories = apply_head(tape, cat_head, cat_binding, tape.leaf(stack(batch.negative_categories)));
  }
  v.negative_offsets = batch.negative_offsets;
  v.temperature = temperature;
  return v;
}

std::vector<Matrix*> parameter_refs(MlpHead& head) {
  std::vector<Matrix*> out;
  for (DenseLayer& l : head.layers()) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<Matrix*> parameter_refs(ProjectionModel& model) {
  std::vector<Matrix*> out = parameter_refs(model.object_head);
  for (Matrix* m : parameter_refs(model.text_head)) out.push_back(m);
  if (model.category_head) {
    for (Matrix* m : parameter_refs(*model.category_head)) out.push_back(m);
  }
  return out;
}

ClassifierHead ClassifierHead::gaussian(std::size_t num_classes, std::size_t dim, std::uint64_t seed) {
  if (num_classes == 0 || dim == 0) {
    throw Error(ErrorCode::InvalidConfig, "classifier needs positive class count and dim");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  ClassifierHead h{Matrix(num_classes, dim), Matrix(1, num_classes)};
  for (double& x : h.weight.data()) x = normal(rng);
  return h;
}

// ---------------------------------------------------------------------------
// Optimizer

double warmup_lr(double base_lr, std::size_t step, std::size_t warmup_steps) {
  if (warmup_steps == 0) return base_lr;
  return base_lr * std::min(1.0, static_cast<double>(step) / static_cast<double>(warmup_steps));
}

AdamOptimizer::AdamOptimizer(AdamConfig cfg, std::span<Matrix* const> params) : cfg_(cfg) {
  if (!(cfg_.lr > 0.0)) throw Error(ErrorCode::ConfigError, "learning rate must be positive");
  for (const Matrix* p : params) {
    m_.emplace_back(p->rows(), p->cols());
    v_.emplace_back(p->rows(), p->cols());
  }
}

void AdamOptimizer::step(std::span<Matrix* const> params, std::span<const Matrix> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw Error(ErrorCode::ShapeMismatch, "optimizer was built for " + std::to_string(m_.size()) +
                                              " parameters, got " + std::to_string(params.size()) +
                                              " params and " + std::to_string(grads.size()) + " grads");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(m_[i]) || !grads[i].same_shape(m_[i])) {
      throw Error(ErrorCode::ShapeMismatch, "parameter " + std::to_string(i) + " shape changed");
    }
  }
  ++step_;
  last_lr_ = warmup_lr(cfg_.lr, step_, cfg_.warmup_steps);
  const double t = static_cast<double>(step_);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto g = grads[i].data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      p[k] -= last_lr_ * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

json head_manifest(const MlpHead& head, const std::string& prefix, const std::filesystem::path& dir) {
  json j;
  j["dims"] = head.spec().dims;
  j["activation"] = std::string(to_string(head.spec().activation));
  json files = json::array();
  for (std::size_t l = 0; l < head.layers().size(); ++l) {
    const std::string w = prefix + "_l" + std::to_string(l) + "_weight.bin";
    const std::string b = prefix + "_l" + std::to_string(l) + "_bias.bin";
    write_block(dir / w, head.layers()[l].weight);
    write_block(dir / b, head.layers()[l].bias);
    files.push_back({{"weight", w}, {"bias", b}});
  }
  j["layers"] = files;
  return j;
}

MlpHead head_from_manifest(const json& j, const std::filesystem::path& dir) {
  HeadSpec spec;
  spec.dims = j.at("dims").get<std::vector<std::size_t>>();
  spec.activation = parse_activation(j.at("activation").get<std::string>());
  spec.validate();
  std::vector<DenseLayer> layers;
  const json& files = j.at("layers");
  if (files.size() != spec.num_layers()) {
    throw Error(ErrorCode::FormatError, "checkpoint.json: layer file count does not match dims");
  }
  for (std::size_t l = 0; l < files.size(); ++l) {
    layers.push_back({read_block(dir / files[l].at("weight").get<std::string>(), spec.dims[l + 1], spec.dims[l]),
                      read_block(dir / files[l].at("bias").get<std::string>(), 1, spec.dims[l + 1])});
  }
  return MlpHead(std::move(spec), std::move(layers));
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json j;
  j["format"] = "attralign-checkpoint";
  j["version"] = 1;
  j["step"] = ckpt.step;
  j["seed"] = ckpt.seed;
  j["tie_text_heads"] = ckpt.model.tie_text_heads();
  j["object_head"] = head_manifest(ckpt.model.object_head, "object", dir);
  j["text_head"] = head_manifest(ckpt.model.text_head, "text", dir);
  if (ckpt.model.category_head) j["category_head"] = head_manifest(*ckpt.model.category_head, "category", dir);
  if (ckpt.classifier) {
    write_block(dir / "classifier_weight.bin", ckpt.classifier->weight);
    write_block(dir / "classifier_bias.bin", ckpt.classifier->bias);
    j["classifier"] = {{"classes", ckpt.classifier->weight.rows()},
                       {"dim", ckpt.classifier->weight.cols()},
                       {"weight", "classifier_weight.bin"},
                       {"bias", "classifier_bias.bin"}};
  }
  write_text_file(dir / "checkpoint.json", j.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  json j;
  try {
    j = json::parse(read_text_file(dir / "checkpoint.json"));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::FormatError, "checkpoint.json: parse error at byte offset " + std::to_string(e.byte));
  }
  try {
    Checkpoint c;
    c.step = j.at("step").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.model.object_head = head_from_manifest(j.at("object_head"), dir);
    c.model.text_head = head_from_manifest(j.at("text_head"), dir);
    if (j.contains("category_head")) c.model.category_head = head_from_manifest(j.at("category_head"), dir);
    c.model.validate();
    if (j.contains("classifier")) {
      const json& cj = j.at("classifier");
      const auto classes = cj.at("classes").get<std::size_t>();
      const auto dim = cj.at("dim").get<std::size_t>();
      c.classifier = ClassifierHead{read_block(dir / cj.at("weight").get<std::string>(), classes, dim),
                                    read_block(dir / cj.at("bias").get<std::string>(), 1, classes)};
    }
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("checkpoint.json: ") + e.what());
  }
}

std::uint64_t parameter_checksum(std::span<const Matrix* const> params) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const Matrix* m : params) {
    for (double x : m->data()) {
      const auto bits = std::bit_cast<std::uint64_t>(x);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xFFu;
        h *= 1099511628211ULL;
      }
    }
  }
  return h;
}

std::uint64_t parameter_checksum(const MlpHead& head) {
  std::vector<const Matrix*> ps;
  for (const DenseLayer& l : head.layers()) {
    ps.push_back(&l.weight);
    ps.push_back(&l.bias);
  }
  return parameter_checksum(ps);
}

std::uint64_t parameter_checksum(const ClassifierHead& head) {
  const std::vector<const Matrix*> ps{&head.weight, &head.bias};
  return parameter_checksum(ps);
}

}  // namespace attralign

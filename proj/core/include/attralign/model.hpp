#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "attralign/losses.hpp"
#include "attralign/numerics.hpp"
#include "attralign/tape.hpp"

namespace attralign {

enum class Activation { Gelu, Identity };

std::string_view to_string(Activation a) noexcept;
Activation parse_activation(std::string_view text);

/// Layer widths from input to output, e.g. {32, 128, 64} for a two-layer head.
/// The activation sits between layers, never after the last one.
struct HeadSpec {
  std::vector<std::size_t> dims;
  Activation activation = Activation::Gelu;

  std::size_t input_dim() const { return dims.front(); }
  std::size_t output_dim() const { return dims.back(); }
  std::size_t num_layers() const { return dims.size() - 1; }
  void validate() const;

  friend bool operator==(const HeadSpec&, const HeadSpec&) = default;
};

struct DenseLayer {
  Matrix weight;  // out x in
  Matrix bias;    // 1 x out

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

class MlpHead {
 public:
  MlpHead() = default;
  MlpHead(HeadSpec spec, std::vector<DenseLayer> layers);

  /// Gaussian weights with std 1/sqrt(fan_in), zero biases.
  static MlpHead gaussian(HeadSpec spec, std::uint64_t seed);
  /// Identity weights (square layers only), zero biases.
  static MlpHead identity(HeadSpec spec);

  const HeadSpec& spec() const noexcept { return spec_; }
  std::span<const DenseLayer> layers() const noexcept { return layers_; }
  std::span<DenseLayer> layers() noexcept { return layers_; }
  std::size_t parameter_count() const;

  /// Unnormalized head output.
  Matrix forward(const Matrix& input) const;

  friend bool operator==(const MlpHead&, const MlpHead&) = default;

 private:
  HeadSpec spec_;
  std::vector<DenseLayer> layers_;
};

/// Head parameters placed on a tape, in layer order (weight, bias).
struct HeadBinding {
  std::vector<Tape::NodeId> params;
};

HeadBinding bind_head(Tape& tape, const MlpHead& head);
/// Applies the bound head and L2-normalizes every output row.
Tape::NodeId apply_head(Tape& tape, const MlpHead& head, const HeadBinding& binding, Tape::NodeId input);

struct ModelConfig {
  std::size_t dim_object = 32;
  std::size_t dim_text = 32;
  std::size_t output_dim = 64;
  std::size_t hidden_dim = 0;  // 0 means 2 * output_dim
  std::size_t layers = 2;
  Activation activation = Activation::Gelu;
  bool tie_text_heads = true;
  std::uint64_t seed = 7;
};

/// Trainable stand-ins for the modality connector and language-model
/// adapters: objects go through `object_head`; attributes and categories go
/// through `text_head`, or through `text_head` and `category_head`
/// respectively when the text heads are untied.
struct ProjectionModel {
  MlpHead object_head;
  MlpHead text_head;
  std::optional<MlpHead> category_head;

  bool tie_text_heads() const noexcept { return !category_head.has_value(); }
  const MlpHead& attribute_projector() const noexcept { return text_head; }
  const MlpHead& category_projector() const noexcept { return category_head ? *category_head : text_head; }
  std::size_t output_dim() const { return object_head.spec().output_dim(); }
  void validate() const;

  friend bool operator==(const ProjectionModel&, const ProjectionModel&) = default;
};

ProjectionModel make_model(const ModelConfig& cfg);

/// Row-normalized projections of raw embeddings.
Matrix project_objects(const ProjectionModel& model, const Matrix& raw);
Matrix project_attributes(const ProjectionModel& model, const Matrix& raw);
Matrix project_categories(const ProjectionModel& model, const Matrix& raw);

/// Raw inputs for one batch, laid out like BatchViews.
struct RawBatch {
  Matrix objects;
  Matrix attributes;
  Matrix categories;
  Matrix negative_attributes;
  Matrix negative_categories;
  std::vector<std::size_t> negative_offsets;
};

BatchViews forward(const ProjectionModel& model, const RawBatch& batch, double temperature = 1.0);

/// Tape bindings for every trainable parameter of a model.
struct ModelBinding {
  HeadBinding object;
  HeadBinding text;
  std::optional<HeadBinding> category;

  /// All parameter nodes in the order of parameter_refs().
  std::vector<Tape::NodeId> all() const;
};

ModelBinding bind_model(Tape& tape, const ProjectionModel& model);
ViewNodes record_forward(Tape& tape, const ProjectionModel& model, const ModelBinding& binding,
                         const RawBatch& batch, double temperature);

/// Mutable views of every parameter matrix: object head, text head, then
/// category head, each as (weight, bias) per layer.
std::vector<Matrix*> parameter_refs(ProjectionModel& model);
std::vector<Matrix*> parameter_refs(MlpHead& head);

/// Linear classifier over projected object embeddings (stage-two surrogate).
struct ClassifierHead {
  Matrix weight;  // C x d
  Matrix bias;    // 1 x C

  static ClassifierHead gaussian(std::size_t num_classes, std::size_t dim, std::uint64_t seed);
  std::size_t num_classes() const noexcept { return weight.rows(); }
  std::vector<Matrix*> parameter_refs() { return {&weight, &bias}; }

  friend bool operator==(const ClassifierHead&, const ClassifierHead&) = default;
};

struct AdamConfig {
  double lr = 2e-4;
  std::size_t warmup_steps = 60;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// base_lr * min(1, step / warmup_steps); constant base_lr when warmup is 0.
double warmup_lr(double base_lr, std::size_t step, std::size_t warmup_steps);

/// Adam with bias correction and linear warmup.
class AdamOptimizer {
 public:
  AdamOptimizer(AdamConfig cfg, std::span<Matrix* const> params);

  /// Applies one update. `grads[i]` must match `params[i]` in shape.
  void step(std::span<Matrix* const> params, std::span<const Matrix> grads);

  std::size_t step_count() const noexcept { return step_; }
  /// Learning rate used by the most recent step (0 before the first).
  double last_lr() const noexcept { return last_lr_; }
  const AdamConfig& config() const noexcept { return cfg_; }
  std::span<const Matrix> first_moments() const noexcept { return m_; }
  std::span<const Matrix> second_moments() const noexcept { return v_; }

 private:
  AdamConfig cfg_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::size_t step_ = 0;
  double last_lr_ = 0.0;
};

struct Checkpoint {
  ProjectionModel model;
  std::optional<ClassifierHead> classifier;
  std::size_t step = 0;
  std::uint64_t seed = 0;
};

/// Manifest (`checkpoint.json`) plus one binary block per parameter matrix.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Order-sensitive FNV-1a digest of every parameter bit pattern; used to
/// check that a training phase left some parameters untouched.
std::uint64_t parameter_checksum(std::span<const Matrix* const> params);
std::uint64_t parameter_checksum(const MlpHead& head);
std::uint64_t parameter_checksum(const ClassifierHead& head);

}  // namespace attralign

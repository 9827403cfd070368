#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "attralign/numerics.hpp"

namespace attralign {

enum class PoolingMode { Last, Mean };
enum class Split { Train, Test };

std::string_view to_string(PoolingMode mode) noexcept;
std::string_view to_string(Split split) noexcept;
PoolingMode parse_pooling_mode(std::string_view text);
Split parse_split(std::string_view text);

/// Global representation of a token sequence. `Last` also covers EOS pooling:
/// the terminator is appended upstream, so it is the final element.
Vector pool(std::span<const Vector> sequence, PoolingMode mode);

struct Category {
  std::size_t id = 0;
  std::string name;
  Vector name_embedding;
};

/// Categories with contiguous ids 0..C-1 and equal name-embedding dims.
struct CategoryTable {
  std::vector<Category> categories;
  std::string super_category;

  std::size_t size() const noexcept { return categories.size(); }
  const Category& at(std::size_t id) const;
  std::size_t embedding_dim() const;
  void validate() const;
};

struct SampleTriple {
  std::size_t id = 0;
  Vector object_embedding;
  Vector attribute_embedding;
  std::size_t category = 0;
  Split split = Split::Train;
  std::vector<Vector> object_sequence;     // optional
  std::vector<Vector> attribute_sequence;  // optional

  friend bool operator==(const SampleTriple&, const SampleTriple&) = default;
};

/// Immutable collection of (object, attribute, category) triples plus the
/// category table. Sample ids equal their position, and each sample carries
/// its own split tag so one dataset holds both train and test.
class AlignmentDataset {
 public:
  AlignmentDataset(CategoryTable table, std::vector<SampleTriple> samples,
                   PoolingMode pooling = PoolingMode::Last);

  const CategoryTable& table() const noexcept { return table_; }
  std::span<const SampleTriple> samples() const noexcept { return samples_; }
  const SampleTriple& sample(std::size_t id) const { return samples_.at(id); }
  std::size_t size() const noexcept { return samples_.size(); }
  std::size_t num_categories() const noexcept { return table_.size(); }
  PoolingMode pooling() const noexcept { return pooling_; }
  std::size_t embedding_dim_object() const noexcept { return dim_object_; }
  std::size_t embedding_dim_text() const noexcept { return dim_text_; }

  /// Sample ids of one split, ascending.
  std::vector<std::size_t> split_ids(Split split) const;

  friend bool operator==(const AlignmentDataset& a, const AlignmentDataset& b);

 private:
  CategoryTable table_;
  std::vector<SampleTriple> samples_;
  PoolingMode pooling_;
  std::size_t dim_object_ = 0;
  std::size_t dim_text_ = 0;
};

bool operator==(const Category& a, const Category& b);

struct SynthConfig {
  std::size_t num_classes = 10;
  std::size_t samples_per_class = 50;
  std::size_t dim_object = 32;
  std::size_t dim_text = 32;
  double inter_class_spread = 1.0;
  double intra_class_sigma = 0.1;
  double modality_gap_offset = 1.0;
  double attribute_noise_sigma = 0.1;
  std::uint64_t seed = 7;
  std::string super_category = "synthetic";

  void validate() const;
};

/// Deterministic synthetic dataset.
///
/// Class directions live on the unit sphere of text space: a shared base
/// direction plus `inter_class_spread` times an isotropic Gaussian, then
/// normalized, so larger spread means wider angular separation. Category
/// name embeddings are the directions themselves. Attributes are directions
/// plus noise, renormalized. Objects are the directions mapped through a fixed
/// random orthonormal map into object space, plus isotropic noise, plus one
/// offset vector of norm `modality_gap_offset` shared by every object.
///
/// Noise sigmas are per-coordinate standard deviations. Each class is split
/// 80/20 into train/test by a seeded shuffle (at least one sample on each side).
AlignmentDataset generate_synthetic(const SynthConfig& cfg);

/// The text-to-object map used by generate_synthetic for this config
/// (dim_object x dim_text, orthonormal columns when dim_object >= dim_text).
Matrix synthetic_object_map(const SynthConfig& cfg);

/// Writes `dir/manifest.json` plus little-endian float64 block files.
void save_dataset(const AlignmentDataset& ds, const std::filesystem::path& dir);
AlignmentDataset load_dataset(const std::filesystem::path& dir);

/// Stacks the object (or attribute) embeddings of the given samples.
Matrix object_matrix(const AlignmentDataset& ds, std::span<const std::size_t> ids);
Matrix attribute_matrix(const AlignmentDataset& ds, std::span<const std::size_t> ids);
/// Stacks category name embeddings, one row per id.
Matrix category_matrix(const AlignmentDataset& ds, std::span<const std::size_t> category_ids);
std::vector<std::size_t> labels_of(const AlignmentDataset& ds, std::span<const std::size_t> ids);

}  // namespace attralign

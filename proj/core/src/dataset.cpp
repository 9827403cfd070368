#include "attralign/dataset.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "attralign/binary_io.hpp"

namespace attralign {

using nlohmann::json;

std::string_view to_string(PoolingMode mode) noexcept {
  return mode == PoolingMode::Last ? "last" : "mean";
}

std::string_view to_string(Split split) noexcept { return split == Split::Train ? "train" : "test"; }

PoolingMode parse_pooling_mode(std::string_view text) {
  if (text == "last" || text == "eos") return PoolingMode::Last;
  if (text == "mean" || text == "avg") return PoolingMode::Mean;
  throw Error(ErrorCode::InvalidArgument, "unknown pooling mode '" + std::string(text) + "'");
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "test") return Split::Test;
  throw Error(ErrorCode::InvalidArgument, "unknown split '" + std::string(text) + "'");
}

Vector pool(std::span<const Vector> sequence, PoolingMode mode) {
  if (sequence.empty()) {
    throw Error(ErrorCode::EmptySequence, "cannot pool an empty sequence");
  }
  const std::size_t dim = sequence.front().dim();
  for (const Vector& v : sequence) {
    if (v.dim() != dim) {
      throw Error(ErrorCode::DimensionMismatch, "pool: sequence elements differ in dim");
    }
  }
  if (mode == PoolingMode::Last) return sequence.back();
  std::vector<double> acc(dim, 0.0);
  for (const Vector& v : sequence) {
    for (std::size_t i = 0; i < dim; ++i) acc[i] += v[i];
  }
  for (double& x : acc) x /= static_cast<double>(sequence.size());
  return Vector(std::move(acc));
}

bool operator==(const Category& a, const Category& b) {
  return a.id == b.id && a.name == b.name && a.name_embedding == b.name_embedding;
}

const Category& CategoryTable::at(std::size_t id) const {
  if (id >= categories.size()) {
    throw Error(ErrorCode::UnknownCategory,
                "category id " + std::to_string(id) + " not in a table of " +
                    std::to_string(categories.size()));
  }
  return categories[id];
}

std::size_t CategoryTable::embedding_dim() const {
  return categories.empty() ? 0 : categories.front().name_embedding.dim();
}

void CategoryTable::validate() const {
  if (categories.empty()) {
    throw Error(ErrorCode::InvalidArgument, "category table is empty");
  }
  const std::size_t dim = embedding_dim();
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (categories[i].id != i) {
      throw Error(ErrorCode::InvalidArgument,
                  "category ids must be contiguous from 0; position " + std::to_string(i) +
                      " holds id " + std::to_string(categories[i].id));
    }
    if (categories[i].name_embedding.dim() != dim || dim == 0) {
      throw Error(ErrorCode::DimensionMismatch,
                  "category " + std::to_string(i) + " name embedding has dim " +
                      std::to_string(categories[i].name_embedding.dim()));
    }
  }
}

AlignmentDataset::AlignmentDataset(CategoryTable table, std::vector<SampleTriple> samples,
                                   PoolingMode pooling)
    : table_(std::move(table)), samples_(std::move(samples)), pooling_(pooling) {
  table_.validate();
  dim_text_ = table_.embedding_dim();
  if (samples_.empty()) {
    throw Error(ErrorCode::InvalidArgument, "dataset has no samples");
  }
  dim_object_ = samples_.front().object_embedding.dim();
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const SampleTriple& s = samples_[i];
    const std::string where = "sample " + std::to_string(i);
    if (s.id != i) {
      throw Error(ErrorCode::InvalidArgument, where + " has id " + std::to_string(s.id) +
                                                  "; sample ids must equal their position");
    }
    if (s.category >= table_.size()) {
      throw Error(ErrorCode::UnknownCategory,
                  where + " references category " + std::to_string(s.category) + " of a " +
                      std::to_string(table_.size()) + "-class table");
    }
    if (s.object_embedding.dim() != dim_object_ || dim_object_ == 0) {
      throw Error(ErrorCode::DimensionMismatch, where + " object embedding dim differs");
    }
    if (s.attribute_embedding.dim() != dim_text_) {
      throw Error(ErrorCode::DimensionMismatch,
                  where + " attribute dim " + std::to_string(s.attribute_embedding.dim()) +
                      " != text dim " + std::to_string(dim_text_));
    }
    auto check_sequence = [&](const std::vector<Vector>& seq, const Vector& pooled, const char* what) {
      if (seq.empty()) return;
      const Vector p = pool(seq, pooling_);
      if (p.dim() != pooled.dim()) {
        throw Error(ErrorCode::DimensionMismatch, where + " " + what + " sequence dim differs");
      }
      for (std::size_t k = 0; k < p.dim(); ++k) {
        if (std::abs(p[k] - pooled[k]) > 1e-9) {
          throw Error(ErrorCode::InvalidArgument,
                      where + " " + what + " sequence does not pool to the stored embedding");
        }
      }
    };
    check_sequence(s.object_sequence, s.object_embedding, "object");
    check_sequence(s.attribute_sequence, s.attribute_embedding, "attribute");
  }
}

std::vector<std::size_t> AlignmentDataset::split_ids(Split split) const {
  std::vector<std::size_t> ids;
  for (const SampleTriple& s : samples_) {
    if (s.split == split) ids.push_back(s.id);
  }
  return ids;
}

bool operator==(const AlignmentDataset& a, const AlignmentDataset& b) {
  return a.pooling_ == b.pooling_ && a.table_.super_category == b.table_.super_category &&
         a.table_.categories == b.table_.categories && a.samples_ == b.samples_;
}

// ---------------------------------------------------------------------------
// Synthetic generation

void SynthConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
  if (num_classes < 2) fail("num_classes must be >= 2");
  if (samples_per_class < 2) fail("samples_per_class must be >= 2 to fill both splits");
  if (dim_object == 0 || dim_text == 0) fail("embedding dims must be positive");
  for (double v : {inter_class_spread, intra_class_sigma, modality_gap_offset, attribute_noise_sigma}) {
    if (!std::isfinite(v) || v < 0.0) fail("spreads, sigmas and offsets must be finite and >= 0");
  }
}

namespace {

std::vector<double> gaussian(std::mt19937_64& rng, std::size_t n, double stddev) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> out(n);
  for (double& x : out) x = stddev * dist(rng);
  return out;
}

std::vector<double> unit_direction(std::mt19937_64& rng, std::size_t n) {
  for (;;) {
    std::vector<double> v = gaussian(rng, n, 1.0);
    const double norm = l2_norm(v);
    if (norm > 1e-6) {
      for (double& x : v) x /= norm;
      return v;
    }
  }
}

Matrix orthonormal_map(std::mt19937_64& rng, std::size_t out_dim, std::size_t in_dim) {
  const std::size_t n = std::max(out_dim, in_dim);
  const std::vector<double> g = gaussian(rng, n * n, 1.0);
  Eigen::MatrixXd a(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) a(r, c) = g[r * n + c];
  }
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ();
  Matrix m(out_dim, in_dim);
  for (std::size_t r = 0; r < out_dim; ++r) {
    for (std::size_t c = 0; c < in_dim; ++c) m(r, c) = q(r, c);
  }
  return m;
}

struct SynthGeometry {
  std::vector<std::vector<double>> directions;
  Matrix object_map;
  std::vector<double> offset;
};

SynthGeometry draw_geometry(const SynthConfig& cfg, std::mt19937_64& rng) {
  SynthGeometry geo;
  const std::vector<double> base = unit_direction(rng, cfg.dim_text);
  const double per_coord = 1.0 / std::sqrt(static_cast<double>(cfg.dim_text));
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    std::vector<double> d = gaussian(rng, cfg.dim_text, per_coord * cfg.inter_class_spread);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += base[i];
    const double norm = l2_norm(d);
    for (double& x : d) x /= norm;
    geo.directions.push_back(std::move(d));
  }
  geo.object_map = orthonormal_map(rng, cfg.dim_object, cfg.dim_text);
  geo.offset = unit_direction(rng, cfg.dim_object);
  for (double& x : geo.offset) x *= cfg.modality_gap_offset;
  return geo;
}

}  // namespace

Matrix synthetic_object_map(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  return draw_geometry(cfg, rng).object_map;
}

AlignmentDataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const SynthGeometry geo = draw_geometry(cfg, rng);

  CategoryTable table;
  table.super_category = cfg.super_category;
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    table.categories.push_back({c, "class_" + std::to_string(c), Vector(geo.directions[c])});
  }

  const double obj_sigma = cfg.intra_class_sigma;
  const double att_sigma = cfg.attribute_noise_sigma;

  std::vector<SampleTriple> samples;
  samples.reserve(cfg.num_classes * cfg.samples_per_class);
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    const std::vector<double>& dir = geo.directions[c];
    std::vector<double> mapped(cfg.dim_object, 0.0);
    for (std::size_t r = 0; r < cfg.dim_object; ++r) mapped[r] = dot(geo.object_map.row(r), dir);

    for (std::size_t s = 0; s < cfg.samples_per_class; ++s) {
      std::vector<double> obj = gaussian(rng, cfg.dim_object, obj_sigma);
      for (std::size_t i = 0; i < obj.size(); ++i) obj[i] += mapped[i] + geo.offset[i];

      std::vector<double> att = gaussian(rng, cfg.dim_text, att_sigma);
      for (std::size_t i = 0; i < att.size(); ++i) att[i] += dir[i];

      SampleTriple t;
      t.id = samples.size();
      t.object_embedding = Vector(std::move(obj));
      t.attribute_embedding = normalized(Vector(std::move(att)));
      t.category = c;
      samples.push_back(std::move(t));
    }
  }

  // Stratified 80/20 split by seeded shuffle within each class.
  const std::size_t n = cfg.samples_per_class;
  const auto rounded = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n)));
  const std::size_t n_test = std::clamp<std::size_t>(rounded, 1, n - 1);
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = c * n + i;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < n_test; ++i) samples[order[i]].split = Split::Test;
  }

  return AlignmentDataset(std::move(table), std::move(samples), PoolingMode::Last);
}

// ---------------------------------------------------------------------------
// Stacking helpers

Matrix object_matrix(const AlignmentDataset& ds, std::span<const std::size_t> ids) {
  Matrix m(ids.size(), ds.embedding_dim_object());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const auto& v = ds.sample(ids[r]).object_embedding.raw();
    std::copy(v.begin(), v.end(), m.row(r).begin());
  }
  return m;
}

Matrix attribute_matrix(const AlignmentDataset& ds, std::span<const std::size_t> ids) {
  Matrix m(ids.size(), ds.embedding_dim_text());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const auto& v = ds.sample(ids[r]).attribute_embedding.raw();
    std::copy(v.begin(), v.end(), m.row(r).begin());
  }
  return m;
}

Matrix category_matrix(const AlignmentDataset& ds, std::span<const std::size_t> category_ids) {
  Matrix m(category_ids.size(), ds.embedding_dim_text());
  for (std::size_t r = 0; r < category_ids.size(); ++r) {
    const auto& v = ds.table().at(category_ids[r]).name_embedding.raw();
    std::copy(v.begin(), v.end(), m.row(r).begin());
  }
  return m;
}

std::vector<std::size_t> labels_of(const AlignmentDataset& ds, std::span<const std::size_t> ids) {
  std::vector<std::size_t> out;
  out.reserve(ids.size());
  for (std::size_t id : ids) out.push_back(ds.sample(id).category);
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr const char* kFormat = "attralign-dataset";
constexpr int kFormatVersion = 1;

json block_entry(const std::string& file, const Matrix& m) {
  return json{{"file", file}, {"rows", m.rows()}, {"cols", m.cols()}};
}

Matrix stack_sequences(const AlignmentDataset& ds, bool objects, std::size_t dim) {
  std::size_t total = 0;
  for (const auto& s : ds.samples()) total += (objects ? s.object_sequence : s.attribute_sequence).size();
  Matrix m(total, dim);
  std::size_t r = 0;
  for (const auto& s : ds.samples()) {
    for (const Vector& v : objects ? s.object_sequence : s.attribute_sequence) {
      std::copy(v.raw().begin(), v.raw().end(), m.row(r++).begin());
    }
  }
  return m;
}

template <typename T>
T manifest_get(const json& j, const char* key, const std::string& context) {
  if (!j.contains(key)) {
    throw Error(ErrorCode::FormatError, "manifest.json: " + context + " is missing '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError,
                "manifest.json: " + context + " field '" + key + "' has the wrong type (" + e.what() + ")");
  }
}

}  // namespace

void save_dataset(const AlignmentDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::size_t n = ds.size();
  const std::size_t c = ds.num_categories();

  std::vector<std::size_t> all_ids(n);
  for (std::size_t i = 0; i < n; ++i) all_ids[i] = i;
  std::vector<std::size_t> all_cats(c);
  for (std::size_t i = 0; i < c; ++i) all_cats[i] = i;

  const Matrix names = category_matrix(ds, all_cats);
  const Matrix objects = object_matrix(ds, all_ids);
  const Matrix attributes = attribute_matrix(ds, all_ids);
  write_block(dir / "category_names.bin", names);
  write_block(dir / "objects.bin", objects);
  write_block(dir / "attributes.bin", attributes);

  json manifest;
  manifest["format"] = kFormat;
  manifest["version"] = kFormatVersion;
  manifest["super_category"] = ds.table().super_category;
  manifest["pooling"] = std::string(to_string(ds.pooling()));
  manifest["dim_object"] = ds.embedding_dim_object();
  manifest["dim_text"] = ds.embedding_dim_text();

  json cats = json::array();
  for (const Category& cat : ds.table().categories) cats.push_back({{"id", cat.id}, {"name", cat.name}});
  manifest["categories"] = cats;

  bool has_obj_seq = false;
  bool has_att_seq = false;
  json samples = json::array();
  for (const SampleTriple& s : ds.samples()) {
    json js{{"id", s.id}, {"category", s.category}, {"split", std::string(to_string(s.split))}};
    if (!s.object_sequence.empty()) {
      js["object_tokens"] = s.object_sequence.size();
      has_obj_seq = true;
    }
    if (!s.attribute_sequence.empty()) {
      js["attribute_tokens"] = s.attribute_sequence.size();
      has_att_seq = true;
    }
    samples.push_back(std::move(js));
  }
  manifest["samples"] = samples;

  json blocks;
  blocks["category_names"] = block_entry("category_names.bin", names);
  blocks["objects"] = block_entry("objects.bin", objects);
  blocks["attributes"] = block_entry("attributes.bin", attributes);
  if (has_obj_seq) {
    const Matrix seq = stack_sequences(ds, true, ds.embedding_dim_object());
    write_block(dir / "object_sequences.bin", seq);
    blocks["object_sequences"] = block_entry("object_sequences.bin", seq);
  }
  if (has_att_seq) {
    const Matrix seq = stack_sequences(ds, false, ds.embedding_dim_text());
    write_block(dir / "attribute_sequences.bin", seq);
    blocks["attribute_sequences"] = block_entry("attribute_sequences.bin", seq);
  }
  manifest["blocks"] = blocks;

  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

AlignmentDataset load_dataset(const std::filesystem::path& dir) {
  const std::string text = read_text_file(dir / "manifest.json");
  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::FormatError,
                "manifest.json: parse error at byte offset " + std::to_string(e.byte) + ": " + e.what());
  }
  if (manifest.value("format", std::string()) != kFormat) {
    throw Error(ErrorCode::FormatError, "manifest.json: not an attralign dataset manifest");
  }
  const auto dim_object = manifest_get<std::size_t>(manifest, "dim_object", "root");
  const auto dim_text = manifest_get<std::size_t>(manifest, "dim_text", "root");
  const PoolingMode pooling = parse_pooling_mode(manifest_get<std::string>(manifest, "pooling", "root"));
  const json& jcats = manifest.at("categories");
  const json& jsamples = manifest.at("samples");
  const json& blocks = manifest.at("blocks");

  auto load_named = [&](const char* name, std::size_t expected_rows, std::size_t expected_cols) {
    if (!blocks.contains(name)) {
      throw Error(ErrorCode::FormatError, std::string("manifest.json: missing block '") + name + "'");
    }
    const json& b = blocks.at(name);
    const auto rows = manifest_get<std::size_t>(b, "rows", name);
    const auto cols = manifest_get<std::size_t>(b, "cols", name);
    if (cols != expected_cols) {
      throw Error(ErrorCode::DimensionMismatch,
                  std::string(name) + ": block has " + std::to_string(cols) + " columns, manifest dim is " +
                      std::to_string(expected_cols));
    }
    if (rows != expected_rows) {
      throw Error(ErrorCode::FormatError,
                  std::string(name) + ": block has " + std::to_string(rows) + " rows, expected " +
                      std::to_string(expected_rows));
    }
    return read_block(dir / manifest_get<std::string>(b, "file", name), rows, cols);
  };

  const Matrix names = load_named("category_names", jcats.size(), dim_text);
  CategoryTable table;
  table.super_category = manifest_get<std::string>(manifest, "super_category", "root");
  for (std::size_t i = 0; i < jcats.size(); ++i) {
    const std::string ctx = "category " + std::to_string(i);
    table.categories.push_back({manifest_get<std::size_t>(jcats[i], "id", ctx),
                                manifest_get<std::string>(jcats[i], "name", ctx), names.row_vector(i)});
  }

  const std::size_t n = jsamples.size();
  const Matrix objects = load_named("objects", n, dim_object);
  const Matrix attributes = load_named("attributes", n, dim_text);

  std::size_t obj_tokens = 0;
  std::size_t att_tokens = 0;
  for (const json& js : jsamples) {
    obj_tokens += js.value("object_tokens", std::size_t{0});
    att_tokens += js.value("attribute_tokens", std::size_t{0});
  }
  const Matrix obj_seq = obj_tokens ? load_named("object_sequences", obj_tokens, dim_object) : Matrix();
  const Matrix att_seq = att_tokens ? load_named("attribute_sequences", att_tokens, dim_text) : Matrix();

  std::vector<SampleTriple> samples;
  samples.reserve(n);
  std::size_t obj_row = 0;
  std::size_t att_row = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const json& js = jsamples[i];
    const std::string ctx = "sample " + std::to_string(i);
    SampleTriple s;
    s.id = manifest_get<std::size_t>(js, "id", ctx);
    s.category = manifest_get<std::size_t>(js, "category", ctx);
    s.split = parse_split(manifest_get<std::string>(js, "split", ctx));
    s.object_embedding = objects.row_vector(i);
    s.attribute_embedding = attributes.row_vector(i);
    for (std::size_t t = 0; t < js.value("object_tokens", std::size_t{0}); ++t) {
      s.object_sequence.push_back(obj_seq.row_vector(obj_row++));
    }
    for (std::size_t t = 0; t < js.value("attribute_tokens", std::size_t{0}); ++t) {
      s.attribute_sequence.push_back(att_seq.row_vector(att_row++));
    }
    samples.push_back(std::move(s));
  }
  return AlignmentDataset(std::move(table), std::move(samples), pooling);
}

}  // namespace attralign

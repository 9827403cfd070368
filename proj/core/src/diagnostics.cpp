#include "attralign/diagnostics.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace attralign {

namespace {

void require_labels(std::span<const std::size_t> labels, std::size_t rows, std::size_t num_classes,
                    const char* what) {
  if (labels.size() != rows) {
    throw Error(ErrorCode::DimensionMismatch, std::string(what) + ": one label per row required");
  }
  for (std::size_t y : labels) {
    if (y >= num_classes) {
      throw Error(ErrorCode::UnknownCategory, std::string(what) + ": label " + std::to_string(y) + " out of range");
    }
  }
}

std::vector<std::vector<double>> centroids(const Matrix& x, std::span<const std::size_t> labels,
                                           std::size_t num_classes) {
  std::vector<std::vector<double>> c(num_classes, std::vector<double>(x.cols(), 0.0));
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t k = 0; k < x.cols(); ++k) c[labels[r]][k] += row[k];
    ++counts[labels[r]];
  }
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (counts[k] == 0) {
      throw Error(ErrorCode::EmptyClass, "class " + std::to_string(k) + " has no samples");
    }
    for (double& v : c[k]) v /= static_cast<double>(counts[k]);
  }
  return c;
}

}  // namespace

double linear_probe(const Matrix& train_x, std::span<const std::size_t> train_y, const Matrix& test_x,
                    std::span<const std::size_t> test_y, std::size_t num_classes, const ProbeOptions& options) {
  if (num_classes < 2) {
    throw Error(ErrorCode::DegenerateLabels, "probing needs at least 2 classes");
  }
  if (train_x.cols() != test_x.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "train and test features differ in dim");
  }
  if (train_x.rows() == 0 || test_x.rows() == 0) {
    throw Error(ErrorCode::EmptyInput, "probing needs train and test samples");
  }
  require_labels(train_y, train_x.rows(), num_classes, "linear_probe train");
  require_labels(test_y, test_x.rows(), num_classes, "linear_probe test");
  std::vector<bool> seen(num_classes, false);
  for (std::size_t y : train_y) seen[y] = true;
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (!seen[k]) {
      throw Error(ErrorCode::DegenerateLabels, "class " + std::to_string(k) + " is absent from the training labels");
    }
  }

  const std::size_t n = train_x.rows();
  const std::size_t d = train_x.cols();
  Matrix w(num_classes, d);
  std::vector<double> b(num_classes, 0.0);
  Matrix gw(num_classes, d);
  std::vector<double> gb(num_classes);
  std::vector<double> logits(num_classes);
  const double inv_n = 1.0 / static_cast<double>(n);

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::fill(gw.data().begin(), gw.data().end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      auto xi = train_x.row(i);
      for (std::size_t k = 0; k < num_classes; ++k) logits[k] = dot(w.row(k), xi) + b[k];
      const double lse = log_sum_exp(logits);
      for (std::size_t k = 0; k < num_classes; ++k) {
        const double delta = (std::exp(logits[k] - lse) - (train_y[i] == k ? 1.0 : 0.0)) * inv_n;
        gb[k] += delta;
        auto gk = gw.row(k);
        for (std::size_t c = 0; c < d; ++c) gk[c] += delta * xi[c];
      }
    }
    auto ws = w.data();
    auto gs = gw.data();
    for (std::size_t i = 0; i < ws.size(); ++i) ws[i] -= options.lr * gs[i];
    for (std::size_t k = 0; k < num_classes; ++k) b[k] -= options.lr * gb[k];
  }

  std::size_t correct = 0;
  for (std::size_t i = 0; i < test_x.rows(); ++i) {
    std::size_t best = 0;
    double best_score = -INFINITY;
    for (std::size_t k = 0; k < num_classes; ++k) {
      const double s = dot(w.row(k), test_x.row(i)) + b[k];
      if (s > best_score) {
        best_score = s;
        best = k;
      }
    }
    if (best == test_y[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test_x.rows());
}

double alignment_quality(const Matrix& objects, std::span<const std::size_t> labels,
                         const Matrix& category_embeddings) {
  const std::size_t c = category_embeddings.rows();
  require_labels(labels, objects.rows(), c, "alignment_quality");
  if (objects.cols() != category_embeddings.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "objects and categories differ in dim");
  }
  std::vector<double> sums(c, 0.0);
  std::vector<std::size_t> counts(c, 0);
  for (std::size_t r = 0; r < objects.rows(); ++r) {
    sums[labels[r]] += cosine_sim(objects.row(r), category_embeddings.row(labels[r]));
    ++counts[labels[r]];
  }
  double total = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    if (counts[k] == 0) {
      throw Error(ErrorCode::EmptyClass, "class " + std::to_string(k) + " has no objects in the evaluated set");
    }
    total += sums[k] / static_cast<double>(counts[k]);
  }
  return total / static_cast<double>(c);
}

namespace {

std::vector<std::size_t> all_categories(const AlignmentDataset& ds) {
  std::vector<std::size_t> ids(ds.num_categories());
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

}  // namespace

double alignment_quality(const AlignmentDataset& ds, const ProjectionModel& model, Split split) {
  const auto ids = ds.split_ids(split);
  const Matrix objects = project_objects(model, object_matrix(ds, ids));
  const Matrix cats = project_categories(model, category_matrix(ds, all_categories(ds)));
  return alignment_quality(objects, labels_of(ds, ids), cats);
}

Discriminability discriminability(const Matrix& embeddings, std::span<const std::size_t> labels,
                                  std::size_t num_classes) {
  if (num_classes < 2) {
    throw Error(ErrorCode::InvalidArgument, "discriminability needs at least 2 classes");
  }
  require_labels(labels, embeddings.rows(), num_classes, "discriminability");
  const auto cents = centroids(embeddings, labels, num_classes);

  Discriminability out;
  double inter = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < num_classes; ++i) {
    for (std::size_t j = i + 1; j < num_classes; ++j) {
      inter += 1.0 - cosine_sim(cents[i], cents[j]);
      ++pairs;
    }
  }
  out.inter_class_distance = inter / static_cast<double>(pairs);

  std::vector<double> sums(num_classes, 0.0);
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t r = 0; r < embeddings.rows(); ++r) {
    sums[labels[r]] += 1.0 - cosine_sim(embeddings.row(r), cents[labels[r]]);
    ++counts[labels[r]];
  }
  double intra = 0.0;
  for (std::size_t k = 0; k < num_classes; ++k) intra += sums[k] / static_cast<double>(counts[k]);
  out.intra_class_variance = intra / static_cast<double>(num_classes);
  return out;
}

McResult evaluate_mc(const Matrix& objects, std::span<const std::size_t> labels, const Matrix& categories,
                     std::size_t choices, std::uint64_t seed) {
  const std::size_t c = categories.rows();
  if (objects.rows() == 0) {
    throw Error(ErrorCode::EmptyInput, "multiple-choice evaluation needs at least one sample");
  }
  if (choices > c) {
    throw Error(ErrorCode::ChoicesOutOfRange,
                std::to_string(choices) + " choices requested but only " + std::to_string(c) + " categories exist");
  }
  require_labels(labels, objects.rows(), c, "evaluate_mc");
  if (objects.cols() != categories.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "objects and categories differ in dim");
  }

  McResult out;
  out.choices = choices;
  out.degenerate_choices = choices == 1;
  out.confusion.assign(c, std::vector<std::uint64_t>(c, 0));
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> candidates;
  std::size_t correct = 0;

  for (std::size_t r = 0; r < objects.rows(); ++r) {
    const std::size_t truth = labels[r];
    candidates.clear();
    if (choices == kAllChoices) {
      for (std::size_t k = 0; k < c; ++k) candidates.push_back(k);
    } else {
      std::vector<std::size_t> others;
      for (std::size_t k = 0; k < c; ++k) {
        if (k != truth) others.push_back(k);
      }
      std::shuffle(others.begin(), others.end(), rng);
      candidates.push_back(truth);
      candidates.insert(candidates.end(), others.begin(), others.begin() + static_cast<std::ptrdiff_t>(choices - 1));
      std::sort(candidates.begin(), candidates.end());
    }
    std::size_t best = candidates.front();
    double best_sim = -INFINITY;
    for (std::size_t k : candidates) {
      const double s = cosine_sim(objects.row(r), categories.row(k));
      if (s > best_sim) {
        best_sim = s;
        best = k;
      }
    }
    ++out.confusion[truth][best];
    if (best == truth) ++correct;
  }

  out.accuracy = static_cast<double>(correct) / static_cast<double>(objects.rows());
  out.per_class_accuracy.assign(c, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    const std::uint64_t row = std::accumulate(out.confusion[k].begin(), out.confusion[k].end(), std::uint64_t{0});
    if (row > 0) out.per_class_accuracy[k] = static_cast<double>(out.confusion[k][k]) / static_cast<double>(row);
  }
  return out;
}

McResult evaluate_mc(const AlignmentDataset& ds, const ProjectionModel& model, std::size_t choices,
                     std::uint64_t seed, Split split) {
  const auto ids = ds.split_ids(split);
  if (ids.empty()) {
    throw Error(ErrorCode::EmptyInput, std::string(to_string(split)) + " split is empty");
  }
  const Matrix objects = project_objects(model, object_matrix(ds, ids));
  const Matrix cats = project_categories(model, category_matrix(ds, all_categories(ds)));
  return evaluate_mc(objects, labels_of(ds, ids), cats, choices, seed);
}

MetricsReport evaluate(const AlignmentDataset& ds, const ProjectionModel& model, const EvalOptions& options) {
  const auto ids = ds.split_ids(options.split);
  const auto labels = labels_of(ds, ids);
  const Matrix objects = project_objects(model, object_matrix(ds, ids));
  const Matrix cats = project_categories(model, category_matrix(ds, all_categories(ds)));

  MetricsReport r;
  r.alignment_quality = alignment_quality(objects, labels, cats);
  const Discriminability disc = discriminability(objects, labels, ds.num_categories());
  r.inter_class_distance = disc.inter_class_distance;
  r.intra_class_variance = disc.intra_class_variance;
  r.mc = evaluate_mc(objects, labels, cats, options.choices, options.seed);

  if (options.include_probe) {
    const auto train_ids = ds.split_ids(Split::Train);
    const auto train_labels = labels_of(ds, train_ids);
    const Matrix raw_train = object_matrix(ds, train_ids);
    const Matrix raw_test = object_matrix(ds, ids);
    r.probe_accuracy["raw_object"] =
        linear_probe(raw_train, train_labels, raw_test, labels, ds.num_categories(), options.probe);
    r.probe_accuracy["projected_object"] = linear_probe(project_objects(model, raw_train), train_labels, objects,
                                                        labels, ds.num_categories(), options.probe);
    r.probe_accuracy["raw_attribute"] =
        linear_probe(attribute_matrix(ds, train_ids), train_labels, attribute_matrix(ds, ids), labels,
                     ds.num_categories(), options.probe);
  }
  return r;
}

std::string metrics_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["alignment_quality"] = r.alignment_quality;
  j["inter_class_distance"] = r.inter_class_distance;
  j["intra_class_variance"] = r.intra_class_variance;
  j["discriminability_definition"] = "cosine-centroid (1 - cos)";
  j["mc_accuracy"] = r.mc.accuracy;
  j["mc_choices"] = r.mc.choices == kAllChoices ? nlohmann::json("all") : nlohmann::json(r.mc.choices);
  j["mc_degenerate_choices"] = r.mc.degenerate_choices;
  j["per_class_accuracy"] = r.mc.per_class_accuracy;
  j["confusion"] = r.mc.confusion;
  j["probe_accuracy"] = r.probe_accuracy;
  return j.dump(2) + "\n";
}

namespace {

std::string fmt_double(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

}  // namespace

std::string metrics_to_tsv(const MetricsReport& r) {
  std::ostringstream out;
  out << "metric\tvalue\n";
  out << "alignment_quality\t" << fmt_double(r.alignment_quality) << "\n";
  out << "inter_class_distance\t" << fmt_double(r.inter_class_distance) << "\n";
  out << "intra_class_variance\t" << fmt_double(r.intra_class_variance) << "\n";
  out << "mc_accuracy\t" << fmt_double(r.mc.accuracy) << "\n";
  for (std::size_t k = 0; k < r.mc.per_class_accuracy.size(); ++k) {
    out << "class_" << k << "_accuracy\t" << fmt_double(r.mc.per_class_accuracy[k]) << "\n";
  }
  for (const auto& [source, acc] : r.probe_accuracy) out << "probe_" << source << "\t" << fmt_double(acc) << "\n";
  return out.str();
}

std::string confusion_to_text(const McResult& mc) {
  std::ostringstream out;
  for (const auto& row : mc.confusion) {
    for (std::size_t k = 0; k < row.size(); ++k) out << (k ? " " : "") << row[k];
    out << "\n";
  }
  return out.str();
}

ProjectionExport export_projection(const Matrix& x, std::span<const std::size_t> labels, ProjectionMethod method) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (n < 2) {
    throw Error(ErrorCode::InvalidArgument, "projection export needs at least 2 samples");
  }
  if (labels.size() != n) {
    throw Error(ErrorCode::DimensionMismatch, "one label per row required");
  }
  ProjectionExport out;
  out.labels.assign(labels.begin(), labels.end());
  out.mean.assign(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) out.mean[c] += x(r, c);
  }
  for (double& m : out.mean) m /= static_cast<double>(n);

  auto raw = [&] {
    out.method = ProjectionMethod::Raw;
    out.coordinates = x;
    out.components = Matrix();
    return out;
  };
  if (method == ProjectionMethod::Raw) return raw();

  Eigen::MatrixXd centered(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) centered(r, c) = x(r, c) - out.mean[c];
  }
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  const Eigen::VectorXd evals = solver.eigenvalues();  // ascending
  const Eigen::MatrixXd evecs = solver.eigenvectors();
  for (Eigen::Index i = evals.size(); i-- > 0;) out.eigenvalues.push_back(std::max(0.0, evals(i)));

  const double top = out.eigenvalues.front();
  if (d < 2 || top <= 0.0 || out.eigenvalues[1] <= 1e-12 * top) {
    out.degenerate = true;
    out.eigenvalues.clear();
    return raw();
  }

  out.method = ProjectionMethod::Pca2D;
  out.components = Matrix(2, d);
  for (std::size_t k = 0; k < 2; ++k) {
    const Eigen::Index col = static_cast<Eigen::Index>(d - 1 - k);
    double sign = 1.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double v = evecs(static_cast<Eigen::Index>(c), col);
      if (std::abs(v) > 1e-12) {
        sign = v > 0 ? 1.0 : -1.0;
        break;
      }
    }
    for (std::size_t c = 0; c < d; ++c) out.components(k, c) = sign * evecs(static_cast<Eigen::Index>(c), col);
  }
  out.coordinates = Matrix(n, 2);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < 2; ++k) {
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) acc += centered(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * out.components(k, c);
      out.coordinates(r, k) = acc;
    }
  }
  return out;
}

std::string projection_to_tsv(const ProjectionExport& t) {
  std::ostringstream out;
  out << "label";
  for (std::size_t c = 0; c < t.coordinates.cols(); ++c) {
    if (t.method == ProjectionMethod::Pca2D) {
      out << "\tpc" << (c + 1);
    } else {
      out << "\tx" << c;
    }
  }
  out << "\n";
  for (std::size_t r = 0; r < t.coordinates.rows(); ++r) {
    out << t.labels[r];
    for (std::size_t c = 0; c < t.coordinates.cols(); ++c) out << "\t" << fmt_double(t.coordinates(r, c));
    out << "\n";
  }
  return out.str();
}

}  // namespace attralign

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "attralign/dataset.hpp"
#include "attralign/model.hpp"
#include "attralign/numerics.hpp"

namespace attralign {

struct ProbeOptions {
  std::size_t epochs = 500;
  double lr = 0.1;
};

/// Multinomial logistic regression trained by full-batch gradient descent
/// from zero weights; returns top-1 accuracy on the test features.
/// Throws DegenerateLabels when a class never occurs in the training labels.
double linear_probe(const Matrix& train_features, std::span<const std::size_t> train_labels,
                    const Matrix& test_features, std::span<const std::size_t> test_labels,
                    std::size_t num_classes, const ProbeOptions& options = {});

/// Mean over classes of the mean cosine between each object row and the row
/// of `category_embeddings` for its label. Throws EmptyClass when a category
/// has no object rows.
double alignment_quality(const Matrix& objects, std::span<const std::size_t> labels,
                         const Matrix& category_embeddings);

/// Same, on projected embeddings of one split.
double alignment_quality(const AlignmentDataset& ds, const ProjectionModel& model, Split split = Split::Test);

/// Cosine-centroid statistics. `inter_class_distance` is the mean over
/// unordered class pairs of 1 - cos(centroid_i, centroid_j);
/// `intra_class_variance` is the mean over classes of the mean of
/// 1 - cos(sample, own centroid).
struct Discriminability {
  double inter_class_distance = 0.0;
  double intra_class_variance = 0.0;
};

Discriminability discriminability(const Matrix& embeddings, std::span<const std::size_t> labels,
                                  std::size_t num_classes);

/// `choices` value meaning "every category is a candidate".
inline constexpr std::size_t kAllChoices = 0;

struct McResult {
  double accuracy = 0.0;
  std::size_t choices = kAllChoices;
  bool degenerate_choices = false;  // a single candidate makes accuracy 1 by construction
  std::vector<std::vector<std::uint64_t>> confusion;  // [true][predicted]
  std::vector<double> per_class_accuracy;             // 0 for classes without test samples
};

/// Multiple-choice evaluation by embedding argmax: each object picks the
/// candidate category with the highest cosine. With a finite `choices`, the
/// candidates are the true category plus seeded distractors.
McResult evaluate_mc(const Matrix& objects, std::span<const std::size_t> labels,
                     const Matrix& category_embeddings, std::size_t choices = kAllChoices,
                     std::uint64_t seed = 0);

McResult evaluate_mc(const AlignmentDataset& ds, const ProjectionModel& model,
                     std::size_t choices = kAllChoices, std::uint64_t seed = 0, Split split = Split::Test);

struct MetricsReport {
  std::map<std::string, double> probe_accuracy;  // feature source -> accuracy
  double alignment_quality = 0.0;
  double inter_class_distance = 0.0;
  double intra_class_variance = 0.0;
  McResult mc;
};

struct EvalOptions {
  Split split = Split::Test;
  std::size_t choices = kAllChoices;
  std::uint64_t seed = 0;
  bool include_probe = false;
  ProbeOptions probe;
};

/// Full diagnostic suite for one model snapshot. Discriminability is
/// measured on projected objects of the evaluated split; probes (optional)
/// train on the train split and test on the evaluated split, for raw and
/// projected object features.
MetricsReport evaluate(const AlignmentDataset& ds, const ProjectionModel& model, const EvalOptions& options = {});

std::string metrics_to_json(const MetricsReport& report);
/// Two-column `metric<TAB>value` table.
std::string metrics_to_tsv(const MetricsReport& report);
/// Whitespace-separated integer grid, one true class per line.
std::string confusion_to_text(const McResult& mc);

enum class ProjectionMethod { Pca2D, Raw };

struct ProjectionExport {
  ProjectionMethod method = ProjectionMethod::Pca2D;
  bool degenerate = false;       // PCA was requested but covariance rank < 2
  Matrix coordinates;            // n x 2 for PCA, n x D for raw
  std::vector<std::size_t> labels;
  Matrix components;             // 2 x D principal axes (PCA only)
  std::vector<double> mean;      // D
  std::vector<double> eigenvalues;  // all covariance eigenvalues, descending (PCA only)
};

/// 2-D PCA with unbiased covariance. Each axis is signed so that its first
/// nonzero loading is positive. Rank < 2 falls back to raw export with the
/// `degenerate` flag set.
ProjectionExport export_projection(const Matrix& embeddings, std::span<const std::size_t> labels,
                                   ProjectionMethod method);

/// Tab-separated table with a header row: `label` then one column per coordinate.
std::string projection_to_tsv(const ProjectionExport& table);

}  // namespace attralign

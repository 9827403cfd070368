#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "attralign/numerics.hpp"
#include "attralign/tape.hpp"

namespace attralign {

/// Projected embeddings of one batch. Hard negatives are stacked row-wise:
/// the negatives of anchor i occupy rows [negative_offsets[i], negative_offsets[i+1])
/// of both `negative_attributes` and `negative_categories`.
struct BatchViews {
  Matrix objects;     // B x d
  Matrix attributes;  // B x d
  Matrix categories;  // B x d
  Matrix negative_attributes;
  Matrix negative_categories;
  std::vector<std::size_t> negative_offsets;  // B + 1 entries
  double temperature = 1.0;

  std::size_t batch_size() const noexcept { return objects.rows(); }
  void validate() const;
};

/// Which anchors are pulled together in the contrastive part of the objective.
enum class ContrastiveVariant {
  AttributeTriple,  // object-attribute + attribute-category + category-category
  ObjectCategory,   // object-category (with hard negatives) + category-category
};

struct LossReport {
  double l_oa = 0.0;
  double l_ao = 0.0;
  double l_oac = 0.0;
  double l_ac = 0.0;
  double l_ca = 0.0;
  double l_acc = 0.0;
  double l_oc = 0.0;
  double l_co = 0.0;
  double l_occ = 0.0;
  double l_ccc = 0.0;
  double aux = 0.0;
  double stage1_total = 0.0;
};

/// Tape nodes holding the views of one batch.
struct ViewNodes {
  Tape::NodeId objects = 0;
  Tape::NodeId attributes = 0;
  Tape::NodeId categories = 0;
  Tape::NodeId negative_attributes = 0;
  Tape::NodeId negative_categories = 0;
  std::vector<std::size_t> negative_offsets;
  double temperature = 1.0;
};

/// Optional extra term added to the stage-one objective; records itself on
/// the tape and returns a 1x1 node.
using AuxLoss = std::function<Tape::NodeId(Tape&, const ViewNodes&)>;

struct LossNodes {
  std::optional<Tape::NodeId> oa, ao, oac, ac, ca, acc, oc, co, occ, aux;
  Tape::NodeId ccc = 0;
  Tape::NodeId total = 0;
};

/// Records the stage-one objective: aux + (L_OAC + L_ACC + L_CCC) / 2 for the
/// attribute triple variant, aux + (L_OCC + L_CCC) / 2 for object-category.
/// Every similarity is cosine / temperature; each term sums over the batch.
LossNodes record_stage1(Tape& tape, const ViewNodes& views,
                        ContrastiveVariant variant = ContrastiveVariant::AttributeTriple,
                        const AuxLoss& aux = {});

LossReport read_report(const Tape& tape, const LossNodes& nodes);

/// Places a BatchViews on a fresh set of tape leaves.
ViewNodes place_views(Tape& tape, const BatchViews& batch);

// Individual terms, each evaluated on its own tape.
double loss_oa_hn(const BatchViews& batch);
double loss_ao(const BatchViews& batch);
double loss_ac_hn(const BatchViews& batch);
double loss_ca_hn(const BatchViews& batch);
double loss_oac_hn(const BatchViews& batch);
double loss_acc_hn(const BatchViews& batch);
/// Throws EmptyNegativeSet when any anchor has no negative categories.
double loss_ccc(const BatchViews& batch);

struct Stage1Result {
  LossReport report;
  Matrix grad_objects;
  Matrix grad_attributes;
  Matrix grad_categories;
  Matrix grad_negative_attributes;
  Matrix grad_negative_categories;
};

/// Stage-one objective with gradients with respect to every view.
Stage1Result stage1_objective(const BatchViews& batch, const AuxLoss& aux = {},
                              ContrastiveVariant variant = ContrastiveVariant::AttributeTriple);

/// Mean softmax cross-entropy of `logits` (n x C node) against `labels`.
Tape::NodeId record_cross_entropy(Tape& tape, Tape::NodeId logits, const std::vector<std::size_t>& labels);

}  // namespace attralign

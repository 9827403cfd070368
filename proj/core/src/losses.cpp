#include "attralign/losses.hpp"

#include <cmath>
#include <string>

namespace attralign {

using Entry = Tape::Entry;
using NodeId = Tape::NodeId;

void BatchViews::validate() const {
  const std::size_t b = objects.rows();
  if (b == 0) {
    throw Error(ErrorCode::InvalidArgument, "batch must contain at least one sample");
  }
  const std::size_t d = objects.cols();
  auto require = [&](const Matrix& m, std::size_t rows, const char* name) {
    if (m.rows() != rows || m.cols() != d) {
      throw Error(ErrorCode::DimensionMismatch,
                  std::string(name) + " is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                      ", expected " + std::to_string(rows) + "x" + std::to_string(d));
    }
  };
  require(attributes, b, "attributes");
  require(categories, b, "categories");
  if (negative_offsets.size() != b + 1 || negative_offsets.front() != 0) {
    throw Error(ErrorCode::DimensionMismatch, "negative_offsets must have B+1 entries starting at 0");
  }
  for (std::size_t i = 0; i < b; ++i) {
    if (negative_offsets[i + 1] < negative_offsets[i]) {
      throw Error(ErrorCode::DimensionMismatch, "negative_offsets must be non-decreasing");
    }
  }
  const std::size_t k = negative_offsets.back();
  // Zero-row stacks may carry any column count.
  if (k > 0 || negative_attributes.rows() > 0) require(negative_attributes, k, "negative_attributes");
  if (k > 0 || negative_categories.rows() > 0) require(negative_categories, k, "negative_categories");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorCode::InvalidArgument, "temperature must be positive");
  }
}

namespace {

Matrix empty_stack(const Matrix& m, std::size_t d) { return m.rows() == 0 ? Matrix(0, d) : m; }

class LossBuilder {
 public:
  LossBuilder(Tape& tape, const ViewNodes& v)
      : tape_(tape), v_(v), b_(tape.value(v.objects).rows()), inv_tau_(1.0 / v.temperature) {
    if (v_.negative_offsets.size() != b_ + 1) {
      throw Error(ErrorCode::DimensionMismatch, "negative_offsets must have B+1 entries");
    }
  }

  // L_OA^hn: object anchors against in-batch attributes plus A_hn.
  NodeId oa_hn() {
    const NodeId s = sim(s_oa_, v_.objects, v_.attributes);
    const NodeId h = sim(s_oh_, v_.objects, v_.negative_attributes);
    return anchored(
        {s, h}, [&](std::size_t i, std::vector<Entry>& row) {
          for (std::size_t j = 0; j < b_; ++j) row.push_back({0, i, j});
          for (std::size_t w = begin(i); w < end(i); ++w) row.push_back({1, i, w});
        });
  }

  // L_AO: attribute anchors against in-batch objects only.
  NodeId ao() {
    const NodeId s = sim(s_oa_, v_.objects, v_.attributes);
    return anchored({s}, [&](std::size_t i, std::vector<Entry>& row) {
      for (std::size_t k = 0; k < b_; ++k) row.push_back({0, k, i});
    });
  }

  // L_AC^hn: attribute anchors against in-batch categories plus C_hn.
  NodeId ac_hn() {
    const NodeId s = sim(s_ac_, v_.attributes, v_.categories);
    const NodeId h = sim(s_ah_, v_.attributes, v_.negative_categories);
    return anchored({s, h}, [&](std::size_t i, std::vector<Entry>& row) {
      for (std::size_t j = 0; j < b_; ++j) row.push_back({0, i, j});
      for (std::size_t w = begin(i); w < end(i); ++w) row.push_back({1, i, w});
    });
  }

  // L_CA^hn: category anchors against in-batch attributes plus A_hn.
  NodeId ca_hn() {
    const NodeId s = sim(s_ac_, v_.attributes, v_.categories);
    const NodeId h = sim(s_hc_, v_.negative_attributes, v_.categories);
    return anchored({s, h}, [&](std::size_t i, std::vector<Entry>& row) {
      for (std::size_t j = 0; j < b_; ++j) row.push_back({0, j, i});
      for (std::size_t w = begin(i); w < end(i); ++w) row.push_back({1, w, i});
    });
  }

  NodeId oc_hn() {
    const NodeId s = sim(s_oc_, v_.objects, v_.categories);
    const NodeId h = sim(s_och_, v_.objects, v_.negative_categories);
    return anchored({s, h}, [&](std::size_t i, std::vector<Entry>& row) {
      for (std::size_t j = 0; j < b_; ++j) row.push_back({0, i, j});
      for (std::size_t w = begin(i); w < end(i); ++w) row.push_back({1, i, w});
    });
  }

  NodeId co() {
    const NodeId s = sim(s_oc_, v_.objects, v_.categories);
    return anchored({s}, [&](std::size_t i, std::vector<Entry>& row) {
      for (std::size_t k = 0; k < b_; ++k) row.push_back({0, k, i});
    });
  }

  // L_CCC = sum_i log sum_{k in C_hn^i} exp(s(c_i, c_k)); no positive term.
  NodeId ccc() {
    for (std::size_t i = 0; i < b_; ++i) {
      if (begin(i) == end(i)) {
        throw Error(ErrorCode::EmptyNegativeSet,
                    "category-category loss needs at least one negative for batch row " + std::to_string(i));
      }
    }
    const NodeId s = sim(s_cc_, v_.categories, v_.negative_categories);
    std::vector<Entry> flat;
    std::vector<std::size_t> offsets{0};
    for (std::size_t i = 0; i < b_; ++i) {
      for (std::size_t w = begin(i); w < end(i); ++w) flat.push_back({0, i, w});
      offsets.push_back(flat.size());
    }
    const NodeId logits = tape_.scale(tape_.gather({s}, std::move(flat)), inv_tau_);
    return tape_.sum(tape_.segment_log_sum_exp(logits, std::move(offsets)));
  }

  NodeId half_sum(NodeId a, NodeId b) { return tape_.scale(tape_.add(a, b), 0.5); }

 private:
  std::size_t begin(std::size_t i) const { return v_.negative_offsets[i]; }
  std::size_t end(std::size_t i) const { return v_.negative_offsets[i + 1]; }

  NodeId sim(std::optional<NodeId>& slot, NodeId x, NodeId y) {
    if (!slot) slot = tape_.cosine_matrix(x, y);
    return *slot;
  }

  // sum_i [ logsumexp(row_i / tau) - s(i,i) / tau ], positives on source 0's diagonal.
  template <typename RowFn>
  NodeId anchored(std::vector<NodeId> sources, RowFn&& fill_row) {
    std::vector<Entry> flat;
    std::vector<std::size_t> offsets{0};
    std::vector<Entry> positives;
    for (std::size_t i = 0; i < b_; ++i) {
      fill_row(i, flat);
      offsets.push_back(flat.size());
      positives.push_back({0, i, i});
    }
    const NodeId logits = tape_.scale(tape_.gather(sources, std::move(flat)), inv_tau_);
    const NodeId lse = tape_.sum(tape_.segment_log_sum_exp(logits, std::move(offsets)));
    const NodeId pos = tape_.sum(tape_.scale(tape_.gather({sources.front()}, std::move(positives)), inv_tau_));
    return tape_.sub(lse, pos);
  }

  Tape& tape_;
  const ViewNodes& v_;
  std::size_t b_;
  double inv_tau_;
  std::optional<NodeId> s_oa_, s_oh_, s_ac_, s_ah_, s_hc_, s_cc_, s_oc_, s_och_;
};

}  // namespace

ViewNodes place_views(Tape& tape, const BatchViews& batch) {
  batch.validate();
  const std::size_t d = batch.objects.cols();
  ViewNodes v;
  v.objects = tape.leaf(batch.objects);
  v.attributes = tape.leaf(batch.attributes);
  v.categories = tape.leaf(batch.categories);
  v.negative_attributes = tape.leaf(empty_stack(batch.negative_attributes, d));
  v.negative_categories = tape.leaf(empty_stack(batch.negative_categories, d));
  v.negative_offsets = batch.negative_offsets;
  v.temperature = batch.temperature;
  return v;
}

LossNodes record_stage1(Tape& tape, const ViewNodes& views, ContrastiveVariant variant, const AuxLoss& aux) {
  LossBuilder lb(tape, views);
  LossNodes n;
  n.ccc = lb.ccc();
  NodeId contrastive = 0;
  if (variant == ContrastiveVariant::AttributeTriple) {
    n.oa = lb.oa_hn();
    n.ao = lb.ao();
    n.oac = lb.half_sum(*n.oa, *n.ao);
    n.ac = lb.ac_hn();
    n.ca = lb.ca_hn();
    n.acc = lb.half_sum(*n.ac, *n.ca);
    contrastive = tape.scale(tape.add(tape.add(*n.oac, *n.acc), n.ccc), 0.5);
  } else {
    n.oc = lb.oc_hn();
    n.co = lb.co();
    n.occ = lb.half_sum(*n.oc, *n.co);
    contrastive = lb.half_sum(*n.occ, n.ccc);
  }
  if (aux) {
    n.aux = aux(tape, views);
    if (tape.value(*n.aux).size() != 1) {
      throw Error(ErrorCode::NonScalarOutput, "auxiliary loss must be a 1x1 node");
    }
    n.total = tape.add(*n.aux, contrastive);
  } else {
    n.total = contrastive;
  }
  return n;
}

LossReport read_report(const Tape& tape, const LossNodes& n) {
  auto get = [&](const std::optional<NodeId>& id) { return id ? tape.scalar(*id) : 0.0; };
  LossReport r;
  r.l_oa = get(n.oa);
  r.l_ao = get(n.ao);
  r.l_oac = get(n.oac);
  r.l_ac = get(n.ac);
  r.l_ca = get(n.ca);
  r.l_acc = get(n.acc);
  r.l_oc = get(n.oc);
  r.l_co = get(n.co);
  r.l_occ = get(n.occ);
  r.aux = get(n.aux);
  r.l_ccc = tape.scalar(n.ccc);
  r.stage1_total = tape.scalar(n.total);
  return r;
}

namespace {

template <typename Fn>
double evaluate_term(const BatchViews& batch, Fn&& fn) {
  Tape tape;
  const ViewNodes v = place_views(tape, batch);
  LossBuilder lb(tape, v);
  return tape.scalar(fn(lb));
}

}  // namespace

double loss_oa_hn(const BatchViews& batch) {
  return evaluate_term(batch, [](LossBuilder& lb) { return lb.oa_hn(); });
}

double loss_ao(const BatchViews& batch) {
  return evaluate_term(batch, [](LossBuilder& lb) { return lb.ao(); });
}

double loss_ac_hn(const BatchViews& batch) {
  return evaluate_term(batch, [](LossBuilder& lb) { return lb.ac_hn(); });
}

double loss_ca_hn(const BatchViews& batch) {
  return evaluate_term(batch, [](LossBuilder& lb) { return lb.ca_hn(); });
}

double loss_oac_hn(const BatchViews& batch) {
  return evaluate_term(batch, [](LossBuilder& lb) { return lb.half_sum(lb.oa_hn(), lb.ao()); });
}

double loss_acc_hn(const BatchViews& batch) {
  return evaluate_term(batch, [](LossBuilder& lb) { return lb.half_sum(lb.ac_hn(), lb.ca_hn()); });
}

double loss_ccc(const BatchViews& batch) {
  return evaluate_term(batch, [](LossBuilder& lb) { return lb.ccc(); });
}

Stage1Result stage1_objective(const BatchViews& batch, const AuxLoss& aux, ContrastiveVariant variant) {
  Tape tape;
  const ViewNodes v = place_views(tape, batch);
  const LossNodes nodes = record_stage1(tape, v, variant, aux);
  const Tape::Gradients g = tape.backward(nodes.total);
  Stage1Result out;
  out.report = read_report(tape, nodes);
  out.grad_objects = g.of(v.objects);
  out.grad_attributes = g.of(v.attributes);
  out.grad_categories = g.of(v.categories);
  out.grad_negative_attributes = g.of(v.negative_attributes);
  out.grad_negative_categories = g.of(v.negative_categories);
  return out;
}

NodeId record_cross_entropy(Tape& tape, NodeId logits, const std::vector<std::size_t>& labels) {
  // copy the shape: recording below may reallocate the tape's node storage
  const Matrix z = tape.value(logits);
  if (labels.size() != z.rows() || labels.empty()) {
    throw Error(ErrorCode::DimensionMismatch, "cross-entropy: one label per logit row required");
  }
  std::vector<Entry> flat;
  std::vector<std::size_t> offsets{0};
  std::vector<Entry> positives;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    if (labels[i] >= z.cols()) {
      throw Error(ErrorCode::UnknownCategory, "cross-entropy: label " + std::to_string(labels[i]) + " out of range");
    }
    for (std::size_t c = 0; c < z.cols(); ++c) flat.push_back({0, i, c});
    offsets.push_back(flat.size());
    positives.push_back({0, i, labels[i]});
  }
  const NodeId lse = tape.sum(tape.segment_log_sum_exp(tape.gather({logits}, std::move(flat)), std::move(offsets)));
  const NodeId pos = tape.sum(tape.gather({logits}, std::move(positives)));
  return tape.scale(tape.sub(lse, pos), 1.0 / static_cast<double>(z.rows()));
}

}  // namespace attralign

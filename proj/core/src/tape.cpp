#include "attralign/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace attralign {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw Error(ErrorCode::ShapeMismatch,
                std::string(op) + ": " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                    " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

void add_into(Matrix& dst, const Matrix& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

Tape::NodeId Tape::push(Node node) {
  for (NodeId p : node.parents) check_id(p);
  compute(node);
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

void Tape::check_id(NodeId id) const {
  if (id >= nodes_.size()) {
    throw Error(ErrorCode::InvalidArgument, "tape node " + std::to_string(id) + " does not exist");
  }
}

Tape::NodeId Tape::leaf(Matrix value) {
  require_finite(value.data(), "tape leaf");
  Node node;
  node.op = Op::Leaf;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

Tape::NodeId Tape::affine(NodeId x, NodeId weight, NodeId bias) {
  Node n;
  n.op = Op::Affine;
  n.parents = {x, weight, bias};
  return push(std::move(n));
}

Tape::NodeId Tape::gelu(NodeId x) {
  Node n;
  n.op = Op::Gelu;
  n.parents = {x};
  return push(std::move(n));
}

Tape::NodeId Tape::normalize_rows(NodeId x) {
  Node n;
  n.op = Op::NormalizeRows;
  n.parents = {x};
  return push(std::move(n));
}

Tape::NodeId Tape::cosine_matrix(NodeId x, NodeId y) {
  Node n;
  n.op = Op::CosineMatrix;
  n.parents = {x, y};
  return push(std::move(n));
}

Tape::NodeId Tape::gather(std::vector<NodeId> sources, std::vector<Entry> entries) {
  Node n;
  n.op = Op::Gather;
  n.parents = std::move(sources);
  n.entries = std::move(entries);
  return push(std::move(n));
}

Tape::NodeId Tape::segment_log_sum_exp(NodeId column, std::vector<std::size_t> offsets) {
  Node n;
  n.op = Op::SegmentLogSumExp;
  n.parents = {column};
  n.offsets = std::move(offsets);
  return push(std::move(n));
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
  Node n;
  n.op = Op::Add;
  n.parents = {a, b};
  return push(std::move(n));
}

Tape::NodeId Tape::sub(NodeId a, NodeId b) {
  Node n;
  n.op = Op::Sub;
  n.parents = {a, b};
  return push(std::move(n));
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
  Node n;
  n.op = Op::Mul;
  n.parents = {a, b};
  return push(std::move(n));
}

Tape::NodeId Tape::scale(NodeId a, double factor) {
  if (!std::isfinite(factor)) {
    throw Error(ErrorCode::NonFinite, "scale factor is not finite");
  }
  Node n;
  n.op = Op::Scale;
  n.parents = {a};
  n.factor = factor;
  return push(std::move(n));
}

Tape::NodeId Tape::sum(NodeId a) {
  Node n;
  n.op = Op::Sum;
  n.parents = {a};
  return push(std::move(n));
}

double Tape::scalar(NodeId id) const {
  const Matrix& v = value(id);
  if (v.rows() != 1 || v.cols() != 1) {
    throw Error(ErrorCode::NonScalarOutput, "node " + std::to_string(id) + " is not 1x1");
  }
  return v(0, 0);
}

void Tape::set_leaf(NodeId id, Matrix value) {
  check_id(id);
  Node& node = nodes_[id];
  if (node.op != Op::Leaf) {
    throw Error(ErrorCode::InvalidArgument, "set_leaf on a non-leaf node");
  }
  require_same_shape(node.value, value, "set_leaf");
  require_finite(value.data(), "tape leaf");
  node.value = std::move(value);
}

void Tape::replay() {
  for (Node& node : nodes_) {
    if (node.op != Op::Leaf) compute(node);
  }
}

void Tape::compute(Node& node) const {
  switch (node.op) {
    case Op::Leaf:
      return;

    case Op::Affine: {
      const Matrix& x = parent_value(node, 0);
      const Matrix& w = parent_value(node, 1);
      const Matrix& b = parent_value(node, 2);
      if (x.cols() != w.cols() || b.rows() != 1 || b.cols() != w.rows()) {
        throw Error(ErrorCode::ShapeMismatch,
                    "affine: input " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                        ", weight " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                        ", bias " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
      }
      Matrix out(x.rows(), w.rows());
      for (std::size_t r = 0; r < x.rows(); ++r) {
        auto xr = x.row(r);
        for (std::size_t o = 0; o < w.rows(); ++o) {
          out(r, o) = dot(xr, w.row(o)) + b(0, o);
        }
      }
      node.value = std::move(out);
      return;
    }

    case Op::Gelu: {
      const Matrix& x = parent_value(node, 0);
      Matrix out(x.rows(), x.cols());
      Matrix deriv(x.rows(), x.cols());
      auto xs = x.data();
      auto os = out.data();
      auto ds = deriv.data();
      for (std::size_t i = 0; i < xs.size(); ++i) {
        const double cdf = normal_cdf(xs[i]);
        os[i] = xs[i] * cdf;
        ds[i] = cdf + xs[i] * normal_pdf(xs[i]);
      }
      node.value = std::move(out);
      node.partials = std::move(deriv);
      return;
    }

    case Op::NormalizeRows: {
      const Matrix& x = parent_value(node, 0);
      Matrix out(x.rows(), x.cols());
      Matrix norms(x.rows(), 1);
      for (std::size_t r = 0; r < x.rows(); ++r) {
        const double n = l2_norm(x.row(r));
        if (n < kDegenerateNorm) {
          throw Error(ErrorCode::DegenerateVector,
                      "normalize_rows: row " + std::to_string(r) + " has zero norm");
        }
        norms(r, 0) = n;
        auto src = x.row(r);
        auto dst = out.row(r);
        for (std::size_t c = 0; c < x.cols(); ++c) dst[c] = src[c] / n;
      }
      node.value = std::move(out);
      node.partials = std::move(norms);
      return;
    }

    case Op::CosineMatrix: {
      const Matrix& x = parent_value(node, 0);
      const Matrix& y = parent_value(node, 1);
      if (x.cols() != y.cols()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "cosine_matrix: " + std::to_string(x.cols()) + " vs " + std::to_string(y.cols()));
      }
      Matrix norms(x.rows() + y.rows(), 1);
      for (std::size_t r = 0; r < x.rows(); ++r) norms(r, 0) = l2_norm(x.row(r));
      for (std::size_t r = 0; r < y.rows(); ++r) norms(x.rows() + r, 0) = l2_norm(y.row(r));
      for (double n : norms.data()) {
        if (n < kDegenerateNorm) {
          throw Error(ErrorCode::DegenerateVector, "cosine_matrix: zero-norm row");
        }
      }
      Matrix out(x.rows(), y.rows());
      for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < y.rows(); ++j) {
          const double c = dot(x.row(i), y.row(j)) / (norms(i, 0) * norms(x.rows() + j, 0));
          out(i, j) = std::clamp(c, -1.0, 1.0);
        }
      }
      node.value = std::move(out);
      node.partials = std::move(norms);
      return;
    }

    case Op::Gather: {
      Matrix out(node.entries.size(), 1);
      for (std::size_t k = 0; k < node.entries.size(); ++k) {
        const Entry& e = node.entries[k];
        if (e.source >= node.parents.size()) {
          throw Error(ErrorCode::InvalidArgument, "gather: source index out of range");
        }
        const Matrix& src = parent_value(node, e.source);
        if (e.row >= src.rows() || e.col >= src.cols()) {
          throw Error(ErrorCode::InvalidArgument,
                      "gather: entry (" + std::to_string(e.row) + "," + std::to_string(e.col) +
                          ") outside source");
        }
        out(k, 0) = src(e.row, e.col);
      }
      node.value = std::move(out);
      return;
    }

    case Op::SegmentLogSumExp: {
      const Matrix& v = parent_value(node, 0);
      const auto& off = node.offsets;
      if (v.cols() != 1 || off.size() < 2 || off.front() != 0 || off.back() != v.rows()) {
        throw Error(ErrorCode::ShapeMismatch, "segment_log_sum_exp: offsets do not cover the column");
      }
      const std::size_t segments = off.size() - 1;
      Matrix out(segments, 1);
      Matrix weights(v.rows(), 1);
      for (std::size_t s = 0; s < segments; ++s) {
        if (off[s + 1] <= off[s]) {
          throw Error(ErrorCode::EmptyInput,
                      "segment_log_sum_exp: segment " + std::to_string(s) + " is empty");
        }
        const std::span<const double> seg = v.data().subspan(off[s], off[s + 1] - off[s]);
        const double lse = log_sum_exp(seg);
        out(s, 0) = lse;
        for (std::size_t k = off[s]; k < off[s + 1]; ++k) weights(k, 0) = std::exp(v(k, 0) - lse);
      }
      node.value = std::move(out);
      node.partials = std::move(weights);
      return;
    }

    case Op::Add:
    case Op::Sub:
    case Op::Mul: {
      const Matrix& a = parent_value(node, 0);
      const Matrix& b = parent_value(node, 1);
      require_same_shape(a, b, "elementwise op");
      Matrix out(a.rows(), a.cols());
      auto as = a.data();
      auto bs = b.data();
      auto os = out.data();
      for (std::size_t i = 0; i < os.size(); ++i) {
        os[i] = node.op == Op::Add ? as[i] + bs[i] : node.op == Op::Sub ? as[i] - bs[i] : as[i] * bs[i];
      }
      node.value = std::move(out);
      return;
    }

    case Op::Scale: {
      const Matrix& a = parent_value(node, 0);
      Matrix out(a.rows(), a.cols());
      auto as = a.data();
      auto os = out.data();
      for (std::size_t i = 0; i < os.size(); ++i) os[i] = as[i] * node.factor;
      node.value = std::move(out);
      return;
    }

    case Op::Sum: {
      const Matrix& a = parent_value(node, 0);
      double acc = 0.0;
      for (double x : a.data()) acc += x;
      node.value = Matrix(1, 1, acc);
      return;
    }
  }
}

Tape::Gradients Tape::backward(NodeId output) const {
  check_id(output);
  const Matrix& out = nodes_[output].value;
  if (out.rows() != 1 || out.cols() != 1) {
    throw Error(ErrorCode::NonScalarOutput,
                "backward: output is " + std::to_string(out.rows()) + "x" + std::to_string(out.cols()));
  }

  Gradients grads;
  grads.adjoints_.reserve(nodes_.size());
  for (const Node& n : nodes_) grads.adjoints_.emplace_back(n.value.rows(), n.value.cols());
  std::vector<bool> touched(nodes_.size(), false);
  auto& adj = grads.adjoints_;
  adj[output](0, 0) = 1.0;
  touched[output] = true;

  for (std::size_t idx = output + 1; idx-- > 0;) {
    if (!touched[idx]) continue;
    const Node& node = nodes_[idx];
    const Matrix& g = adj[idx];
    for (NodeId p : node.parents) touched[p] = true;

    switch (node.op) {
      case Op::Leaf:
        break;

      case Op::Affine: {
        const Matrix& x = parent_value(node, 0);
        const Matrix& w = parent_value(node, 1);
        Matrix& gx = adj[node.parents[0]];
        Matrix& gw = adj[node.parents[1]];
        Matrix& gb = adj[node.parents[2]];
        for (std::size_t r = 0; r < x.rows(); ++r) {
          auto xr = x.row(r);
          auto gxr = gx.row(r);
          for (std::size_t o = 0; o < w.rows(); ++o) {
            const double go = g(r, o);
            if (go == 0.0) continue;
            auto wo = w.row(o);
            auto gwo = gw.row(o);
            for (std::size_t i = 0; i < x.cols(); ++i) {
              gxr[i] += go * wo[i];
              gwo[i] += go * xr[i];
            }
            gb(0, o) += go;
          }
        }
        break;
      }

      case Op::Gelu: {
        Matrix& gx = adj[node.parents[0]];
        auto gs = g.data();
        auto ds = node.partials.data();
        auto out = gx.data();
        for (std::size_t i = 0; i < gs.size(); ++i) out[i] += gs[i] * ds[i];
        break;
      }

      case Op::NormalizeRows: {
        Matrix& gx = adj[node.parents[0]];
        const Matrix& y = node.value;
        for (std::size_t r = 0; r < y.rows(); ++r) {
          const double n = node.partials(r, 0);
          const double proj = dot(y.row(r), g.row(r));
          auto gxr = gx.row(r);
          auto yr = y.row(r);
          auto gr = g.row(r);
          for (std::size_t c = 0; c < y.cols(); ++c) gxr[c] += (gr[c] - yr[c] * proj) / n;
        }
        break;
      }

      case Op::CosineMatrix: {
        const Matrix& x = parent_value(node, 0);
        const Matrix& y = parent_value(node, 1);
        Matrix& gx = adj[node.parents[0]];
        Matrix& gy = adj[node.parents[1]];
        const Matrix& cos = node.value;
        const std::size_t d = x.cols();
        for (std::size_t i = 0; i < x.rows(); ++i) {
          const double nx = node.partials(i, 0);
          auto xi = x.row(i);
          for (std::size_t j = 0; j < y.rows(); ++j) {
            const double gij = g(i, j);
            if (gij == 0.0) continue;
            const double ny = node.partials(x.rows() + j, 0);
            const double cij = cos(i, j);
            auto yj = y.row(j);
            auto gxi = gx.row(i);
            auto gyj = gy.row(j);
            for (std::size_t c = 0; c < d; ++c) {
              const double xhat = xi[c] / nx;
              const double yhat = yj[c] / ny;
              gxi[c] += gij * (yhat - cij * xhat) / nx;
              gyj[c] += gij * (xhat - cij * yhat) / ny;
            }
          }
        }
        break;
      }

      case Op::Gather: {
        for (std::size_t k = 0; k < node.entries.size(); ++k) {
          const Entry& e = node.entries[k];
          adj[node.parents[e.source]](e.row, e.col) += g(k, 0);
        }
        break;
      }

      case Op::SegmentLogSumExp: {
        Matrix& gv = adj[node.parents[0]];
        const auto& off = node.offsets;
        for (std::size_t s = 0; s + 1 < off.size(); ++s) {
          for (std::size_t k = off[s]; k < off[s + 1]; ++k) {
            gv(k, 0) += g(s, 0) * node.partials(k, 0);
          }
        }
        break;
      }

      case Op::Add:
        add_into(adj[node.parents[0]], g);
        add_into(adj[node.parents[1]], g);
        break;

      case Op::Sub: {
        add_into(adj[node.parents[0]], g);
        auto gb = adj[node.parents[1]].data();
        auto gs = g.data();
        for (std::size_t i = 0; i < gs.size(); ++i) gb[i] -= gs[i];
        break;
      }

      case Op::Mul: {
        const Matrix& a = parent_value(node, 0);
        const Matrix& b = parent_value(node, 1);
        auto gs = g.data();
        {
          auto ga = adj[node.parents[0]].data();
          auto bs = b.data();
          for (std::size_t i = 0; i < gs.size(); ++i) ga[i] += gs[i] * bs[i];
        }
        {
          auto gb = adj[node.parents[1]].data();
          auto as = a.data();
          for (std::size_t i = 0; i < gs.size(); ++i) gb[i] += gs[i] * as[i];
        }
        break;
      }

      case Op::Scale: {
        auto ga = adj[node.parents[0]].data();
        auto gs = g.data();
        for (std::size_t i = 0; i < gs.size(); ++i) ga[i] += gs[i] * node.factor;
        break;
      }

      case Op::Sum: {
        const double go = g(0, 0);
        for (double& x : adj[node.parents[0]].data()) x += go;
        break;
      }
    }
  }
  return grads;
}

}  // namespace attralign

#pragma once

#include <cstddef>
#include <vector>

#include "attralign/numerics.hpp"

namespace attralign {

/// Append-only reverse-mode tape over matrix-valued nodes. Scalars are 1x1
/// matrices. Parents always precede their children, so the node list is a
/// topological order and `replay()` recomputes every value in place.
///
/// One tape per training step; a tape is not safe for concurrent writers.
class Tape {
 public:
  using NodeId = std::size_t;

  /// Reference to a single entry of some source node, used by gather().
  struct Entry {
    std::size_t source;  // index into the sources list passed to gather()
    std::size_t row;
    std::size_t col;
  };

  enum class Op {
    Leaf,
    Affine,          // x W^T + b
    Gelu,            // x * Phi(x)
    NormalizeRows,   // row-wise x / |x|
    CosineMatrix,    // C_ij = cos(x_i, y_j)
    Gather,          // k x 1 column of selected entries
    SegmentLogSumExp,
    Add,
    Sub,
    Mul,             // elementwise
    Scale,
    Sum,
  };

  NodeId leaf(Matrix value);

  NodeId affine(NodeId x, NodeId weight, NodeId bias);
  NodeId gelu(NodeId x);
  NodeId normalize_rows(NodeId x);
  NodeId cosine_matrix(NodeId x, NodeId y);
  NodeId gather(std::vector<NodeId> sources, std::vector<Entry> entries);
  /// `offsets` has one more element than there are segments; segment s covers
  /// rows [offsets[s], offsets[s+1]) of the k x 1 input. Segments must be non-empty.
  NodeId segment_log_sum_exp(NodeId column, std::vector<std::size_t> offsets);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double factor);
  NodeId sum(NodeId a);

  const Matrix& value(NodeId id) const { return nodes_.at(id).value; }
  double scalar(NodeId id) const;
  Op op(NodeId id) const { return nodes_.at(id).op; }
  const std::vector<NodeId>& parents(NodeId id) const { return nodes_.at(id).parents; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Overwrites a leaf value (same shape). Call replay() afterwards.
  void set_leaf(NodeId id, Matrix value);
  /// Recomputes all non-leaf nodes from the current leaf values.
  void replay();

  class Gradients {
   public:
    const Matrix& of(NodeId id) const { return adjoints_.at(id); }

   private:
    friend class Tape;
    std::vector<Matrix> adjoints_;
  };

  /// Gradient of a 1x1 output with respect to every node. Leaves that do not
  /// reach the output get exact zeros.
  Gradients backward(NodeId output) const;

 private:
  struct Node {
    Op op = Op::Leaf;
    std::vector<NodeId> parents;
    Matrix value;
    Matrix partials;  // op-specific local derivative cache
    double factor = 0.0;
    std::vector<Entry> entries;
    std::vector<std::size_t> offsets;
  };

  NodeId push(Node node);
  void compute(Node& node) const;
  const Matrix& parent_value(const Node& node, std::size_t i) const {
    return nodes_[node.parents[i]].value;
  }
  void check_id(NodeId id) const;

  std::vector<Node> nodes_;
};

}  // namespace attralign

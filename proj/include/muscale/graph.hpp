#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "muscale/tensor.hpp"

namespace muscale {

using NodeId = std::int32_t;

enum class OpKind {
  input,
  param,
  matmul,     // [*, m, k] x [k, n]  or  [*, m, k] x [*, k, n]
  matmul_nt,  // [*, m, k] x [*, n, k]^T
  add,
  bias_add,   // [*, n] + [n]
  mul,
  scale,
  gelu,
  silu,
  layer_norm,  // last dim, affine
  rms_norm,    // last dim, gain only
  softmax,     // last dim
  causal_softmax,
  embedding,
  cross_entropy,
  reshape,
  transpose_12,  // swap dims 1 and 2 of a 4-d tensor
  rope,          // rotary positions on [B, H, T, d]
  sum,
};

const char* op_name(OpKind k);

/// Epsilon used inside layer-norm and RMS-norm denominators.
inline constexpr double kNormEpsilon = 1e-5;

/// Eagerly-executed autodiff tape. Nodes are created in topological order;
/// backward() walks them once in reverse. A Graph is single-threaded and owns
/// every tensor it produces; parameters are copied in and gradients copied out.
///
/// Every op validates input shapes (ShapeError names the node) and scans its
/// output for non-finite values (DivergenceSignal carries the node id).
class Graph {
 public:
  struct Node {
    Node() = default;
    Node(OpKind k, std::vector<NodeId> in, Tensor v)
        : kind(k), inputs(std::move(in)), value(std::move(v)) {}
    OpKind kind = OpKind::input;
    std::vector<NodeId> inputs;
    Tensor value;
    Tensor grad;              // allocated on demand during backward
    bool grad_alloc = false;
    // op attributes
    double alpha = 0.0;                // scale factor / rope base
    std::vector<std::int32_t> index;   // token ids / targets
    std::int64_t extent = 0;           // class count for cross_entropy, etc.
  };

  NodeId input(Tensor t);
  NodeId param(Tensor t);

  NodeId matmul(NodeId a, NodeId b);
  NodeId matmul_nt(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId bias_add(NodeId x, NodeId bias);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double k);
  NodeId gelu(NodeId a);
  NodeId silu(NodeId a);
  NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta);
  NodeId rms_norm(NodeId x, NodeId gamma);
  NodeId softmax(NodeId a);
  NodeId causal_softmax(NodeId a);
  /// table [V, w), ids laid out as ids_shape (row-major); output ids_shape + [w].
  NodeId embedding(NodeId table, const std::vector<std::int32_t>& ids, Shape ids_shape);
  /// Mean cross-entropy over rows whose target != ignore_index. Scalar output.
  NodeId cross_entropy(NodeId logits, const std::vector<std::int32_t>& targets,
                       std::int32_t ignore_index = -1);
  NodeId reshape(NodeId a, Shape s);
  NodeId transpose_12(NodeId a);
  NodeId rope(NodeId a, double base = 10000.0);
  NodeId sum(NodeId a);

  const Tensor& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  /// Gradient of the backward()-seeded scalar w.r.t. node id. UsageError before backward.
  const Tensor& grad(NodeId id) const;

  /// Reverse pass from a scalar node. Gradients accumulate with + across fan-out;
  /// leaves with no path to the loss keep zero gradient.
  void backward(NodeId loss);

  bool backward_done() const { return backward_done_; }
  std::size_t size() const { return nodes_.size(); }
  const Node& node(NodeId id) const { return nodes_[static_cast<std::size_t>(id)]; }

 private:
  NodeId push(Node n);
  Tensor& grad_slot(NodeId id);
  void check_finite(NodeId id);
  void backward_node(NodeId id);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

/// Builds the scalar-valued subgraph under test; receives param node ids in the
/// order of `point`.
using GradCheckFn = std::function<NodeId(Graph&, const std::vector<NodeId>&)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  /// (param index, flat coordinate) pairs where a perturbed evaluation was non-finite.
  std::vector<std::pair<std::size_t, std::int64_t>> non_finite_coords;
};

/// Central-difference check of the analytic gradient at `point`.
/// Relative error per coordinate: |analytic - cd| / max(|analytic|, |cd|, 1e-12).
GradCheckReport grad_check(const GradCheckFn& build, const std::vector<Tensor>& point,
                           double eps);

}  // namespace muscale

#include "muscale/graph.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstring>

namespace muscale {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<RowMat>;
using CMap = Eigen::Map<const RowMat>;

constexpr double kPi = 3.14159265358979323846;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

std::int64_t last_dim(const Tensor& t) { return t.shape.back(); }

std::int64_t rows_of(const Tensor& t) {
  return t.numel() == 0 ? 0 : t.numel() / t.shape.back();
}


}  // namespace

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::input: return "input";
    case OpKind::param: return "param";
    case OpKind::matmul: return "matmul";
    case OpKind::matmul_nt: return "matmul_nt";
    case OpKind::add: return "add";
    case OpKind::bias_add: return "bias_add";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::gelu: return "gelu";
    case OpKind::silu: return "silu";
    case OpKind::layer_norm: return "layer_norm";
    case OpKind::rms_norm: return "rms_norm";
    case OpKind::softmax: return "softmax";
    case OpKind::causal_softmax: return "causal_softmax";
    case OpKind::embedding: return "embedding";
    case OpKind::cross_entropy: return "cross_entropy";
    case OpKind::reshape: return "reshape";
    case OpKind::transpose_12: return "transpose_12";
    case OpKind::rope: return "rope";
    case OpKind::sum: return "sum";
  }
  return "?";
}

NodeId Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  NodeId id = static_cast<NodeId>(nodes_.size() - 1);
  check_finite(id);
  return id;
}

void Graph::check_finite(NodeId id) {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.kind == OpKind::input || n.kind == OpKind::param) return;
  for (double v : n.value.data) {
    if (!std::isfinite(v)) throw DivergenceSignal(id, op_name(n.kind));
  }
}

NodeId Graph::input(Tensor t) { return push({OpKind::input, {}, std::move(t)}); }

NodeId Graph::param(Tensor t) {
  t.requires_grad = true;
  return push({OpKind::param, {}, std::move(t)});
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  NodeId id = static_cast<NodeId>(nodes_.size());
  if (A.ndim() < 2 || B.ndim() < 2)
    throw ShapeError("matmul needs >=2-d operands, got " + shape_str(A.shape) + " x " +
                         shape_str(B.shape),
                     id);
  const std::int64_t k = A.shape.back();
  const std::int64_t m = A.shape[A.ndim() - 2];
  Tensor out;
  if (B.ndim() == 2) {
    if (B.shape[0] != k)
      throw ShapeError("matmul inner extents differ: " + shape_str(A.shape) + " x " +
                           shape_str(B.shape),
                       id);
    const std::int64_t n = B.shape[1];
    Shape os = A.shape;
    os.back() = n;
    out = Tensor::zeros(os);
    CMap ma(A.data.data(), rows_of(A), k);
    CMap mb(B.data.data(), k, n);
    Map mo(out.data.data(), rows_of(A), n);
    mo.noalias() = ma * mb;
  } else {
    if (A.ndim() != B.ndim() ||
        !std::equal(A.shape.begin(), A.shape.end() - 2, B.shape.begin()) ||
        B.shape[B.ndim() - 2] != k)
      throw ShapeError("batched matmul shapes incompatible: " + shape_str(A.shape) + " x " +
                           shape_str(B.shape),
                       id);
    const std::int64_t n = B.shape.back();
    const std::int64_t batch = A.numel() / (m * k);
    Shape os = A.shape;
    os.back() = n;
    out = Tensor::zeros(os);
    for (std::int64_t s = 0; s < batch; ++s) {
      CMap ma(A.data.data() + s * m * k, m, k);
      CMap mb(B.data.data() + s * k * n, k, n);
      Map mo(out.data.data() + s * m * n, m, n);
      mo.noalias() = ma * mb;
    }
  }
  return push({OpKind::matmul, {a, b}, std::move(out)});
}

NodeId Graph::matmul_nt(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  NodeId id = static_cast<NodeId>(nodes_.size());
  if (A.ndim() < 2 || B.ndim() < 2 || A.ndim() != B.ndim() ||
      A.shape.back() != B.shape.back() ||
      !std::equal(A.shape.begin(), A.shape.end() - 2, B.shape.begin()))
    throw ShapeError("matmul_nt shapes incompatible: " + shape_str(A.shape) + " x " +
                         shape_str(B.shape) + "^T",
                     id);
  const std::int64_t k = A.shape.back();
  const std::int64_t m = A.shape[A.ndim() - 2];
  const std::int64_t n = B.shape[B.ndim() - 2];
  const std::int64_t batch = A.numel() / (m * k);
  Shape os = A.shape;
  os.back() = n;
  Tensor out = Tensor::zeros(os);
  for (std::int64_t s = 0; s < batch; ++s) {
    CMap ma(A.data.data() + s * m * k, m, k);
    CMap mb(B.data.data() + s * n * k, n, k);
    Map mo(out.data.data() + s * m * n, m, n);
    mo.noalias() = ma * mb.transpose();
  }
  return push({OpKind::matmul_nt, {a, b}, std::move(out)});
}

NodeId Graph::add(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  NodeId id = static_cast<NodeId>(nodes_.size());
  if (A.shape != B.shape)
    throw ShapeError("add shapes differ: " + shape_str(A.shape) + " vs " + shape_str(B.shape),
                     id);
  Tensor out = A;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += B.data[i];
  return push({OpKind::add, {a, b}, std::move(out)});
}

NodeId Graph::bias_add(NodeId x, NodeId bias) {
  const Tensor& X = value(x);
  const Tensor& B = value(bias);
  NodeId id = static_cast<NodeId>(nodes_.size());
  if (B.ndim() != 1 || B.shape[0] != last_dim(X))
    throw ShapeError("bias_add wants bias [n] matching last dim of " + shape_str(X.shape) +
                         ", got " + shape_str(B.shape),
                     id);
  Tensor out = X;
  const std::int64_t n = last_dim(X);
  for (std::int64_t r = 0; r < rows_of(X); ++r)
    for (std::int64_t j = 0; j < n; ++j) out.data[static_cast<std::size_t>(r * n + j)] += B.data[static_cast<std::size_t>(j)];
  return push({OpKind::bias_add, {x, bias}, std::move(out)});
}

NodeId Graph::mul(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  NodeId id = static_cast<NodeId>(nodes_.size());
  if (A.shape != B.shape)
    throw ShapeError("mul shapes differ: " + shape_str(A.shape) + " vs " + shape_str(B.shape),
                     id);
  Tensor out = A;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= B.data[i];
  return push({OpKind::mul, {a, b}, std::move(out)});
}

NodeId Graph::scale(NodeId a, double k) {
  Tensor out = value(a);
  for (auto& v : out.data) v *= k;
  Node n{OpKind::scale, {a}, std::move(out)};
  n.alpha = k;
  return push(std::move(n));
}

NodeId Graph::gelu(NodeId a) {
  Tensor out = value(a);
  for (auto& v : out.data) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  return push({OpKind::gelu, {a}, std::move(out)});
}

NodeId Graph::silu(NodeId a) {
  Tensor out = value(a);
  for (auto& v : out.data) v = v / (1.0 + std::exp(-v));
  return push({OpKind::silu, {a}, std::move(out)});
}

NodeId Graph::layer_norm(NodeId x, NodeId gamma, NodeId beta) {
  const Tensor& X = value(x);
  const Tensor& G = value(gamma);
  const Tensor& Bt = value(beta);
  NodeId id = static_cast<NodeId>(nodes_.size());
  const std::int64_t n = last_dim(X);
  if (G.ndim() != 1 || G.shape[0] != n || Bt.ndim() != 1 || Bt.shape[0] != n)
    throw ShapeError("layer_norm affine params must be [n] for input " + shape_str(X.shape), id);
  Tensor out = Tensor::zeros(X.shape);
  for (std::int64_t r = 0; r < rows_of(X); ++r) {
    const double* xr = X.data.data() + r * n;
    double* yr = out.data.data() + r * n;
    double mean = 0.0;
    for (std::int64_t j = 0; j < n; ++j) mean += xr[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::int64_t j = 0; j < n; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + kNormEpsilon);
    for (std::int64_t j = 0; j < n; ++j)
      yr[j] = (xr[j] - mean) * inv * G.data[static_cast<std::size_t>(j)] + Bt.data[static_cast<std::size_t>(j)];
  }
  return push({OpKind::layer_norm, {x, gamma, beta}, std::move(out)});
}

NodeId Graph::rms_norm(NodeId x, NodeId gamma) {
  const Tensor& X = value(x);
  const Tensor& G = value(gamma);
  NodeId id = static_cast<NodeId>(nodes_.size());
  const std::int64_t n = last_dim(X);
  if (G.ndim() != 1 || G.shape[0] != n)
    throw ShapeError("rms_norm gain must be [n] for input " + shape_str(X.shape), id);
  Tensor out = Tensor::zeros(X.shape);
  for (std::int64_t r = 0; r < rows_of(X); ++r) {
    const double* xr = X.data.data() + r * n;
    double* yr = out.data.data() + r * n;
    double ms = 0.0;
    for (std::int64_t j = 0; j < n; ++j) ms += xr[j] * xr[j];
    ms /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(ms + kNormEpsilon);
    for (std::int64_t j = 0; j < n; ++j) yr[j] = xr[j] * inv * G.data[static_cast<std::size_t>(j)];
  }
  return push({OpKind::rms_norm, {x, gamma}, std::move(out)});
}

namespace {

void softmax_rows(const Tensor& X, Tensor& out, bool causal) {
  const std::int64_t n = X.shape.back();
  const std::int64_t rows = X.numel() / n;
  // For causal mode rows cycle through query positions of the [.., T, T] block.
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xr = X.data.data() + r * n;
    double* yr = out.data.data() + r * n;
    const std::int64_t valid = causal ? (r % n) + 1 : n;
    double mx = xr[0];
    for (std::int64_t j = 1; j < valid; ++j) mx = std::max(mx, xr[j]);
    double sum = 0.0;
    for (std::int64_t j = 0; j < valid; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    const double inv = 1.0 / sum;
    for (std::int64_t j = 0; j < valid; ++j) yr[j] *= inv;
    for (std::int64_t j = valid; j < n; ++j) yr[j] = 0.0;
  }
}

}  // namespace

NodeId Graph::softmax(NodeId a) {
  const Tensor& X = value(a);
  Tensor out = Tensor::zeros(X.shape);
  softmax_rows(X, out, false);
  return push({OpKind::softmax, {a}, std::move(out)});
}

NodeId Graph::causal_softmax(NodeId a) {
  const Tensor& X = value(a);
  NodeId id = static_cast<NodeId>(nodes_.size());
  if (X.ndim() < 2 || X.shape.back() != X.shape[X.ndim() - 2])
    throw ShapeError("causal_softmax wants square trailing dims, got " + shape_str(X.shape), id);
  Tensor out = Tensor::zeros(X.shape);
  softmax_rows(X, out, true);
  return push({OpKind::causal_softmax, {a}, std::move(out)});
}

NodeId Graph::embedding(NodeId table, const std::vector<std::int32_t>& ids, Shape ids_shape) {
  const Tensor& T = value(table);
  NodeId id = static_cast<NodeId>(nodes_.size());
  if (T.ndim() != 2) throw ShapeError("embedding table must be 2-d", id);
  if (shape_numel(ids_shape) != static_cast<std::int64_t>(ids.size()))
    throw ShapeError("embedding ids/shape mismatch", id);
  const std::int64_t V = T.shape[0], w = T.shape[1];
  for (auto t : ids)
    if (t < 0 || t >= V)
      throw ShapeError("embedding id " + std::to_string(t) + " out of range [0," +
                           std::to_string(V) + ")",
                       id);
  Shape os = ids_shape;
  os.push_back(w);
  Tensor out = Tensor::zeros(os);
  for (std::size_t r = 0; r < ids.size(); ++r)
    std::memcpy(out.data.data() + static_cast<std::int64_t>(r) * w,
                T.data.data() + static_cast<std::int64_t>(ids[r]) * w,
                static_cast<std::size_t>(w) * sizeof(double));
  Node n{OpKind::embedding, {table}, std::move(out)};
  n.index = ids;
  return push(std::move(n));
}

NodeId Graph::cross_entropy(NodeId logits, const std::vector<std::int32_t>& targets,
                            std::int32_t ignore_index) {
  const Tensor& X = value(logits);
  NodeId id = static_cast<NodeId>(nodes_.size());
  const std::int64_t V = last_dim(X);
  const std::int64_t rows = rows_of(X);
  if (static_cast<std::int64_t>(targets.size()) != rows)
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(rows) + " logit rows",
                     id);
  std::int64_t valid = 0;
  double total = 0.0;
  for (std::int64_t r = 0; r < rows; ++r) {
    const std::int32_t t = targets[static_cast<std::size_t>(r)];
    if (t == ignore_index) continue;
    if (t < 0 || t >= V)
      throw ShapeError("cross_entropy target " + std::to_string(t) + " out of range", id);
    const double* xr = X.data.data() + r * V;
    double mx = xr[0];
    for (std::int64_t j = 1; j < V; ++j) mx = std::max(mx, xr[j]);
    double sum = 0.0;
    for (std::int64_t j = 0; j < V; ++j) sum += std::exp(xr[j] - mx);
    total += mx + std::log(sum) - xr[t];
    ++valid;
  }
  if (valid == 0) throw UsageError("cross_entropy: every target is ignore_index");
  Node n{OpKind::cross_entropy, {logits}, Tensor::scalar(total / static_cast<double>(valid))};
  n.index = targets;
  n.extent = ignore_index;
  return push(std::move(n));
}

NodeId Graph::reshape(NodeId a, Shape s) {
  const Tensor& A = value(a);
  NodeId id = static_cast<NodeId>(nodes_.size());
  if (shape_numel(s) != A.numel())
    throw ShapeError("reshape " + shape_str(A.shape) + " -> " + shape_str(s) +
                         " changes element count",
                     id);
  Tensor out(std::move(s), A.data);
  return push({OpKind::reshape, {a}, std::move(out)});
}

namespace {

void swap_dims_12(const Tensor& in, Tensor& out) {
  const std::int64_t b = in.shape[0], x = in.shape[1], y = in.shape[2], d = in.shape[3];
  for (std::int64_t i0 = 0; i0 < b; ++i0)
    for (std::int64_t i1 = 0; i1 < x; ++i1)
      for (std::int64_t i2 = 0; i2 < y; ++i2)
        std::memcpy(out.data.data() + ((i0 * y + i2) * x + i1) * d,
                    in.data.data() + ((i0 * x + i1) * y + i2) * d,
                    static_cast<std::size_t>(d) * sizeof(double));
}

}  // namespace

NodeId Graph::transpose_12(NodeId a) {
  const Tensor& A = value(a);
  NodeId id = static_cast<NodeId>(nodes_.size());
  if (A.ndim() != 4) throw ShapeError("transpose_12 wants a 4-d tensor", id);
  Tensor out = Tensor::zeros({A.shape[0], A.shape[2], A.shape[1], A.shape[3]});
  swap_dims_12(A, out);
  return push({OpKind::transpose_12, {a}, std::move(out)});
}

namespace {

// x [B, H, T, d]: rotate adjacent pairs by theta = pos * base^(-2i/d).
// sign = -1 rotates backward (used for the gradient).
void rope_apply(const Tensor& in, Tensor& out, double base, double sign) {
  const std::int64_t B = in.shape[0], H = in.shape[1], T = in.shape[2], d = in.shape[3];
  for (std::int64_t bh = 0; bh < B * H; ++bh) {
    for (std::int64_t t = 0; t < T; ++t) {
      const double* xr = in.data.data() + (bh * T + t) * d;
      double* yr = out.data.data() + (bh * T + t) * d;
      for (std::int64_t i = 0; i < d / 2; ++i) {
        const double theta =
            sign * static_cast<double>(t) *
            std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(d));
        const double c = std::cos(theta), s = std::sin(theta);
        const double x0 = xr[2 * i], x1 = xr[2 * i + 1];
        yr[2 * i] = x0 * c - x1 * s;
        yr[2 * i + 1] = x0 * s + x1 * c;
      }
    }
  }
}

}  // namespace

NodeId Graph::rope(NodeId a, double base) {
  const Tensor& A = value(a);
  NodeId id = static_cast<NodeId>(nodes_.size());
  if (A.ndim() != 4 || A.shape[3] % 2 != 0)
    throw ShapeError("rope wants [B, H, T, d] with even d, got " + shape_str(A.shape), id);
  Tensor out = Tensor::zeros(A.shape);
  rope_apply(A, out, base, 1.0);
  Node n{OpKind::rope, {a}, std::move(out)};
  n.alpha = base;
  return push(std::move(n));
}

NodeId Graph::sum(NodeId a) {
  const Tensor& A = value(a);
  double s = 0.0;
  for (double v : A.data) s += v;
  return push({OpKind::sum, {a}, Tensor::scalar(s)});
}

const Tensor& Graph::grad(NodeId id) const {
  if (!backward_done_) throw UsageError("grad() before backward()");
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.grad_alloc) throw UsageError("grad() on a node backward never reached");
  return n.grad;
}

Tensor& Graph::grad_slot(NodeId id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.grad_alloc) {
    n.grad = Tensor::zeros(n.value.shape);
    n.grad_alloc = true;
  }
  return n.grad;
}

void Graph::backward(NodeId loss) {
  if (backward_done_) throw UsageError("backward() already run on this graph");
  const Node& ln = nodes_[static_cast<std::size_t>(loss)];
  if (ln.value.numel() != 1)
    throw UsageError("backward() needs a scalar loss, got " + shape_str(ln.value.shape));
  grad_slot(loss).data[0] = 1.0;
  for (NodeId id = loss; id >= 0; --id) {
    if (nodes_[static_cast<std::size_t>(id)].grad_alloc) backward_node(id);
  }
  // Leaves with no path to the loss report zero gradient.
  for (NodeId id = 0; id < static_cast<NodeId>(nodes_.size()); ++id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.kind == OpKind::param && !n.grad_alloc) grad_slot(id);
  }
  backward_done_ = true;
}

void Graph::backward_node(NodeId id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  const Tensor& go = n.grad;
  switch (n.kind) {
    case OpKind::input:
    case OpKind::param:
      return;
    case OpKind::matmul: {
      const Tensor& A = value(n.inputs[0]);
      const Tensor& B = value(n.inputs[1]);
      Tensor& ga = grad_slot(n.inputs[0]);
      Tensor& gb = grad_slot(n.inputs[1]);
      const std::int64_t k = A.shape.back();
      const std::int64_t m = A.shape[A.ndim() - 2];
      if (B.ndim() == 2) {
        const std::int64_t n_ = B.shape[1];
        const std::int64_t br = rows_of(A);
        CMap ma(A.data.data(), br, k);
        CMap mb(B.data.data(), k, n_);
        CMap mg(go.data.data(), br, n_);
        Map mga(ga.data.data(), br, k);
        Map mgb(gb.data.data(), k, n_);
        mga.noalias() += mg * mb.transpose();
        mgb.noalias() += ma.transpose() * mg;
      } else {
        const std::int64_t n_ = B.shape.back();
        const std::int64_t batch = A.numel() / (m * k);
        for (std::int64_t s = 0; s < batch; ++s) {
          CMap ma(A.data.data() + s * m * k, m, k);
          CMap mb(B.data.data() + s * k * n_, k, n_);
          CMap mg(go.data.data() + s * m * n_, m, n_);
          Map mga(ga.data.data() + s * m * k, m, k);
          Map mgb(gb.data.data() + s * k * n_, k, n_);
          mga.noalias() += mg * mb.transpose();
          mgb.noalias() += ma.transpose() * mg;
        }
      }
      return;
    }
    case OpKind::matmul_nt: {
      const Tensor& A = value(n.inputs[0]);
      const Tensor& B = value(n.inputs[1]);
      Tensor& ga = grad_slot(n.inputs[0]);
      Tensor& gb = grad_slot(n.inputs[1]);
      const std::int64_t k = A.shape.back();
      const std::int64_t m = A.shape[A.ndim() - 2];
      const std::int64_t n_ = B.shape[B.ndim() - 2];
      const std::int64_t batch = A.numel() / (m * k);
      for (std::int64_t s = 0; s < batch; ++s) {
        CMap ma(A.data.data() + s * m * k, m, k);
        CMap mb(B.data.data() + s * n_ * k, n_, k);
        CMap mg(go.data.data() + s * m * n_, m, n_);
        Map mga(ga.data.data() + s * m * k, m, k);
        Map mgb(gb.data.data() + s * n_ * k, n_, k);
        mga.noalias() += mg * mb;
        mgb.noalias() += mg.transpose() * ma;
      }
      return;
    }
    case OpKind::add: {
      Tensor& ga = grad_slot(n.inputs[0]);
      Tensor& gb = grad_slot(n.inputs[1]);
      for (std::size_t i = 0; i < go.data.size(); ++i) {
        ga.data[i] += go.data[i];
        gb.data[i] += go.data[i];
      }
      return;
    }
    case OpKind::bias_add: {
      Tensor& gx = grad_slot(n.inputs[0]);
      Tensor& gb = grad_slot(n.inputs[1]);
      const std::int64_t nn = last_dim(n.value);
      for (std::size_t i = 0; i < go.data.size(); ++i) gx.data[i] += go.data[i];
      for (std::int64_t r = 0; r < rows_of(n.value); ++r)
        for (std::int64_t j = 0; j < nn; ++j)
          gb.data[static_cast<std::size_t>(j)] += go.data[static_cast<std::size_t>(r * nn + j)];
      return;
    }
    case OpKind::mul: {
      const Tensor& A = value(n.inputs[0]);
      const Tensor& B = value(n.inputs[1]);
      Tensor& ga = grad_slot(n.inputs[0]);
      Tensor& gb = grad_slot(n.inputs[1]);
      for (std::size_t i = 0; i < go.data.size(); ++i) {
        ga.data[i] += go.data[i] * B.data[i];
        gb.data[i] += go.data[i] * A.data[i];
      }
      return;
    }
    case OpKind::scale: {
      Tensor& ga = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i] * n.alpha;
      return;
    }
    case OpKind::gelu: {
      const Tensor& X = value(n.inputs[0]);
      Tensor& gx = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < go.data.size(); ++i) {
        const double x = X.data[i];
        const double d =
            0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
        gx.data[i] += go.data[i] * d;
      }
      return;
    }
    case OpKind::silu: {
      const Tensor& X = value(n.inputs[0]);
      Tensor& gx = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < go.data.size(); ++i) {
        const double x = X.data[i];
        const double s = 1.0 / (1.0 + std::exp(-x));
        gx.data[i] += go.data[i] * s * (1.0 + x * (1.0 - s));
      }
      return;
    }
    case OpKind::layer_norm: {
      const Tensor& X = value(n.inputs[0]);
      const Tensor& G = value(n.inputs[1]);
      Tensor& gx = grad_slot(n.inputs[0]);
      Tensor& gg = grad_slot(n.inputs[1]);
      Tensor& gb = grad_slot(n.inputs[2]);
      const std::int64_t nn = last_dim(X);
      const double invn = 1.0 / static_cast<double>(nn);
      for (std::int64_t r = 0; r < rows_of(X); ++r) {
        const double* xr = X.data.data() + r * nn;
        const double* gr = go.data.data() + r * nn;
        double* gxr = gx.data.data() + r * nn;
        double mean = 0.0;
        for (std::int64_t j = 0; j < nn; ++j) mean += xr[j];
        mean *= invn;
        double var = 0.0;
        for (std::int64_t j = 0; j < nn; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var *= invn;
        const double inv = 1.0 / std::sqrt(var + kNormEpsilon);
        double dot_g = 0.0, dot_gh = 0.0;
        for (std::int64_t j = 0; j < nn; ++j) {
          const double h = (xr[j] - mean) * inv;
          const double gj = gr[j] * G.data[static_cast<std::size_t>(j)];
          dot_g += gj;
          dot_gh += gj * h;
          gg.data[static_cast<std::size_t>(j)] += gr[j] * h;
          gb.data[static_cast<std::size_t>(j)] += gr[j];
        }
        dot_g *= invn;
        dot_gh *= invn;
        for (std::int64_t j = 0; j < nn; ++j) {
          const double h = (xr[j] - mean) * inv;
          const double gj = gr[j] * G.data[static_cast<std::size_t>(j)];
          gxr[j] += (gj - dot_g - h * dot_gh) * inv;
        }
      }
      return;
    }
    case OpKind::rms_norm: {
      const Tensor& X = value(n.inputs[0]);
      const Tensor& G = value(n.inputs[1]);
      Tensor& gx = grad_slot(n.inputs[0]);
      Tensor& gg = grad_slot(n.inputs[1]);
      const std::int64_t nn = last_dim(X);
      const double invn = 1.0 / static_cast<double>(nn);
      for (std::int64_t r = 0; r < rows_of(X); ++r) {
        const double* xr = X.data.data() + r * nn;
        const double* gr = go.data.data() + r * nn;
        double* gxr = gx.data.data() + r * nn;
        double ms = 0.0;
        for (std::int64_t j = 0; j < nn; ++j) ms += xr[j] * xr[j];
        ms *= invn;
        const double rinv = 1.0 / std::sqrt(ms + kNormEpsilon);
        double dot = 0.0;
        for (std::int64_t j = 0; j < nn; ++j) {
          const double gj = gr[j] * G.data[static_cast<std::size_t>(j)];
          dot += gj * xr[j];
          gg.data[static_cast<std::size_t>(j)] += gr[j] * xr[j] * rinv;
        }
        dot *= invn * rinv * rinv * rinv;
        for (std::int64_t j = 0; j < nn; ++j) {
          const double gj = gr[j] * G.data[static_cast<std::size_t>(j)];
          gxr[j] += gj * rinv - xr[j] * dot;
        }
      }
      return;
    }
    case OpKind::softmax:
    case OpKind::causal_softmax: {
      const Tensor& Y = n.value;
      Tensor& gx = grad_slot(n.inputs[0]);
      const std::int64_t nn = last_dim(Y);
      for (std::int64_t r = 0; r < rows_of(Y); ++r) {
        const double* yr = Y.data.data() + r * nn;
        const double* gr = go.data.data() + r * nn;
        double* gxr = gx.data.data() + r * nn;
        double dot = 0.0;
        for (std::int64_t j = 0; j < nn; ++j) dot += yr[j] * gr[j];
        for (std::int64_t j = 0; j < nn; ++j) gxr[j] += yr[j] * (gr[j] - dot);
      }
      return;
    }
    case OpKind::embedding: {
      const Tensor& T = value(n.inputs[0]);
      Tensor& gt = grad_slot(n.inputs[0]);
      const std::int64_t w = T.shape[1];
      for (std::size_t r = 0; r < n.index.size(); ++r) {
        const double* gr = go.data.data() + static_cast<std::int64_t>(r) * w;
        double* row = gt.data.data() + static_cast<std::int64_t>(n.index[r]) * w;
        for (std::int64_t j = 0; j < w; ++j) row[j] += gr[j];
      }
      return;
    }
    case OpKind::cross_entropy: {
      const Tensor& X = value(n.inputs[0]);
      Tensor& gx = grad_slot(n.inputs[0]);
      const std::int64_t V = last_dim(X);
      const std::int32_t ignore = static_cast<std::int32_t>(n.extent);
      std::int64_t valid = 0;
      for (auto t : n.index)
        if (t != ignore) ++valid;
      const double w = go.data[0] / static_cast<double>(valid);
      for (std::int64_t r = 0; r < rows_of(X); ++r) {
        const std::int32_t t = n.index[static_cast<std::size_t>(r)];
        if (t == ignore) continue;
        const double* xr = X.data.data() + r * V;
        double* gxr = gx.data.data() + r * V;
        double mx = xr[0];
        for (std::int64_t j = 1; j < V; ++j) mx = std::max(mx, xr[j]);
        double sum = 0.0;
        for (std::int64_t j = 0; j < V; ++j) sum += std::exp(xr[j] - mx);
        const double inv = 1.0 / sum;
        for (std::int64_t j = 0; j < V; ++j) gxr[j] += w * std::exp(xr[j] - mx) * inv;
        gxr[t] -= w;
      }
      return;
    }
    case OpKind::reshape: {
      Tensor& ga = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i];
      return;
    }
    case OpKind::transpose_12: {
      Tensor& ga = grad_slot(n.inputs[0]);
      Tensor tmp = Tensor::zeros(ga.shape);
      swap_dims_12(go, tmp);
      for (std::size_t i = 0; i < tmp.data.size(); ++i) ga.data[i] += tmp.data[i];
      return;
    }
    case OpKind::rope: {
      Tensor& ga = grad_slot(n.inputs[0]);
      Tensor tmp = Tensor::zeros(ga.shape);
      rope_apply(go, tmp, n.alpha, -1.0);
      for (std::size_t i = 0; i < tmp.data.size(); ++i) ga.data[i] += tmp.data[i];
      return;
    }
    case OpKind::sum: {
      Tensor& ga = grad_slot(n.inputs[0]);
      for (auto& v : ga.data) v += go.data[0];
      return;
    }
  }
}

GradCheckReport grad_check(const GradCheckFn& build, const std::vector<Tensor>& point,
                           double eps) {
  if (eps <= 0.0) throw UsageError("grad_check needs eps > 0");
  auto eval = [&](const std::vector<Tensor>& pt) -> double {
    Graph g;
    std::vector<NodeId> ids;
    ids.reserve(pt.size());
    for (const auto& p : pt) ids.push_back(g.param(p));
    NodeId loss = build(g, ids);
    if (g.value(loss).numel() != 1) throw UsageError("grad_check subgraph must be scalar-valued");
    return g.value(loss).data[0];
  };

  Graph g;
  std::vector<NodeId> ids;
  for (const auto& p : point) ids.push_back(g.param(p));
  NodeId loss = build(g, ids);
  g.backward(loss);

  GradCheckReport rep;
  std::vector<Tensor> work = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const Tensor& analytic = g.grad(ids[i]);
    for (std::int64_t j = 0; j < point[i].numel(); ++j) {
      const double orig = work[i].data[static_cast<std::size_t>(j)];
      double fp, fm;
      try {
        work[i].data[static_cast<std::size_t>(j)] = orig + eps;
        fp = eval(work);
        work[i].data[static_cast<std::size_t>(j)] = orig - eps;
        fm = eval(work);
      } catch (const DivergenceSignal&) {
        rep.non_finite_coords.emplace_back(i, j);
        work[i].data[static_cast<std::size_t>(j)] = orig;
        continue;
      }
      work[i].data[static_cast<std::size_t>(j)] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        rep.non_finite_coords.emplace_back(i, j);
        continue;
      }
      const double cd = (fp - fm) / (2.0 * eps);
      const double a = analytic.data[static_cast<std::size_t>(j)];
      const double rel = std::abs(a - cd) / std::max({std::abs(a), std::abs(cd), 1e-12});
      rep.max_rel_error = std::max(rep.max_rel_error, rel);
    }
  }
  return rep;
}

}  // namespace muscale

#include <doctest.h>

#include <cmath>

#include "muscale/graph.hpp"
#include "muscale/rng.hpp"

using namespace muscale;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  return Tensor::randn(std::move(shape), rng, scale);
}

}  // namespace

TEST_SUITE("graph") {

TEST_CASE("softmax of zero logits is uniform and rows sum to one") {
  const std::int64_t V = 321;
  Graph g;
  NodeId x = g.input(Tensor::zeros({2, V}));
  NodeId y = g.softmax(x);
  const Tensor& out = g.value(y);
  for (double v : out.data) CHECK(v == doctest::Approx(1.0 / V).epsilon(1e-14));
  for (std::int64_t r = 0; r < 2; ++r) {
    double sum = 0.0;
    for (std::int64_t j = 0; j < V; ++j) sum += out.data[static_cast<std::size_t>(r * V + j)];
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("softmax rows sum to one on random input") {
  Graph g;
  NodeId x = g.input(random_tensor({5, 17}, 42, 3.0));
  const Tensor& out = g.value(g.softmax(x));
  for (std::int64_t r = 0; r < 5; ++r) {
    double sum = 0.0;
    for (std::int64_t j = 0; j < 17; ++j) sum += out.data[static_cast<std::size_t>(r * 17 + j)];
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("cross-entropy of uniform distribution over V=50304 is ln V") {
  // high-precision ln(50304) = 10.8258398757888784014652940983
  const std::int64_t V = 50304;
  Graph g;
  NodeId x = g.input(Tensor::zeros({1, V}));
  NodeId loss = g.cross_entropy(x, {7});
  CHECK(g.value(loss).data[0] == doctest::Approx(10.8258398757888784).epsilon(1e-12));
  CHECK(g.value(loss).data[0] >= 0.0);
}

TEST_CASE("cross-entropy is non-negative on random logits") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    Graph g;
    NodeId x = g.input(random_tensor({4, 9}, s, 4.0));
    NodeId loss = g.cross_entropy(x, {0, 3, 8, 2});
    CHECK(g.value(loss).data[0] >= 0.0);
  }
}

TEST_CASE("layer-norm of a constant vector is zero before affine") {
  Graph g;
  NodeId x = g.input(Tensor::full({3, 8}, 2.5));
  NodeId gamma = g.input(Tensor::full({8}, 1.0));
  NodeId beta = g.input(Tensor::zeros({8}));
  const Tensor& out = g.value(g.layer_norm(x, gamma, beta));
  for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("backward of sum gives all-ones gradient") {
  Graph g;
  NodeId x = g.param(random_tensor({3, 4}, 1));
  NodeId loss = g.sum(x);
  g.backward(loss);
  for (double v : g.grad(x).data) CHECK(v == 1.0);
}

TEST_CASE("softmax+cross-entropy gradient at zero logits") {
  const std::int64_t V = 12;
  const std::int32_t k = 5;
  Graph g;
  NodeId x = g.param(Tensor::zeros({1, V}));
  NodeId loss = g.cross_entropy(x, {k});
  g.backward(loss);
  const Tensor& gx = g.grad(x);
  for (std::int64_t j = 0; j < V; ++j) {
    const double expect = (j == k) ? 1.0 / V - 1.0 : 1.0 / V;
    CHECK(gx.data[static_cast<std::size_t>(j)] == doctest::Approx(expect).epsilon(1e-14));
  }
}

TEST_CASE("parameters without a path to the loss get zero gradient") {
  Graph g;
  NodeId used = g.param(random_tensor({2, 2}, 3));
  NodeId unused = g.param(random_tensor({4}, 4));
  NodeId loss = g.sum(used);
  g.backward(loss);
  for (double v : g.grad(unused).data) CHECK(v == 0.0);
}

TEST_CASE("gradient accumulates across fan-out") {
  Graph g;
  NodeId x = g.param(random_tensor({3}, 5));
  NodeId y = g.add(x, x);
  g.backward(g.sum(y));
  for (double v : g.grad(x).data) CHECK(v == 2.0);
}

TEST_CASE("usage errors: grad before backward, double backward, non-scalar loss") {
  Graph g;
  NodeId x = g.param(random_tensor({2}, 6));
  NodeId y = g.scale(x, 2.0);
  CHECK_THROWS_AS((void)g.grad(x), UsageError);
  CHECK_THROWS_AS(g.backward(y), UsageError);  // y is not scalar
  NodeId loss = g.sum(y);
  g.backward(loss);
  CHECK_THROWS_AS(g.backward(loss), UsageError);
}

TEST_CASE("shape mismatch names the node") {
  Graph g;
  NodeId a = g.input(Tensor::zeros({2, 3}));
  NodeId b = g.input(Tensor::zeros({4, 5}));
  try {
    g.matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(e.node_id == 2);
    CHECK(std::string(e.what()).find("matmul") != std::string::npos);
  }
}

TEST_CASE("non-finite output raises a divergence signal with the node id") {
  Graph g;
  NodeId x = g.input(Tensor::full({2}, 1e308));
  try {
    g.scale(x, 10.0);
    FAIL("expected DivergenceSignal");
  } catch (const DivergenceSignal& e) {
    CHECK(e.node_id == 1);
    CHECK(e.op_name == "scale");
  }
}

TEST_CASE("forward is deterministic bit-for-bit") {
  auto run = [](std::vector<double>& loss_grads) {
    Graph g;
    NodeId x = g.param(random_tensor({4, 6}, 77));
    NodeId w = g.param(random_tensor({6, 3}, 78));
    NodeId loss = g.cross_entropy(g.matmul(g.gelu(x), w), {0, 1, 2, 0});
    g.backward(loss);
    loss_grads = g.grad(w).data;
    return g.value(loss).data[0];
  };
  std::vector<double> g1, g2;
  const double l1 = run(g1), l2 = run(g2);
  CHECK(l1 == l2);
  CHECK(g1 == g2);
}

// -- finite-difference oracle ------------------------------------------------

TEST_CASE("linear layer gradient matches central differences below 1e-6") {
  const Tensor x = random_tensor({3, 4}, 10);
  const Tensor w = random_tensor({4, 2}, 11);
  const Tensor b = random_tensor({2}, 12);
  auto build = [&](Graph& g, const std::vector<NodeId>& p) {
    NodeId h = g.bias_add(g.matmul(g.input(x), p[0]), p[1]);
    return g.sum(g.gelu(h));
  };
  const auto rep = grad_check(build, {w, b}, 1e-5);
  CHECK(rep.non_finite_coords.empty());
  CHECK(rep.max_rel_error < 1e-6);
}

TEST_CASE("constant function grad-checks to exactly zero error") {
  auto build = [](Graph& g, const std::vector<NodeId>& p) {
    (void)p;
    return g.sum(g.input(Tensor::full({3}, 1.5)));
  };
  const auto rep = grad_check(build, {Tensor::zeros({2})}, 1e-5);
  CHECK(rep.max_rel_error == 0.0);
}

TEST_CASE("every op passes grad_check below 1e-4 on randomized small shapes") {
  struct Case {
    const char* name;
    GradCheckFn fn;
    std::vector<Tensor> point;
  };
  const Tensor x34 = random_tensor({3, 4}, 21);
  const Tensor x234 = random_tensor({2, 3, 4}, 22);
  const Tensor x2345 = random_tensor({2, 3, 4, 5}, 23, 0.7);
  const Tensor x2344 = random_tensor({2, 3, 4, 4}, 35, 0.7);
  const Tensor w45 = random_tensor({4, 5}, 24);
  const Tensor v4 = random_tensor({4}, 25);

  std::vector<Case> cases;
  cases.push_back({"matmul", [&](Graph& g, const std::vector<NodeId>& p) {
                     return g.sum(g.gelu(g.matmul(p[0], p[1])));
                   }, {x34, w45}});
  cases.push_back({"matmul batched", [&](Graph& g, const std::vector<NodeId>& p) {
                     return g.sum(g.silu(g.matmul(p[0], p[1])));
                   }, {x234, random_tensor({2, 4, 3}, 26)}});
  cases.push_back({"matmul_nt", [&](Graph& g, const std::vector<NodeId>& p) {
                     return g.sum(g.gelu(g.matmul_nt(p[0], p[1])));
                   }, {x234, random_tensor({2, 5, 4}, 27)}});
  cases.push_back({"add+mul+scale", [&](Graph& g, const std::vector<NodeId>& p) {
                     return g.sum(g.scale(g.mul(g.add(p[0], p[1]), p[2]), 1.7));
                   }, {x34, random_tensor({3, 4}, 28), random_tensor({3, 4}, 29)}});
  cases.push_back({"bias_add", [&](Graph& g, const std::vector<NodeId>& p) {
                     return g.sum(g.silu(g.bias_add(p[0], p[1])));
                   }, {x34, v4}});
  cases.push_back({"gelu", [&](Graph& g, const std::vector<NodeId>& p) {
                     return g.sum(g.gelu(p[0]));
                   }, {x34}});
  cases.push_back({"silu", [&](Graph& g, const std::vector<NodeId>& p) {
                     return g.sum(g.silu(p[0]));
                   }, {x34}});
  cases.push_back({"layer_norm", [&](Graph& g, const std::vector<NodeId>& p) {
                     return g.sum(g.gelu(g.layer_norm(p[0], p[1], p[2])));
                   }, {x34, random_tensor({4}, 30, 0.3), random_tensor({4}, 31, 0.3)}});
  cases.push_back({"rms_norm", [&](Graph& g, const std::vector<NodeId>& p) {
                     return g.sum(g.gelu(g.rms_norm(p[0], p[1])));
                   }, {x34, random_tensor({4}, 32, 0.3)}});
  cases.push_back({"softmax", [&](Graph& g, const std::vector<NodeId>& p) {
                     return g.sum(g.mul(g.softmax(p[0]), p[1]));
                   }, {x34, random_tensor({3, 4}, 33)}});
  cases.push_back({"causal_softmax", [&](Graph& g, const std::vector<NodeId>& p) {
                     return g.sum(g.mul(g.causal_softmax(p[0]), p[1]));
                   }, {x2344, random_tensor({2, 3, 4, 4}, 34)}});
  cases.push_back({"embedding", [&](Graph& g, const std::vector<NodeId>& p) {
                     return g.sum(g.gelu(g.embedding(p[0], {1, 0, 2, 1, 2, 0}, {2, 3})));
                   }, {random_tensor({3, 4}, 36)}});
  cases.push_back({"cross_entropy", [&](Graph& g, const std::vector<NodeId>& p) {
                     return g.cross_entropy(p[0], {0, -1, 3}, -1);
                   }, {random_tensor({3, 4}, 37)}});
  cases.push_back({"reshape+transpose_12", [&](Graph& g, const std::vector<NodeId>& p) {
                     NodeId t = g.transpose_12(g.reshape(p[0], {2, 3, 4, 5}));
                     return g.sum(g.gelu(t));
                   }, {random_tensor({2, 3, 20}, 38)}});
  cases.push_back({"rope", [&](Graph& g, const std::vector<NodeId>& p) {
                     return g.sum(g.mul(g.rope(p[0]), p[1]));
                   }, {random_tensor({2, 2, 3, 4}, 39), random_tensor({2, 2, 3, 4}, 40)}});

  for (const auto& c : cases) {
    CAPTURE(c.name);
    const auto rep = grad_check(c.fn, c.point, 1e-5);
    CHECK(rep.non_finite_coords.empty());
    CHECK_MESSAGE(rep.max_rel_error < 1e-4, c.name, ": ", rep.max_rel_error);
  }
}

TEST_CASE("embedding rejects out-of-range ids") {
  Graph g;
  NodeId table = g.param(random_tensor({3, 4}, 41));
  CHECK_THROWS_AS(g.embedding(table, {0, 3}, {2}), ShapeError);
}

TEST_CASE("cross_entropy with every target ignored is a usage error") {
  Graph g;
  NodeId x = g.input(Tensor::zeros({2, 4}));
  CHECK_THROWS_AS(g.cross_entropy(x, {-1, -1}, -1), UsageError);
}

TEST_CASE("causal softmax masks strictly above the diagonal") {
  Graph g;
  NodeId x = g.input(random_tensor({1, 1, 4, 4}, 50));
  const Tensor& y = g.value(g.causal_softmax(x));
  for (std::int64_t i = 0; i < 4; ++i) {
    double sum = 0.0;
    for (std::int64_t j = 0; j < 4; ++j) {
      const double v = y.data[static_cast<std::size_t>(i * 4 + j)];
      if (j > i) CHECK(v == 0.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

}  // TEST_SUITE

#include <doctest.h>

#include <cmath>
#include <functional>
#include <stdexcept>

#include "swae/graph.hpp"
#include "swae/rng.hpp"
#include "swae/tensor.hpp"

using namespace swae;

namespace {

// independent oracle: naive triple-loop matrix product
Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  const int n = a.shape[0], k = a.shape[1], m = b.shape[1];
  Tensor c({n, m});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += a.at(i, t) * b.at(t, j);
      c.at(i, j) = acc;
    }
  }
  return c;
}

Tensor seeded_uniform(Shape shape, uint64_t seed) {
  RngState rng(seed);
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.uniform();
  return t;
}

}  // namespace

TEST_CASE("tensor invariants") {
  CHECK_THROWS(Tensor({2, 3}, {1.0, 2.0}));  // length mismatch
  CHECK_THROWS(Tensor({0, 3}));              // non-positive extent
  Tensor t({2, 2}, {1, 2, 3, 4});
  CHECK(t.numel() == 4);
  CHECK(t.at(1, 0) == 3.0);
}

TEST_CASE("graph forward: identity and relu") {
  Graph g;
  Val x = g.leaf(Tensor({3}, {1, 2, 3}), "x");
  CHECK(g.value(x).data == std::vector<double>{1, 2, 3});

  Graph g2;
  Val y = g2.relu(g2.leaf(Tensor({3}, {-1, 0, 2}), "x"));
  CHECK(g2.value(y).data == std::vector<double>{0, 0, 2});
}

TEST_CASE("graph forward: matmul equals the naive triple-loop product bit for bit") {
  Tensor a = seeded_uniform({2, 3}, 11);
  Tensor b = seeded_uniform({3, 4}, 12);
  Graph g;
  Val c = g.matmul(g.leaf(a, "a"), g.leaf(b, "b"));
  Tensor expect = naive_matmul(a, b);
  REQUIRE(g.value(c).numel() == expect.numel());
  for (int64_t i = 0; i < expect.numel(); ++i) {
    CHECK(g.value(c).data[i] == expect.data[i]);
  }

  // also on a larger problem where the parallel path kicks in
  Tensor a2 = seeded_uniform({64, 96}, 13);
  Tensor b2 = seeded_uniform({96, 80}, 14);
  Graph g2;
  Val c2 = g2.matmul(g2.leaf(a2, "a"), g2.leaf(b2, "b"));
  Tensor expect2 = naive_matmul(a2, b2);
  for (int64_t i = 0; i < expect2.numel(); ++i) {
    CHECK(g2.value(c2).data[i] == expect2.data[i]);
  }
}

TEST_CASE("graph forward: replay is bitwise deterministic and validates leaves") {
  Tensor a = seeded_uniform({4, 4}, 21);
  a.requires_grad = true;
  Graph g;
  Val av = g.leaf(a, "a");
  Val y = g.mean(g.relu(g.matmul(av, av)));
  const double first = g.scalar_value(y);

  g.forward({{"a", a}});
  CHECK(g.scalar_value(y) == first);

  // unknown leaf name
  CHECK_THROWS(g.forward({{"a", a}, {"zz", a}}));
  // missing leaf
  CHECK_THROWS(g.forward({}));
  // shape mismatch names the node
  CHECK_THROWS_WITH_AS(g.forward({{"a", Tensor({2, 2})}}),
                       doctest::Contains("node 0"), std::runtime_error);
  // non-finite leaf
  Tensor bad = a;
  bad.data[3] = std::nan("");
  CHECK_THROWS(g.forward({{"a", bad}}));
}

TEST_CASE("graph backward: sum of squares and identity") {
  Graph g;
  Tensor x({2}, {1, 2});
  x.requires_grad = true;
  Val xv = g.leaf(x, "x");
  Val y = g.sum(g.square(xv));
  g.backward(y);
  CHECK(g.grad(xv) == std::vector<double>{2, 4});

  Graph g2;
  Val xv2 = g2.leaf(x, "x");
  Val y2 = g2.sum(xv2);
  g2.backward(y2);
  CHECK(g2.grad(xv2) == std::vector<double>{1, 1});
}

TEST_CASE("graph backward: rejects non-scalar output and stale forward") {
  Graph g;
  Tensor x({2}, {1, 2});
  x.requires_grad = true;
  Val xv = g.leaf(x, "x");
  Val y = g.square(xv);
  CHECK_THROWS_AS(g.backward(y), std::invalid_argument);

  Val s = g.sum(y);
  // failed forward leaves values invalid; backward must reject
  CHECK_THROWS(g.forward({{"x", Tensor({3})}}));
  CHECK_THROWS_AS(g.backward(s), std::runtime_error);
  g.forward({{"x", x}});
  CHECK_NOTHROW(g.backward(s));
}

TEST_CASE("graph backward: mean(relu(Wx+b)) matches central differences") {
  RngState rng(7);
  Tensor w = rng.normal_tensor({4, 4});
  w.requires_grad = true;
  Tensor x = rng.normal_tensor({4, 4});
  x.requires_grad = true;
  Tensor b(Shape{4});
  for (double& v : b.data) v = rng.normal();
  b.requires_grad = true;

  auto report = gradcheck(
      [](Graph& g, const std::vector<Val>& leaves) {
        return g.mean(g.relu(g.add_bias(g.matmul(leaves[1], leaves[0]), leaves[2])));
      },
      {{"w", w}, {"x", x}, {"b", b}}, 1e-5, 1e-6);
  CHECK(report.pass);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("gradient accumulation is additive over branches") {
  // y = sum(x*x) + sum(exp(x)); grad = 2x + exp(x)
  Tensor x({3}, {0.5, -1.25, 2.0});
  x.requires_grad = true;
  Graph g;
  Val xv = g.leaf(x, "x");
  Val y = g.add(g.sum(g.mul(xv, xv)), g.sum(g.exp(xv)));
  g.backward(y);
  const auto& got = g.grad(xv);
  for (int i = 0; i < 3; ++i) {
    const double expect = 2.0 * x.data[i] + std::exp(x.data[i]);
    CHECK(got[i] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("every primitive passes a finite-difference check away from kinks") {
  RngState rng(99);
  auto bounded = [&](Shape shape, double lo) {
    Tensor t(std::move(shape));
    for (double& v : t.data) {
      do {
        v = rng.normal();
      } while (std::fabs(v) < lo);
    }
    t.requires_grad = true;
    return t;
  };

  Tensor a = bounded({3, 4}, 0.05);
  Tensor b = bounded({3, 4}, 0.05);
  Tensor c = bounded({4, 2}, 0.05);
  Tensor bias = bounded({4}, 0.05);
  Tensor pos = bounded({3, 4}, 0.05);
  for (double& v : pos.data) v = std::fabs(v) + 0.5;  // log/reciprocal domain

  using Builder = std::function<Val(Graph&, const std::vector<Val>&)>;
  std::vector<std::pair<const char*, Builder>> cases = {
      {"add", [](Graph& g, const std::vector<Val>& l) { return g.sum(g.add(l[0], l[1])); }},
      {"sub", [](Graph& g, const std::vector<Val>& l) { return g.sum(g.sub(l[0], l[1])); }},
      {"mul", [](Graph& g, const std::vector<Val>& l) { return g.sum(g.mul(l[0], l[1])); }},
      {"matmul",
       [](Graph& g, const std::vector<Val>& l) { return g.sum(g.matmul(l[0], l[2])); }},
      {"add_bias",
       [](Graph& g, const std::vector<Val>& l) { return g.sum(g.add_bias(l[0], l[3])); }},
      {"relu", [](Graph& g, const std::vector<Val>& l) { return g.sum(g.relu(l[0])); }},
      {"sigmoid",
       [](Graph& g, const std::vector<Val>& l) { return g.sum(g.sigmoid(l[0])); }},
      {"exp", [](Graph& g, const std::vector<Val>& l) { return g.sum(g.exp(l[0])); }},
      {"log", [](Graph& g, const std::vector<Val>& l) { return g.sum(g.log(l[4])); }},
      {"square", [](Graph& g, const std::vector<Val>& l) { return g.sum(g.square(l[0])); }},
      {"abs", [](Graph& g, const std::vector<Val>& l) { return g.sum(g.abs(l[0])); }},
      {"mean", [](Graph& g, const std::vector<Val>& l) { return g.mean(l[0]); }},
      {"scale",
       [](Graph& g, const std::vector<Val>& l) { return g.sum(g.scale(l[0], -1.7)); }},
      {"reciprocal",
       [](Graph& g, const std::vector<Val>& l) { return g.sum(g.reciprocal(l[4])); }},
      {"pairwise_sqdist",
       [](Graph& g, const std::vector<Val>& l) {
         return g.sum(g.pairwise_sqdist(l[0], l[1]));
       }},
      // all entries strictly inside the interval (differentiability precondition)
      {"clamp",
       [](Graph& g, const std::vector<Val>& l) { return g.sum(clamp(g, l[0], -6.0, 6.0)); }},
  };

  for (auto& [name, builder] : cases) {
    CAPTURE(name);
    auto report = gradcheck(builder,
                            {{"a", a}, {"b", b}, {"c", c}, {"bias", bias}, {"pos", pos}},
                            1e-6, 1e-6);
    CHECK_MESSAGE(report.pass, name, " max_rel_err=", report.max_rel_err);
  }
}

TEST_CASE("clamp saturates at the bounds and passes values through inside") {
  Graph g;
  Val x = g.leaf(Tensor({4}, {-12.0, -3.5, 3.5, 12.0}), "x");
  Val y = clamp(g, x, -10.0, 10.0);
  CHECK(g.value(y).data == std::vector<double>{-10.0, -3.5, 3.5, 10.0});
}

TEST_CASE("batchnorm: training statistics, running update, both backward modes") {
  RngState rng(5);
  Tensor x = rng.normal_tensor({6, 3});
  x.requires_grad = true;
  Tensor gamma = Tensor::full({3}, 1.3);
  gamma.requires_grad = true;
  Tensor beta = Tensor::full({3}, -0.2);
  beta.requires_grad = true;

  BatchNormState state(3);
  {
    Graph g;
    Val out = g.batchnorm(g.leaf(x, "x"), g.leaf(gamma, "gamma"), g.leaf(beta, "beta"),
                          &state, /*training=*/true);
    // per-feature: mean ~ 0, std ~ 1 after normalization
    const Tensor& y = g.value(out);
    for (int j = 0; j < 3; ++j) {
      double m = 0.0;
      for (int i = 0; i < 6; ++i) m += (y.at(i, j) + 0.2) / 1.3;
      CHECK(std::fabs(m / 6.0) < 1e-12);
    }
    // running stats moved toward the batch statistics
    CHECK(state.running_mean.data[0] != 0.0);
    CHECK(state.running_var.data[0] != 1.0);
  }

  // weighted reduction: a plain sum is invariant to the batch statistics
  // and would only see rounding noise in x
  Tensor probe_w = RngState(31).normal_tensor({6, 3});
  BatchNormState fd_state(3);
  auto train_report = gradcheck(
      [&fd_state, &probe_w](Graph& g, const std::vector<Val>& l) {
        Val bn = g.batchnorm(l[0], l[1], l[2], &fd_state, true);
        return g.sum(g.mul(bn, g.constant(probe_w)));
      },
      {{"x", x}, {"gamma", gamma}, {"beta", beta}}, 1e-6, 1e-6);
  CHECK(train_report.pass);

  BatchNormState eval_state(3);
  RngState stat_rng(17);
  for (double& v : eval_state.running_mean.data) v = 0.3 * stat_rng.normal();
  for (double& v : eval_state.running_var.data) v = 1.0 + 0.5 * stat_rng.uniform();
  auto eval_report = gradcheck(
      [&eval_state, &probe_w](Graph& g, const std::vector<Val>& l) {
        Val bn = g.batchnorm(l[0], l[1], l[2], &eval_state, false);
        return g.sum(g.mul(bn, g.constant(probe_w)));
      },
      {{"x", x}, {"gamma", gamma}, {"beta", beta}}, 1e-6, 1e-6);
  CHECK(eval_report.pass);

  // replay must not touch running statistics again
  BatchNormState once(3);
  Graph g;
  Val out = g.batchnorm(g.leaf(x, "x"), g.leaf(gamma, "gamma"), g.leaf(beta, "beta"),
                        &once, true);
  (void)out;
  const std::vector<double> after_record = once.running_mean.data;
  g.replay();
  CHECK(once.running_mean.data == after_record);
}

TEST_CASE("gradcheck op examples") {
  // f(x) = x^2 at x = 3: central differences are exact for quadratics
  Tensor x3 = Tensor::scalar(3.0);
  x3.requires_grad = true;
  auto quad = gradcheck(
      [](Graph& g, const std::vector<Val>& l) { return g.sum(g.square(l[0])); },
      {{"x", x3}}, 1e-5, 1e-6);
  CHECK(quad.max_rel_err < 1e-9);

  // f(x) = sum(exp(x)) at [0, 1]: gradient [1, e]
  Tensor xe({2}, {0.0, 1.0});
  xe.requires_grad = true;
  Graph g;
  Val xv = g.leaf(xe, "x");
  g.backward(g.sum(g.exp(xv)));
  CHECK(g.grad(xv)[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g.grad(xv)[1] == doctest::Approx(std::exp(1.0)).epsilon(1e-12));
  auto rep = gradcheck(
      [](Graph& g2, const std::vector<Val>& l) { return g2.sum(g2.exp(l[0])); },
      {{"x", xe}}, 1e-5, 1e-6);
  CHECK(rep.pass);

  // non-finite output rejected
  Tensor huge = Tensor::scalar(1000.0);
  huge.requires_grad = true;
  CHECK_THROWS(gradcheck(
      [](Graph& g2, const std::vector<Val>& l) { return g2.sum(g2.exp(l[0])); },
      {{"x", huge}}, 1e-5, 1e-6));
}

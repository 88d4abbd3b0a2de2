#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "depthnet/gradcheck.hpp"
#include "depthnet/optim.hpp"

using namespace depthnet;

TEST_CASE("elementwise add/sub/mul") {
  Tensor a({2}, {1.f, 2.f});
  Tensor b({2}, {3.f, 4.f});
  auto sum = add(a, b);
  CHECK(sum.values() == std::vector<float>{4.f, 6.f});

  auto x = Tensor({2, 3}, {1, 2, 3, 4, 5, 6});
  auto same = mul(x, Tensor::ones({2, 3}));
  CHECK(same.values() == x.values());

  auto d = sub(a, b);
  CHECK(d.values() == std::vector<float>{-2.f, -2.f});
}

TEST_CASE("product rule gradient") {
  Tensor a({1}, {2.f});
  Tensor b({1}, {5.f});
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  auto y = mul(a, b);
  y.backward();
  CHECK(a.grad()[0] == doctest::Approx(5.f));
  CHECK(b.grad()[0] == doctest::Approx(2.f));
}

TEST_CASE("trailing-singleton broadcast and its gradient") {
  Tensor x({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  Tensor bias({2, 1, 1}, {10.f, 20.f});
  x.set_requires_grad(true);
  bias.set_requires_grad(true);
  auto y = add(x, bias);
  CHECK(y.values() == std::vector<float>{11, 12, 13, 14, 25, 26, 27, 28});
  sum(y).backward();
  CHECK(bias.grad() == std::vector<float>{4.f, 4.f});

  CHECK_THROWS_AS(add(x, Tensor::zeros({3, 1, 1})), ShapeError);
  CHECK_THROWS_AS(add(x, Tensor::zeros({2, 2})), ShapeError);
  try {
    add(Tensor::zeros({2, 3}), Tensor::zeros({4, 3}));
  } catch (const ShapeError& e) {
    const std::string what = e.what();
    CHECK(what.find("[2, 3]") != std::string::npos);
    CHECK(what.find("[4, 3]") != std::string::npos);
  }
}

TEST_CASE("scalar broadcast divides by a taped sum") {
  Tensor v({3}, {1.f, 2.f, 5.f});
  v.set_requires_grad(true);
  auto normalized = mul(v, reciprocal(sum(v)));
  CHECK(normalized.values()[2] == doctest::Approx(0.625f));
  sum(normalized).backward();  // sums to 1 identically, so gradient ~ 0
  for (float g : v.grad()) CHECK(g == doctest::Approx(0.f).epsilon(1e-5));
}

TEST_CASE("sigmoid values and derivative") {
  Tensor x({3}, {0.f, 38.f, -38.f});
  x.set_requires_grad(true);
  auto y = sigmoid(x);
  CHECK(y.values()[0] == doctest::Approx(0.5f));
  CHECK(y.values()[1] == 1.0f);  // saturates cleanly in float32
  CHECK(y.values()[2] == doctest::Approx(0.f));
  sum(y).backward();
  CHECK(x.grad()[0] == doctest::Approx(0.25f));
}

TEST_CASE("gelu and relu basics") {
  Tensor x({2}, {1.f, -1.f});
  auto g = gelu(x);
  CHECK(g.values()[0] == doctest::Approx(0.8413447f));
  CHECK(g.values()[1] == doctest::Approx(-0.1586553f));
  auto r = relu(x);
  CHECK(r.values() == std::vector<float>{1.f, 0.f});
}

TEST_CASE("softmax basics") {
  auto u = softmax(Tensor({2}, {0.f, 0.f}), 0);
  CHECK(u.values()[0] == doctest::Approx(0.5f));

  auto s = softmax(Tensor({2}, {1000.f, 0.f}), 0);
  CHECK(s.values()[0] == doctest::Approx(1.f));
  CHECK(s.values()[1] == doctest::Approx(0.f));
  CHECK(std::isfinite(s.values()[0]));

  // exp-ratio case: logits ln1, ln2, ln3
  auto logs = softmax(Tensor({3}, {std::log(1.f), std::log(2.f), std::log(3.f)}), 0);
  CHECK(logs.values()[0] == doctest::Approx(1.f / 6).epsilon(1e-6));
  CHECK(logs.values()[1] == doctest::Approx(2.f / 6).epsilon(1e-6));
  CHECK(logs.values()[2] == doctest::Approx(3.f / 6).epsilon(1e-6));

  CHECK_THROWS_AS(softmax(Tensor::zeros({2, 2}), 2), ValueError);
}

TEST_CASE("softmax sums to one for large-magnitude inputs") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x({4, 5});
    for (int64_t i = 0; i < x.size(); ++i) x.data()[i] = float(rng.uniform(-1e4, 1e4));
    for (int axis : {0, 1}) {
      auto y = softmax(x, axis);
      const int n = x.dim(axis);
      const int other = x.dim(1 - axis);
      for (int o = 0; o < other; ++o) {
        double acc = 0;
        for (int k = 0; k < n; ++k)
          acc += axis == 0 ? y.values()[size_t(k * other + o)] : y.values()[size_t(o * n + k)];
        CHECK(acc == doctest::Approx(1.0).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("backward fills gradients and handles fan-out") {
  Tensor p({2}, {3.f, -1.f});
  p.set_requires_grad(true);
  sum(p).backward();
  CHECK(p.grad() == std::vector<float>{1.f, 1.f});

  p.zero_grad();
  mul_scalar(sum(mul(p, p)), 0.5f).backward();
  CHECK(p.grad()[0] == doctest::Approx(3.f));
  CHECK(p.grad()[1] == doctest::Approx(-1.f));

  // a tensor feeding two consumers accumulates both contributions
  Tensor x({3}, {0.5f, -2.f, 1.25f});
  x.set_requires_grad(true);
  sum(add(mul(x, x), x)).backward();
  for (int i = 0; i < 3; ++i)
    CHECK(x.grad()[size_t(i)] == doctest::Approx(2 * x.values()[size_t(i)] + 1));

  CHECK_THROWS_AS(mul(x, x).backward(), ValueError);
}

TEST_CASE("no-grad mode skips the tape") {
  Tensor x({2}, {1.f, 2.f});
  x.set_requires_grad(true);
  NoGradGuard ng;
  auto y = mul(x, x);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("tape is freed after backward") {
  Tensor x({2}, {1.f, 2.f});
  x.set_requires_grad(true);
  auto y = mul(x, x);
  auto loss = sum(y);
  loss.backward();
  CHECK(y.node()->parents.empty());
  CHECK_FALSE(bool(loss.node()->backward_fn));
}

TEST_CASE("mlp layers") {
  // identity weights, zero bias
  Tensor x({2}, {3.f, -4.f});
  Tensor wi({2, 2}, {1.f, 0.f, 0.f, 1.f});
  auto y = linear(x, wi);
  CHECK(y.values() == x.values());

  // w=[[2]], b=[1] on [3] -> [7]
  Tensor x1({1}, {3.f});
  Tensor w1({1, 1}, {2.f});
  Tensor b1({1}, {1.f});
  CHECK(linear(x1, w1, b1).values()[0] == doctest::Approx(7.f));

  CHECK_THROWS_AS(linear(Tensor::zeros({3}), Tensor::zeros({2, 2})), ShapeError);
}

TEST_CASE("two-layer mlp gradcheck in double") {
  Rng rng(42);
  DTensor x({3, 4});
  DTensor w0({4, 5}), b0({5}), w1({5, 2}), b1({2});
  for (auto* t : {&x, &w0, &b0, &w1, &b1})
    for (int64_t i = 0; i < t->size(); ++i) t->data()[i] = rng.uniform(-2.0, 2.0);
  auto fwd = [&] { return sum(linear(gelu(linear(x, w0, b0)), w1, b1)); };
  auto rep = gradcheck<double>(
      fwd, {{"x", x}, {"w0", w0}, {"b0", b0}, {"w1", w1}, {"b1", b1}}, rng, 1e-5, 10);
  CHECK(rep.max_rel_err <= 1e-4);
}

TEST_CASE("reductions and shape ops") {
  Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(sum(x).item() == doctest::Approx(21.f));
  CHECK(mean(x).item() == doctest::Approx(3.5f));
  auto s0 = sum_axis(x, 0);
  CHECK(s0.shape() == Shape{3});
  CHECK(s0.values() == std::vector<float>{5, 7, 9});
  auto r = reshape(x, {3, 2});
  CHECK(r.shape() == Shape{3, 2});
  CHECK_THROWS_AS(reshape(x, {4, 2}), ShapeError);

  auto f = hflip(x);
  CHECK(f.values() == std::vector<float>{3, 2, 1, 6, 5, 4});
  CHECK(hflip(f).values() == x.values());

  auto cat = concat(std::vector<Tensor>{x, x}, 0);
  CHECK(cat.shape() == Shape{4, 3});
  auto sl = slice_axis0(cat, 2, 2);
  CHECK(sl.values() == x.values());
  CHECK_THROWS_AS(slice_axis0(x, 1, 5), ShapeError);
}

TEST_CASE("parameter store enforces unique names and reports dead parameters") {
  ParamStore store;
  Rng rng(1);
  auto w = store.kaiming_uniform("w", {4, 4}, 4, rng);
  store.zeros("b", {4});
  CHECK_THROWS_AS(store.zeros("w", {1}), ValueError);

  auto x = Tensor::ones({4});
  sum(linear(x, w)).backward();
  auto dead = store.zero_grad_params();
  REQUIRE(dead.size() == 1);
  CHECK(dead[0] == "b");
}

namespace {
// independent scalar AdamW oracle
struct ScalarAdam {
  double m = 0, v = 0;
  int t = 0;
  double step(double p, double g, double lr, double wd) {
    ++t;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mhat = m / (1 - std::pow(0.9, t));
    const double vhat = v / (1 - std::pow(0.999, t));
    return p - lr * (mhat / (std::sqrt(vhat) + 1e-8) + wd * p);
  }
};
}  // namespace

TEST_CASE("adam matches a scalar oracle and converges") {
  ParamStore store;
  auto p = store.insert("p", Tensor({1}, {1.f}), "manual");
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  Adam opt(store, cfg);

  SUBCASE("zero grad, zero decay leaves parameters unchanged") {
    p.zero_grad();
    opt.step(0.1);
    CHECK(p.values()[0] == 1.f);
  }

  SUBCASE("descends on p^2 and tracks the oracle to convergence") {
    ScalarAdam oracle;
    double op = 1.0;
    // f(p) = (p-3)^2, grad 2(p-3)
    for (int i = 0; i < 200; ++i) {
      p.zero_grad();
      auto shifted = add_scalar(p, -3.f);
      mul(shifted, shifted).backward();
      const double g = 2.0 * (op - 3.0);
      op = oracle.step(op, g, 0.1, 0.0);
      opt.step(0.1);
      CHECK(p.values()[0] == doctest::Approx(float(op)).epsilon(1e-4));
    }
    CHECK(std::abs(p.values()[0] - 3.f) < 1e-2);
    CHECK(std::abs(op - 3.0) < 1e-2);
  }

  SUBCASE("first step on p^2 from 1 decreases p") {
    p.zero_grad();
    mul(p, p).backward();
    opt.step(0.1);
    CHECK(p.values()[0] < 1.f);
  }

  CHECK_THROWS_AS(opt.step(0.0), ValueError);
  CHECK_THROWS_AS(opt.step(-1.0), ValueError);
}

TEST_CASE("linear lr schedule hits the midpoint exactly") {
  const double lo = 4e-6, hi = 4e-5;
  CHECK(linear_lr(hi, lo, 0, 100) == hi);
  CHECK(linear_lr(hi, lo, 50, 100) == doctest::Approx((hi + lo) / 2).epsilon(1e-12));
  CHECK(linear_lr(hi, lo, 100, 100) == doctest::Approx(lo));
}

TEST_CASE("tensor shape/data validation") {
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>{1.f}), ShapeError);
  CHECK_THROWS_AS(Tensor({2}, {1.f, 2.f}).item(), ShapeError);
  CHECK(Tensor::scalar(5.f).item() == 5.f);
}

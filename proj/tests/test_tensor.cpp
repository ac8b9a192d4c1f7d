#include <doctest.h>

#include <cmath>

#include "bb/tensor.hpp"
#include "test_util.hpp"

using namespace bb;
using bbtest::gradcheck;
using bbtest::random_vec;

TEST_CASE("matmul values") {
  Graph g(0);
  Tensor id2 = g.leaf({2, 2}, {1, 0, 0, 1});
  Tensor m = g.leaf({2, 2}, {1, 2, 3, 4});
  CHECK(matmul(id2, m).value() == std::vector<double>{1, 2, 3, 4});

  Tensor a = g.leaf({1, 2}, {1, 2});
  Tensor b = g.leaf({2, 1}, {3, 4});
  CHECK(matmul(a, b).value() == std::vector<double>{11});

  CHECK_THROWS_AS(matmul(a, a), std::invalid_argument);
}

TEST_CASE("matmul gradient") {
  const auto x0 = random_vec(6, 17);
  gradcheck(x0, [](Graph& g, Tensor p) {
    Tensor a = reshape(p, {2, 3});
    Tensor b = g.leaf({3, 2}, {0.5, -1.0, 2.0, 0.25, -0.75, 1.5});
    return sum(matmul(a, b) * matmul(a, b));
  });
  // And with the parameter on the right.
  gradcheck(x0, [](Graph& g, Tensor p) {
    Tensor b = reshape(p, {3, 2});
    Tensor a = g.leaf({2, 3}, {0.5, -1.0, 2.0, 0.25, -0.75, 1.5});
    return sum(matmul(a, b) * matmul(a, b));
  });
}

TEST_CASE("conv2d values") {
  Graph g(0);
  // All-ones 3x3 input and kernel, pad 1: center output is the full sum 9.
  Tensor x = g.leaf({1, 1, 3, 3}, std::vector<double>(9, 1.0));
  Tensor w = g.leaf({1, 1, 3, 3}, std::vector<double>(9, 1.0));
  const auto& y = conv2d(x, w, 1, 1).value();
  CHECK(y[4] == doctest::Approx(9.0));
  CHECK(y[0] == doctest::Approx(4.0));  // corner sees a 2x2 window

  // Dirac kernel reproduces the input.
  Tensor xr = g.leaf({1, 1, 3, 3}, random_vec(9, 3));
  Tensor dirac = g.leaf({1, 1, 3, 3}, {0, 0, 0, 0, 1, 0, 0, 0, 0});
  CHECK(conv2d(xr, dirac, 1, 1).value() == xr.value());

  // Weight expects 2 input channels but x has 1.
  Tensor bad = g.leaf({1, 2, 3, 3}, std::vector<double>(18, 0.0));
  CHECK_THROWS_AS(conv2d(x, bad, 1, 0), std::invalid_argument);
}

TEST_CASE("conv2d gradient") {
  const auto x0 = random_vec(2 * 2 * 4 * 4, 23);
  gradcheck(x0, [](Graph& g, Tensor p) {
    Tensor x = reshape(p, {2, 2, 4, 4});
    Tensor w = g.leaf({3, 2, 3, 3}, random_vec(3 * 2 * 3 * 3, 24, -0.5, 0.5));
    return sum(conv2d(x, w, 1, 1) * conv2d(x, w, 1, 1));
  });
  const auto w0 = random_vec(3 * 2 * 3 * 3, 25, -0.5, 0.5);
  gradcheck(w0, [](Graph& g, Tensor p) {
    Tensor w = reshape(p, {3, 2, 3, 3});
    Tensor x = g.leaf({2, 2, 4, 4}, random_vec(2 * 2 * 4 * 4, 26));
    return sum(conv2d(x, w, 2, 1) * conv2d(x, w, 2, 1));
  });
}

TEST_CASE("round_ste forward and backward") {
  Graph g(0);
  Tensor x = g.leaf({7}, {2.4, 3.0, 2.5, 3.5, -2.5, -0.5, 0.5});
  Tensor r = round_ste(x);
  CHECK(r.value() == std::vector<double>{2, 3, 2, 4, -2, 0, 0});
  for (double v : r.value()) CHECK(v == std::floor(v));
  // Backward is exactly identity.
  Tensor loss = sum(r * g.leaf({7}, {1, 2, 3, 4, 5, 6, 7}));
  g.backward(loss);
  CHECK(x.grad() == std::vector<double>{1, 2, 3, 4, 5, 6, 7});
}

TEST_CASE("elementwise values") {
  Graph g(0);
  Tensor x = g.leaf({2}, {-1.0, 2.0});
  CHECK(relu(x).value() == std::vector<double>{0.0, 2.0});
  CHECK(sigmoid(g.scalar(0.0)).scalar() == doctest::Approx(0.5));
  CHECK(exp(g.scalar(0.0)).scalar() == doctest::Approx(1.0));
  CHECK(min_const(x, 0.5).value() == std::vector<double>{-1.0, 0.5});
  CHECK(max_const(x, 0.0).value() == std::vector<double>{0.0, 2.0});
  CHECK(sum(x).scalar() == doctest::Approx(1.0));
  CHECK(mean(x).scalar() == doctest::Approx(0.5));
  CHECK_THROWS_AS(log(x), std::domain_error);
  CHECK_THROWS_AS((void)add(x, g.leaf({3}, {1, 2, 3})), std::invalid_argument);
}

TEST_CASE("elementwise gradients") {
  const auto x0 = random_vec(8, 31, 0.1, 2.0);  // positive, safe for log/div
  gradcheck(x0, [](Graph& g, Tensor p) {
    Tensor c = g.leaf({8}, random_vec(8, 32, 0.5, 1.5));
    return sum(p * c + p / c - c / p);
  });
  gradcheck(x0, [](Graph&, Tensor p) { return sum(log(p) * exp(neg(p))); });
  gradcheck(x0, [](Graph&, Tensor p) { return sum(sigmoid(p) * sigmoid(p)); });
  gradcheck(x0, [](Graph&, Tensor p) { return mean(relu(p - 1.0)); });
  gradcheck(x0, [](Graph&, Tensor p) { return sum(min_const(p, 1.0) + max_const(p, 0.5)); });
  // Scalar broadcast on both sides.
  gradcheck(x0, [](Graph& g, Tensor p) {
    Tensor s = g.scalar(0.7);
    return sum(p * s) + sum(s / p);
  });
  CHECK(std::abs(1.0 / (1.0 + std::exp(0.0)) * (1.0 - 0.5) - 0.25) < 1e-12);
}

TEST_CASE("structural ops gradients") {
  const auto x0 = random_vec(2 * 3 * 2 * 2, 41);
  gradcheck(x0, [](Graph& g, Tensor p) {
    Tensor x = reshape(p, {2, 3, 2, 2});
    Tensor z = g.leaf({3}, {0.5, 1.0, 0.0});
    return sum(scale_channels(x, z, 1));
  });
  gradcheck(x0, [](Graph& g, Tensor p) {
    Tensor x = reshape(p, {4, 6});
    Tensor b = g.leaf({6}, random_vec(6, 42));
    return sum(add_rowvec(x, b) * add_rowvec(x, b));
  });
  gradcheck(x0, [](Graph& g, Tensor p) {
    Tensor x = reshape(p, {2, 3, 2, 2});
    Tensor b = g.leaf({3}, {0.1, -0.2, 0.3});
    return sum(add_channel_bias(x, b) * add_channel_bias(x, b));
  });
  gradcheck(x0, [](Graph&, Tensor p) { return element(p, 5) * element(p, 0); });
  // Gate gradient of the prune vector itself.
  const auto z0 = random_vec(3, 43, 0.1, 0.9);
  gradcheck(z0, [](Graph& g, Tensor p) {
    Tensor x = g.leaf({2, 3, 2, 2}, random_vec(24, 44));
    return sum(scale_channels(x, p, 1) * scale_channels(x, p, 1));
  });
}

TEST_CASE("maxpool") {
  Graph g(0);
  Tensor x = g.leaf({1, 1, 2, 2}, {1, 5, 3, 2});
  Tensor y = maxpool2d(x, 2);
  CHECK(y.value() == std::vector<double>{5});
  g.backward(sum(y));
  CHECK(x.grad() == std::vector<double>{0, 1, 0, 0});

  const auto x0 = random_vec(1 * 2 * 4 * 4, 51);
  gradcheck(x0, [](Graph&, Tensor p) {
    return sum(maxpool2d(reshape(p, {1, 2, 4, 4}), 2));
  });
}

TEST_CASE("softmax cross entropy") {
  Graph g(0);
  Tensor uniform = g.leaf({1, 10}, std::vector<double>(10, 0.3));
  CHECK(softmax_cross_entropy(uniform, {4}).scalar() == doctest::Approx(std::log(10.0)));

  // Large correct-class margin drives the loss to zero.
  std::vector<double> sharp(10, 0.0);
  sharp[2] = 50.0;
  Tensor t = g.leaf({1, 10}, sharp);
  CHECK(softmax_cross_entropy(t, {2}).scalar() < 1e-12);

  CHECK_THROWS_AS(softmax_cross_entropy(uniform, {10}), std::out_of_range);
  CHECK_THROWS_AS(softmax_cross_entropy(uniform, {0, 1}), std::invalid_argument);

  const auto x0 = random_vec(3 * 4, 61);
  gradcheck(x0, [](Graph&, Tensor p) {
    return softmax_cross_entropy(reshape(p, {3, 4}), {0, 3, 1});
  });
  // Gradient equals softmax - one_hot, scaled by 1/N.
  Graph g2(0);
  Tensor lg = g2.leaf({1, 3}, {0.2, 1.1, -0.4});
  Tensor loss = softmax_cross_entropy(lg, {1});
  g2.backward(loss);
  double denom = std::exp(0.2) + std::exp(1.1) + std::exp(-0.4);
  CHECK(lg.grad()[0] == doctest::Approx(std::exp(0.2) / denom));
  CHECK(lg.grad()[1] == doctest::Approx(std::exp(1.1) / denom - 1.0));
}

TEST_CASE("graph determinism and structure") {
  auto run = [] {
    Graph g(99);
    std::vector<double> losses;
    for (int step = 0; step < 5; ++step) {
      Tensor a = g.leaf({4}, {g.uniform01(), g.uniform01(), g.uniform01(), g.uniform01()});
      Tensor l = sum(sigmoid(a) * a);
      g.backward(l);
      losses.push_back(l.scalar());
    }
    return losses;
  };
  CHECK(run() == run());

  // Parent ids precede child ids on the tape.
  Graph g(0);
  Tensor a = g.leaf({2}, {1, 2});
  Tensor b = sigmoid(a);
  Tensor c = a * b;
  for (int id : g.node(c.id()).parents) CHECK(id < c.id());
  CHECK_THROWS_AS(g.backward(c), std::logic_error);  // non-scalar root
}

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "bb/objective.hpp"
#include "bb/quantizer.hpp"
#include "test_util.hpp"

using namespace bb;
using bbtest::random_vec;

TEST_CASE("expected chain-L0 identity") {
  // Hand cases first: q = (1, 0.5, 0) gives 1 + 0.5 + 0 = 1.5;
  // q = (0.5, 0.5, 0.5) gives 0.5 + 0.25 + 0.125 = 0.875.
  {
    const std::vector<double> q{1.0, 0.5, 0.0};
    const auto [lhs, rhs] = l0_identity_check(q);
    CHECK(lhs == doctest::Approx(1.5).epsilon(1e-14));
    CHECK(std::abs(lhs - rhs) < 1e-12);
  }
  {
    const std::vector<double> q{0.5, 0.5, 0.5};
    const auto [lhs, rhs] = l0_identity_check(q);
    CHECK(lhs == doctest::Approx(0.875).epsilon(1e-14));
    CHECK(std::abs(lhs - rhs) < 1e-12);
  }
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> q(1 + trial % 5);
    for (auto& v : q) v = unif(rng);
    const auto [lhs, rhs] = l0_identity_check(q);
    CHECK(std::abs(lhs - rhs) < 1e-12);
  }
}

TEST_CASE("approx penalty converges to the exact chain KL for large lambda") {
  // With lambda = N * lambda', exact_chain_kl(q, lambda) / N approaches
  // approx_gate_penalty(q, lambda') as N grows; the relative gap must shrink
  // by at least 10x between N = 1e3 and N = 1e6.
  std::mt19937_64 rng(103);
  std::uniform_real_distribution<double> unif(0.05, 0.95);
  std::uniform_real_distribution<double> lunif(0.5, 4.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> q(5), lp(5);
    for (auto& v : q) v = unif(rng);
    for (auto& v : lp) v = lunif(rng);
    const double target = approx_gate_penalty(q, lp);
    auto gap = [&](double n) {
      std::vector<double> lam(lp);
      for (auto& v : lam) v *= n;
      return std::abs(exact_chain_kl(q, lam) / n - target) / target;
    };
    const double g3 = gap(1e3), g6 = gap(1e6);
    INFO("trial ", trial, ": gap(1e3) ", g3, " gap(1e6) ", g6);
    CHECK(g6 * 10.0 < g3);
    CHECK(g6 < 5e-4);
  }
}

TEST_CASE("exact_chain_kl is stable for extreme lambda") {
  const std::vector<double> q{0.9, 0.8};
  const std::vector<double> big{1e6, 1e6};
  const double kl = exact_chain_kl(q, big);
  CHECK(std::isfinite(kl));
  // Dominated by lambda * q terms: 0.9e6 + 0.9 * 0.8e6.
  CHECK(kl == doctest::Approx(0.9e6 + 0.9 * 0.8e6).epsilon(1e-5));
  CHECK_THROWS_AS(exact_chain_kl(q, std::vector<double>{1.0}), std::invalid_argument);
}

namespace {

struct RegSetup {
  Quantizer q;
  RegSetup(std::vector<double> phi, std::vector<double> lambda) {
    q.id = "r";
    q.init();
    q.phi_gate = std::move(phi);
    q.lambda = std::move(lambda);
  }

  double value(double mu) {
    Graph g(7);
    QuantizerBinding bind;
    Tensor x = g.leaf({4}, random_vec(4, 5, -0.5, 0.5));
    (void)quantize(x, q, g, QuantizeOptions{}, &bind);
    Quantizer* qp = &q;
    QuantizerBinding* bp = &bind;
    return gate_regularizer(g, {&qp, 1}, {&bp, 1}, mu).scalar();
  }
};

}  // namespace

TEST_CASE("gate_regularizer closed-form value and structure") {
  const std::vector<double> phi{1.0, 0.2, -0.8, -2.0, 0.5};
  const std::vector<double> lambda{1.0, 2.0, 4.0, 8.0, 16.0};
  RegSetup s(phi, lambda);

  // Closed form from open probabilities.
  gates::GateParams hp;
  double want = 0.0, chain = 1.0;
  for (std::size_t i = 0; i < phi.size(); ++i) {
    hp.phi = phi[i];
    chain *= gates::open_probability(hp);
    want += lambda[i] * chain;
  }
  CHECK(s.value(1.0) == doctest::Approx(want).epsilon(1e-12));

  // Linear in mu.
  CHECK(s.value(0.5) == doctest::Approx(0.5 * want).epsilon(1e-12));
  CHECK(s.value(3.0) == doctest::Approx(3.0 * want).epsilon(1e-12));

  // Monotone in each phi.
  RegSetup hi({1.5, 0.2, -0.8, -2.0, 0.5}, lambda);
  CHECK(hi.value(1.0) > s.value(1.0));

  // Wide-open gates approach sum(lambda').
  RegSetup open(std::vector<double>(5, 60.0), lambda);
  CHECK(open.value(1.0) == doctest::Approx(1.0 + 2 + 4 + 8 + 16).epsilon(1e-9));
}

TEST_CASE("gate_regularizer with per-channel prune gates") {
  Quantizer q;
  q.id = "p";
  q.init();
  q.attach_pruning(3, 1);
  q.phi_prune = {0.5, -0.5, 1.5};
  q.lambda = {1.0, 2.0, 4.0, 8.0, 16.0};

  Graph g(9);
  QuantizerBinding bind;
  Tensor x = g.leaf({2, 3}, random_vec(6, 11, -0.5, 0.5));
  (void)quantize(x, q, g, QuantizeOptions{}, &bind);
  Quantizer* qp = &q;
  QuantizerBinding* bp = &bind;
  const double got = gate_regularizer(g, {&qp, 1}, {&bp, 1}, 1.0).scalar();

  gates::GateParams hp;
  auto rp = [&](double phi) {
    hp.phi = phi;
    return gates::open_probability(hp);
  };
  const double rmean = (rp(0.5) + rp(-0.5) + rp(1.5)) / 3.0;
  // Rung 0: (lambda_0 / C) * sum_c R_c = lambda_0 * mean; chain starts at mean.
  double want = q.lambda[0] * rmean;
  double chain = rmean;
  for (std::size_t i = 1; i < 5; ++i) {
    chain *= rp(6.0);
    want += q.lambda[i] * chain;
  }
  CHECK(got == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("regularizer gradient with respect to phi") {
  Quantizer q;
  q.id = "g";
  q.init();
  q.lambda = {1.0, 2.0, 4.0, 8.0, 16.0};
  const std::vector<double> phi0{0.4, -0.3, 0.9, -1.2, 0.1};
  bbtest::gradcheck(phi0, [&](Graph& g, Tensor p) {
    QuantizerBinding bind;
    bind.phi_gate = p;
    bind.beta = g.leaf({1}, {1.0});
    Quantizer* qp = &q;
    QuantizerBinding* bp = &bind;
    return gate_regularizer(g, {&qp, 1}, {&bp, 1}, 0.7);
  });
}

TEST_CASE("total_loss composition") {
  Quantizer q;
  q.id = "t";
  q.init();
  q.lambda = {1.0, 2.0, 4.0, 8.0, 16.0};
  Graph g(13);
  QuantizerBinding bind;
  Tensor x = g.leaf({4}, random_vec(4, 17, -0.5, 0.5));
  (void)quantize(x, q, g, QuantizeOptions{}, &bind);
  Tensor data = g.scalar(2.5);
  Quantizer* qp = &q;
  QuantizerBinding* bp = &bind;
  const double reg = gate_regularizer(g, {&qp, 1}, {&bp, 1}, 0.01).scalar();
  CHECK(total_loss(data, {&qp, 1}, {&bp, 1}, 0.01).scalar() ==
        doctest::Approx(2.5 + reg).epsilon(1e-12));
  // mu == 0 returns the data loss unchanged.
  CHECK(total_loss(data, {&qp, 1}, {&bp, 1}, 0.0).id() == data.id());
}

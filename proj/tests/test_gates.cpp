#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "bb/gates.hpp"
#include "test_util.hpp"

using namespace bb;
using namespace bb::gates;

TEST_CASE("sample_gate support and hand values") {
  GateParams g;
  g.phi = 0.0;
  // u = 0.5 makes the logistic noise vanish: s = sigmoid(0) = 0.5,
  // stretched to 0.5 * 1.2 - 0.1 = 0.5, inside (0, 1) so no clamp.
  CHECK(sample_gate(g, 0.5) == doctest::Approx(0.5));

  // Extreme logits saturate at exactly 0 and exactly 1.
  g.phi = 40.0;
  CHECK(sample_gate(g, 0.5) == 1.0);
  g.phi = -40.0;
  CHECK(sample_gate(g, 0.5) == 0.0);

  g.phi = 0.3;
  CHECK_THROWS_AS(sample_gate(g, 0.0), std::domain_error);
  CHECK_THROWS_AS(sample_gate(g, 1.0), std::domain_error);

  // All samples stay inside [0, 1].
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unif(1e-12, 1.0 - 1e-12);
  for (int i = 0; i < 1000; ++i) {
    const double z = sample_gate(g, unif(rng));
    CHECK(z >= 0.0);
    CHECK(z <= 1.0);
  }
}

TEST_CASE("monte carlo agreement between samples and open_probability") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(1e-12, 1.0 - 1e-12);
  for (double phi : {-2.0, -0.5, 0.0, 1.3, 3.0}) {
    GateParams g;
    g.phi = phi;
    const double p = open_probability(g);
    const int n = 1000000;
    int open = 0;
    for (int i = 0; i < n; ++i)
      if (sample_gate(g, unif(rng)) > 0.0) ++open;
    const double phat = static_cast<double>(open) / n;
    const double se = std::sqrt(p * (1.0 - p) / n);
    INFO("phi ", phi, ": p ", p, " phat ", phat);
    CHECK(std::abs(phat - p) < 3.5 * se + 1e-9);
  }
}

TEST_CASE("open_probability closed form") {
  GateParams g;
  g.phi = 0.0;
  // sigmoid(-tau * log(-gamma/zeta)) = sigmoid((2/3) log 11) ~ 0.83176.
  const double want = 1.0 / (1.0 + std::exp(-(2.0 / 3.0) * std::log(11.0)));
  CHECK(open_probability(g) == doctest::Approx(want).epsilon(1e-12));
  CHECK(open_probability(g) == doctest::Approx(0.83182).epsilon(1e-4));
  CHECK(prob_zero(g) == doctest::Approx(1.0 - want).epsilon(1e-12));
}

TEST_CASE("test_time_gate thresholding") {
  GateParams g;
  g.phi = 6.0;  // init value, wide open
  CHECK(test_time_gate(g) == 1);
  g.phi = -6.0;
  CHECK(test_time_gate(g) == 0);

  // Strict comparison: at P(z = 0) exactly equal to the threshold the gate
  // closes. Solve phi for prob_zero == threshold.
  const double correction = g.tau * std::log(-g.gamma / g.zeta);
  const double phi_at =
      -std::log(1.0 / (1.0 - g.threshold) - 1.0) + correction;
  g.phi = phi_at;
  CHECK(prob_zero(g) == doctest::Approx(g.threshold).epsilon(1e-12));
  CHECK(test_time_gate(g) == 0);
  g.phi = phi_at + 1e-6;
  CHECK(test_time_gate(g) == 1);

  // Monotone in phi.
  int prev = 0;
  for (double phi = -4.0; phi <= 4.0; phi += 0.05) {
    g.phi = phi;
    const int v = test_time_gate(g);
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("kl_bernoulli") {
  CHECK(kl_bernoulli(0.5, 0.5) == doctest::Approx(0.0));
  CHECK(kl_bernoulli(0.0, 0.3) == doctest::Approx(std::log(1.0 / 0.7)));
  CHECK(kl_bernoulli(1.0, 0.3) == doctest::Approx(std::log(1.0 / 0.3)));
  const double q = 0.8, p = 0.2;
  const double want = q * std::log(q / p) + (1 - q) * std::log((1 - q) / (1 - p));
  CHECK(kl_bernoulli(q, p) == doctest::Approx(want).epsilon(1e-12));
  CHECK(std::isinf(kl_bernoulli(0.5, 0.0)));
  CHECK(std::isinf(kl_bernoulli(0.5, 1.0)));
  CHECK(kl_bernoulli(0.3, p) >= 0.0);
}

TEST_CASE("chain_kl matches full enumeration") {
  // Enumerate the joint distribution of an autoregressive on/off chain and
  // compare against the closed-form sum.
  auto enumerated = [](const std::vector<double>& q, const std::vector<double>& p) {
    const std::size_t k = q.size();
    // Chain states: the chain is on through exactly i gates, i in 0..k.
    double kl = 0.0;
    for (std::size_t i = 0; i <= k; ++i) {
      double pq = 1.0, pp = 1.0;
      for (std::size_t j = 0; j < i; ++j) {
        pq *= q[j];
        pp *= p[j];
      }
      if (i < k) {
        pq *= 1.0 - q[i];
        pp *= 1.0 - p[i];
      }
      if (pq > 0.0) kl += pq * std::log(pq / pp);
    }
    return kl;
  };

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(0.05, 0.95);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 1 + trial % 4;
    std::vector<double> q(k), p(k);
    for (auto& v : q) v = unif(rng);
    for (auto& v : p) v = unif(rng);
    const double want = enumerated(q, p);
    CHECK(chain_kl(q, p) == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("tensor gate expressions differentiate through phi") {
  GateParams hyper;
  // Gradient of the sampled gate with respect to phi at a non-clamped point.
  const std::vector<double> phi0{0.2, -0.3, 0.8};
  const std::vector<double> u{0.4, 0.6, 0.55};
  bbtest::gradcheck(phi0, [&](bb::Graph& g, bb::Tensor p) {
    return sum(gates::sample(p, u, hyper) * gates::sample(p, u, hyper));
  });
  bbtest::gradcheck(phi0, [&](bb::Graph&, bb::Tensor p) {
    return sum(gates::open_prob(p, hyper));
  });

  // Values of the tensor versions agree with the scalar versions.
  bb::Graph g(0);
  bb::Tensor p = g.leaf({3}, phi0);
  const auto& zs = gates::sample(p, u, hyper).value();
  const auto& rs = gates::open_prob(p, hyper).value();
  for (std::size_t i = 0; i < phi0.size(); ++i) {
    GateParams gp = hyper;
    gp.phi = phi0[i];
    CHECK(zs[i] == doctest::Approx(sample_gate(gp, u[i])).epsilon(1e-12));
    CHECK(rs[i] == doctest::Approx(open_probability(gp)).epsilon(1e-12));
  }
}

TEST_CASE("gate params validation") {
  GateParams g;
  CHECK_NOTHROW(g.validate());
  g.tau = 0.0;
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
  g = GateParams{};
  g.gamma = 0.1;  // support must straddle zero
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
  g = GateParams{};
  g.zeta = 0.9;  // support must straddle one
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
}

#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "bb/cost_model.hpp"

using namespace bb;

namespace {

LayerCost conv_layer(const std::string& id, std::int64_t ci, std::int64_t co, std::int64_t hw,
                     std::int64_t k, const std::string& wq, const std::string& iq,
                     const std::string& producer = "") {
  LayerCost l;
  l.id = id;
  l.kind = LayerCost::Kind::Conv;
  l.ci = ci;
  l.co = co;
  l.w = hw;
  l.h = hw;
  l.wf = k;
  l.hf = k;
  l.weight_q = wq;
  l.input_q = iq;
  l.producer = producer;
  return l;
}

LayerCost fc_layer(const std::string& id, std::int64_t ci, std::int64_t co,
                   const std::string& wq, const std::string& iq,
                   const std::string& producer = "") {
  LayerCost l;
  l.id = id;
  l.kind = LayerCost::Kind::Fc;
  l.ci = ci;
  l.co = co;
  l.weight_q = wq;
  l.input_q = iq;
  l.producer = producer;
  return l;
}

}  // namespace

TEST_CASE("mac counts") {
  // Conv: co * ci * kh * kw * oh * ow = 16 * 3 * 9 * (32*32)... pick numbers
  // that land on a round value: 16 out, 3 in, 3x3 kernel, 32x32 output.
  CHECK(mac_count(conv_layer("c", 3, 16, 32, 3, "w", "a")) == 3LL * 16 * 3 * 3 * 32 * 32);
  CHECK(mac_count(conv_layer("c", 3, 16, 32, 3, "w", "a")) == 442368);
  CHECK(mac_count(fc_layer("f", 128, 784, "w", "a")) == 100352);
}

TEST_CASE("bop_count reference ratios") {
  const LayerCost l = fc_layer("f", 100, 10, "w", "a");
  const double full = bop_count(l, 32, 32, 1.0, 1.0);
  CHECK(full == doctest::Approx(100.0 * 10 * 32 * 32));
  CHECK(bop_count(l, 8, 8, 1.0, 1.0) / full == doctest::Approx(0.0625));
  CHECK(bop_count(l, 4, 4, 1.0, 1.0) / full == doctest::Approx(0.015625));
  CHECK(bop_count(l, 4, 8, 1.0, 1.0) / full == doctest::Approx(0.03125));
  // Halving both pruning ratios quarters the count.
  CHECK(bop_count(l, 8, 8, 0.5, 0.5) == doctest::Approx(0.25 * bop_count(l, 8, 8, 1.0, 1.0)));
  // Zero bits means the tensor is gone.
  CHECK(bop_count(l, 0, 8, 1.0, 1.0) == 0.0);
  CHECK(bop_count(l, 8, 0, 1.0, 1.0) == 0.0);
}

TEST_CASE("network_bops mixed-precision toy") {
  NetworkCost net;
  net.layers = {fc_layer("l0", 16, 8, "w0", "a0"), fc_layer("l1", 8, 4, "w1", "a1", "l0")};
  net.validate();
  std::map<std::string, QuantizerSummary> s;
  s["w0"] = {8, 1.0};
  s["a0"] = {8, 1.0};
  s["w1"] = {4, 1.0};
  s["a1"] = {4, 1.0};
  const BopTotals t = network_bops(net, s);
  const double full0 = 16.0 * 8 * 32 * 32, full1 = 8.0 * 4 * 32 * 32;
  CHECK(t.per_layer[0] == doctest::Approx(full0 * 0.0625));
  CHECK(t.per_layer[1] == doctest::Approx(full1 * 0.015625));
  CHECK(t.absolute == doctest::Approx(t.per_layer[0] + t.per_layer[1]));
  // 16*8 MACs at 6.25% plus 8*4 MACs at 1.5625%, over 160 MACs total:
  // (128*0.0625 + 32*0.015625)/160 = 8.5/160 = 5.3125%.
  CHECK(t.relative_percent == doctest::Approx(100.0 * 8.5 / 160.0));

  // Uniform 8/8 is exactly 6.25% whatever the architecture.
  for (auto& [k, v] : s) v = {8, 1.0};
  CHECK(network_bops(net, s).relative_percent == doctest::Approx(6.25));

  // Pruning half the producer's outputs halves layer 0 and, through the
  // producer link, halves layer 1's input side too.
  s["w0"] = {8, 0.5};
  const BopTotals tp = network_bops(net, s);
  CHECK(tp.per_layer[0] == doctest::Approx(0.5 * full0 * 0.0625));
  CHECK(tp.per_layer[1] == doctest::Approx(0.5 * full1 * 0.0625));
}

TEST_CASE("lambda_prime scaling") {
  NetworkCost net;
  // Layer l0 has 1024 MACs, layer l1 has 512 MACs; a0 feeds only l0,
  // a_shared feeds both.
  net.layers = {fc_layer("l0", 32, 32, "w0", "a0"), fc_layer("l1", 32, 16, "w1", "a0", "l0")};
  net.validate();
  CHECK(max_macs(net) == 1024);
  // Max-MAC layer at bit 4: lambda' = 4 * 1024 / 1024 = 4.
  CHECK(lambda_prime(4, "w0", net) == doctest::Approx(4.0));
  // Half-max layer at bit 8: 8 * 512 / 1024 = 4.
  CHECK(lambda_prime(8, "w1", net) == doctest::Approx(4.0));
  // Quantizer feeding both layers sums their MACs.
  CHECK(lambda_prime(2, "a0", net) == doctest::Approx(2.0 * 1536 / 1024));
  // Monotone in the bit width.
  double prev = 0.0;
  for (int b : {2, 4, 8, 16, 32}) {
    const double lp = lambda_prime(b, "w0", net);
    CHECK(lp > prev);
    prev = lp;
  }
  CHECK_THROWS_AS(lambda_prime(4, "nope", net), std::invalid_argument);
}

TEST_CASE("nonpower_bins") {
  // Doubling transitions land exactly on the 2^b - 1 grid.
  CHECK(nonpower_bins(2, 4).n == 15);
  CHECK(nonpower_bins(2, 4).discrepancy == 0);
  CHECK(nonpower_bins(4, 8).discrepancy == 0);
  // Non-doubling transitions overshoot or undershoot.
  CHECK(nonpower_bins(2, 3).n == 9);
  CHECK(nonpower_bins(2, 3).discrepancy == 2);
  CHECK(nonpower_bins(2, 8).n == 195);
  CHECK(nonpower_bins(2, 8).discrepancy == -60);
  // Closed form (2^a - 1)(2^(b-a) + 1) for the whole small range, and the
  // discrepancy vanishes exactly when b = 2a.
  for (int a = 2; a < 8; ++a) {
    for (int b = a + 1; b <= 8; ++b) {
      const BinCount bc = nonpower_bins(a, b);
      const std::int64_t closed =
          (std::int64_t(1) << a) - 1 + ((std::int64_t(1) << b) - (std::int64_t(1) << (b - a)));
      CHECK(bc.n == ((std::int64_t(1) << a) - 1) * ((std::int64_t(1) << (b - a)) + 1));
      CHECK(bc.n == closed);
      CHECK(bc.discrepancy == bc.n - ((std::int64_t(1) << b) - 1));
      CHECK((bc.discrepancy == 0) == (b == 2 * a));
    }
  }
  CHECK_THROWS_AS(nonpower_bins(4, 4), std::invalid_argument);
  CHECK_THROWS_AS(nonpower_bins(0, 4), std::invalid_argument);
}

TEST_CASE("network validation") {
  NetworkCost net;
  net.layers = {fc_layer("l0", 16, 8, "w0", "a0"), fc_layer("l1", 8, 4, "w1", "a1", "ghost")};
  CHECK_THROWS_AS(net.validate(), std::invalid_argument);  // unknown producer
  net.layers[1].producer = "l0";
  CHECK_NOTHROW(net.validate());
  net.layers[0].ci = 0;
  CHECK_THROWS_AS(net.validate(), std::invalid_argument);
}

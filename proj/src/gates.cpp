#include "bb/gates.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace bb::gates {

namespace {

double sigmoid_d(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

void GateParams::validate() const {
  if (!(gamma < 0.0)) throw std::invalid_argument("gate: gamma must be < 0");
  if (!(zeta > 1.0)) throw std::invalid_argument("gate: zeta must be > 1");
  if (!(tau > 0.0)) throw std::invalid_argument("gate: tau must be > 0");
  if (!(threshold > 0.0 && threshold < 1.0))
    throw std::invalid_argument("gate: threshold must be in (0, 1)");
}

double sample_gate(const GateParams& g, double u) {
  g.validate();
  if (!(u > 0.0 && u < 1.0)) throw std::domain_error("sample_gate: u must be in (0, 1)");
  const double logit = std::log(u) - std::log1p(-u);
  const double s = sigmoid_d((logit + g.phi) / g.tau);
  const double z = s * (g.zeta - g.gamma) + g.gamma;
  return std::min(1.0, std::max(0.0, z));
}

double open_probability(const GateParams& g) {
  g.validate();
  return sigmoid_d(g.phi - g.tau * std::log(-g.gamma / g.zeta));
}

double prob_zero(const GateParams& g) {
  g.validate();
  return sigmoid_d(g.tau * std::log(-g.gamma / g.zeta) - g.phi);
}

int test_time_gate(const GateParams& g) { return prob_zero(g) < g.threshold ? 1 : 0; }

double kl_bernoulli(double q, double p) {
  if (q < 0.0 || q > 1.0 || p < 0.0 || p > 1.0)
    throw std::invalid_argument("kl_bernoulli: probabilities must be in [0, 1]");
  double kl = 0.0;
  if (q > 0.0) kl += p > 0.0 ? q * std::log(q / p) : std::numeric_limits<double>::infinity();
  if (q < 1.0)
    kl += p < 1.0 ? (1.0 - q) * std::log((1.0 - q) / (1.0 - p))
                  : std::numeric_limits<double>::infinity();
  return kl;
}

double chain_kl(std::span<const double> q, std::span<const double> p) {
  if (q.size() != p.size()) throw std::invalid_argument("chain_kl: length mismatch");
  double kl = 0.0;
  double weight = 1.0;  // product of lower-bit inclusion probabilities
  for (std::size_t i = 0; i < q.size(); ++i) {
    kl += weight * kl_bernoulli(q[i], p[i]);
    weight *= q[i];
  }
  return kl;
}

Tensor sample(const Tensor& phi, const std::vector<double>& u, const GateParams& hyper) {
  hyper.validate();
  if (u.size() != phi.value().size())
    throw std::invalid_argument("gate sample: need one uniform draw per phi element");
  Graph& g = *phi.graph();
  std::vector<double> logits(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!(u[i] > 0.0 && u[i] < 1.0)) throw std::domain_error("gate sample: u must be in (0, 1)");
    logits[i] = std::log(u[i]) - std::log1p(-u[i]);
  }
  Tensor noise = g.leaf(phi.shape(), std::move(logits));
  Tensor s = sigmoid((noise + phi) / hyper.tau);
  return max_const(min_const(s * (hyper.zeta - hyper.gamma) + hyper.gamma, 1.0), 0.0);
}

Tensor open_prob(const Tensor& phi, const GateParams& hyper) {
  hyper.validate();
  return sigmoid(phi - hyper.tau * std::log(-hyper.gamma / hyper.zeta));
}

}  // namespace bb::gates

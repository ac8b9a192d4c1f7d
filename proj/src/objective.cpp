#include "bb/objective.hpp"

#include <cmath>
#include <stdexcept>

namespace bb {

Tensor gate_regularizer(Graph& g, std::span<Quantizer* const> quantizers,
                        std::span<QuantizerBinding* const> bindings, double mu) {
  if (quantizers.size() != bindings.size())
    throw std::invalid_argument("gate_regularizer: binding count mismatch");
  Tensor total = g.scalar(0.0);
  for (std::size_t k = 0; k < quantizers.size(); ++k) {
    Quantizer& q = *quantizers[k];
    QuantizerBinding& b = *bindings[k];
    if (!b.phi_gate.defined())
      throw std::invalid_argument("gate_regularizer: quantizer " + q.id +
                                  " was not bound in sampled mode");
    if (q.lambda.size() != q.ladder.size())
      throw std::invalid_argument("gate_regularizer: quantizer " + q.id +
                                  " is missing lambda' weights");
    Tensor r = gates::open_prob(b.phi_gate, q.hyper);
    Tensor chain;  // running product of inclusion probabilities
    Tensor contrib;
    if (q.prune_axis >= 0) {
      if (!b.phi_prune.defined())
        throw std::invalid_argument("gate_regularizer: quantizer " + q.id +
                                    " has prune gates without a binding");
      Tensor rp = gates::open_prob(b.phi_prune, q.hyper);
      const double per_channel = q.lambda[0] / static_cast<double>(q.phi_prune.size());
      contrib = sum(rp) * per_channel;
      chain = mean(rp);
    } else {
      Tensor r0 = element(r, 0);
      contrib = r0 * q.lambda[0];
      chain = r0;
    }
    for (std::size_t i = 1; i < q.ladder.size(); ++i) {
      chain = chain * element(r, i);
      contrib = contrib + chain * q.lambda[i];
    }
    total = total + contrib;
  }
  return total * mu;
}

Tensor total_loss(const Tensor& data_loss, std::span<Quantizer* const> quantizers,
                  std::span<QuantizerBinding* const> bindings, double mu) {
  if (mu == 0.0) return data_loss;
  return data_loss + gate_regularizer(*data_loss.graph(), quantizers, bindings, mu);
}

double exact_chain_kl(std::span<const double> q, std::span<const double> lambda) {
  if (q.size() != lambda.size()) throw std::invalid_argument("exact_chain_kl: length mismatch");
  double kl = 0.0;
  double weight = 1.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double qi = q[i];
    // KL(Bern(q) || Bern(e^-lambda)) written to avoid forming e^-lambda when
    // it underflows: -H[q] + lambda q - (1-q) log(1 - e^-lambda).
    double term = lambda[i] * qi;
    if (qi > 0.0) term += qi * std::log(qi);
    if (qi < 1.0) term += (1.0 - qi) * std::log(1.0 - qi);
    if (qi < 1.0) term -= (1.0 - qi) * std::log1p(-std::exp(-lambda[i]));
    kl += weight * term;
    weight *= qi;
  }
  return kl;
}

double approx_gate_penalty(std::span<const double> q, std::span<const double> lambda_prime) {
  if (q.size() != lambda_prime.size())
    throw std::invalid_argument("approx_gate_penalty: length mismatch");
  double penalty = 0.0;
  double chain = 1.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    chain *= q[i];
    penalty += lambda_prime[i] * chain;
  }
  return penalty;
}

std::pair<double, double> l0_identity_check(std::span<const double> q) {
  const std::size_t k = q.size();
  if (k > 20) throw std::invalid_argument("l0_identity_check: chain too long to enumerate");
  double lhs = 0.0;
  {
    double chain = 1.0;
    for (double qi : q) {
      chain *= qi;
      lhs += chain;
    }
  }
  // Enumerate all {0,1}^k configurations under the autoregressive chain:
  // a gate can only be on when every lower gate is on.
  double rhs = 0.0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << k); ++mask) {
    double prob = 1.0;
    bool alive = true;
    double count = 0.0;
    double running = 1.0;
    for (std::size_t i = 0; i < k; ++i) {
      const bool on = (mask >> i) & 1u;
      const double p_on = alive ? q[i] : 0.0;
      prob *= on ? p_on : 1.0 - p_on;
      if (!on) alive = false;
      running *= on ? 1.0 : 0.0;
      count += running;
    }
    rhs += prob * count;
  }
  return {lhs, rhs};
}

}  // namespace bb

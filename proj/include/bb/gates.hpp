#pragma once

#include <span>
#include <vector>

#include "bb/tensor.hpp"

namespace bb::gates {

/// Hard-concrete gate hyperparameters. gamma < 0 < 1 < zeta gives the
/// stretched sigmoid support at exact 0 and exact 1; tau is the temperature;
/// threshold is the test-time prune cutoff on P(z = 0).
struct GateParams {
  double phi = 6.0;
  double tau = 2.0 / 3.0;
  double gamma = -0.1;
  double zeta = 1.1;
  double threshold = 0.34;

  void validate() const;
};

/// z = clamp(sigmoid((log(u/(1-u)) + phi)/tau) * (zeta - gamma) + gamma, 0, 1).
/// u must lie strictly inside (0, 1).
double sample_gate(const GateParams& g, double u);

/// P(z > 0) = sigmoid(phi - tau * log(-gamma/zeta)).
double open_probability(const GateParams& g);

/// P(z = 0) = 1 - open_probability.
double prob_zero(const GateParams& g);

/// Deterministic test-time gate: 1 iff P(z = 0) < threshold (strict).
int test_time_gate(const GateParams& g);

/// KL(Bern(q) || Bern(p)); conventions 0*log 0 = 0, log of 0 in the second
/// argument yields +infinity.
double kl_bernoulli(double q, double p);

/// KL between two autoregressive gate chains, ordered by ascending bit width:
/// sum_i (prod_{j<i} q_j) * kl_bernoulli(q_i, p_i).
double chain_kl(std::span<const double> q, std::span<const double> p);

// Tensor-expression versions, differentiable with respect to phi.

/// Samples one gate per phi element; u must have one draw per element.
Tensor sample(const Tensor& phi, const std::vector<double>& u, const GateParams& hyper);

/// Elementwise open probability sigmoid(phi - tau log(-gamma/zeta)).
Tensor open_prob(const Tensor& phi, const GateParams& hyper);

}  // namespace bb::gates

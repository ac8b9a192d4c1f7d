#pragma once

#include <span>
#include <utility>
#include <vector>

#include "bb/quantizer.hpp"
#include "bb/tensor.hpp"

namespace bb {

/// BOP-weighted expected-gate penalty:
///   mu * sum_k sum_i lambda'_ik * prod_{j <= i} R(z_jk > 0),
/// built from the same phi leaves the forward pass sampled through, so one
/// backward pass accumulates both data and regularizer gradients.
/// Per-channel prune gates contribute (lambda'_0 / C) * sum_c R(phi_c) at
/// rung 0 and enter the higher-rung products through their mean.
Tensor gate_regularizer(Graph& g, std::span<Quantizer* const> quantizers,
                        std::span<QuantizerBinding* const> bindings, double mu);

/// data_loss + gate_regularizer. With mu == 0 the regularizer is skipped.
Tensor total_loss(const Tensor& data_loss, std::span<Quantizer* const> quantizers,
                  std::span<QuantizerBinding* const> bindings, double mu);

/// Exact KL between the autoregressive posterior chain q and the prior chain
/// with per-gate success probability exp(-lambda_i). Numerically stable for
/// very large lambda.
double exact_chain_kl(std::span<const double> q, std::span<const double> lambda);

/// The large-N surrogate the training objective actually uses:
/// sum_i lambda'_i * prod_{j <= i} q_j.
double approx_gate_penalty(std::span<const double> q, std::span<const double> lambda_prime);

/// Expected chain-L0 identity: lhs is the closed form
/// sum_i prod_{j <= i} q_j; rhs is the expectation of
/// sum_i prod_{j <= i} 1[z_j != 0] by enumeration over all chain
/// configurations. The two agree exactly.
std::pair<double, double> l0_identity_check(std::span<const double> q);

}  // namespace bb

#include "bb/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bb {

void Quantizer::init(double phi0) {
  phi_gate.assign(ladder.size(), phi0);
  if (!phi_prune.empty()) phi_prune.assign(phi_prune.size(), phi0);
  if (lambda.empty()) lambda.assign(ladder.size(), 1.0);
  validate();
}

void Quantizer::attach_pruning(std::size_t channels, std::size_t axis) {
  prune_axis = static_cast<int>(axis);
  const double phi0 = phi_gate.empty() ? 6.0 : phi_gate[0];
  phi_prune.assign(channels, phi0);
}

void Quantizer::observe_range(const std::vector<double>& values) {
  double mx = 0.0;
  for (double v : values) mx = std::max(mx, std::abs(v));
  if (mx <= 0.0) mx = 1e-8;
  // EMA of the batch max, momentum 0.9; first batch seeds directly.
  beta = ema_seen == 0 ? mx : 0.9 * beta + 0.1 * mx;
  ++ema_seen;
}

void Quantizer::validate() const {
  if (ladder.empty()) throw std::invalid_argument("quantizer " + id + ": empty ladder");
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    if (ladder[i] <= 0) throw std::invalid_argument("quantizer " + id + ": bad ladder entry");
    if (i > 0 && ladder[i] != 2 * ladder[i - 1])
      throw std::invalid_argument("quantizer " + id + ": ladder must double at every rung");
  }
  if (phi_gate.size() != ladder.size())
    throw std::invalid_argument("quantizer " + id + ": one gate logit per rung required");
  if (prune_axis >= 0 && phi_prune.empty())
    throw std::invalid_argument("quantizer " + id + ": prune axis set without channel gates");
  hyper.validate();
}

Tensor pact_clip(const Tensor& x, const Tensor& beta, bool is_signed) {
  if (beta.scalar() <= 0.0) throw std::invalid_argument("pact_clip: beta must be > 0");
  Graph& g = *x.graph();
  Tensor beta_eps = beta * (1.0 - 1e-7);
  Tensor alpha = is_signed ? neg(beta) : g.scalar(0.0);
  return beta_eps - relu(beta_eps - alpha - relu(x - alpha));
}

std::vector<double> step_sizes(const Quantizer& q) {
  q.validate();
  const double range = q.is_signed ? 2.0 * q.beta : q.beta;
  std::vector<double> s;
  s.reserve(q.ladder.size());
  for (int b : q.ladder) s.push_back(range / (std::exp2(b) - 1.0));
  return s;
}

namespace {

gates::GateParams with_phi(const gates::GateParams& hyper, double phi) {
  gates::GateParams g = hyper;
  g.phi = phi;
  return g;
}

}  // namespace

Tensor quantize(const Tensor& x, Quantizer& q, Graph& g, const QuantizeOptions& opt,
                QuantizerBinding* binding) {
  q.validate();
  if (q.beta <= 0.0) throw std::invalid_argument("quantizer " + q.id + ": beta must be > 0");
  const std::size_t rungs = q.ladder.size();
  const bool pruning = q.prune_axis >= 0;
  if (pruning) {
    if (static_cast<std::size_t>(q.prune_axis) >= x.shape().size() ||
        x.shape()[static_cast<std::size_t>(q.prune_axis)] != q.phi_prune.size())
      throw std::invalid_argument("quantizer " + q.id + ": prune axis/channel mismatch for " +
                                  shape_str(x.shape()));
  }
  if (opt.mode == GateMode::Forced && opt.forced.size() != rungs)
    throw std::invalid_argument("quantizer " + q.id + ": forced gates need one value per rung");

  QuantizerBinding local;
  QuantizerBinding& bind = binding ? *binding : local;
  bind.beta = g.leaf({1}, {q.beta});

  // Gate values per rung. Rung 0 may be per-channel.
  std::vector<Tensor> z(rungs);
  bind.gate_values.assign(rungs, 0.0);
  if (opt.mode == GateMode::Sampled) {
    bind.phi_gate = g.leaf({rungs}, q.phi_gate);
    std::vector<double> u(rungs);
    for (auto& v : u) v = g.uniform01();
    Tensor zs = gates::sample(bind.phi_gate, u, q.hyper);
    // Split the sampled vector into per-rung scalars so the nesting below
    // stays shape-uniform.
    for (std::size_t i = 0; i < rungs; ++i) {
      z[i] = element(zs, i);
      bind.gate_values[i] = z[i].value()[0];
    }
    if (pruning) {
      bind.phi_prune = g.leaf({q.phi_prune.size()}, q.phi_prune);
      std::vector<double> up(q.phi_prune.size());
      for (auto& v : up) v = g.uniform01();
      z[0] = gates::sample(bind.phi_prune, up, q.hyper);
      double acc = 0.0;
      for (double v : z[0].value()) acc += v;
      bind.gate_values[0] = acc / static_cast<double>(z[0].value().size());
    }
  } else {
    std::vector<double> vals(rungs);
    if (opt.mode == GateMode::Forced) {
      vals = opt.forced;
    } else {
      for (std::size_t i = 0; i < rungs; ++i)
        vals[i] = gates::test_time_gate(with_phi(q.hyper, q.phi_gate[i]));
    }
    for (std::size_t i = 0; i < rungs; ++i) {
      z[i] = g.scalar(vals[i]);
      bind.gate_values[i] = vals[i];
    }
    if (pruning && opt.mode == GateMode::Deterministic) {
      std::vector<double> ch(q.phi_prune.size());
      double acc = 0.0;
      for (std::size_t c = 0; c < ch.size(); ++c) {
        ch[c] = gates::test_time_gate(with_phi(q.hyper, q.phi_prune[c]));
        acc += ch[c];
      }
      const std::size_t channels = ch.size();
      z[0] = g.leaf({channels}, std::move(ch));
      bind.gate_values[0] = acc / static_cast<double>(q.phi_prune.size());
    }
    // Forced mode applies the rung-0 value to all channels.
  }

  Tensor xc = pact_clip(x, bind.beta, q.is_signed);
  Tensor range = q.is_signed ? bind.beta * 2.0 : bind.beta;

  // Residual-doubling decomposition. x_prev accumulates ungated residuals.
  std::vector<Tensor> eps(rungs);
  Tensor s0 = range / (std::exp2(q.ladder[0]) - 1.0);
  Tensor x2 = s0 * round_ste(xc / s0);
  Tensor x_prev = x2;
  for (std::size_t i = 1; i < rungs; ++i) {
    Tensor s = range / (std::exp2(q.ladder[i]) - 1.0);
    eps[i] = s * round_ste((xc - x_prev) / s);
    x_prev = x_prev + eps[i];
  }

  // x_q = z2 (x2 + z4 (eps4 + z8 (eps8 + ...)))
  Tensor core = x2;
  if (rungs > 1) {
    Tensor t = eps[rungs - 1];
    for (std::size_t i = rungs - 2; i >= 1; --i) t = eps[i] + z[i + 1] * t;
    core = x2 + z[1] * t;
  }
  if (z[0].value().size() > 1)
    return scale_channels(core, z[0], static_cast<std::size_t>(q.prune_axis));
  return z[0] * core;
}

EffectiveBits effective_bitwidth(const Quantizer& q) {
  q.validate();
  EffectiveBits out;
  bool base_on;
  if (q.prune_axis >= 0) {
    std::size_t kept = 0;
    for (double phi : q.phi_prune)
      kept += static_cast<std::size_t>(gates::test_time_gate(with_phi(q.hyper, phi)));
    out.prune_ratio = static_cast<double>(kept) / static_cast<double>(q.phi_prune.size());
    base_on = kept > 0;
  } else {
    base_on = gates::test_time_gate(with_phi(q.hyper, q.phi_gate[0])) == 1;
    out.prune_ratio = base_on ? 1.0 : 0.0;
  }
  if (!base_on) {
    out.bits = 0;
    return out;
  }
  out.bits = q.ladder[0];
  for (std::size_t i = 1; i < q.ladder.size(); ++i) {
    if (gates::test_time_gate(with_phi(q.hyper, q.phi_gate[i])) != 1) break;
    out.bits = q.ladder[i];
  }
  return out;
}

std::vector<double> forced_gates_for_bits(const Quantizer& q, int bits) {
  std::vector<double> forced(q.ladder.size(), 0.0);
  if (bits == 0) return forced;
  bool found = false;
  for (std::size_t i = 0; i < q.ladder.size(); ++i) {
    if (q.ladder[i] <= bits) forced[i] = 1.0;
    if (q.ladder[i] == bits) found = true;
  }
  if (!found) throw std::invalid_argument("forced_gates_for_bits: " + std::to_string(bits) +
                                          " not on the ladder");
  return forced;
}

}  // namespace bb

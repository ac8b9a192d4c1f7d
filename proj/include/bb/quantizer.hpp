#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bb/gates.hpp"
#include "bb/tensor.hpp"

namespace bb {

/// How gate values are produced during a quantizer forward pass.
enum class GateMode {
  Sampled,        // hard-concrete samples, differentiable w.r.t. phi
  Deterministic,  // test-time thresholding, constants in {0, 1}
  Forced,         // caller-supplied constants (oracles, sensitivity sweeps)
};

/// Per-tensor quantizer: learnable range beta, the residual-doubling bit
/// ladder, one hard-concrete gate per rung and optionally per-channel
/// 2-bit (pruning) gates along prune_axis.
struct Quantizer {
  std::string id;
  double beta = 1.0;
  bool is_signed = true;
  std::vector<int> ladder{2, 4, 8, 16, 32};
  gates::GateParams hyper;            // tau/gamma/zeta/threshold shared by all gates
  std::vector<double> phi_gate;       // one logit per ladder rung
  int prune_axis = -1;                // -1: no pruning; else tensor dim index
  std::vector<double> phi_prune;      // per-channel 2-bit logits when pruning
  std::vector<double> lambda;         // lambda' regularization weight per rung

  // Activation range warm-up: exponential moving average of the batch max
  // before beta becomes learnable.
  bool is_activation = false;
  int ema_batches = 20;
  int ema_seen = 0;

  void init(double phi0 = 6.0);
  void attach_pruning(std::size_t channels, std::size_t axis);
  bool range_frozen() const { return is_activation && ema_seen < ema_batches; }
  void observe_range(const std::vector<double>& values);
  void validate() const;
};

/// Per-forward-pass leaf bindings; gradients land here after backward.
struct QuantizerBinding {
  Tensor beta;
  Tensor phi_gate;   // defined only in Sampled mode
  Tensor phi_prune;  // defined only in Sampled mode with pruning
  std::vector<double> gate_values;  // realized gate value per rung (mean over channels for rung 0)
};

struct QuantizeOptions {
  GateMode mode = GateMode::Sampled;
  std::vector<double> forced;  // per-rung gate values for GateMode::Forced
};

/// PACT clip beta' - relu(beta' - alpha - relu(x - alpha)) with
/// beta' = (1 - 1e-7) * beta; alpha = -beta when signed, else 0.
Tensor pact_clip(const Tensor& x, const Tensor& beta, bool is_signed);

/// Step size per ladder rung: s_b = (beta - alpha) / (2^b - 1).
std::vector<double> step_sizes(const Quantizer& q);

/// Full gated residual-doubling forward pass. Reads x as the raw tensor
/// (clipping happens inside). Binding receives the parameter leaves.
Tensor quantize(const Tensor& x, Quantizer& q, Graph& g, const QuantizeOptions& opt,
                QuantizerBinding* binding = nullptr);

struct EffectiveBits {
  int bits = 0;               // 0 when pruned everywhere
  double prune_ratio = 1.0;   // fraction of channels kept
};

/// Deterministic (test-time) readout of the gate chain.
EffectiveBits effective_bitwidth(const Quantizer& q);

/// Forced gate vector that turns the chain on exactly through `bits`
/// (0 prunes everything).
std::vector<double> forced_gates_for_bits(const Quantizer& q, int bits);

}  // namespace bb

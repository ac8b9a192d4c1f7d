#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace bb {

/// Static per-layer compute description; the source of MAC counts, BOP
/// accounting and lambda' regularization weights.
struct LayerCost {
  enum class Kind { Conv, Fc };
  std::string id;
  Kind kind = Kind::Fc;
  std::int64_t ci = 0, co = 0;
  std::int64_t w = 0, h = 0;    // output spatial size (conv only)
  std::int64_t wf = 0, hf = 0;  // kernel size (conv only)
  std::string weight_q;         // weight quantizer id
  std::string input_q;          // input activation quantizer id
  /// Layer whose output-channel pruning feeds this layer's input; empty when
  /// the input has no single producer (network input, residual joins), in
  /// which case no input-pruning credit is taken.
  std::string producer;
};

struct NetworkCost {
  std::vector<LayerCost> layers;
  void validate() const;
  const LayerCost* find(const std::string& layer_id) const;
};

std::int64_t mac_count(const LayerCost& l);
std::int64_t max_macs(const NetworkCost& net);

/// p_i * p_o * MACs * b_w * b_a; zero bit width means pruned away entirely.
double bop_count(const LayerCost& l, int b_w, int b_a, double p_i, double p_o);

/// lambda'_{jk} = b_j * (sum of MACs over consumer layers of quantizer k)
///             / max layer MACs. Throws if the quantizer feeds no layer.
double lambda_prime(int bit, const std::string& quantizer_id, const NetworkCost& net);

struct QuantizerSummary {
  int bits = 32;
  double prune_ratio = 1.0;
};

struct BopTotals {
  double absolute = 0.0;
  double relative_percent = 0.0;       // vs all layers at 32/32 unpruned
  std::vector<double> per_layer;       // aligned with net.layers
};

BopTotals network_bops(const NetworkCost& net,
                       const std::map<std::string, QuantizerSummary>& summaries);

struct BinCount {
  std::int64_t n = 0;            // number of bins for an a -> b transition
  std::int64_t discrepancy = 0;  // n - (2^b - 1), signed
};

/// Bin count for a non-doubling bit-width transition a -> b (0 < a < b):
/// N = 2^b + 2^a - 2^(b-a) - 1, equivalently (2^a - 1)(2^(b-a) + 1).
BinCount nonpower_bins(int a, int b);

}  // namespace bb

#pragma once

#include <map>
#include <optional>
#include <vector>

#include "bb/archspec.hpp"
#include "bb/cost_model.hpp"
#include "bb/data.hpp"
#include "bb/quantizer.hpp"
#include "bb/tensor.hpp"

namespace bb {

/// Executable layer; weights live here, quantizers are indices into
/// Model::quantizers so the cost model and training engine can address them.
struct ModelLayer {
  LayerDecl decl;
  Shape in_shape;            // per-sample shape entering this layer
  Shape out_shape;
  std::vector<double> weight;  // fc: [in, out]; conv: [co, ci, k, k]
  std::vector<double> bias;
  int weight_q = -1;           // quantizer index, -1 for maxpool
  int input_q = -1;
};

class Model {
 public:
  Model(ArchSpec spec, std::uint64_t seed);

  const ArchSpec& arch() const { return arch_; }
  std::vector<ModelLayer>& layers() { return layers_; }
  const std::vector<ModelLayer>& layers() const { return layers_; }
  std::vector<Quantizer>& quantizers() { return quantizers_; }
  const std::vector<Quantizer>& quantizers() const { return quantizers_; }
  const NetworkCost& cost() const { return cost_; }

  struct Forward {
    Tensor logits;
    std::vector<QuantizerBinding> bindings;   // aligned with quantizers()
    std::vector<Tensor> weight_leaves;        // aligned with layers()
    std::vector<Tensor> bias_leaves;
  };

  /// Runs the network on a batch. `forced_bits`, when given, overrides gate
  /// decisions per quantizer id (0 prunes; otherwise chain on through that
  /// rung). In Sampled mode activation quantizers still warming up their
  /// range EMA observe the batch.
  Forward forward(Graph& g, const Dataset& data, const std::vector<std::size_t>& batch,
                  GateMode mode, const std::map<std::string, int>* forced_bits = nullptr);

  double eval_accuracy(const Dataset& data, std::size_t batch_size = 256,
                       const std::map<std::string, int>* forced_bits = nullptr);

  /// Deterministic per-quantizer readout (effective bits, prune ratio),
  /// optionally overridden by forced bit widths.
  std::map<std::string, QuantizerSummary> summaries(
      const std::map<std::string, int>* forced_bits = nullptr) const;

  BopTotals bops(const std::map<std::string, int>* forced_bits = nullptr) const;

  /// Order-stable fingerprint of all weight/bias values.
  std::uint64_t weight_checksum() const;

  /// Re-derives beta for weight quantizers from the current weights
  /// (max |w|); used after loading pretrained weights.
  void reset_weight_ranges();

 private:
  ArchSpec arch_;
  std::vector<ModelLayer> layers_;
  std::vector<Quantizer> quantizers_;
  NetworkCost cost_;
};

}  // namespace bb

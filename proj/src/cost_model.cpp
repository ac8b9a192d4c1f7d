#include "bb/cost_model.hpp"

#include <algorithm>
#include <stdexcept>

namespace bb {

void NetworkCost::validate() const {
  for (const auto& l : layers) {
    if (mac_count(l) <= 0) throw std::invalid_argument("layer " + l.id + ": MACs must be > 0");
    if (!l.producer.empty() && !find(l.producer))
      throw std::invalid_argument("layer " + l.id + ": unknown producer " + l.producer);
  }
}

const LayerCost* NetworkCost::find(const std::string& layer_id) const {
  for (const auto& l : layers)
    if (l.id == layer_id) return &l;
  return nullptr;
}

std::int64_t mac_count(const LayerCost& l) {
  if (l.kind == LayerCost::Kind::Fc) return l.ci * l.co;
  return l.co * l.w * l.h * l.ci * l.wf * l.hf;
}

std::int64_t max_macs(const NetworkCost& net) {
  std::int64_t mx = 0;
  for (const auto& l : net.layers) mx = std::max(mx, mac_count(l));
  return mx;
}

double bop_count(const LayerCost& l, int b_w, int b_a, double p_i, double p_o) {
  if (b_w < 0 || b_a < 0) throw std::invalid_argument("bop_count: negative bit width");
  if (p_i < 0.0 || p_i > 1.0 || p_o < 0.0 || p_o > 1.0)
    throw std::invalid_argument("bop_count: pruning ratios must be in [0, 1]");
  return p_i * p_o * static_cast<double>(mac_count(l)) * b_w * b_a;
}

double lambda_prime(int bit, const std::string& quantizer_id, const NetworkCost& net) {
  std::int64_t consumed = 0;
  for (const auto& l : net.layers)
    if (l.weight_q == quantizer_id || l.input_q == quantizer_id) consumed += mac_count(l);
  if (consumed == 0)
    throw std::invalid_argument("lambda_prime: quantizer " + quantizer_id +
                                " is not attached to any layer");
  return static_cast<double>(bit) * static_cast<double>(consumed) /
         static_cast<double>(max_macs(net));
}

BopTotals network_bops(const NetworkCost& net,
                       const std::map<std::string, QuantizerSummary>& summaries) {
  net.validate();
  auto lookup = [&](const std::string& id) -> const QuantizerSummary& {
    auto it = summaries.find(id);
    if (it == summaries.end())
      throw std::invalid_argument("network_bops: no summary for quantizer " + id);
    return it->second;
  };
  BopTotals out;
  double full = 0.0;
  for (const auto& l : net.layers) {
    const auto& wq = lookup(l.weight_q);
    const auto& aq = lookup(l.input_q);
    double p_i = 1.0;
    if (!l.producer.empty()) p_i = lookup(net.find(l.producer)->weight_q).prune_ratio;
    const double bops = bop_count(l, wq.bits, aq.bits, p_i, wq.prune_ratio);
    out.per_layer.push_back(bops);
    out.absolute += bops;
    full += static_cast<double>(mac_count(l)) * 32.0 * 32.0;
  }
  out.relative_percent = 100.0 * out.absolute / full;
  return out;
}

BinCount nonpower_bins(int a, int b) {
  if (!(0 < a && a < b) || b > 62)
    throw std::invalid_argument("nonpower_bins: require 0 < a < b");
  const std::int64_t n = ((std::int64_t{1} << a) - 1) * ((std::int64_t{1} << (b - a)) + 1);
  return BinCount{n, n - ((std::int64_t{1} << b) - 1)};
}

}  // namespace bb

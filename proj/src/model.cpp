#include "bb/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace bb {

namespace {

// Kaiming-style uniform init, bound 1/sqrt(fan_in).
void init_uniform(std::vector<double>& v, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& x : v) x = dist(rng);
}

}  // namespace

Model::Model(ArchSpec spec, std::uint64_t seed) : arch_(std::move(spec)) {
  arch_.validate();
  std::mt19937_64 rng(seed);

  Shape s = arch_.input_shape;
  int weighted_seen = 0;
  const int weighted_total = static_cast<int>(
      std::count_if(arch_.layers.begin(), arch_.layers.end(),
                    [](const LayerDecl& l) { return l.kind != LayerDecl::Kind::MaxPool; }));
  bool prev_relu = false;
  std::string prev_weighted_layer;  // producer for input-pruning credit

  for (std::size_t i = 0; i < arch_.layers.size(); ++i) {
    const LayerDecl& decl = arch_.layers[i];
    ModelLayer layer;
    layer.decl = decl;
    layer.in_shape = s;

    if (decl.kind == LayerDecl::Kind::MaxPool) {
      layer.out_shape = {s[0], s[1] / static_cast<std::size_t>(decl.kernel),
                         s[2] / static_cast<std::size_t>(decl.kernel)};
      s = layer.out_shape;
      layers_.push_back(std::move(layer));
      continue;
    }

    const bool is_last = ++weighted_seen == weighted_total;
    const std::string lid = "layer" + std::to_string(i);

    // Input activation quantizer. Post-ReLU activations are unsigned;
    // the raw network input is signed.
    Quantizer aq;
    aq.id = "a" + std::to_string(i);
    aq.is_signed = !prev_relu;
    aq.is_activation = true;
    aq.init();
    quantizers_.push_back(std::move(aq));
    layer.input_q = static_cast<int>(quantizers_.size()) - 1;

    Quantizer wq;
    wq.id = "w" + std::to_string(i);
    wq.is_signed = true;
    wq.init();

    LayerCost lc;
    lc.id = lid;
    lc.weight_q = wq.id;
    lc.input_q = quantizers_[static_cast<std::size_t>(layer.input_q)].id;
    lc.producer = prev_weighted_layer;

    if (decl.kind == LayerDecl::Kind::Fc) {
      const std::size_t in = numel(s);
      layer.weight.resize(in * decl.out);
      layer.bias.resize(decl.out);
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      init_uniform(layer.weight, bound, rng);
      init_uniform(layer.bias, bound, rng);
      if (arch_.prune && !is_last) wq.attach_pruning(decl.out, 1);
      layer.out_shape = {decl.out};
      lc.kind = LayerCost::Kind::Fc;
      lc.ci = static_cast<std::int64_t>(in);
      lc.co = static_cast<std::int64_t>(decl.out);
    } else {
      const std::size_t ci = s[0];
      const std::size_t k = static_cast<std::size_t>(decl.kernel);
      layer.weight.resize(decl.out * ci * k * k);
      layer.bias.resize(decl.out);
      const double bound = 1.0 / std::sqrt(static_cast<double>(ci * k * k));
      init_uniform(layer.weight, bound, rng);
      init_uniform(layer.bias, bound, rng);
      if (arch_.prune && !is_last) wq.attach_pruning(decl.out, 0);
      const std::size_t oh = (s[1] + 2 * static_cast<std::size_t>(decl.pad) - k) /
                                 static_cast<std::size_t>(decl.stride) + 1;
      const std::size_t ow = (s[2] + 2 * static_cast<std::size_t>(decl.pad) - k) /
                                 static_cast<std::size_t>(decl.stride) + 1;
      layer.out_shape = {decl.out, oh, ow};
      lc.kind = LayerCost::Kind::Conv;
      lc.ci = static_cast<std::int64_t>(ci);
      lc.co = static_cast<std::int64_t>(decl.out);
      lc.h = static_cast<std::int64_t>(oh);
      lc.w = static_cast<std::int64_t>(ow);
      lc.hf = decl.kernel;
      lc.wf = decl.kernel;
    }

    double wmax = 0.0;
    for (double v : layer.weight) wmax = std::max(wmax, std::abs(v));
    wq.beta = wmax > 0.0 ? wmax : 1.0;
    wq.init();
    quantizers_.push_back(std::move(wq));
    layer.weight_q = static_cast<int>(quantizers_.size()) - 1;

    cost_.layers.push_back(std::move(lc));
    prev_weighted_layer = lid;
    prev_relu = decl.relu;
    s = layer.out_shape;
    layers_.push_back(std::move(layer));
  }

  // lambda' weights per rung: b_j * consumer MACs / max MACs.
  cost_.validate();
  for (auto& q : quantizers_) {
    q.lambda.resize(q.ladder.size());
    for (std::size_t i = 0; i < q.ladder.size(); ++i)
      q.lambda[i] = lambda_prime(q.ladder[i], q.id, cost_);
  }
}

Model::Forward Model::forward(Graph& g, const Dataset& data,
                              const std::vector<std::size_t>& batch, GateMode mode,
                              const std::map<std::string, int>* forced_bits) {
  const std::size_t n = batch.size();
  const std::size_t ss = data.sample_size();
  std::vector<double> xb(n * ss);
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(data.images.data() + batch[i] * ss, ss, xb.data() + i * ss);

  Shape xshape;
  if (arch_.input_shape.size() == 3)
    xshape = {n, arch_.input_shape[0], arch_.input_shape[1], arch_.input_shape[2]};
  else
    xshape = {n, numel(arch_.input_shape)};
  Tensor x = g.leaf(xshape, std::move(xb));

  Forward fwd;
  fwd.bindings.resize(quantizers_.size());
  fwd.weight_leaves.resize(layers_.size());
  fwd.bias_leaves.resize(layers_.size());

  auto run_quantizer = [&](int qi, const Tensor& t) {
    Quantizer& q = quantizers_[static_cast<std::size_t>(qi)];
    QuantizeOptions opt;
    opt.mode = mode;
    if (forced_bits) {
      auto it = forced_bits->find(q.id);
      if (it != forced_bits->end()) {
        opt.mode = GateMode::Forced;
        opt.forced = forced_gates_for_bits(q, it->second);
      }
    }
    if (mode == GateMode::Sampled && q.range_frozen()) q.observe_range(t.value());
    return quantize(t, q, g, opt, &fwd.bindings[static_cast<std::size_t>(qi)]);
  };

  for (std::size_t li = 0; li < layers_.size(); ++li) {
    ModelLayer& layer = layers_[li];
    if (layer.decl.kind == LayerDecl::Kind::MaxPool) {
      x = maxpool2d(x, layer.decl.kernel);
      continue;
    }
    // Flatten a spatial tensor entering an fc layer.
    if (layer.decl.kind == LayerDecl::Kind::Fc && x.shape().size() != 2)
      x = reshape(x, {n, numel(layer.in_shape)});

    x = run_quantizer(layer.input_q, x);

    Tensor w = g.leaf(layer.decl.kind == LayerDecl::Kind::Fc
                          ? Shape{numel(layer.in_shape), layer.decl.out}
                          : Shape{layer.decl.out, layer.in_shape[0],
                                  static_cast<std::size_t>(layer.decl.kernel),
                                  static_cast<std::size_t>(layer.decl.kernel)},
                      layer.weight);
    fwd.weight_leaves[li] = w;
    Tensor wq = run_quantizer(layer.weight_q, w);

    Tensor b = g.leaf({layer.bias.size()}, layer.bias);
    fwd.bias_leaves[li] = b;

    if (layer.decl.kind == LayerDecl::Kind::Fc) {
      x = add_rowvec(matmul(x, wq), b);
    } else {
      x = add_channel_bias(conv2d(x, wq, layer.decl.stride, layer.decl.pad), b);
    }
    if (layer.decl.relu) x = relu(x);
  }
  fwd.logits = x;
  return fwd;
}

double Model::eval_accuracy(const Dataset& data, std::size_t batch_size,
                            const std::map<std::string, int>* forced_bits) {
  std::size_t correct = 0;
  const std::size_t c = static_cast<std::size_t>(arch_.classes);
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(start + batch_size, data.size());
    std::vector<std::size_t> batch(end - start);
    for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = start + i;
    Graph g(0);
    Forward fwd = forward(g, data, batch, GateMode::Deterministic, forced_bits);
    const auto& lv = fwd.logits.value();
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const double* row = lv.data() + i * c;
      const std::size_t pred =
          static_cast<std::size_t>(std::max_element(row, row + c) - row);
      if (static_cast<int>(pred) == data.labels[batch[i]]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::map<std::string, QuantizerSummary> Model::summaries(
    const std::map<std::string, int>* forced_bits) const {
  std::map<std::string, QuantizerSummary> out;
  for (const auto& q : quantizers_) {
    QuantizerSummary s;
    if (forced_bits && forced_bits->contains(q.id)) {
      s.bits = forced_bits->at(q.id);
      s.prune_ratio = s.bits == 0 ? 0.0 : 1.0;
    } else {
      const EffectiveBits eb = effective_bitwidth(q);
      s.bits = eb.bits;
      s.prune_ratio = eb.prune_ratio;
    }
    out[q.id] = s;
  }
  return out;
}

BopTotals Model::bops(const std::map<std::string, int>* forced_bits) const {
  return network_bops(cost_, summaries(forced_bits));
}

std::uint64_t Model::weight_checksum() const {
  // FNV-1a over the raw bytes of all weights and biases.
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const std::vector<double>& v) {
    const auto* p = reinterpret_cast<const unsigned char*>(v.data());
    for (std::size_t i = 0; i < v.size() * sizeof(double); ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& l : layers_) {
    mix(l.weight);
    mix(l.bias);
  }
  return h;
}

void Model::reset_weight_ranges() {
  for (auto& layer : layers_) {
    if (layer.weight_q < 0) continue;
    double wmax = 0.0;
    for (double v : layer.weight) wmax = std::max(wmax, std::abs(v));
    quantizers_[static_cast<std::size_t>(layer.weight_q)].beta = wmax > 0.0 ? wmax : 1.0;
  }
}

}  // namespace bb

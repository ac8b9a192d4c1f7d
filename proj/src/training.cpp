#include "bb/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "bb/objective.hpp"

namespace bb {

std::uint64_t step_seed(std::uint64_t seed, std::uint64_t epoch, std::uint64_t batch) {
  // One splitmix64 round per component. Each piece is folded into an already
  // avalanched state, so (seed, epoch) and (epoch, seed) do not collide the
  // way a plain sum would.
  std::uint64_t x = 0x9e3779b97f4a7c15ull;
  for (std::uint64_t piece : {seed, epoch, batch}) {
    x += 0x9e3779b97f4a7c15ull + piece;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    x ^= x >> 31;
  }
  return x;
}

namespace {

constexpr std::size_t kNoSlot = static_cast<std::size_t>(-1);

struct SlotMap {
  std::vector<std::size_t> weight, bias;        // per layer, kNoSlot for maxpool
  std::vector<std::size_t> phi, prune, beta;    // per quantizer
};

SlotMap register_weight_slots(Model& model, Optimizer& opt) {
  SlotMap m;
  auto& layers = model.layers();
  m.weight.assign(layers.size(), kNoSlot);
  m.bias.assign(layers.size(), kNoSlot);
  for (std::size_t li = 0; li < layers.size(); ++li) {
    if (layers[li].decl.kind == LayerDecl::Kind::MaxPool) continue;
    m.weight[li] = opt.add({"w" + std::to_string(li), layers[li].weight.data(),
                            layers[li].weight.size()});
    m.bias[li] =
        opt.add({"b" + std::to_string(li), layers[li].bias.data(), layers[li].bias.size()});
  }
  return m;
}

void register_gate_slots(Model& model, Optimizer* phi_opt, Optimizer* range_opt, SlotMap& m) {
  auto& qs = model.quantizers();
  m.phi.assign(qs.size(), kNoSlot);
  m.prune.assign(qs.size(), kNoSlot);
  m.beta.assign(qs.size(), kNoSlot);
  for (std::size_t qi = 0; qi < qs.size(); ++qi) {
    Quantizer& q = qs[qi];
    if (phi_opt) {
      m.phi[qi] = phi_opt->add({q.id + ".phi", q.phi_gate.data(), q.phi_gate.size()});
      if (!q.phi_prune.empty())
        m.prune[qi] = phi_opt->add({q.id + ".prune", q.phi_prune.data(), q.phi_prune.size()});
    }
    if (range_opt) m.beta[qi] = range_opt->add({q.id + ".beta", &q.beta, 1});
  }
}

void step_if_reached(Optimizer& opt, std::size_t slot, const Tensor& leaf) {
  if (slot == kNoSlot || !leaf.defined()) return;
  const auto& grad = leaf.grad();
  if (grad.empty()) return;  // unreached by backward, gradient is zero
  opt.step(slot, grad);
}

EpochRecord evaluate(Model& model, const Dataset& test, int epoch, double train_loss) {
  EpochRecord rec;
  rec.epoch = epoch;
  rec.train_loss = train_loss;
  rec.eval_accuracy = model.eval_accuracy(test);
  rec.summaries = model.summaries();
  rec.relative_bops = model.bops().relative_percent;
  return rec;
}

void maybe_log(const TrainConfig& cfg, const char* phase, const EpochRecord& rec) {
  if (!cfg.verbose) return;
  std::printf("%s epoch %d  loss %.4f  acc %.4f  bops %.2f%%\n", phase, rec.epoch,
              rec.train_loss, rec.eval_accuracy, rec.relative_bops);
  std::fflush(stdout);
}

/// One optimization pass over the training set. Optimizers may each be null,
/// which freezes the corresponding group: wopt covers weights and biases,
/// gopt the gate logits, ropt the quantizer ranges.
double run_epoch(Model& model, const Dataset& train, const TrainConfig& cfg, int epoch,
                 GateMode mode, Optimizer* wopt, Optimizer* gopt, Optimizer* ropt,
                 const SlotMap& slots) {
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 shuffle_rng(step_seed(cfg.seed, static_cast<std::uint64_t>(epoch), ~0ull));
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  auto& qs = model.quantizers();
  double loss_sum = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < train.size(); start += cfg.batch_size, ++batches) {
    const std::size_t end = std::min(start + cfg.batch_size, train.size());
    std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
    Graph g(step_seed(cfg.seed, static_cast<std::uint64_t>(epoch), batches));
    Model::Forward fwd = model.forward(g, train, batch, mode);

    std::vector<int> labels(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) labels[i] = train.labels[batch[i]];
    Tensor loss = softmax_cross_entropy(fwd.logits, labels);
    if (gopt && mode == GateMode::Sampled && cfg.mu != 0.0) {
      std::vector<Quantizer*> qp(qs.size());
      std::vector<QuantizerBinding*> bp(qs.size());
      for (std::size_t i = 0; i < qs.size(); ++i) {
        qp[i] = &qs[i];
        bp[i] = &fwd.bindings[i];
      }
      loss = total_loss(loss, qp, bp, cfg.mu);
    }
    const double lv = loss.scalar();
    if (!std::isfinite(lv))
      throw DivergenceError("training loss " + std::to_string(lv) + " at epoch " +
                            std::to_string(epoch) + ", batch " + std::to_string(batches) +
                            "; lower the learning rate or mu");
    loss_sum += lv;
    g.backward(loss);

    if (wopt) {
      for (std::size_t li = 0; li < model.layers().size(); ++li) {
        step_if_reached(*wopt, slots.weight[li], fwd.weight_leaves[li]);
        step_if_reached(*wopt, slots.bias[li], fwd.bias_leaves[li]);
      }
    }
    for (std::size_t qi = 0; qi < qs.size(); ++qi) {
      const QuantizerBinding& b = fwd.bindings[qi];
      if (gopt) {
        step_if_reached(*gopt, slots.phi[qi], b.phi_gate);
        step_if_reached(*gopt, slots.prune[qi], b.phi_prune);
      }
      if (ropt && !qs[qi].range_frozen()) {
        step_if_reached(*ropt, slots.beta[qi], b.beta);
        // Adam can overshoot past zero under heavy gate pressure; a
        // non-positive range is meaningless, so floor it.
        qs[qi].beta = std::max(qs[qi].beta, 1e-6);
      }
    }
  }
  return batches ? loss_sum / static_cast<double>(batches) : 0.0;
}

TrainResult finish(Model& model, std::vector<EpochRecord> history) {
  TrainResult r;
  r.history = std::move(history);
  r.final_accuracy = r.history.empty() ? 0.0 : r.history.back().eval_accuracy;
  r.bops = model.bops();
  return r;
}

}  // namespace

TrainResult train_joint(Model& model, const Dataset& train, const Dataset& test,
                        const TrainConfig& cfg) {
  SgdNesterov wopt(cfg.lr_weights, cfg.momentum);
  Adam gopt(cfg.lr_gates);
  SlotMap slots = register_weight_slots(model, wopt);
  register_gate_slots(model, &gopt, &gopt, slots);

  std::vector<EpochRecord> history;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    wopt.set_lr(cfg.lr_weights * lr_factor(cfg.schedule, epoch, cfg.epochs, cfg.step_gamma));
    const double loss =
        run_epoch(model, train, cfg, epoch, GateMode::Sampled, &wopt, &gopt, &gopt, slots);
    history.push_back(evaluate(model, test, epoch, loss));
    maybe_log(cfg, "joint", history.back());
  }
  return finish(model, std::move(history));
}

TrainResult fix_gates_and_finetune(Model& model, const Dataset& train, const Dataset& test,
                                   const TrainConfig& cfg) {
  SgdNesterov wopt(cfg.lr_finetune, cfg.momentum);
  Adam ropt(cfg.lr_gates);
  SlotMap slots = register_weight_slots(model, wopt);
  register_gate_slots(model, nullptr, &ropt, slots);

  std::vector<EpochRecord> history;
  for (int epoch = 0; epoch < cfg.finetune_epochs; ++epoch) {
    const double anneal = lr_factor(Schedule::Cosine, epoch, cfg.finetune_epochs);
    wopt.set_lr(cfg.lr_finetune * anneal);
    ropt.set_lr(cfg.lr_gates * anneal);
    const double loss =
        run_epoch(model, train, cfg, epoch, GateMode::Deterministic, &wopt, nullptr, &ropt,
                  slots);
    history.push_back(evaluate(model, test, epoch, loss));
    maybe_log(cfg, "finetune", history.back());
  }
  return finish(model, std::move(history));
}

TrainResult post_train(Model& model, const Dataset& train, const Dataset& test,
                       const TrainConfig& cfg, bool learn_scales) {
  Adam gopt(cfg.lr_gates);
  SlotMap slots;
  slots.weight.assign(model.layers().size(), kNoSlot);
  slots.bias.assign(model.layers().size(), kNoSlot);
  register_gate_slots(model, &gopt, learn_scales ? &gopt : nullptr, slots);

  std::vector<EpochRecord> history;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double loss = run_epoch(model, train, cfg, epoch, GateMode::Sampled, nullptr, &gopt,
                                  learn_scales ? &gopt : nullptr, slots);
    history.push_back(evaluate(model, test, epoch, loss));
    maybe_log(cfg, "post-train", history.back());
  }
  return finish(model, std::move(history));
}

std::vector<BaselinePoint> pareto_filter(std::vector<BaselinePoint> points) {
  std::vector<BaselinePoint> kept;
  for (const auto& p : points) {
    bool dominated = false;
    for (const auto& q : points) {
      const bool no_worse =
          q.accuracy >= p.accuracy && q.relative_bops <= p.relative_bops;
      const bool strictly_better =
          q.accuracy > p.accuracy || q.relative_bops < p.relative_bops;
      if (no_worse && strictly_better) {
        dominated = true;
        break;
      }
    }
    if (!dominated) kept.push_back(p);
  }
  std::sort(kept.begin(), kept.end(), [](const BaselinePoint& a, const BaselinePoint& b) {
    return a.relative_bops > b.relative_bops;
  });
  return kept;
}

std::vector<BaselinePoint> sensitivity_baseline(Model& model, const Dataset& eval,
                                                int low_bit) {
  const auto& qs = model.quantizers();
  std::map<std::string, int> background;
  for (const auto& q : qs) background[q.id] = 16;

  auto measure = [&](const std::map<std::string, int>& bits) {
    BaselinePoint p;
    p.bits = bits;
    p.accuracy = model.eval_accuracy(eval, 256, &bits);
    p.relative_bops = model.bops(&bits).relative_percent;
    return p;
  };
  const BaselinePoint base = measure(background);

  // Per-quantizer sensitivity: low_bit against the INT16 background.
  struct Move {
    std::size_t qi;
    double drop;
  };
  std::vector<Move> moves;
  for (std::size_t qi = 0; qi < qs.size(); ++qi) {
    std::map<std::string, int> probe = background;
    probe[qs[qi].id] = low_bit;
    moves.push_back({qi, base.accuracy - model.eval_accuracy(eval, 256, &probe)});
  }
  std::sort(moves.begin(), moves.end(), [](const Move& a, const Move& b) {
    return a.drop != b.drop ? a.drop < b.drop : a.qi < b.qi;
  });

  std::vector<BaselinePoint> points{base};
  std::map<std::string, int> current = background;
  for (const Move& m : moves) {
    current[qs[m.qi].id] = low_bit;
    points.push_back(measure(current));
  }
  return pareto_filter(std::move(points));
}

}  // namespace bb

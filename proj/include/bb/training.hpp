#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "bb/data.hpp"
#include "bb/model.hpp"
#include "bb/optim.hpp"

namespace bb {

/// Raised when the training loss stops being finite. Carries enough context
/// to point at the offending step.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int epochs = 30;
  int finetune_epochs = 10;
  std::size_t batch_size = 64;
  double lr_weights = 0.15;
  double lr_gates = 0.05;      // Adam, shared by gate logits and ranges
  double lr_finetune = 0.01;   // phase-2 weight lr, cosine schedule
  double momentum = 0.9;
  double mu = 0.0;             // regularizer strength; 0 disables gating pressure
  std::uint64_t seed = 1;
  Schedule schedule = Schedule::StepDecay;
  double step_gamma = 0.2;
  bool verbose = false;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double eval_accuracy = 0.0;
  double relative_bops = 100.0;
  std::map<std::string, QuantizerSummary> summaries;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  double final_accuracy = 0.0;
  BopTotals bops;
};

/// Deterministic per-step RNG seed; same (seed, epoch, batch) always yields
/// the same gate noise and batch order.
std::uint64_t step_seed(std::uint64_t seed, std::uint64_t epoch, std::uint64_t batch);

/// Phase 1: joint training of weights (SGD + Nesterov), gate logits and
/// quantizer ranges (Adam) under cross entropy plus the BOP regularizer.
TrainResult train_joint(Model& model, const Dataset& train, const Dataset& test,
                        const TrainConfig& cfg);

/// Phase 2: gates frozen at their deterministic values, weights and
/// quantizer ranges fine-tuned with a cosine schedule.
TrainResult fix_gates_and_finetune(Model& model, const Dataset& train, const Dataset& test,
                                   const TrainConfig& cfg);

/// Post-training mode: weights frozen, only gate logits (and, when
/// `learn_scales`, the quantizer ranges) are optimized.
TrainResult post_train(Model& model, const Dataset& train, const Dataset& test,
                       const TrainConfig& cfg, bool learn_scales);

struct BaselinePoint {
  std::map<std::string, int> bits;  // forced bit width per quantizer
  double accuracy = 0.0;
  double relative_bops = 100.0;
};

/// Iterative sensitivity baseline: every quantizer starts at 16 bits, each
/// one is scored alone at `low_bit` against that background, then quantizers
/// are cumulatively dropped to `low_bit` in order of ascending accuracy drop
/// (quantizer index breaks ties) and the visited configurations are
/// Pareto-filtered.
std::vector<BaselinePoint> sensitivity_baseline(Model& model, const Dataset& eval,
                                                int low_bit = 8);

/// Dominance filter shared with the baseline: keeps points for which no other
/// point has accuracy >= and BOPs <= with at least one strict inequality.
std::vector<BaselinePoint> pareto_filter(std::vector<BaselinePoint> points);

}  // namespace bb

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace bb {

/// A registered trainable parameter: a view into persistent storage.
struct ParamSlot {
  std::string name;
  double* data = nullptr;
  std::size_t size = 0;
};

enum class Schedule { Constant, StepDecay, Cosine, LinearDecay };

/// Learning-rate multiplier at `epoch` of `total_epochs`.
/// StepDecay multiplies by `step_gamma` at each third of training.
double lr_factor(Schedule s, int epoch, int total_epochs, double step_gamma = 0.1);

Schedule parse_schedule(const std::string& name);

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  /// Registers a slot and returns its index.
  std::size_t add(ParamSlot slot);
  std::size_t count() const { return slots_.size(); }
  const ParamSlot& slot(std::size_t i) const { return slots_[i]; }
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  /// Applies an update to slot i from the given gradient.
  virtual void step(std::size_t i, std::span<const double> grad) = 0;

 protected:
  std::vector<ParamSlot> slots_;
  double lr_ = 1e-3;
};

/// Adaptive-moments update, standard defaults.
class Adam : public Optimizer {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(std::size_t i, std::span<const double> grad) override;

 private:
  double beta1_, beta2_, eps_;
  struct State {
    std::vector<double> m, v;
    long t = 0;
  };
  std::vector<State> state_;
  friend class OptimizerSerializer;
};

/// SGD with Nesterov momentum.
class SgdNesterov : public Optimizer {
 public:
  explicit SgdNesterov(double lr = 3e-3, double momentum = 0.9);
  void step(std::size_t i, std::span<const double> grad) override;

 private:
  double momentum_;
  std::vector<std::vector<double>> velocity_;
};

}  // namespace bb

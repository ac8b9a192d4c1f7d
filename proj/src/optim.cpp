#include "bb/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bb {

double lr_factor(Schedule s, int epoch, int total_epochs, double step_gamma) {
  if (total_epochs <= 0) return 1.0;
  switch (s) {
    case Schedule::Constant:
      return 1.0;
    case Schedule::StepDecay:
      return std::pow(step_gamma, (3 * epoch) / total_epochs);
    case Schedule::Cosine:
      return 0.5 * (1.0 + std::cos(std::numbers::pi * epoch / total_epochs));
    case Schedule::LinearDecay: {
      // Constant for the first two thirds, then linear to zero.
      const double frac = static_cast<double>(epoch) / total_epochs;
      if (frac < 2.0 / 3.0) return 1.0;
      return (1.0 - frac) * 3.0;
    }
  }
  return 1.0;
}

Schedule parse_schedule(const std::string& name) {
  if (name == "constant") return Schedule::Constant;
  if (name == "step") return Schedule::StepDecay;
  if (name == "cosine") return Schedule::Cosine;
  if (name == "linear-decay") return Schedule::LinearDecay;
  throw std::invalid_argument("unknown schedule: " + name);
}

std::size_t Optimizer::add(ParamSlot slot) {
  slots_.push_back(slot);
  return slots_.size() - 1;
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  lr_ = lr;
}

void Adam::step(std::size_t i, std::span<const double> grad) {
  ParamSlot& s = slots_.at(i);
  if (grad.size() != s.size) throw std::invalid_argument("Adam: gradient size mismatch");
  if (state_.size() <= i) state_.resize(slots_.size());
  State& st = state_[i];
  if (st.m.empty()) {
    st.m.assign(s.size, 0.0);
    st.v.assign(s.size, 0.0);
  }
  ++st.t;
  const double bc1 = 1.0 - std::pow(beta1_, st.t);
  const double bc2 = 1.0 - std::pow(beta2_, st.t);
  for (std::size_t j = 0; j < s.size; ++j) {
    st.m[j] = beta1_ * st.m[j] + (1.0 - beta1_) * grad[j];
    st.v[j] = beta2_ * st.v[j] + (1.0 - beta2_) * grad[j] * grad[j];
    const double mhat = st.m[j] / bc1;
    const double vhat = st.v[j] / bc2;
    s.data[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
  }
}

SgdNesterov::SgdNesterov(double lr, double momentum) : momentum_(momentum) { lr_ = lr; }

void SgdNesterov::step(std::size_t i, std::span<const double> grad) {
  ParamSlot& s = slots_.at(i);
  if (grad.size() != s.size) throw std::invalid_argument("SGD: gradient size mismatch");
  if (velocity_.size() <= i) velocity_.resize(slots_.size());
  auto& v = velocity_[i];
  if (v.empty()) v.assign(s.size, 0.0);
  for (std::size_t j = 0; j < s.size; ++j) {
    v[j] = momentum_ * v[j] + grad[j];
    s.data[j] -= lr_ * (grad[j] + momentum_ * v[j]);
  }
}

}  // namespace bb

#include "depthbins/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace depthbins {

double lr_schedule(int step, int total, double base_lr, double warmup_frac) {
  if (total <= 0) throw std::invalid_argument("lr_schedule: total must be positive");
  if (step < 0 || step > total) {
    throw std::out_of_range("lr_schedule: step " + std::to_string(step) + " outside [0, " + std::to_string(total) + "]");
  }
  if (!(warmup_frac >= 0.0 && warmup_frac < 1.0)) throw std::invalid_argument("lr_schedule: warmup_frac not in [0, 1)");
  const double warm = warmup_frac * total;
  if (step < warm) return base_lr * step / warm;
  const double progress = (step - warm) / (total - warm);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(ParameterStore& store, AdamWConfig cfg) : params_(store.all()), cfg_(cfg) {
  for (auto* p : params_) {
    m_.push_back(Tensor::zeros_like(p->value));
    v_.push_back(Tensor::zeros_like(p->value));
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const float b1 = static_cast<float>(cfg_.beta1), b2 = static_cast<float>(cfg_.beta2);
  const float step_size = static_cast<float>(lr / bc1);
  const float inv_bc2 = static_cast<float>(1.0 / bc2);
  const float eps = static_cast<float>(cfg_.eps);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    if (p.decay && cfg_.weight_decay > 0) {
      const float keep = static_cast<float>(1.0 - lr * cfg_.weight_decay);
      for (auto& w : p.value.storage()) w *= keep;
    }
    float* m = m_[k].data();
    float* v = v_[k].data();
    float* w = p.value.data();
    const float* g = p.grad.data();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      w[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_bc2) + eps);
    }
  }
}

double grad_norm(const ParameterStore& store) {
  double sq = 0;
  for (const auto* p : store.all()) {
    for (float g : p->grad.storage()) sq += static_cast<double>(g) * g;
  }
  return std::sqrt(sq);
}

double clip_grad_norm(ParameterStore& store, double max_norm) {
  const double norm = grad_norm(store);
  if (max_norm > 0 && norm > max_norm) {
    const float s = static_cast<float>(max_norm / norm);
    for (auto* p : store.all()) {
      for (auto& g : p->grad.storage()) g *= s;
    }
  }
  return norm;
}

}  // namespace depthbins

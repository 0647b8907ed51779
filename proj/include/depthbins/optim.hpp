#pragma once

#include <cstdint>
#include <vector>

#include "depthbins/autograd.hpp"

namespace depthbins {

/// Linear warm-up from 0 to base_lr over warmup_frac * total steps, then a
/// half-cosine down to 0 at step == total. Throws std::out_of_range for
/// steps outside [0, total].
double lr_schedule(int step, int total, double base_lr, double warmup_frac);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;
  double eps = 1e-8;
};

/// Adam with decoupled weight decay. Decay applies only to parameters
/// created with decay = true.
class AdamW {
 public:
  AdamW(ParameterStore& store, AdamWConfig cfg);

  void step(double lr);
  std::int64_t steps_taken() const { return t_; }

  // State access for checkpoints; moments follow store.all() order.
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void set_steps_taken(std::int64_t t) { t_ = t; }

 private:
  std::vector<Parameter*> params_;
  AdamWConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::int64_t t_ = 0;
};

/// L2 norm over every parameter gradient.
double grad_norm(const ParameterStore& store);
/// Rescales gradients so their global norm is at most max_norm; returns the
/// norm before clipping.
double clip_grad_norm(ParameterStore& store, double max_norm);

}  // namespace depthbins

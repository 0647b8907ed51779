#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "depthbins/autograd.hpp"

namespace depthbins {

struct LossConfig {
  double alpha = 10.0;
  double lambda = 0.85;
  double mu = 1e-3;
  /// One weight per decoder scale, coarse to fine. Empty means "use the
  /// default halving schedule for however many scales run".
  std::vector<double> scale_weights;
  bool reverse_scale_weights = false;
  bool scene_supervision = true;
  /// Predictions are clamped to this floor before the logarithm.
  double pred_floor = 1e-3;

  void validate() const;
  /// (1/2^{S-1}, ..., 1/2, 1) coarse to fine, or its reverse.
  std::vector<double> weights_for(int scales) const;
};

class EmptyMaskError : public std::invalid_argument {
 public:
  EmptyMaskError() : std::invalid_argument("loss/metric requires at least one valid pixel") {}
};

/// Scale-invariant log loss over valid pixels:
///   alpha * sqrt(mean(g^2) - lambda * mean(g)^2),  g = ln(pred) - ln(gt).
/// The radicand is clamped at zero. When `grad_pred` is non-empty it receives
/// d(loss)/d(pred) (overwritten, zero on masked pixels).
template <class T>
T si_loss(std::span<const T> pred, std::span<const T> gt, std::span<const std::uint8_t> mask, const LossConfig& cfg,
          std::span<T> grad_pred = {}) {
  if (pred.size() != gt.size() || pred.size() != mask.size()) throw std::invalid_argument("si_loss: size mismatch");
  const T floor = static_cast<T>(cfg.pred_floor);
  double sum = 0, sq = 0;
  std::size_t count = 0;
  std::vector<double> log_diff(grad_pred.empty() ? 0 : pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i]) continue;
    const double g = std::log(static_cast<double>(std::max(pred[i], floor))) - std::log(static_cast<double>(gt[i]));
    if (!log_diff.empty()) log_diff[i] = g;
    sum += g;
    sq += g * g;
    ++count;
  }
  if (count == 0) throw EmptyMaskError();
  const double n = static_cast<double>(count);
  const double radicand = sq / n - cfg.lambda * (sum / n) * (sum / n);
  const double root = radicand > 0 ? std::sqrt(radicand) : 0.0;
  if (!grad_pred.empty()) {
    std::fill(grad_pred.begin(), grad_pred.end(), T(0));
    if (root > 0) {
      const double k = cfg.alpha / root;
      for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!mask[i] || !(pred[i] > floor)) continue;
        const double dg = k * (log_diff[i] / n - cfg.lambda * sum / (n * n));
        grad_pred[i] = static_cast<T>(dg / static_cast<double>(pred[i]));
      }
    }
  }
  return static_cast<T>(cfg.alpha * root);
}

/// Negative log-softmax of the true class. `grad` (optional) is overwritten.
template <class T>
T cross_entropy(std::span<const T> logits, int label, std::span<T> grad = {}) {
  if (label < 0 || label >= static_cast<int>(logits.size())) {
    throw std::out_of_range("cross_entropy: label outside [0, K)");
  }
  T m = logits[0];
  for (T v : logits) m = std::max(m, v);
  double z = 0;
  for (T v : logits) z += std::exp(static_cast<double>(v - m));
  const double log_z = std::log(z) + static_cast<double>(m);
  if (!grad.empty()) {
    for (std::size_t i = 0; i < logits.size(); ++i) {
      grad[i] = static_cast<T>(std::exp(static_cast<double>(logits[i]) - log_z) - (static_cast<int>(i) == label ? 1 : 0));
    }
  }
  return static_cast<T>(log_z - static_cast<double>(logits[label]));
}

/// Per-(scale, layer) loss values in trace order (scale-major).
struct LayerLosses {
  std::vector<double> reg;
  std::vector<double> cls;  ///< empty when scene supervision is off
};

/// sum_s w_s sum_l (reg[s,l] + mu * cls[s,l]) on plain numbers.
double total_loss(const LayerLosses& losses, int scales, int layers_per_scale, const LossConfig& cfg);

// Graph versions.
Var si_loss(const Var& pred, const Tensor& gt, std::span<const std::uint8_t> mask, const LossConfig& cfg);
Var cls_loss(const Var& logits, int label);
/// `cls` may be empty (scene supervision disabled).
Var total_loss(const std::vector<Var>& reg, const std::vector<Var>& cls, int scales, int layers_per_scale,
               const LossConfig& cfg);

}  // namespace depthbins

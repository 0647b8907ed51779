#include "depthbins/objectives.hpp"

#include <algorithm>
#include <memory>

#include "depthbins/ops.hpp"

namespace depthbins {

void LossConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("LossConfig: lambda must lie in [0, 1]");
  if (!(mu >= 0.0)) throw std::invalid_argument("LossConfig: mu must be nonnegative");
  if (!(alpha > 0.0)) throw std::invalid_argument("LossConfig: alpha must be positive");
  for (double w : scale_weights) {
    if (!(w > 0.0)) throw std::invalid_argument("LossConfig: scale weights must be positive");
  }
}

std::vector<double> LossConfig::weights_for(int scales) const {
  if (!scale_weights.empty()) {
    if (static_cast<int>(scale_weights.size()) != scales) {
      throw std::invalid_argument("LossConfig: scale_weights length does not match the number of scales");
    }
    return scale_weights;
  }
  std::vector<double> w(scales);
  for (int s = 0; s < scales; ++s) w[s] = std::ldexp(1.0, s - (scales - 1));
  if (reverse_scale_weights) std::reverse(w.begin(), w.end());
  return w;
}

double total_loss(const LayerLosses& losses, int scales, int layers_per_scale, const LossConfig& cfg) {
  const std::size_t n = static_cast<std::size_t>(scales) * layers_per_scale;
  if (losses.reg.size() != n) throw std::invalid_argument("total_loss: expected S*L regression terms");
  const bool use_cls = cfg.scene_supervision && cfg.mu > 0.0;
  if (use_cls && losses.cls.size() != n) throw std::invalid_argument("total_loss: expected S*L classification terms");
  const auto w = cfg.weights_for(scales);
  double total = 0;
  for (int s = 0; s < scales; ++s) {
    double inner = 0;
    for (int l = 0; l < layers_per_scale; ++l) {
      const std::size_t i = static_cast<std::size_t>(s) * layers_per_scale + l;
      inner += losses.reg[i] + (use_cls ? cfg.mu * losses.cls[i] : 0.0);
    }
    total += w[s] * inner;
  }
  return total;
}

Var si_loss(const Var& pred, const Tensor& gt, std::span<const std::uint8_t> mask, const LossConfig& cfg) {
  require_shape(pred->value.size() == gt.size(), "si_loss: prediction and ground truth differ in size");
  auto grad = std::make_shared<Tensor>(Tensor::zeros_like(pred->value));
  const Scalar value = si_loss<Scalar>(pred->value.span(), gt.span(), mask, cfg, grad->span());
  return make_result(Tensor({1}, value), {pred}, [pred, grad](Node& self) {
    auto& g = pred->grad_buffer();
    const Scalar up = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += up * (*grad)[i];
  });
}

Var cls_loss(const Var& logits, int label) {
  auto grad = std::make_shared<Tensor>(Tensor::zeros_like(logits->value));
  const Scalar value = cross_entropy<Scalar>(logits->value.span(), label, grad->span());
  return make_result(Tensor({1}, value), {logits}, [logits, grad](Node& self) {
    auto& g = logits->grad_buffer();
    const Scalar up = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += up * (*grad)[i];
  });
}

Var total_loss(const std::vector<Var>& reg, const std::vector<Var>& cls, int scales, int layers_per_scale,
               const LossConfig& cfg) {
  const std::size_t n = static_cast<std::size_t>(scales) * layers_per_scale;
  if (reg.size() != n) throw std::invalid_argument("total_loss: expected S*L regression terms");
  const bool use_cls = cfg.scene_supervision && cfg.mu > 0.0;
  if (use_cls && cls.size() != n) throw std::invalid_argument("total_loss: expected S*L classification terms");
  const auto w = cfg.weights_for(scales);
  std::vector<Var> terms;
  std::vector<double> coeffs;
  for (int s = 0; s < scales; ++s) {
    for (int l = 0; l < layers_per_scale; ++l) {
      const std::size_t i = static_cast<std::size_t>(s) * layers_per_scale + l;
      terms.push_back(reg[i]);
      coeffs.push_back(w[s]);
      if (use_cls) {
        terms.push_back(cls[i]);
        coeffs.push_back(w[s] * cfg.mu);
      }
    }
  }
  return ops::weighted_sum(terms, coeffs);
}

}  // namespace depthbins

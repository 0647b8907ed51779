#include "depthbins/depth_head.hpp"

#include "depthbins/ops.hpp"

namespace depthbins {

Var bins_to_centers(const Var& bin_lengths, const DepthRange& range) {
  const auto& b = bin_lengths->value;
  auto c = bins_to_centers<Scalar>(b.span(), range);
  const int n = static_cast<int>(c.size());
  Tensor out({n}, std::move(c));
  return make_result(std::move(out), {bin_lengths}, [bin_lengths, range](Node& self) {
    auto gb = bins_to_centers_backward<Scalar>(self.grad.span(), range);
    auto& g = bin_lengths->grad_buffer();
    for (std::size_t i = 0; i < gb.size(); ++i) g[i] += gb[i];
  });
}

Var probability_volume(const Var& per_pixel, const Var& bin_embeddings) {
  const auto& fp = per_pixel->value;
  const auto& fb = bin_embeddings->value;
  require_shape(fp.rank() == 3 && fb.rank() == 2, "probability_volume: expected f_p {h,w,C} and f_b {N,C}");
  const int pixels = fp.dim(0) * fp.dim(1);
  const int channels = fp.dim(2);
  const int bins = fb.dim(0);
  require_shape(fb.dim(1) == channels, "probability_volume: channel mismatch " + fp.shape_string() + " vs " +
                                           fb.shape_string());
  Tensor prob({pixels, bins});
  probability_volume<Scalar>(fp.span(), fb.span(), pixels, channels, bins, prob.span());
  return make_result(std::move(prob), {per_pixel, bin_embeddings},
                     [per_pixel, bin_embeddings, pixels, channels, bins](Node& self) {
    Tensor scratch_f, scratch_e;
    auto& gf = per_pixel->requires_grad ? per_pixel->grad_buffer() : (scratch_f = Tensor::zeros_like(per_pixel->value));
    auto& ge = bin_embeddings->requires_grad ? bin_embeddings->grad_buffer()
                                             : (scratch_e = Tensor::zeros_like(bin_embeddings->value));
    probability_volume_backward<Scalar>(per_pixel->value.span(), bin_embeddings->value.span(), self.value.span(),
                                        self.grad.span(), pixels, channels, bins, gf.span(), ge.span());
  });
}

Var predict_depth(const Var& prob, const Var& centers, int h, int w) {
  const int pixels = h * w;
  require_shape(prob->value.rows() == pixels, "predict_depth: pixel count mismatch");
  require_shape(prob->value.cols() == static_cast<int>(centers->value.size()), "predict_depth: bin count mismatch");
  Tensor depth({h, w, 1});
  predict_depth<Scalar>(prob->value.span(), centers->value.span(), pixels, depth.span());
  return make_result(std::move(depth), {prob, centers}, [prob, centers, pixels](Node& self) {
    Tensor scratch_p, scratch_c;
    auto& gp = prob->requires_grad ? prob->grad_buffer() : (scratch_p = Tensor::zeros_like(prob->value));
    auto& gc = centers->requires_grad ? centers->grad_buffer() : (scratch_c = Tensor::zeros_like(centers->value));
    predict_depth_backward<Scalar>(prob->value.span(), centers->value.span(), self.grad.span(), pixels, gp.span(),
                                   gc.span());
  });
}

DepthOutput run_depth_module(const Tensor& per_pixel, const Tensor& bin_embeddings, std::span<const Scalar> bin_lengths,
                             const DepthRange& range, int out_h, int out_w, UncertaintyKind kind) {
  const int h = per_pixel.dim(0), w = per_pixel.dim(1);
  Tensor b({static_cast<int>(bin_lengths.size())}, std::vector<Scalar>(bin_lengths.begin(), bin_lengths.end()));
  Var c = bins_to_centers(constant(std::move(b)), range);
  Var prob = probability_volume(constant(per_pixel), constant(bin_embeddings));
  Var low = predict_depth(prob, c, h, w);

  DepthOutput out;
  out.prob = prob->value;
  out.centers.assign(c->value.storage().begin(), c->value.storage().end());
  out.depth_lowres = low->value;
  out.depth = ops::resize_bilinear(low, out_h, out_w)->value;
  Tensor u({h, w, 1});
  uncertainty<Scalar>(out.prob.span(), c->value.span(), low->value.span(), h * w, u.span(), kind);
  out.uncertainty = ops::resize_bilinear(constant(std::move(u)), out_h, out_w)->value;
  return out;
}

}  // namespace depthbins

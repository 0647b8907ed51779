#include "depthbins/model.hpp"

namespace depthbins {

DepthModel::DepthModel(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.range.validate();
  Rng rng(mix_seed(cfg_.seed, 0x5eed));
  pixel_ = std::make_unique<PixelModule>(store_, cfg_.backbone, rng);
  decoder_ = std::make_unique<BinsDecoder>(store_, cfg_.decoder, cfg_.backbone.d_model, cfg_.backbone.base_channels,
                                           mix_seed(cfg_.seed, 0x9e), rng);
}

ForwardResult DepthModel::forward(Graph& g, const Tensor& rgb, bool capture_attention) const {
  ForwardResult r;
  r.pyramid = pixel_->extract_features(g, rgb);
  auto tokens = pixel_->project_scales(g, r.pyramid, cfg_.decoder.scales_used);
  r.trace = decoder_->run(g, tokens, capture_attention);
  const int h = r.pyramid.per_pixel->value.dim(0);
  const int w = r.pyramid.per_pixel->value.dim(1);
  const int out_h = rgb.dim(0), out_w = rgb.dim(1);
  for (const auto& layer : r.trace.per_layer) {
    Var c = bins_to_centers(layer.bin_lengths, cfg_.range);
    Var p = probability_volume(r.pyramid.per_pixel, layer.bin_embeddings);
    Var low = predict_depth(p, c, h, w);
    r.centers.push_back(c);
    r.prob.push_back(p);
    r.depth_lowres.push_back(low);
    r.depth.push_back(ops::resize_bilinear(low, out_h, out_w));
  }
  return r;
}

SampleLoss DepthModel::loss(const ForwardResult& fwd, const ImageSample& sample, const LossConfig& cfg) const {
  SampleLoss out;
  std::vector<Var> reg, cls;
  const bool use_cls = cfg.scene_supervision && cfg.mu > 0.0;
  for (std::size_t i = 0; i < fwd.depth.size(); ++i) {
    Var r = si_loss(fwd.depth[i], sample.depth, sample.valid, cfg);
    reg.push_back(r);
    out.terms.reg.push_back(r->value[0]);
    const auto& logits = fwd.trace.per_layer[i].scene_logits;
    if (logits) {
      Var c = cls_loss(logits, sample.scene_label);
      out.terms.cls.push_back(c->value[0]);
      if (use_cls) cls.push_back(c);
    }
  }
  out.total = total_loss(reg, cls, cfg_.decoder.num_scales(), cfg_.decoder.layers_per_scale, cfg);
  return out;
}

Prediction DepthModel::predict(const Tensor& rgb, bool capture_attention) const {
  Graph g(false);
  ForwardResult fwd = forward(g, rgb, capture_attention);
  const auto& last = fwd.trace.per_layer.back();
  Prediction p;
  p.bin_lengths.assign(last.bin_lengths->value.storage().begin(), last.bin_lengths->value.storage().end());
  p.bin_embeddings = last.bin_embeddings->value;
  p.per_pixel = fwd.pyramid.per_pixel->value;
  p.output = run_depth_module(p.per_pixel, p.bin_embeddings, p.bin_lengths, cfg_.range, rgb.dim(0), rgb.dim(1),
                              cfg_.uncertainty);
  if (last.scene_logits) {
    const auto& s = last.scene_logits->value.storage();
    p.scene_logits.assign(s.begin(), s.end());
  }
  p.attention = fwd.trace.attention;
  p.layer_level = fwd.trace.layer_level;
  for (const auto& d : fwd.depth) p.depth_per_layer.push_back(d->value);
  return p;
}

}  // namespace depthbins

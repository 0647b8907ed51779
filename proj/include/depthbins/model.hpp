#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "depthbins/bins_decoder.hpp"
#include "depthbins/data.hpp"
#include "depthbins/depth_head.hpp"
#include "depthbins/objectives.hpp"
#include "depthbins/pixel_module.hpp"

namespace depthbins {

struct ModelConfig {
  BackboneConfig backbone;
  DecoderConfig decoder;
  DepthRange range = DepthRange::indoor();
  UncertaintyKind uncertainty = UncertaintyKind::kStdDev;
  std::uint64_t seed = 0;
};

/// Graph values of one forward pass.
struct ForwardResult {
  FeaturePyramid pyramid;
  DecoderTrace trace;
  std::vector<Var> centers;       ///< per trace entry, {N}
  std::vector<Var> prob;          ///< per trace entry, {h*w, N}
  std::vector<Var> depth_lowres;  ///< per trace entry, {h, w, 1}
  std::vector<Var> depth;         ///< per trace entry, {H, W, 1}
};

struct SampleLoss {
  Var total;
  LayerLosses terms;
};

/// Final-layer outputs for one image, as plain tensors.
struct Prediction {
  DepthOutput output;
  std::vector<Scalar> bin_lengths;
  Tensor bin_embeddings;  ///< {N, C}
  Tensor per_pixel;       ///< f_p {h, w, C}
  std::vector<Scalar> scene_logits;
  std::vector<Tensor> attention;  ///< per trace entry, when captured
  std::vector<int> layer_level;
  std::vector<Tensor> depth_per_layer;  ///< {H, W, 1} for every trace entry
};

class DepthModel {
 public:
  explicit DepthModel(const ModelConfig& cfg);

  DepthModel(const DepthModel&) = delete;
  DepthModel& operator=(const DepthModel&) = delete;

  ForwardResult forward(Graph& g, const Tensor& rgb, bool capture_attention = false) const;
  SampleLoss loss(const ForwardResult& fwd, const ImageSample& sample, const LossConfig& cfg) const;
  Prediction predict(const Tensor& rgb, bool capture_attention = false) const;

  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }
  const ModelConfig& config() const { return cfg_; }
  const PixelModule& pixel_module() const { return *pixel_; }
  const BinsDecoder& decoder() const { return *decoder_; }

 private:
  ModelConfig cfg_;
  ParameterStore store_;
  std::unique_ptr<PixelModule> pixel_;
  std::unique_ptr<BinsDecoder> decoder_;
};

}  // namespace depthbins

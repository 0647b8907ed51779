#pragma once

#include <array>
#include <vector>

#include "depthbins/layers.hpp"

namespace depthbins {

/// Normalization after backbone and FPN convolutions. kNone keeps absolute
/// intensity levels, which per-image group statistics would discard.
enum class FeatureNorm { kNone, kGroup };

struct BackboneConfig {
  int base_channels = 32;                 ///< C; stage widths are C, 2C, 4C, 8C
  std::array<int, 4> stage_depths{1, 1, 1, 1};  ///< residual blocks after each stride-2 conv
  int d_model = 64;                       ///< token width handed to the decoder
  FeatureNorm norm = FeatureNorm::kNone;
  int norm_groups = 8;                    ///< used with FeatureNorm::kGroup

  void validate() const;
};

/// f_1..f_4 at strides 4, 8, 16, 32 plus the per-pixel map f_p at stride 4,
/// all with C channels, stored {h, w, C}.
struct FeaturePyramid {
  std::array<Var, 4> features;
  Var per_pixel;

  const Var& level(int i) const { return features.at(static_cast<std::size_t>(i - 1)); }
};

/// Stride of pyramid level i (1-based): 2^(i+1).
constexpr int pyramid_stride(int level) { return 1 << (level + 1); }

/// Fixed 2-D sine/cosine encoding {h*w, d}; the first half of the channels
/// encodes the row, the second half the column.
Tensor sinusoidal_position_encoding(int h, int w, int d);

/// Convolutional backbone + FPN pixel decoder + per-scale token projection.
class PixelModule {
 public:
  PixelModule(ParameterStore& store, const BackboneConfig& cfg, Rng& rng);

  /// rgb {H, W, 3} in [0, 1]; H and W must be multiples of 32.
  FeaturePyramid extract_features(Graph& g, const Tensor& rgb) const;

  /// Flattens each requested level (1-based ids) into {h*w, d_model} tokens
  /// with a learned per-level embedding and the fixed positional encoding.
  std::vector<Var> project_scales(Graph& g, const FeaturePyramid& pyramid, const std::vector<int>& levels) const;

  const BackboneConfig& config() const { return cfg_; }

 private:
  struct ResidualBlock {
    Conv2d conv1, conv2;
    GroupNorm norm1, norm2;
  };
  struct Stage {
    Conv2d down;
    GroupNorm down_norm;
    std::vector<ResidualBlock> blocks;
  };

  /// Group norm, or identity when the backbone runs without normalization.
  static Var normalize(Graph& g, const GroupNorm& norm, const Var& x);

  BackboneConfig cfg_;
  Conv2d stem_;
  GroupNorm stem_norm_;
  std::array<Stage, 4> stages_;
  std::array<Conv2d, 4> lateral_;
  std::array<Conv2d, 4> fuse_;
  std::array<GroupNorm, 4> fuse_norm_;
  Conv2d per_pixel_;
  std::array<Linear, 4> token_proj_;
  std::array<Parameter*, 4> level_embed_{};
};

}  // namespace depthbins

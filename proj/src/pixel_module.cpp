#include "depthbins/pixel_module.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace depthbins {
namespace {

int groups_for(int channels, int wanted) {
  int g = std::min(wanted, channels);
  while (g > 1 && channels % g != 0) --g;
  return std::max(g, 1);
}

}  // namespace

void BackboneConfig::validate() const {
  if (base_channels <= 0) throw std::invalid_argument("base_channels must be positive");
  for (int d : stage_depths) {
    if (d < 0) throw std::invalid_argument("stage_depths must be nonnegative");
  }
  if (d_model <= 0 || d_model % 4 != 0) throw std::invalid_argument("d_model must be a positive multiple of 4");
  if (norm_groups <= 0) throw std::invalid_argument("norm_groups must be positive");
}

Tensor sinusoidal_position_encoding(int h, int w, int d) {
  require_shape(d % 4 == 0, "position encoding width must be a multiple of 4");
  const int half = d / 2;
  Tensor pe({h * w, d});
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      Scalar* row = pe.data() + static_cast<std::size_t>(y * w + x) * d;
      const double py = (y + 0.5) / h * two_pi;
      const double px = (x + 0.5) / w * two_pi;
      for (int k = 0; k < half; ++k) {
        const double freq = std::pow(10000.0, 2.0 * (k / 2) / half);
        row[k] = static_cast<Scalar>(k % 2 == 0 ? std::sin(py / freq) : std::cos(py / freq));
        row[half + k] = static_cast<Scalar>(k % 2 == 0 ? std::sin(px / freq) : std::cos(px / freq));
      }
    }
  }
  return pe;
}

PixelModule::PixelModule(ParameterStore& store, const BackboneConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const int c = cfg_.base_channels;
  const int ng = cfg_.norm_groups;
  const bool grouped = cfg_.norm == FeatureNorm::kGroup;
  // Without normalization the convolutions carry their own bias.
  auto norm = [&](const std::string& name, int channels) {
    return grouped ? GroupNorm::create(store, name, channels, groups_for(channels, ng)) : GroupNorm{};
  };
  stem_ = Conv2d::create(store, "backbone.stem", 3, c, 3, 2, !grouped, rng);
  stem_norm_ = norm("backbone.stem_norm", c);
  int in = c;
  for (int s = 0; s < 4; ++s) {
    const int width = c << s;
    const std::string name = "backbone.stage" + std::to_string(s + 1);
    auto& st = stages_[s];
    st.down = Conv2d::create(store, name + ".down", in, width, 3, 2, !grouped, rng);
    st.down_norm = norm(name + ".down_norm", width);
    for (int b = 0; b < cfg_.stage_depths[s]; ++b) {
      const std::string bn = name + ".block" + std::to_string(b);
      ResidualBlock blk;
      blk.conv1 = Conv2d::create(store, bn + ".conv1", width, width, 3, 1, !grouped, rng);
      blk.norm1 = norm(bn + ".norm1", width);
      blk.conv2 = Conv2d::create(store, bn + ".conv2", width, width, 3, 1, !grouped, rng);
      blk.norm2 = norm(bn + ".norm2", width);
      st.blocks.push_back(blk);
    }
    in = width;
  }
  for (int s = 0; s < 4; ++s) {
    const std::string name = "pixel_decoder.level" + std::to_string(s + 1);
    lateral_[s] = Conv2d::create(store, name + ".lateral", c << s, c, 1, 1, true, rng);
    fuse_[s] = Conv2d::create(store, name + ".fuse", c, c, 3, 1, !grouped, rng);
    fuse_norm_[s] = norm(name + ".fuse_norm", c);
    token_proj_[s] = Linear::create(store, "tokens.level" + std::to_string(s + 1) + ".proj", c, cfg_.d_model, false, rng);
    level_embed_[s] = &store.create("tokens.level" + std::to_string(s + 1) + ".embed", {cfg_.d_model}, false);
    init_normal(level_embed_[s]->value, 0.02, rng);
  }
  per_pixel_ = Conv2d::create(store, "pixel_decoder.per_pixel", c, c, 1, 1, true, rng);
  // Linear output: scale the He init down to unit-gain.
  for (auto& v : per_pixel_.weight->value.storage()) v *= static_cast<Scalar>(std::sqrt(0.5));
}

Var PixelModule::normalize(Graph& g, const GroupNorm& norm, const Var& x) { return norm.gamma ? norm(g, x) : x; }

FeaturePyramid PixelModule::extract_features(Graph& g, const Tensor& rgb) const {
  require_shape(rgb.rank() == 3 && rgb.dim(2) == 3, "extract_features expects {H, W, 3}, got " + rgb.shape_string());
  const int h = rgb.dim(0), w = rgb.dim(1);
  if (h % 32 != 0 || w % 32 != 0 || h == 0 || w == 0) {
    throw ShapeError("image size " + std::to_string(h) + "x" + std::to_string(w) + " is not divisible by 32");
  }
  Tensor centred = rgb;
  for (auto& v : centred.storage()) v -= 0.5f;

  Var x = ops::relu(normalize(g, stem_norm_, stem_(g, constant(std::move(centred)))));
  std::array<Var, 4> stage_out;
  for (int s = 0; s < 4; ++s) {
    const auto& st = stages_[s];
    x = ops::relu(normalize(g, st.down_norm, st.down(g, x)));
    for (const auto& blk : st.blocks) {
      Var y = ops::relu(normalize(g, blk.norm1, blk.conv1(g, x)));
      y = normalize(g, blk.norm2, blk.conv2(g, y));
      x = ops::relu(ops::add(x, y));
    }
    stage_out[s] = x;
  }

  FeaturePyramid out;
  Var top;
  for (int s = 3; s >= 0; --s) {
    Var lat = lateral_[s](g, stage_out[s]);
    if (top) {
      lat = ops::add(lat, ops::resize_bilinear(top, lat->value.dim(0), lat->value.dim(1)));
    }
    top = lat;
    out.features[s] = ops::relu(normalize(g, fuse_norm_[s], fuse_[s](g, lat)));
  }
  out.per_pixel = per_pixel_(g, out.features[0]);
  return out;
}

std::vector<Var> PixelModule::project_scales(Graph& g, const FeaturePyramid& pyramid,
                                             const std::vector<int>& levels) const {
  std::vector<Var> tokens;
  tokens.reserve(levels.size());
  for (int level : levels) {
    if (level < 1 || level > 4) throw std::invalid_argument("pyramid level must be in 1..4");
    const Var& f = pyramid.level(level);
    const int h = f->value.dim(0), w = f->value.dim(1), c = f->value.dim(2);
    Var flat = ops::reshape(f, {h * w, c});
    Var t = token_proj_[level - 1](g, flat);
    t = ops::add_row_vector(t, g.param(*level_embed_[level - 1]));
    t = ops::add(t, constant(sinusoidal_position_encoding(h, w, cfg_.d_model)));
    tokens.push_back(t);
  }
  return tokens;
}

}  // namespace depthbins

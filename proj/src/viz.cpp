#include "depthbins/viz.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "depthbins/image_io.hpp"

namespace depthbins {

namespace {

constexpr std::array<VizKind, 7> kAllKinds{VizKind::kBins,      VizKind::kProb,           VizKind::kUncertainty,
                                           VizKind::kAttention, VizKind::kQuerySimilarity, VizKind::kPointcloud,
                                           VizKind::kDepth};

using Color = std::array<std::uint8_t, 3>;

RgbImage upscale_nearest(const RgbImage& img, int width, int height) {
  RgbImage out(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) out.set(x, y, img.at(x * img.width / width, y * img.height / height));
  }
  return out;
}

}  // namespace

VizKind parse_viz_kind(const std::string& text) {
  for (VizKind k : kAllKinds) {
    if (text == viz_kind_name(k)) return k;
  }
  throw std::invalid_argument("unknown visualization: " + text);
}

const char* viz_kind_name(VizKind kind) {
  switch (kind) {
    case VizKind::kBins: return "bins";
    case VizKind::kProb: return "prob";
    case VizKind::kUncertainty: return "uncertainty";
    case VizKind::kAttention: return "attention";
    case VizKind::kQuerySimilarity: return "query_similarity";
    case VizKind::kPointcloud: return "pointcloud";
    case VizKind::kDepth: return "depth";
  }
  return "unknown";
}

RgbImage::RgbImage(int w, int h, std::array<std::uint8_t, 3> fill) : width(w), height(h) {
  if (w <= 0 || h <= 0) throw std::invalid_argument("RgbImage: empty size");
  pixels.resize(static_cast<std::size_t>(w) * h * 3);
  for (std::size_t i = 0; i < pixels.size(); i += 3) std::copy(fill.begin(), fill.end(), pixels.begin() + i);
}

void RgbImage::set(int x, int y, std::array<std::uint8_t, 3> c) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  std::copy(c.begin(), c.end(), pixels.begin() + (static_cast<std::size_t>(y) * width + x) * 3);
}

std::array<std::uint8_t, 3> RgbImage::at(int x, int y) const {
  const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
  return {pixels.at(i), pixels.at(i + 1), pixels.at(i + 2)};
}

void RgbImage::save(const std::filesystem::path& path) const { write_png_rgb8(path, width, height, pixels); }

std::array<std::uint8_t, 3> heat_color(double t) {
  // black -> purple -> red -> yellow -> white
  static constexpr std::array<std::array<double, 3>, 5> stops{{
      {0, 0, 0}, {0.35, 0.05, 0.55}, {0.85, 0.2, 0.2}, {1.0, 0.8, 0.1}, {1, 1, 1}}};
  if (!std::isfinite(t)) t = 0;
  t = std::clamp(t, 0.0, 1.0) * (stops.size() - 1);
  const std::size_t i = std::min(static_cast<std::size_t>(t), stops.size() - 2);
  const double f = t - static_cast<double>(i);
  Color c;
  for (int k = 0; k < 3; ++k) {
    c[k] = static_cast<std::uint8_t>(std::lround(255.0 * (stops[i][k] * (1 - f) + stops[i + 1][k] * f)));
  }
  return c;
}

RgbImage heat_map(const Tensor& values, double vmax) {
  require_shape(values.rank() == 3 && values.dim(2) == 1, "heat_map expects {H, W, 1}");
  const int h = values.dim(0), w = values.dim(1);
  RgbImage img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = values[static_cast<std::size_t>(y) * w + x];
      img.set(x, y, heat_color(vmax > 0 ? v / vmax : 0.0));
    }
  }
  return img;
}

RgbImage heat_map_autoscale(const Tensor& values) {
  const auto [lo, hi] = std::minmax_element(values.storage().begin(), values.storage().end());
  Tensor shifted = values;
  for (auto& v : shifted.storage()) v -= *lo;
  return heat_map(shifted, *hi - *lo);
}

std::vector<int> bin_tick_positions(std::span<const Scalar> centers, const DepthRange& range, int width) {
  std::vector<int> xs;
  xs.reserve(centers.size());
  for (Scalar c : centers) {
    const double t = (c - range.d_min) / range.span();
    xs.push_back(std::clamp(static_cast<int>(std::floor(t * width)), 0, width - 1));
  }
  return xs;
}

RgbImage render_bins(std::span<const Scalar> centers, const DepthRange& range, int width, int height) {
  RgbImage img(width, height);
  const int axis_y = height - 8;
  for (int x = 0; x < width; ++x) img.set(x, axis_y, {0, 0, 0});
  for (int x : bin_tick_positions(centers, range, width)) {
    for (int y = 8; y < axis_y; ++y) img.set(x, y, {200, 40, 40});
  }
  return img;
}

RgbImage render_distributions(const Tensor& prob, std::span<const Scalar> centers, const std::vector<int>& pixels,
                              const DepthRange& range, int width, int row_height) {
  require_shape(prob.rank() == 2 && prob.dim(1) == static_cast<int>(centers.size()),
                "render_distributions: prob must be {pixels, N}");
  if (pixels.empty()) throw std::invalid_argument("render_distributions: no probe pixels");
  RgbImage img(width, row_height * static_cast<int>(pixels.size()));
  const auto ticks = bin_tick_positions(centers, range, width);
  for (std::size_t r = 0; r < pixels.size(); ++r) {
    const int base = static_cast<int>(r + 1) * row_height - 4;
    for (int x = 0; x < width; ++x) img.set(x, base, {0, 0, 0});
    const Scalar* p = prob.data() + static_cast<std::size_t>(pixels[r]) * centers.size();
    for (std::size_t i = 0; i < centers.size(); ++i) {
      const int bar = static_cast<int>(std::lround(p[i] * (row_height - 12)));
      for (int y = base - bar; y < base; ++y) img.set(ticks[i], y, {30, 90, 200});
    }
  }
  return img;
}

Tensor scene_query_attention(const Tensor& attention, int grid_h, int grid_w) {
  require_shape(attention.rank() == 3, "scene_query_attention expects {heads, queries, tokens}");
  const int heads = attention.dim(0), nq = attention.dim(1), nk = attention.dim(2);
  require_shape(nk == grid_h * grid_w, "scene_query_attention: token grid mismatch");
  Tensor out({grid_h, grid_w, 1});
  for (int hd = 0; hd < heads; ++hd) {
    const Scalar* row = attention.data() + static_cast<std::size_t>(hd) * nq * nk;  // query 0
    for (int k = 0; k < nk; ++k) out[k] += row[k] / static_cast<Scalar>(heads);
  }
  return out;
}

Tensor query_similarity(const Tensor& per_pixel, const Tensor& bin_embeddings, int query) {
  require_shape(per_pixel.rank() == 3 && bin_embeddings.rank() == 2 && per_pixel.dim(2) == bin_embeddings.dim(1),
                "query_similarity: expected f_p {h, w, C} and f_b {N, C}");
  if (query < 0 || query >= bin_embeddings.dim(0)) throw std::out_of_range("query_similarity: query index");
  const int c = per_pixel.dim(2);
  Tensor out({per_pixel.dim(0), per_pixel.dim(1), 1});
  const ConstMatrixMap fp(per_pixel.data(), per_pixel.dim(0) * per_pixel.dim(1), c);
  const ConstMatrixMap fb(bin_embeddings.data() + static_cast<std::size_t>(query) * c, 1, c);
  MatrixMap(out.data(), static_cast<Eigen::Index>(out.size()), 1).noalias() = fp * fb.transpose();
  return out;
}

std::vector<std::filesystem::path> visualize(const DepthModel& model, const Tensor& rgb, VizKind kind,
                                             const std::filesystem::path& out_dir, const VizOptions& opts) {
  std::filesystem::create_directories(out_dir);
  const auto& range = model.config().range;
  const Prediction pred = model.predict(rgb, kind == VizKind::kAttention);
  const int h = rgb.dim(0), w = rgb.dim(1);
  std::vector<std::filesystem::path> written;
  auto emit = [&](const RgbImage& img, const std::string& name) {
    const auto path = out_dir / name;
    img.save(path);
    written.push_back(path);
  };

  switch (kind) {
    case VizKind::kBins:
      emit(render_bins(pred.output.centers, range), "bins.png");
      break;
    case VizKind::kProb: {
      const int ph = pred.per_pixel.dim(0), pw = pred.per_pixel.dim(1);
      std::vector<std::pair<int, int>> probes = opts.probe_points;
      if (probes.empty()) probes = {{ph / 2, pw / 2}, {0, 0}, {0, pw - 1}, {ph - 1, 0}, {ph - 1, pw - 1}};
      std::vector<int> idx;
      for (auto [r, c] : probes) {
        if (r < 0 || r >= ph || c < 0 || c >= pw) throw std::out_of_range("probe point outside f_p");
        idx.push_back(r * pw + c);
      }
      emit(render_distributions(pred.output.prob, pred.output.centers, idx, range), "prob.png");
      break;
    }
    case VizKind::kUncertainty:
      // Half the range is the largest spread a distribution over the range can have.
      emit(heat_map(pred.output.uncertainty, 0.5 * range.span()), "uncertainty.png");
      break;
    case VizKind::kAttention: {
      const auto& dcfg = model.config().decoder;
      const int layers = dcfg.layers_per_scale;
      for (int s = 0; s < dcfg.num_scales(); ++s) {
        const std::size_t entry = static_cast<std::size_t>(s * layers + layers - 1);
        const int level = pred.layer_level.at(entry);
        const int stride = pyramid_stride(level);
        const Tensor att = scene_query_attention(pred.attention.at(entry), h / stride, w / stride);
        emit(upscale_nearest(heat_map_autoscale(att), w, h),
             "attention_scale" + std::to_string(s + 1) + "_f" + std::to_string(level) + ".png");
      }
      break;
    }
    case VizKind::kQuerySimilarity: {
      const int n = pred.bin_embeddings.dim(0);
      const int q = opts.query < 0 ? n - 1 : opts.query;
      const Tensor sim = query_similarity(pred.per_pixel, pred.bin_embeddings, q);
      emit(upscale_nearest(heat_map_autoscale(sim), w, h), "query_similarity_q" + std::to_string(q) + ".png");
      break;
    }
    case VizKind::kPointcloud: {
      const Intrinsics k = opts.use_intrinsics ? opts.intrinsics : Intrinsics::default_for(h, w);
      const auto path = out_dir / "pointcloud.ply";
      write_ply(path, unproject(pred.output.depth, k), rgb);
      written.push_back(path);
      break;
    }
    case VizKind::kDepth:
      emit(heat_map(pred.output.depth, range.d_max), "depth.png");
      break;
  }
  return written;
}

}  // namespace depthbins

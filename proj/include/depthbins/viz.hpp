#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "depthbins/metrics.hpp"
#include "depthbins/model.hpp"

namespace depthbins {

enum class VizKind { kBins, kProb, kUncertainty, kAttention, kQuerySimilarity, kPointcloud, kDepth };

/// bins | prob | uncertainty | attention | query_similarity | pointcloud | depth.
VizKind parse_viz_kind(const std::string& text);
const char* viz_kind_name(VizKind kind);

/// 8-bit RGB image, row-major.
struct RgbImage {
  int width = 0, height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h, std::array<std::uint8_t, 3> fill = {255, 255, 255});
  void set(int x, int y, std::array<std::uint8_t, 3> c);
  std::array<std::uint8_t, 3> at(int x, int y) const;
  void save(const std::filesystem::path& path) const;
};

/// Heat colour for t in [0, 1] (clamped); t = 0 is black.
std::array<std::uint8_t, 3> heat_color(double t);
/// Colours a {H, W, 1} map with value / vmax; vmax <= 0 maps everything to 0.
RgbImage heat_map(const Tensor& values, double vmax);
/// Min-max normalised heat map; a constant map renders as zeros.
RgbImage heat_map_autoscale(const Tensor& values);

/// Column of each bin centre on a strip `width` pixels wide spanning the range.
std::vector<int> bin_tick_positions(std::span<const Scalar> centers, const DepthRange& range, int width);
RgbImage render_bins(std::span<const Scalar> centers, const DepthRange& range, int width = 512, int height = 64);
/// One row of bars per probe pixel: bar i at the tick of centre i, height
/// proportional to its probability.
RgbImage render_distributions(const Tensor& prob, std::span<const Scalar> centers, const std::vector<int>& pixels,
                              const DepthRange& range, int width = 512, int row_height = 96);

/// Head-averaged cross-attention of the scene query for one trace entry,
/// shaped {h_s, w_s, 1} over that scale's token grid.
Tensor scene_query_attention(const Tensor& attention, int grid_h, int grid_w);
/// Dot product of one bins query embedding (0-based) with every f_p pixel, {h, w, 1}.
Tensor query_similarity(const Tensor& per_pixel, const Tensor& bin_embeddings, int query);

struct VizOptions {
  int query = -1;                  ///< bins query for query_similarity; -1 = last
  std::vector<std::pair<int, int>> probe_points;  ///< (row, col) in f_p; empty = centre and corners
  bool use_intrinsics = false;
  Intrinsics intrinsics{1, 1, 0, 0};
};

/// Writes the requested visualization of `rgb` into `out_dir` and returns the
/// files written.
std::vector<std::filesystem::path> visualize(const DepthModel& model, const Tensor& rgb, VizKind kind,
                                             const std::filesystem::path& out_dir, const VizOptions& opts = {});

}  // namespace depthbins

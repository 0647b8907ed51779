#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "depthbins/data.hpp"
#include "depthbins/depth_head.hpp"
#include "depthbins/objectives.hpp"
#include "depthbins/tensor.hpp"

namespace depthbins {

struct MetricReport {
  double delta1 = 0, delta2 = 0, delta3 = 0;
  double abs_rel = 0, sq_rel = 0, rmse = 0, rmse_log = 0, log10 = 0;
  double silog = 0, abs_error_rel = 0, sq_error_rel = 0;
  double irmse = 0;  ///< 1/km
  std::int64_t pixel_count = 0;
};

/// Names of the metric columns in report order (pixel_count excluded).
const std::vector<std::string>& metric_names();
/// Value of a column listed by metric_names().
double metric_value(const MetricReport& r, const std::string& name);

/// Metrics over pixels where mask != 0. Thresholds are strict (ratio < 1.25^i).
/// Throws EmptyMaskError when no pixel is valid.
MetricReport compute_metrics(std::span<const Scalar> pred, std::span<const Scalar> gt,
                             std::span<const std::uint8_t> mask);

std::string to_json(const MetricReport& r, int indent = 2);
MetricReport metric_report_from_json(const std::string& text);

// ---------------------------------------------------------------------------
// Evaluation crops
// ---------------------------------------------------------------------------

enum class CropKind { kNone, kEigenNyu, kGargKitti, kCustom };

/// Crop region as fractions of the image size. Row/col bounds are
/// floor(fraction * size) and half-open.
struct CropSpec {
  CropKind kind = CropKind::kNone;
  double top = 0, bottom = 1, left = 0, right = 1;

  static CropSpec none() { return {}; }
  /// 45:471, 41:601 on a 480x640 frame, rescaled for other sizes.
  static CropSpec eigen_nyu();
  static CropSpec garg_kitti();
  /// "none", "eigen_nyu", "garg_kitti" or "custom:top,bottom,left,right".
  static CropSpec parse(const std::string& text);
  std::string name() const;
};

struct CropBounds {
  int row0, row1, col0, col1;
  int rows() const { return row1 - row0; }
  int cols() const { return col1 - col0; }
};

/// Throws std::out_of_range if the region is empty or leaves the image.
CropBounds crop_bounds(const CropSpec& spec, int height, int width);
/// Crops a {H, W, C} map.
Tensor apply_eval_crop(const Tensor& map, const CropSpec& spec);
std::vector<std::uint8_t> apply_eval_crop(std::span<const std::uint8_t> mask, int height, int width,
                                          const CropSpec& spec);

// ---------------------------------------------------------------------------
// Dataset evaluation
// ---------------------------------------------------------------------------

/// Maps an rgb image {H, W, 3} to a depth map {h, w, 1}; resized to the
/// ground-truth resolution when the sizes differ.
using DepthPredictor = std::function<Tensor(const Tensor& rgb)>;

struct EvalResult {
  /// Per-image mean of every metric; pixel_count is the total over images.
  MetricReport aggregate;
  std::vector<MetricReport> per_image;
  int skipped = 0;  ///< images without any valid pixel after cropping
};

MetricReport mean_report(const std::vector<MetricReport>& reports);

EvalResult evaluate_dataset(const DepthPredictor& predict, const std::vector<ImageSample>& dataset,
                            const CropSpec& crop, const DepthRange& range);

// ---------------------------------------------------------------------------
// Point clouds
// ---------------------------------------------------------------------------

struct Intrinsics {
  double fx, fy, cx, cy;
  /// Focal length equal to the image width, principal point at the centre.
  static Intrinsics default_for(int height, int width);
};

struct Point3 {
  double x, y, z;
};

/// Pinhole back-projection of a {H, W, 1} depth map, row-major pixel order,
/// with u the column and v the row index.
std::vector<Point3> unproject(const Tensor& depth, const Intrinsics& k);

/// ASCII PLY. `rgb` ({H, W, 3} in [0, 1]) may be empty; otherwise it must have
/// one pixel per point.
void write_ply(const std::filesystem::path& path, const std::vector<Point3>& points, const Tensor& rgb = {});

}  // namespace depthbins

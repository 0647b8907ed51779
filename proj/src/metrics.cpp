#include "depthbins/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <Eigen/Core>

#include "depthbins/objectives.hpp"
#include "depthbins/ops.hpp"
#include "json.hpp"

namespace depthbins {

namespace {

struct Field {
  const char* name;
  double MetricReport::*member;
};

constexpr Field kFields[] = {
    {"delta1", &MetricReport::delta1},
    {"delta2", &MetricReport::delta2},
    {"delta3", &MetricReport::delta3},
    {"abs_rel", &MetricReport::abs_rel},
    {"sq_rel", &MetricReport::sq_rel},
    {"rmse", &MetricReport::rmse},
    {"rmse_log", &MetricReport::rmse_log},
    {"log10", &MetricReport::log10},
    {"silog", &MetricReport::silog},
    {"abs_error_rel", &MetricReport::abs_error_rel},
    {"sq_error_rel", &MetricReport::sq_error_rel},
    {"irmse", &MetricReport::irmse},
};

}  // namespace

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& f : kFields) v.emplace_back(f.name);
    return v;
  }();
  return names;
}

double metric_value(const MetricReport& r, const std::string& name) {
  for (const auto& f : kFields) {
    if (name == f.name) return r.*f.member;
  }
  if (name == "pixel_count") return static_cast<double>(r.pixel_count);
  throw std::invalid_argument("unknown metric: " + name);
}

MetricReport compute_metrics(std::span<const Scalar> pred, std::span<const Scalar> gt,
                             std::span<const std::uint8_t> mask) {
  if (pred.size() != gt.size() || pred.size() != mask.size()) {
    throw std::invalid_argument("compute_metrics: size mismatch");
  }
  Eigen::Index n = 0;
  for (auto m : mask) n += m ? 1 : 0;
  if (n == 0) throw EmptyMaskError();

  Eigen::ArrayXd p(n), g(n);
  for (std::size_t i = 0, k = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    if (!(pred[i] > 0) || !std::isfinite(pred[i]) || !(gt[i] > 0)) {
      throw std::invalid_argument("compute_metrics: valid pixels need positive finite depths");
    }
    p[k] = pred[i];
    g[k] = gt[i];
    ++k;
  }

  const double count = static_cast<double>(n);
  MetricReport r;
  r.pixel_count = n;
  const Eigen::ArrayXd ratio = (p / g).max(g / p);
  r.delta1 = (ratio < 1.25).cast<double>().sum() / count;
  r.delta2 = (ratio < 1.25 * 1.25).cast<double>().sum() / count;
  r.delta3 = (ratio < 1.25 * 1.25 * 1.25).cast<double>().sum() / count;

  const Eigen::ArrayXd diff = p - g;
  r.abs_rel = (diff.abs() / g).sum() / count;
  r.sq_rel = (diff.square() / g).sum() / count;
  r.rmse = std::sqrt(diff.square().sum() / count);

  const Eigen::ArrayXd log_diff = p.log() - g.log();
  r.rmse_log = std::sqrt(log_diff.square().sum() / count);
  r.log10 = (p.log10() - g.log10()).abs().sum() / count;
  const double mean_log = log_diff.sum() / count;
  r.silog = 100.0 * std::sqrt(std::max(0.0, log_diff.square().sum() / count - mean_log * mean_log));
  r.abs_error_rel = 100.0 * r.abs_rel;
  r.sq_error_rel = 100.0 * r.sq_rel;
  r.irmse = 1000.0 * std::sqrt((p.inverse() - g.inverse()).square().sum() / count);
  return r;
}

std::string to_json(const MetricReport& r, int indent) {
  nlohmann::ordered_json j;
  for (const auto& f : kFields) j[f.name] = r.*f.member;
  j["pixel_count"] = r.pixel_count;
  return j.dump(indent);
}

MetricReport metric_report_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  MetricReport r;
  for (const auto& f : kFields) r.*f.member = j.at(f.name).get<double>();
  r.pixel_count = j.at("pixel_count").get<std::int64_t>();
  return r;
}

// ---------------------------------------------------------------------------

CropSpec CropSpec::eigen_nyu() {
  return {CropKind::kEigenNyu, 45.0 / 480.0, 471.0 / 480.0, 41.0 / 640.0, 601.0 / 640.0};
}

CropSpec CropSpec::garg_kitti() {
  return {CropKind::kGargKitti, 0.40810811, 0.99189189, 0.03594771, 0.96405229};
}

CropSpec CropSpec::parse(const std::string& text) {
  if (text == "none") return none();
  if (text == "eigen_nyu") return eigen_nyu();
  if (text == "garg_kitti") return garg_kitti();
  const std::string prefix = "custom:";
  if (text.rfind(prefix, 0) == 0) {
    CropSpec s;
    s.kind = CropKind::kCustom;
    std::istringstream in(text.substr(prefix.size()));
    char c1 = 0, c2 = 0, c3 = 0;
    in >> s.top >> c1 >> s.bottom >> c2 >> s.left >> c3 >> s.right;
    if (!in || c1 != ',' || c2 != ',' || c3 != ',') throw std::invalid_argument("bad custom crop: " + text);
    return s;
  }
  throw std::invalid_argument("unknown crop: " + text);
}

std::string CropSpec::name() const {
  switch (kind) {
    case CropKind::kNone: return "none";
    case CropKind::kEigenNyu: return "eigen_nyu";
    case CropKind::kGargKitti: return "garg_kitti";
    case CropKind::kCustom: break;
  }
  std::ostringstream os;
  os << "custom:" << top << ',' << bottom << ',' << left << ',' << right;
  return os.str();
}

CropBounds crop_bounds(const CropSpec& spec, int height, int width) {
  // The small epsilon keeps exact ratios such as 471/480 from flooring down.
  auto at = [](double frac, int size) { return static_cast<int>(std::floor(frac * size + 1e-9)); };
  CropBounds b{at(spec.top, height), at(spec.bottom, height), at(spec.left, width), at(spec.right, width)};
  if (b.row0 < 0 || b.col0 < 0 || b.row1 > height || b.col1 > width || b.rows() <= 0 || b.cols() <= 0) {
    throw std::out_of_range("crop " + spec.name() + " does not fit a " + std::to_string(height) + "x" +
                            std::to_string(width) + " image");
  }
  return b;
}

Tensor apply_eval_crop(const Tensor& map, const CropSpec& spec) {
  require_shape(map.rank() == 3, "apply_eval_crop expects {H, W, C}");
  const int w = map.dim(1), c = map.dim(2);
  const CropBounds b = crop_bounds(spec, map.dim(0), w);
  Tensor out({b.rows(), b.cols(), c});
  Scalar* dst = out.data();
  for (int y = b.row0; y < b.row1; ++y) {
    const Scalar* src = map.data() + (static_cast<std::size_t>(y) * w + b.col0) * c;
    dst = std::copy(src, src + static_cast<std::size_t>(b.cols()) * c, dst);
  }
  return out;
}

std::vector<std::uint8_t> apply_eval_crop(std::span<const std::uint8_t> mask, int height, int width,
                                          const CropSpec& spec) {
  require_shape(mask.size() == static_cast<std::size_t>(height) * width, "apply_eval_crop: mask size mismatch");
  const CropBounds b = crop_bounds(spec, height, width);
  std::vector<std::uint8_t> out;
  out.reserve(static_cast<std::size_t>(b.rows()) * b.cols());
  for (int y = b.row0; y < b.row1; ++y) {
    const auto* row = mask.data() + static_cast<std::size_t>(y) * width;
    out.insert(out.end(), row + b.col0, row + b.col1);
  }
  return out;
}

// ---------------------------------------------------------------------------

MetricReport mean_report(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("mean_report: no reports");
  MetricReport m;
  for (const auto& r : reports) {
    for (const auto& f : kFields) m.*f.member += r.*f.member;
    m.pixel_count += r.pixel_count;
  }
  for (const auto& f : kFields) m.*f.member /= static_cast<double>(reports.size());
  return m;
}

EvalResult evaluate_dataset(const DepthPredictor& predict, const std::vector<ImageSample>& dataset,
                            const CropSpec& crop, const DepthRange& range) {
  if (dataset.empty()) throw std::invalid_argument("evaluate_dataset: empty dataset");
  EvalResult result;
  for (const auto& sample : dataset) {
    const int h = sample.depth.dim(0), w = sample.depth.dim(1);
    Tensor pred = predict(sample.rgb);
    require_shape(pred.rank() == 3 && pred.dim(2) == 1, "predictor must return {h, w, 1}");
    if (pred.dim(0) != h || pred.dim(1) != w) pred = ops::resize_bilinear(constant(std::move(pred)), h, w)->value;
    const auto mask = apply_eval_crop(validity_mask(sample.depth, range), h, w, crop);
    const Tensor p = apply_eval_crop(pred, crop);
    const Tensor g = apply_eval_crop(sample.depth, crop);
    try {
      result.per_image.push_back(compute_metrics(p.span(), g.span(), mask));
    } catch (const EmptyMaskError&) {
      ++result.skipped;
    }
  }
  if (result.per_image.empty()) throw EmptyMaskError();
  result.aggregate = mean_report(result.per_image);
  return result;
}

// ---------------------------------------------------------------------------

Intrinsics Intrinsics::default_for(int height, int width) {
  return {static_cast<double>(width), static_cast<double>(width), width / 2.0, height / 2.0};
}

std::vector<Point3> unproject(const Tensor& depth, const Intrinsics& k) {
  require_shape(depth.rank() == 3 && depth.dim(2) == 1, "unproject expects {H, W, 1}");
  if (!(k.fx > 0) || !(k.fy > 0)) throw std::invalid_argument("unproject: focal lengths must be positive");
  const int h = depth.dim(0), w = depth.dim(1);
  std::vector<Point3> pts;
  pts.reserve(depth.size());
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const double d = depth[static_cast<std::size_t>(v) * w + u];
      pts.push_back({(u - k.cx) * d / k.fx, (v - k.cy) * d / k.fy, d});
    }
  }
  return pts;
}

void write_ply(const std::filesystem::path& path, const std::vector<Point3>& points, const Tensor& rgb) {
  const bool color = !rgb.empty();
  if (color) require_shape(rgb.size() == points.size() * 3, "write_ply: colour count mismatch");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "ply\nformat ascii 1.0\nelement vertex " << points.size()
      << "\nproperty float x\nproperty float y\nproperty float z\n";
  if (color) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";
  auto byte = [](Scalar v) { return static_cast<int>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); };
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    out << p.x << ' ' << p.y << ' ' << p.z;
    if (color) out << ' ' << byte(rgb[3 * i]) << ' ' << byte(rgb[3 * i + 1]) << ' ' << byte(rgb[3 * i + 2]);
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace depthbins

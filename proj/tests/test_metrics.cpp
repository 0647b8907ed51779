#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "depthbins/metrics.hpp"

using namespace depthbins;

namespace {

using Bytes = std::vector<std::uint8_t>;

// Plain loop over valid pixels, one accumulator per metric.
MetricReport metrics_oracle(const std::vector<Scalar>& pred, const std::vector<Scalar>& gt, const Bytes& mask) {
  MetricReport r;
  double d1 = 0, d2 = 0, d3 = 0, ar = 0, sr = 0, se = 0, sl = 0, l10 = 0, g1 = 0, g2 = 0, inv = 0, n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i]) continue;
    const double p = pred[i], g = gt[i];
    const double ratio = p > g ? p / g : g / p;
    d1 += ratio < 1.25;
    d2 += ratio < 1.5625;
    d3 += ratio < 1.953125;
    ar += std::abs(p - g) / g;
    sr += (p - g) * (p - g) / g;
    se += (p - g) * (p - g);
    const double lg = std::log(p) - std::log(g);
    sl += lg * lg;
    l10 += std::abs(std::log10(p) - std::log10(g));
    g1 += lg;
    g2 += lg * lg;
    inv += (1 / p - 1 / g) * (1 / p - 1 / g);
    n += 1;
  }
  r.delta1 = d1 / n;
  r.delta2 = d2 / n;
  r.delta3 = d3 / n;
  r.abs_rel = ar / n;
  r.sq_rel = sr / n;
  r.rmse = std::sqrt(se / n);
  r.rmse_log = std::sqrt(sl / n);
  r.log10 = l10 / n;
  r.silog = 100 * std::sqrt(std::max(0.0, g2 / n - (g1 / n) * (g1 / n)));
  r.abs_error_rel = 100 * r.abs_rel;
  r.sq_error_rel = 100 * r.sq_rel;
  r.irmse = 1000 * std::sqrt(inv / n);
  r.pixel_count = static_cast<std::int64_t>(n);
  return r;
}

struct Instance {
  std::vector<Scalar> pred, gt;
  Bytes mask;
};

Instance random_instance(std::mt19937_64& rng, int n = 32 * 32) {
  std::uniform_real_distribution<double> depth(0.1, 10.0), factor(0.5, 2.0);
  Instance x;
  for (int i = 0; i < n; ++i) {
    const double g = depth(rng);
    x.gt.push_back(static_cast<Scalar>(g));
    x.pred.push_back(static_cast<Scalar>(g * factor(rng)));
    x.mask.push_back(rng() % 5 != 0);
  }
  x.mask[0] = 1;
  return x;
}

MetricReport metrics(const Instance& x) { return compute_metrics(x.pred, x.gt, x.mask); }

void expect_reports_near(const MetricReport& a, const MetricReport& b, double tol) {
  for (const auto& name : metric_names()) EXPECT_NEAR(metric_value(a, name), metric_value(b, name), tol) << name;
  EXPECT_EQ(a.pixel_count, b.pixel_count);
}

TEST(ComputeMetrics, PerfectPrediction) {
  const std::vector<Scalar> g = {1, 2, 3, 4};
  const auto r = compute_metrics(g, g, Bytes(4, 1));
  EXPECT_EQ(r.delta1, 1.0);
  EXPECT_EQ(r.delta2, 1.0);
  EXPECT_EQ(r.delta3, 1.0);
  for (const auto& name : metric_names()) {
    if (!name.starts_with("delta")) EXPECT_EQ(metric_value(r, name), 0.0) << name;
  }
  EXPECT_EQ(r.pixel_count, 4);
}

TEST(ComputeMetrics, TwoPixelExample) {
  const auto r = compute_metrics(std::vector<Scalar>{2, 8}, std::vector<Scalar>{1, 10}, Bytes{1, 1});
  EXPECT_DOUBLE_EQ(r.delta1, 0.0);
  EXPECT_DOUBLE_EQ(r.delta2, 0.5);
  EXPECT_DOUBLE_EQ(r.delta3, 0.5);
  EXPECT_NEAR(r.abs_rel, 0.6, 1e-12);
  EXPECT_NEAR(r.rmse, std::sqrt(2.5), 1e-12);
  EXPECT_NEAR(r.rmse, 1.5811, 1e-4);
}

TEST(ComputeMetrics, ThresholdsAreStrict) {
  // ratio exactly 1.25 counts as a failure for delta1.
  const auto r = compute_metrics(std::vector<Scalar>{5}, std::vector<Scalar>{4}, Bytes{1});
  EXPECT_EQ(r.delta1, 0.0);
  EXPECT_EQ(r.delta2, 1.0);
}

TEST(ComputeMetrics, Errors) {
  EXPECT_THROW(compute_metrics(std::vector<Scalar>{1}, std::vector<Scalar>{1}, Bytes{0}), EmptyMaskError);
  EXPECT_THROW(compute_metrics(std::vector<Scalar>{0}, std::vector<Scalar>{1}, Bytes{1}), std::invalid_argument);
  EXPECT_THROW(compute_metrics(std::vector<Scalar>{1, 2}, std::vector<Scalar>{1}, Bytes{1}), std::invalid_argument);
  // Masked pixels may hold anything.
  EXPECT_NO_THROW(compute_metrics(std::vector<Scalar>{0, 1}, std::vector<Scalar>{0, 1}, Bytes{0, 1}));
}

TEST(ComputeMetrics, MatchesScalarLoop) {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = random_instance(rng);
    expect_reports_near(metrics(x), metrics_oracle(x.pred, x.gt, x.mask), 1e-10);
  }
}

TEST(ComputeMetrics, DeltaMonotoneAndSymmetric) {
  std::mt19937_64 rng(52);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = random_instance(rng, 256);
    const auto r = metrics(x);
    EXPECT_LE(r.delta1, r.delta2);
    EXPECT_LE(r.delta2, r.delta3);
    const auto s = compute_metrics(x.gt, x.pred, x.mask);
    EXPECT_EQ(r.delta1, s.delta1);
    EXPECT_EQ(r.delta2, s.delta2);
    EXPECT_EQ(r.delta3, s.delta3);
  }
}

TEST(ComputeMetrics, JointScaleBehaviour) {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_instance(rng, 256);
    const auto base = metrics(x);
    // Powers of two keep float ratios exact.
    for (double s : {0.25, 4.0}) {
      Instance y = x;
      for (auto& v : y.pred) v = static_cast<Scalar>(v * s);
      for (auto& v : y.gt) v = static_cast<Scalar>(v * s);
      const auto r = metrics(y);
      EXPECT_EQ(r.delta1, base.delta1);
      EXPECT_EQ(r.delta2, base.delta2);
      EXPECT_EQ(r.delta3, base.delta3);
      EXPECT_NEAR(r.abs_rel, base.abs_rel, 1e-12);
      EXPECT_NEAR(r.rmse_log, base.rmse_log, 1e-9);
      EXPECT_NEAR(r.log10, base.log10, 1e-9);
      EXPECT_NEAR(r.silog, base.silog, 1e-7);
      EXPECT_NEAR(r.rmse, s * base.rmse, 1e-9 * s * base.rmse);
      EXPECT_NEAR(r.irmse, base.irmse / s, 1e-9 * base.irmse / s);
    }
  }
}

TEST(MetricReport, JsonRoundTrip) {
  std::mt19937_64 rng(54);
  const auto r = metrics(random_instance(rng));
  const auto back = metric_report_from_json(to_json(r));
  for (const auto& name : metric_names()) EXPECT_EQ(metric_value(back, name), metric_value(r, name)) << name;
  EXPECT_EQ(back.pixel_count, r.pixel_count);
  EXPECT_THROW(metric_value(r, "nope"), std::invalid_argument);
}

TEST(EvalCrop, GargOnKittiFrame) {
  const auto b = crop_bounds(CropSpec::garg_kitti(), 375, 1242);
  EXPECT_EQ(b.row0, static_cast<int>(std::floor(0.40810811 * 375)));
  EXPECT_EQ(b.row0, 153);
  EXPECT_EQ(b.row1, 371);
  EXPECT_EQ(b.col0, 44);
  EXPECT_EQ(b.col1, 1197);
}

TEST(EvalCrop, EigenOnNyuFrame) {
  const auto b = crop_bounds(CropSpec::eigen_nyu(), 480, 640);
  EXPECT_EQ(b.row0, 45);
  EXPECT_EQ(b.row1, 471);
  EXPECT_EQ(b.col0, 41);
  EXPECT_EQ(b.col1, 601);
  EXPECT_EQ(b.rows() * b.cols(), 426 * 560);
}

TEST(EvalCrop, NoneIsIdentityAndParseRoundTrips) {
  std::mt19937_64 rng(55);
  Tensor t({6, 5, 1});
  for (auto& v : t.storage()) v = static_cast<Scalar>(rng() % 100);
  EXPECT_EQ(apply_eval_crop(t, CropSpec::none()).storage(), t.storage());
  for (const char* s : {"none", "eigen_nyu", "garg_kitti"}) EXPECT_EQ(CropSpec::parse(s).name(), s);
  const auto c = CropSpec::parse("custom:0.25,0.75,0,0.5");
  EXPECT_EQ(c.kind, CropKind::kCustom);
  const auto b = crop_bounds(c, 8, 8);
  EXPECT_EQ(b.row0, 2);
  EXPECT_EQ(b.row1, 6);
  EXPECT_EQ(b.col1, 4);
  const Tensor cropped = apply_eval_crop(t, CropSpec::parse("custom:0.5,1,0.2,0.8"));
  ASSERT_EQ(cropped.shape(), (std::vector<int>{3, 3, 1}));
  EXPECT_EQ(cropped[0], t[3 * 5 + 1]);
  EXPECT_THROW(CropSpec::parse("garg"), std::invalid_argument);
  EXPECT_THROW(crop_bounds(CropSpec::parse("custom:0.5,0.5,0,1"), 8, 8), std::out_of_range);
  EXPECT_THROW(crop_bounds(CropSpec::parse("custom:0,1.5,0,1"), 8, 8), std::out_of_range);
}

ImageSample sample_with_depth(int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.5, 9.5);
  ImageSample s;
  s.rgb = Tensor({h, w, 3}, 0.5f);
  s.depth = Tensor({h, w, 1});
  for (auto& v : s.depth.storage()) v = static_cast<Scalar>(u(rng));
  s.depth[0] = 0;  // invalid pixel
  s.valid = validity_mask(s.depth, DepthRange::indoor());
  return s;
}

TEST(EvaluateDataset, OracleModelIsPerfect) {
  std::mt19937_64 rng(56);
  std::vector<ImageSample> data;
  for (int i = 0; i < 16; ++i) data.push_back(sample_with_depth(32, 32, rng));
  // The predictor sees only rgb; look the depth up by image index.
  std::size_t next = 0;
  const auto result = evaluate_dataset([&](const Tensor&) { return data[next++].depth; }, data, CropSpec::none(),
                                       DepthRange::indoor());
  EXPECT_EQ(result.aggregate.delta1, 1.0);
  EXPECT_EQ(result.aggregate.abs_rel, 0.0);
  EXPECT_EQ(result.aggregate.rmse, 0.0);
  EXPECT_EQ(result.aggregate.pixel_count, 16 * (32 * 32 - 1));
}

TEST(EvaluateDataset, SingletonAndDuplicateAverages) {
  std::mt19937_64 rng(57);
  const ImageSample s = sample_with_depth(32, 32, rng);
  Tensor pred = s.depth;
  for (auto& v : pred.storage()) v = v * 1.1f + 0.05f;
  const DepthPredictor model = [&](const Tensor&) { return pred; };
  const auto one = evaluate_dataset(model, {s}, CropSpec::none(), DepthRange::indoor());
  const auto direct = compute_metrics(pred.span(), s.depth.span(), s.valid);
  expect_reports_near(one.aggregate, direct, 0.0);
  const auto two = evaluate_dataset(model, {s, s}, CropSpec::none(), DepthRange::indoor());
  for (const auto& name : metric_names()) {
    EXPECT_EQ(metric_value(two.aggregate, name), metric_value(one.aggregate, name)) << name;
  }
  EXPECT_EQ(two.aggregate.pixel_count, 2 * one.aggregate.pixel_count);  // a total, not a mean
}

TEST(EvaluateDataset, UpsamplesPredictionsToGroundTruth) {
  std::mt19937_64 rng(58);
  ImageSample s = sample_with_depth(32, 32, rng);
  s.depth.fill(4.0f);
  s.valid = validity_mask(s.depth, DepthRange::indoor());
  const auto r = evaluate_dataset([](const Tensor&) { return Tensor({8, 8, 1}, 4.0f); }, {s}, CropSpec::none(),
                                  DepthRange::indoor());
  EXPECT_EQ(r.aggregate.pixel_count, 32 * 32);
  EXPECT_NEAR(r.aggregate.abs_rel, 0.0, 1e-7);
}

TEST(EvaluateDataset, SkipsImagesWithoutValidPixels) {
  std::mt19937_64 rng(59);
  ImageSample good = sample_with_depth(32, 32, rng), empty = good;
  empty.depth.fill(50.0f);  // beyond d_max
  const DepthPredictor model = [](const Tensor& rgb) { return Tensor({rgb.dim(0), rgb.dim(1), 1}, 2.0f); };
  const auto r = evaluate_dataset(model, {good, empty}, CropSpec::none(), DepthRange::indoor());
  EXPECT_EQ(r.skipped, 1);
  EXPECT_EQ(r.per_image.size(), 1u);
  EXPECT_THROW(evaluate_dataset(model, {empty}, CropSpec::none(), DepthRange::indoor()), EmptyMaskError);
  EXPECT_THROW(evaluate_dataset(model, {}, CropSpec::none(), DepthRange::indoor()), std::invalid_argument);
}

TEST(Unproject, PinholeExamples) {
  Tensor d({30, 20, 1}, 0.0f);
  d[20 * 20 + 10] = 5.0f;  // v = 20, u = 10
  const auto pts = unproject(d, {100, 100, 0, 0});
  ASSERT_EQ(pts.size(), 600u);
  EXPECT_NEAR(pts[20 * 20 + 10].x, 0.5, 1e-12);
  EXPECT_NEAR(pts[20 * 20 + 10].y, 1.0, 1e-12);
  EXPECT_EQ(pts[20 * 20 + 10].z, 5.0);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i == 20 * 20 + 10) continue;
    EXPECT_EQ(pts[i].x, 0.0);
    EXPECT_EQ(pts[i].y, 0.0);
    EXPECT_EQ(pts[i].z, 0.0);
  }
  Tensor c({5, 7, 1}, 3.0f);
  const auto centre = unproject(c, {50, 60, 3, 2});
  EXPECT_EQ(centre[2 * 7 + 3].x, 0.0);
  EXPECT_EQ(centre[2 * 7 + 3].y, 0.0);
  EXPECT_EQ(centre[2 * 7 + 3].z, 3.0);
}

TEST(Unproject, PlyHasOneVertexPerPixel) {
  const auto dir = std::filesystem::temp_directory_path() / "depthbins_ply_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "cloud.ply";
  const Tensor d({4, 4, 1}, 2.0f);
  write_ply(path, unproject(d, Intrinsics::default_for(4, 4)), Tensor({4, 4, 3}, 0.5f));
  std::ifstream in(path);
  std::string line;
  int vertex_lines = -1;
  bool in_body = false;
  while (std::getline(in, line)) {
    if (line == "element vertex 16") vertex_lines = 0;
    if (in_body) ++vertex_lines;
    if (line == "end_header") in_body = true;
  }
  EXPECT_EQ(vertex_lines, 16);
  EXPECT_THROW(write_ply(path, unproject(d, Intrinsics::default_for(4, 4)), Tensor({2, 2, 3})), std::invalid_argument);
  std::filesystem::remove_all(dir);
}

}  // namespace

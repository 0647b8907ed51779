#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "depthbins/data.hpp"
#include "depthbins/image_io.hpp"

using namespace depthbins;
namespace fs = std::filesystem;

namespace {

constexpr std::array<Archetype, 4> kAll{Archetype::kNearField, Archetype::kFarField, Archetype::kCorridor,
                                        Archetype::kCluttered};

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / name) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

TEST(SyntheticScene, DeterministicPerSeed) {
  for (Archetype a : kAll) {
    const auto cfg = SceneConfig::make(a, 64, 96, 123);
    const auto x = generate_synthetic_scene(cfg);
    const auto y = generate_synthetic_scene(cfg);
    EXPECT_EQ(x.rgb.storage(), y.rgb.storage());
    EXPECT_EQ(x.depth.storage(), y.depth.storage());
    EXPECT_EQ(x.valid, y.valid);
    EXPECT_EQ(x.scene_label, static_cast<int>(a));
    const auto z = generate_synthetic_scene(SceneConfig::make(a, 64, 96, 124));
    EXPECT_NE(x.depth.storage(), z.depth.storage());
  }
}

TEST(SyntheticScene, FlatBackgroundWithoutObjects) {
  auto cfg = SceneConfig::make(Archetype::kCorridor, 64, 64, 5);
  cfg.min_objects = cfg.max_objects = 0;
  cfg.flat_depth = 5.0;
  const auto s = generate_synthetic_scene(cfg);
  for (Scalar d : s.depth.storage()) EXPECT_EQ(d, 5.0f);
  for (auto v : s.valid) EXPECT_EQ(v, 1);
}

TEST(SyntheticScene, DepthsWithinRangeAndRgbInUnitInterval) {
  for (const DepthRange range : {DepthRange::indoor(), DepthRange::outdoor()}) {
    for (int seed = 0; seed < 20; ++seed) {
      auto cfg = SceneConfig::make(kAll[seed % 4], 64, 64, seed);
      cfg.range = range;
      const auto s = generate_synthetic_scene(cfg);
      for (Scalar d : s.depth.storage()) {
        ASSERT_GE(d, range.d_min);
        ASSERT_LE(d, range.d_max);
      }
      for (Scalar v : s.rgb.storage()) {
        ASSERT_TRUE(std::isfinite(v));
        ASSERT_GE(v, 0.0f);
        ASSERT_LE(v, 1.0f);
      }
    }
  }
}

TEST(SyntheticScene, RejectsBadSizes) {
  auto cfg = SceneConfig::make(Archetype::kFarField, 60, 64, 0);
  EXPECT_THROW(generate_synthetic_scene(cfg), std::invalid_argument);
  cfg = SceneConfig::make(Archetype::kFarField, 64, 64, 0);
  cfg.min_objects = 3;
  cfg.max_objects = 2;
  EXPECT_THROW(generate_synthetic_scene(cfg), std::invalid_argument);
}

std::vector<double> depth_histogram(const ImageSample& s) {
  std::vector<double> h(20, 0.0);
  for (Scalar d : s.depth.storage()) h[std::min(19, static_cast<int>(d / 0.5))] += 1.0;
  for (auto& v : h) v /= static_cast<double>(s.depth.size());
  return h;
}

TEST(SyntheticScene, ArchetypesSeparableByDepthHistogram) {
  // Centroids from one set of seeds, classification of 200 others.
  std::array<std::vector<double>, 4> centroid;
  for (int a = 0; a < 4; ++a) {
    centroid[a].assign(20, 0.0);
    for (int i = 0; i < 50; ++i) {
      const auto h = depth_histogram(generate_synthetic_scene(SceneConfig::make(kAll[a], 64, 64, 10000 + i)));
      for (int k = 0; k < 20; ++k) centroid[a][k] += h[k] / 50.0;
    }
  }
  int correct = 0;
  for (int seed = 0; seed < 200; ++seed) {
    const int truth = seed % 4;
    const auto h = depth_histogram(generate_synthetic_scene(SceneConfig::make(kAll[truth], 64, 64, seed)));
    int best = 0;
    double best_d = 1e30;
    for (int a = 0; a < 4; ++a) {
      double d = 0;
      for (int k = 0; k < 20; ++k) d += (h[k] - centroid[a][k]) * (h[k] - centroid[a][k]);
      if (d < best_d) best_d = d, best = a;
    }
    correct += best == truth;
  }
  EXPECT_GE(correct, 180) << correct << "/200";
}

TEST(SyntheticDataset, CyclesArchetypesAndSeeds) {
  const auto data = synthesize_dataset(6, {Archetype::kCorridor, Archetype::kFarField}, 32, 32,
                                       DepthRange::indoor(), 9);
  ASSERT_EQ(data.size(), 6u);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(data[i].scene_label, i % 2 == 0 ? 2 : 1);
  EXPECT_NE(data[0].depth.storage(), data[2].depth.storage());
  EXPECT_EQ(mix_seed(9, 3), mix_seed(9, 3));
  EXPECT_NE(mix_seed(9, 3), mix_seed(9, 4));
  EXPECT_THROW(synthesize_dataset(2, {}, 32, 32, DepthRange::indoor(), 0), std::invalid_argument);
}

TEST(DatasetIo, SaveLoadRoundTrip) {
  TempDir dir("depthbins_data_roundtrip");
  const auto data = synthesize_dataset(4, {kAll.begin(), kAll.end()}, 64, 64, DepthRange::indoor(), 3);
  save_dataset(dir.path(), data, 1000);
  const auto manifest = read_manifest(dir.path(), 1000, 4);
  ASSERT_EQ(manifest.entries.size(), 4u);
  const auto loaded = load_dataset(manifest, DepthRange::indoor());
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(loaded[i].scene_label, data[i].scene_label);
    for (std::size_t p = 0; p < data[i].depth.size(); ++p) {
      ASSERT_LE(std::abs(loaded[i].depth[p] - data[i].depth[p]), 1.0 / 1000 + 1e-6);
    }
    for (std::size_t p = 0; p < data[i].rgb.size(); ++p) {
      ASSERT_LE(std::abs(loaded[i].rgb[p] - data[i].rgb[p]), 0.5 / 255 + 1e-6);
    }
  }
}

TEST(DatasetIo, StoredValuesAndValidity) {
  TempDir dir("depthbins_data_values");
  fs::create_directories(dir.path() / "rgb");
  fs::create_directories(dir.path() / "depth");
  write_png_rgb8(dir.path() / "rgb" / "a.png", 3, 1, std::vector<std::uint8_t>(9, 128));
  write_png_gray16(dir.path() / "depth" / "a.png", 3, 1, {5000, 0, 65535});
  std::ofstream(dir.path() / "manifest.csv") << "id,scene_label\na,1\n";

  const auto indoor = read_manifest(dir.path(), 1000);
  const auto s = load_sample(indoor.entries[0], DepthRange::indoor(), 1000);
  EXPECT_FLOAT_EQ(s.depth[0], 5.0f);
  EXPECT_EQ(s.valid, (std::vector<std::uint8_t>{1, 0, 0}));

  const auto outdoor = load_sample(indoor.entries[0], DepthRange::outdoor(), 256);
  EXPECT_NEAR(outdoor.depth[2], 255.99, 0.01);
  EXPECT_EQ(outdoor.valid[2], 0);
  EXPECT_EQ(outdoor.valid[0], 1);  // 5000 / 256 = 19.5 m
}

TEST(DatasetIo, Errors) {
  TempDir dir("depthbins_data_errors");
  EXPECT_THROW(read_manifest(dir.path(), 1000), DataError);
  fs::create_directories(dir.path() / "rgb");
  fs::create_directories(dir.path() / "depth");
  std::ofstream(dir.path() / "manifest.csv") << "id,scene_label\nmissing,0\n";
  EXPECT_THROW(read_manifest(dir.path(), 1000), DataError);

  write_png_rgb8(dir.path() / "rgb" / "b.png", 2, 1, std::vector<std::uint8_t>(6, 0));
  write_png_gray8(dir.path() / "depth" / "b.png", 2, 1, {1, 2});
  std::ofstream(dir.path() / "manifest.csv") << "id,scene_label\nb,7\n";
  EXPECT_THROW(read_manifest(dir.path(), 1000, 4), DataError);
  const auto m = read_manifest(dir.path(), 1000);
  EXPECT_THROW(load_sample(m.entries[0], DepthRange::indoor(), 1000), DataError);  // 8-bit depth
  EXPECT_THROW(read_manifest(dir.path(), 0), DataError);
}

TEST(Augment, HflipIsAnInvolutionAndPreservesDepthHistogram) {
  const auto s = generate_synthetic_scene(SceneConfig::make(Archetype::kCluttered, 64, 64, 2));
  const auto f = hflip(s);
  const auto ff = hflip(f);
  EXPECT_EQ(ff.rgb.storage(), s.rgb.storage());
  EXPECT_EQ(ff.depth.storage(), s.depth.storage());
  EXPECT_EQ(ff.valid, s.valid);
  auto a = s.depth.storage(), b = f.depth.storage();
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_EQ(a, b);
  EXPECT_EQ(f.depth[0], s.depth[63]);
  EXPECT_EQ(f.rgb[0], s.rgb[63 * 3]);
}

TEST(Augment, ColorJitterTouchesRgbOnly) {
  const auto s = generate_synthetic_scene(SceneConfig::make(Archetype::kNearField, 64, 64, 4));
  AugmentFlags flags;
  flags.color_jitter = true;
  flags.jitter_strength = 0.3;
  const auto j = augment(s, flags, 77);
  EXPECT_EQ(j.depth.storage(), s.depth.storage());
  EXPECT_EQ(j.valid, s.valid);
  EXPECT_NE(j.rgb.storage(), s.rgb.storage());
  for (Scalar v : j.rgb.storage()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  EXPECT_EQ(augment(s, flags, 77).rgb.storage(), j.rgb.storage());
}

TEST(Augment, RandomCropIsConsistentAcrossMaps) {
  const auto s = generate_synthetic_scene(SceneConfig::make(Archetype::kFarField, 128, 128, 6));
  AugmentFlags flags;
  flags.random_crop = true;
  flags.crop_height = 64;
  flags.crop_width = 96;
  const auto c = augment(s, flags, 3);
  ASSERT_EQ(c.rgb.shape(), (std::vector<int>{64, 96, 3}));
  ASSERT_EQ(c.depth.shape(), (std::vector<int>{64, 96, 1}));
  ASSERT_EQ(c.valid.size(), 64u * 96u);
  // Locate the crop offset from the depth map, then check rgb agrees.
  bool found = false;
  for (int y0 = 0; y0 <= 64 && !found; ++y0) {
    for (int x0 = 0; x0 <= 32 && !found; ++x0) {
      bool match = true;
      for (int y = 0; y < 64 && match; ++y) {
        for (int x = 0; x < 96 && match; ++x) {
          match = c.depth[y * 96 + x] == s.depth[(y + y0) * 128 + x + x0] &&
                  c.rgb[(y * 96 + x) * 3 + 1] == s.rgb[((y + y0) * 128 + x + x0) * 3 + 1];
        }
      }
      found = match;
    }
  }
  EXPECT_TRUE(found);
  flags.crop_height = 160;
  EXPECT_THROW(augment(s, flags, 3), std::invalid_argument);
  flags.crop_height = 40;
  EXPECT_THROW(augment(s, flags, 3), std::invalid_argument);
}

}  // namespace

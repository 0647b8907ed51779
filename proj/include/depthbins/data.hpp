#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "depthbins/depth_head.hpp"
#include "depthbins/tensor.hpp"

namespace depthbins {

/// One training/evaluation example.
struct ImageSample {
  Tensor rgb;    ///< {H, W, 3} in [0, 1]
  Tensor depth;  ///< {H, W, 1} metres
  std::vector<std::uint8_t> valid;
  int scene_label = 0;

  int height() const { return rgb.dim(0); }
  int width() const { return rgb.dim(1); }
};

/// Validity rule shared by loaders and evaluation: finite and strictly inside
/// (d_min, d_max).
std::vector<std::uint8_t> validity_mask(const Tensor& depth, const DepthRange& range);

enum class Archetype : int { kNearField = 0, kFarField = 1, kCorridor = 2, kCluttered = 3 };
inline constexpr int kNumArchetypes = 4;
const char* archetype_name(Archetype a);

struct SceneConfig {
  Archetype archetype = Archetype::kNearField;
  int height = 128;
  int width = 128;
  int min_objects = 1;
  int max_objects = 4;
  DepthRange range = DepthRange::indoor();
  std::uint64_t seed = 0;
  /// Replaces the archetype's background gradient with a constant depth.
  std::optional<double> flat_depth;
  double texture_noise = 0.02;

  /// Archetype defaults for the object count.
  static SceneConfig make(Archetype a, int height, int width, std::uint64_t seed);
  void validate() const;
};

/// Procedural scene: archetype-dependent background depth plus occluding
/// fronto-parallel rectangles. Brightness falls off as 1/depth and object
/// footprints shrink with depth, so depth is recoverable from appearance.
ImageSample generate_synthetic_scene(const SceneConfig& cfg);

/// Deterministic per-index seed derivation (SplitMix64 mixing).
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index);

/// `count` scenes cycling through `archetypes`, seeded from (seed, index).
std::vector<ImageSample> synthesize_dataset(int count, const std::vector<Archetype>& archetypes, int height, int width,
                                            const DepthRange& range, std::uint64_t seed);

// ---------------------------------------------------------------------------
// On-disk layout: root/rgb/NNNNN.png, root/depth/NNNNN.png (16-bit),
// root/manifest.csv with header "id,scene_label".
// ---------------------------------------------------------------------------

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ManifestEntry {
  std::string id;
  std::filesystem::path rgb_path;
  std::filesystem::path depth_path;
  int scene_label = 0;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;
  int depth_scale = 1000;  ///< stored integer / depth_scale = metres
};

/// Parses root/manifest.csv. Throws DataError when a listed file is missing
/// or a label falls outside [0, num_classes) (num_classes <= 0 skips that check).
DatasetManifest read_manifest(const std::filesystem::path& root, int depth_scale, int num_classes = 0);

ImageSample load_sample(const ManifestEntry& entry, const DepthRange& range, int depth_scale);
std::vector<ImageSample> load_dataset(const DatasetManifest& manifest, const DepthRange& range);

/// Writes one sample under root using the layout above (manifest untouched).
void save_sample(const std::filesystem::path& root, const std::string& id, const ImageSample& sample, int depth_scale);
/// Writes samples 00000.. plus the manifest.
void save_dataset(const std::filesystem::path& root, const std::vector<ImageSample>& samples, int depth_scale);

/// Loads an RGB PNG as {H, W, 3} in [0, 1].
Tensor load_rgb(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

struct AugmentFlags {
  bool hflip = false;
  bool color_jitter = false;
  bool random_crop = false;
  int crop_height = 0;  ///< multiple of 32 when random_crop is set
  int crop_width = 0;
  double jitter_strength = 0.1;
};

ImageSample hflip(const ImageSample& sample);
/// Applies the enabled augmentations; randomness comes from `seed` only.
ImageSample augment(const ImageSample& sample, const AugmentFlags& flags, std::uint64_t seed);

}  // namespace depthbins

#include "depthbins/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "depthbins/image_io.hpp"

namespace depthbins {
namespace {

using Rng64 = std::mt19937_64;

double uniform(Rng64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
int uniform_int(Rng64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

struct Chroma {
  double c[3];
};

// Zero-mean colour tint so that the channel mean carries only shading.
Chroma random_chroma(Rng64& rng) {
  Chroma ch{};
  double mean = 0;
  for (double& v : ch.c) {
    v = uniform(rng, -1.0, 1.0);
    mean += v / 3.0;
  }
  for (double& v : ch.c) v = std::clamp(v - mean, -1.0, 1.0);
  return ch;
}

double shading(double depth) { return 0.08 + 0.72 / std::max(depth, 1.0); }

// Background depth as a function of normalised coordinates.
struct Background {
  Archetype kind;
  double top = 0, bottom = 0, tilt = 0;  // gradient archetypes
  double vx = 0.5, vy = 0.5, near_d = 1, far_d = 9;  // corridor

  double at(double u, double v) const {
    if (kind == Archetype::kCorridor) {
      const double r = std::min(1.0, std::max(std::abs(u - vx) / std::max(vx, 1 - vx),
                                              std::abs(v - vy) / std::max(vy, 1 - vy)));
      // Inverse depth is linear in image distance for planar walls.
      return 1.0 / (1.0 / far_d + (1.0 / near_d - 1.0 / far_d) * r);
    }
    return top + (bottom - top) * v + tilt * (u - 0.5);
  }
};

Background make_background(Archetype a, Rng64& rng) {
  Background bg{a};
  switch (a) {
    case Archetype::kNearField:
      bg.top = uniform(rng, 3.0, 4.0);
      bg.bottom = uniform(rng, 1.0, 1.5);
      bg.tilt = uniform(rng, -0.3, 0.3);
      break;
    case Archetype::kFarField:
      bg.top = uniform(rng, 8.5, 9.5);
      bg.bottom = uniform(rng, 5.0, 6.0);
      bg.tilt = uniform(rng, -0.5, 0.5);
      break;
    case Archetype::kCorridor:
      bg.vx = uniform(rng, 0.4, 0.6);
      bg.vy = uniform(rng, 0.4, 0.6);
      bg.near_d = uniform(rng, 1.0, 1.5);
      bg.far_d = uniform(rng, 8.0, 9.5);
      break;
    case Archetype::kCluttered:
      bg.top = uniform(rng, 5.0, 6.5);
      bg.bottom = uniform(rng, 3.0, 4.0);
      bg.tilt = uniform(rng, -0.4, 0.4);
      break;
  }
  return bg;
}

std::pair<double, double> object_depth_range(Archetype a) {
  switch (a) {
    case Archetype::kNearField: return {1.0, 2.5};
    case Archetype::kFarField: return {3.5, 7.5};
    case Archetype::kCorridor: return {1.5, 6.0};
    case Archetype::kCluttered: return {1.2, 4.5};
  }
  return {1.0, 9.0};
}

}  // namespace

std::vector<std::uint8_t> validity_mask(const Tensor& depth, const DepthRange& range) {
  std::vector<std::uint8_t> m(depth.size());
  for (std::size_t i = 0; i < depth.size(); ++i) m[i] = range.contains_open(depth[i]) ? 1 : 0;
  return m;
}

const char* archetype_name(Archetype a) {
  switch (a) {
    case Archetype::kNearField: return "near_field";
    case Archetype::kFarField: return "far_field";
    case Archetype::kCorridor: return "corridor";
    case Archetype::kCluttered: return "cluttered";
  }
  return "unknown";
}

SceneConfig SceneConfig::make(Archetype a, int height, int width, std::uint64_t seed) {
  SceneConfig cfg;
  cfg.archetype = a;
  cfg.height = height;
  cfg.width = width;
  cfg.seed = seed;
  if (a == Archetype::kCluttered) {
    cfg.min_objects = 6;
    cfg.max_objects = 10;
  } else {
    cfg.min_objects = 1;
    cfg.max_objects = 4;
  }
  return cfg;
}

void SceneConfig::validate() const {
  if (height <= 0 || width <= 0 || height % 32 != 0 || width % 32 != 0) {
    throw std::invalid_argument("SceneConfig: image size must be a positive multiple of 32");
  }
  if (min_objects < 0 || max_objects < min_objects) throw std::invalid_argument("SceneConfig: bad object count range");
  range.validate();
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

ImageSample generate_synthetic_scene(const SceneConfig& cfg) {
  cfg.validate();
  Rng64 rng(cfg.seed);
  const int h = cfg.height, w = cfg.width;
  // Keep generated depths strictly inside the valid range.
  const double lo = std::max(cfg.range.d_min + 1e-3, cfg.range.d_min * 1.0001);
  const double hi = cfg.range.d_max - std::max(1e-3, cfg.range.span() * 1e-4);

  const Background bg = make_background(cfg.archetype, rng);
  const Chroma bg_tint = random_chroma(rng);

  Tensor depth({h, w, 1});
  std::vector<int> owner(static_cast<std::size_t>(h) * w, -1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double d = cfg.flat_depth ? *cfg.flat_depth : bg.at((x + 0.5) / w, (y + 0.5) / h);
      depth[static_cast<std::size_t>(y) * w + x] = static_cast<Scalar>(std::clamp(d, lo, hi));
    }
  }

  const int objects = uniform_int(rng, cfg.min_objects, cfg.max_objects);
  const auto [obj_lo, obj_hi] = object_depth_range(cfg.archetype);
  const double focal = 0.8 * w;
  std::vector<Chroma> tints;
  for (int o = 0; o < objects; ++o) {
    const double d = std::clamp(uniform(rng, obj_lo, obj_hi), lo, hi);
    const double size_w = uniform(rng, 0.4, 1.2);
    const double size_h = uniform(rng, 0.4, 1.2);
    const int pw = std::max(2, static_cast<int>(std::lround(focal * size_w / d)));
    const int ph = std::max(2, static_cast<int>(std::lround(focal * size_h / d)));
    const int x0 = uniform_int(rng, -pw / 2, w - pw / 2);
    const int y0 = uniform_int(rng, -ph / 2, h - ph / 2);
    tints.push_back(random_chroma(rng));
    for (int y = std::max(0, y0); y < std::min(h, y0 + ph); ++y) {
      for (int x = std::max(0, x0); x < std::min(w, x0 + pw); ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (d < depth[i]) {
          depth[i] = static_cast<Scalar>(d);
          owner[i] = o;
        }
      }
    }
  }

  ImageSample s;
  s.rgb = Tensor({h, w, 3});
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < owner.size(); ++i) {
    const double d = depth[i];
    const double base = shading(d);
    const Chroma& tint = owner[i] < 0 ? bg_tint : tints[static_cast<std::size_t>(owner[i])];
    const double n = cfg.texture_noise * noise(rng);
    for (int c = 0; c < 3; ++c) {
      s.rgb[i * 3 + c] = static_cast<Scalar>(std::clamp(base * (1.0 + 0.25 * tint.c[c] + n), 0.0, 1.0));
    }
  }
  s.depth = std::move(depth);
  s.valid = validity_mask(s.depth, cfg.range);
  s.scene_label = static_cast<int>(cfg.archetype);
  return s;
}

std::vector<ImageSample> synthesize_dataset(int count, const std::vector<Archetype>& archetypes, int height, int width,
                                            const DepthRange& range, std::uint64_t seed) {
  if (archetypes.empty()) throw std::invalid_argument("synthesize_dataset: no archetypes given");
  std::vector<ImageSample> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) {
    auto cfg = SceneConfig::make(archetypes[static_cast<std::size_t>(i) % archetypes.size()], height, width,
                                 mix_seed(seed, static_cast<std::uint64_t>(i)));
    cfg.range = range;
    out.push_back(generate_synthetic_scene(cfg));
  }
  return out;
}

DatasetManifest read_manifest(const std::filesystem::path& root, int depth_scale, int num_classes) {
  if (depth_scale <= 0) throw DataError("depth_scale must be positive");
  const auto csv = root / "manifest.csv";
  std::ifstream in(csv);
  if (!in) throw DataError("missing manifest: " + csv.string());
  DatasetManifest m;
  m.root = root;
  m.depth_scale = depth_scale;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("id", 0) == 0) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw DataError("manifest line " + std::to_string(line_no) + ": expected id,scene_label");
    ManifestEntry e;
    e.id = line.substr(0, comma);
    try {
      e.scene_label = std::stoi(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw DataError("manifest line " + std::to_string(line_no) + ": bad scene label");
    }
    if (e.scene_label < 0 || (num_classes > 0 && e.scene_label >= num_classes)) {
      throw DataError("manifest line " + std::to_string(line_no) + ": label out of range");
    }
    e.rgb_path = root / "rgb" / (e.id + ".png");
    e.depth_path = root / "depth" / (e.id + ".png");
    for (const auto& p : {e.rgb_path, e.depth_path}) {
      if (!std::filesystem::exists(p)) throw DataError("manifest references missing file: " + p.string());
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

Tensor load_rgb(const std::filesystem::path& path) {
  RawImage img = read_png(path);
  if (img.channels != 3) throw DataError("expected an RGB image: " + path.string());
  const double maxv = img.bit_depth == 16 ? 65535.0 : 255.0;
  Tensor rgb({img.height, img.width, 3});
  for (std::size_t i = 0; i < img.samples.size(); ++i) rgb[i] = static_cast<Scalar>(img.samples[i] / maxv);
  return rgb;
}

ImageSample load_sample(const ManifestEntry& entry, const DepthRange& range, int depth_scale) {
  if (!std::filesystem::exists(entry.rgb_path)) throw DataError("missing rgb file: " + entry.rgb_path.string());
  if (!std::filesystem::exists(entry.depth_path)) throw DataError("missing depth file: " + entry.depth_path.string());
  ImageSample s;
  try {
    s.rgb = load_rgb(entry.rgb_path);
    RawImage d = read_png(entry.depth_path);
    if (d.bit_depth != 16 || d.channels != 1) {
      throw DataError("depth map must be 16-bit grayscale: " + entry.depth_path.string());
    }
    if (d.width != s.rgb.dim(1) || d.height != s.rgb.dim(0)) throw DataError("rgb/depth size mismatch for " + entry.id);
    s.depth = Tensor({d.height, d.width, 1});
    for (std::size_t i = 0; i < d.samples.size(); ++i) {
      s.depth[i] = static_cast<Scalar>(static_cast<double>(d.samples[i]) / depth_scale);
    }
  } catch (const ImageIoError& e) {
    throw DataError(e.what());
  }
  s.valid = validity_mask(s.depth, range);
  s.scene_label = entry.scene_label;
  return s;
}

std::vector<ImageSample> load_dataset(const DatasetManifest& manifest, const DepthRange& range) {
  std::vector<ImageSample> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) out.push_back(load_sample(e, range, manifest.depth_scale));
  return out;
}

void save_sample(const std::filesystem::path& root, const std::string& id, const ImageSample& sample,
                 int depth_scale) {
  std::filesystem::create_directories(root / "rgb");
  std::filesystem::create_directories(root / "depth");
  const int h = sample.height(), w = sample.width();
  std::vector<std::uint8_t> rgb(sample.rgb.size());
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    rgb[i] = static_cast<std::uint8_t>(std::lround(std::clamp<double>(sample.rgb[i], 0.0, 1.0) * 255.0));
  }
  std::vector<std::uint16_t> depth(sample.depth.size());
  for (std::size_t i = 0; i < depth.size(); ++i) {
    const double v = std::isfinite(sample.depth[i]) ? std::round(sample.depth[i] * depth_scale) : 0.0;
    depth[i] = static_cast<std::uint16_t>(std::clamp(v, 0.0, 65535.0));
  }
  write_png_rgb8(root / "rgb" / (id + ".png"), w, h, rgb);
  write_png_gray16(root / "depth" / (id + ".png"), w, h, depth);
}

void save_dataset(const std::filesystem::path& root, const std::vector<ImageSample>& samples, int depth_scale) {
  std::filesystem::create_directories(root);
  std::ofstream csv(root / "manifest.csv");
  if (!csv) throw DataError("cannot write manifest under " + root.string());
  csv << "id,scene_label\n";
  char id[16];
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::snprintf(id, sizeof(id), "%05zu", i);
    save_sample(root, id, samples[i], depth_scale);
    csv << id << ',' << samples[i].scene_label << '\n';
  }
}

ImageSample hflip(const ImageSample& sample) {
  ImageSample out = sample;
  const int h = sample.height(), w = sample.width();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t dst = static_cast<std::size_t>(y) * w + x;
      const std::size_t src = static_cast<std::size_t>(y) * w + (w - 1 - x);
      for (int c = 0; c < 3; ++c) out.rgb[dst * 3 + c] = sample.rgb[src * 3 + c];
      out.depth[dst] = sample.depth[src];
      out.valid[dst] = sample.valid[src];
    }
  }
  return out;
}

ImageSample augment(const ImageSample& sample, const AugmentFlags& flags, std::uint64_t seed) {
  Rng64 rng(seed);
  ImageSample out = sample;
  if (flags.random_crop) {
    const int ch = flags.crop_height, cw = flags.crop_width;
    if (ch <= 0 || cw <= 0 || ch % 32 != 0 || cw % 32 != 0) {
      throw std::invalid_argument("augment: crop size must be a positive multiple of 32");
    }
    if (ch > sample.height() || cw > sample.width()) throw std::invalid_argument("augment: crop larger than image");
    const int y0 = uniform_int(rng, 0, sample.height() - ch);
    const int x0 = uniform_int(rng, 0, sample.width() - cw);
    ImageSample c;
    c.rgb = Tensor({ch, cw, 3});
    c.depth = Tensor({ch, cw, 1});
    c.valid.resize(static_cast<std::size_t>(ch) * cw);
    c.scene_label = sample.scene_label;
    for (int y = 0; y < ch; ++y) {
      for (int x = 0; x < cw; ++x) {
        const std::size_t dst = static_cast<std::size_t>(y) * cw + x;
        const std::size_t src = static_cast<std::size_t>(y + y0) * sample.width() + (x + x0);
        for (int k = 0; k < 3; ++k) c.rgb[dst * 3 + k] = sample.rgb[src * 3 + k];
        c.depth[dst] = sample.depth[src];
        c.valid[dst] = sample.valid[src];
      }
    }
    out = std::move(c);
  }
  if (flags.hflip && uniform(rng, 0.0, 1.0) < 0.5) out = hflip(out);
  if (flags.color_jitter) {
    const double s = flags.jitter_strength;
    double gain[3];
    const double bright = uniform(rng, 1.0 - s, 1.0 + s);
    for (double& g : gain) g = bright * uniform(rng, 1.0 - s / 2, 1.0 + s / 2);
    for (std::size_t i = 0; i < out.rgb.size(); ++i) {
      out.rgb[i] = static_cast<Scalar>(std::clamp(out.rgb[i] * gain[i % 3], 0.0, 1.0));
    }
  }
  return out;
}

}  // namespace depthbins

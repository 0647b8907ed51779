#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace depthbins {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Decoded PNG, samples stored row-major interleaved, widened to 16 bits.
struct RawImage {
  int width = 0;
  int height = 0;
  int channels = 0;   ///< 1 (gray) or 3 (rgb)
  int bit_depth = 0;  ///< 8 or 16
  std::vector<std::uint16_t> samples;
};

/// Gray, gray+alpha, palette, rgb and rgba inputs are accepted; alpha is
/// dropped and palettes are expanded to rgb.
RawImage read_png(const std::filesystem::path& path);

void write_png_rgb8(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& rgb);
void write_png_gray8(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& gray);
void write_png_gray16(const std::filesystem::path& path, int width, int height,
                      const std::vector<std::uint16_t>& gray);

}  // namespace depthbins

#include "depthbins/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <string>

namespace depthbins {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp, png_const_charp msg) { throw ImageIoError(std::string("libpng: ") + msg); }
void png_warn(png_structp, png_const_charp) {}

void write_png(const std::filesystem::path& path, int width, int height, int color_type, int bit_depth,
               const std::uint8_t* rows, std::size_t row_bytes) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw ImageIoError("cannot open for writing: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  if (!png) throw ImageIoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};
  png_init_io(png, file.get());
  png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);  // host little-endian -> PNG big-endian
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(rows + static_cast<std::size_t>(y) * row_bytes));
  }
  png_write_end(png, nullptr);
}

}  // namespace

RawImage read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw ImageIoError("cannot open image: " + path.string());
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw ImageIoError("not a PNG file: " + path.string());
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  if (!png) throw ImageIoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) {
    png_set_palette_to_rgb(png);
    depth = 8;
  }
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
    depth = 8;
  }
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);
  png_read_update_info(png, info);

  RawImage img;
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = png_get_channels(png, info);
  img.bit_depth = depth;
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  std::vector<std::uint8_t> buf(row_bytes * img.height);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) rows[y] = buf.data() + static_cast<std::size_t>(y) * row_bytes;
  png_read_image(png, rows.data());

  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * img.channels;
  img.samples.resize(n);
  if (depth == 16) {
    for (int y = 0; y < img.height; ++y) {
      const auto* src = reinterpret_cast<const std::uint16_t*>(rows[y]);
      std::copy(src, src + static_cast<std::size_t>(img.width) * img.channels,
                img.samples.begin() + static_cast<std::ptrdiff_t>(y) * img.width * img.channels);
    }
  } else {
    for (int y = 0; y < img.height; ++y) {
      const std::uint8_t* src = rows[y];
      for (int i = 0; i < img.width * img.channels; ++i) {
        img.samples[static_cast<std::size_t>(y) * img.width * img.channels + i] = src[i];
      }
    }
  }
  return img;
}

void write_png_rgb8(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != static_cast<std::size_t>(width) * height * 3) throw ImageIoError("rgb buffer size mismatch");
  write_png(path, width, height, PNG_COLOR_TYPE_RGB, 8, rgb.data(), static_cast<std::size_t>(width) * 3);
}

void write_png_gray8(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& gray) {
  if (gray.size() != static_cast<std::size_t>(width) * height) throw ImageIoError("gray buffer size mismatch");
  write_png(path, width, height, PNG_COLOR_TYPE_GRAY, 8, gray.data(), static_cast<std::size_t>(width));
}

void write_png_gray16(const std::filesystem::path& path, int width, int height,
                      const std::vector<std::uint16_t>& gray) {
  if (gray.size() != static_cast<std::size_t>(width) * height) throw ImageIoError("gray16 buffer size mismatch");
  write_png(path, width, height, PNG_COLOR_TYPE_GRAY, 16, reinterpret_cast<const std::uint8_t*>(gray.data()),
            static_cast<std::size_t>(width) * 2);
}

}  // namespace depthbins

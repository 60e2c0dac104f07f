#include "esdnet/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <vector>

#include "esdnet/common.hpp"

namespace esdnet {

namespace {

struct FileCloser {
  FILE* f = nullptr;
  ~FileCloser() {
    if (f) std::fclose(f);
  }
};

}  // namespace

Tensor load_png(const std::string& path) {
  FileCloser file;
  file.f = std::fopen(path.c_str(), "rb");
  if (!file.f) throw DataError("cannot open image " + path);

  png_byte header[8];
  if (std::fread(header, 1, 8, file.f) != 8 || png_sig_cmp(header, 0, 8) != 0)
    throw DataError(path + " is not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng initialization failed");
  }
  std::vector<png_byte> pixels;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("failed to decode " + path);
  }
  png_init_io(png, file.f);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (depth != 8 || (color != PNG_COLOR_TYPE_RGB && color != PNG_COLOR_TYPE_RGBA)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError(path + " must be 8-bit RGB or RGBA");
  }
  const int channels = color == PNG_COLOR_TYPE_RGBA ? 4 : 3;
  pixels.resize(std::size_t(h) * w * std::size_t(channels));
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y)
    rows[y] = pixels.data() + std::size_t(y) * w * std::size_t(channels);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor img({1, 3, int(h), int(w)});
  for (png_uint_32 y = 0; y < h; ++y)
    for (png_uint_32 x = 0; x < w; ++x) {
      const png_byte* px = pixels.data() + (std::size_t(y) * w + x) * std::size_t(channels);
      for (int c = 0; c < 3; ++c)
        img.at(0, c, int(y), int(x)) = float(px[c]) / 255.0f;
    }
  return img;
}

void save_png(const std::string& path, const Tensor& img) {
  if (img.rank() != 4 || img.n() != 1 || img.c() != 3)
    throw ContractError("save_png: expected a (1,3,H,W) tensor, got " + shape_str(img));
  const int h = img.h(), w = img.w();
  std::vector<png_byte> pixels(std::size_t(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = std::min(1.0f, std::max(0.0f, img.at(0, c, y, x)));
        pixels[(std::size_t(y) * w + x) * 3 + std::size_t(c)] =
            png_byte(std::floor(v * 255.0f + 0.5f));
      }

  const std::string tmp = path + ".tmp";
  {
    FileCloser file;
    file.f = std::fopen(tmp.c_str(), "wb");
    if (!file.f) throw DataError("cannot open " + tmp + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                              nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
      png_destroy_write_struct(&png, &info);
      std::remove(tmp.c_str());
      throw DataError("libpng initialization failed");
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    if (setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      std::remove(tmp.c_str());
      throw DataError("failed to encode " + path);
    }
    png_init_io(png, file.f);
    png_set_IHDR(png, info, png_uint_32(w), png_uint_32(h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    for (int y = 0; y < h; ++y)
      rows[std::size_t(y)] = pixels.data() + std::size_t(y) * w * 3;
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw DataError("failed to move " + tmp + " into place");
  }
}

}  // namespace esdnet

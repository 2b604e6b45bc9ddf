#pragma once

// 8-bit grayscale PNG export of cube channels, backed by libpng's simplified
// API. Quantization is linear, no gamma: byte = floor(255 * v + 0.5) after
// clamping v to [0, 1].

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "snapsci/forward_model.hpp"
#include "snapsci/npy.hpp"

namespace snapsci {

struct Gray8 {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;
};

inline std::uint8_t quantize_unit(double v) {
  return static_cast<std::uint8_t>(std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5));
}

// Counts samples outside [0, 1] so callers can warn once per image.
template <class T>
Gray8 quantize(std::span<const T> values, std::size_t height, std::size_t width, std::size_t* clamped = nullptr) {
  if (values.size() != height * width) throw DimensionError("quantize: size does not match geometry");
  Gray8 img{height, width, std::vector<std::uint8_t>(values.size())};
  std::size_t out_of_range = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = static_cast<double>(values[i]);
    if (!(v >= 0.0 && v <= 1.0)) ++out_of_range;
    img.pixels[i] = quantize_unit(std::isnan(v) ? 0.0 : v);
  }
  if (clamped) *clamped = out_of_range;
  return img;
}

inline std::string encode_png(const Gray8& img) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.pixels.data(), 0, nullptr)) {
    throw IoError(std::string("png encode: ") + image.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.pixels.data(), 0, nullptr)) {
    throw IoError(std::string("png encode: ") + image.message);
  }
  out.resize(size);
  return out;
}

inline void write_png(const std::filesystem::path& path, const Gray8& img) {
  write_file_atomic(path, encode_png(img));
}

inline Gray8 read_png(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw IoError(path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  Gray8 img{image.height, image.width, std::vector<std::uint8_t>(PNG_IMAGE_SIZE(image))};
  if (!png_image_finish_read(&image, nullptr, img.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError(path.string() + ": " + image.message);
  }
  return img;
}

// Tiles channels row-major into a grid of `cols` columns, separated by a
// one-pixel black gutter.
inline Gray8 contact_sheet(const std::vector<Gray8>& tiles, std::size_t cols = 0) {
  if (tiles.empty()) throw DimensionError("contact_sheet: no tiles");
  const std::size_t th = tiles.front().height, tw = tiles.front().width;
  for (const auto& t : tiles) {
    if (t.height != th || t.width != tw) throw DimensionError("contact_sheet: tiles differ in size");
  }
  if (cols == 0) cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(tiles.size()))));
  const std::size_t rows = (tiles.size() + cols - 1) / cols;
  Gray8 sheet{rows * th + (rows - 1), cols * tw + (cols - 1), {}};
  sheet.pixels.assign(sheet.height * sheet.width, 0);
  for (std::size_t k = 0; k < tiles.size(); ++k) {
    const std::size_t oy = (k / cols) * (th + 1), ox = (k % cols) * (tw + 1);
    for (std::size_t h = 0; h < th; ++h)
      std::copy_n(tiles[k].pixels.begin() + h * tw, tw, sheet.pixels.begin() + (oy + h) * sheet.width + ox);
  }
  return sheet;
}

// Writes channel_XX.png for each selected channel plus contact_sheet.png.
// Returns the written paths, sheet last.
template <class T>
std::vector<std::filesystem::path> export_png(const Cube<T>& cube, const std::filesystem::path& dir,
                                              std::vector<std::size_t> channels = {}) {
  if (channels.empty()) {
    channels.resize(cube.channels);
    for (std::size_t c = 0; c < cube.channels; ++c) channels[c] = c;
  }
  std::vector<std::filesystem::path> written;
  std::vector<Gray8> tiles;
  std::size_t clamped = 0;
  for (std::size_t c : channels) {
    if (c >= cube.channels) {
      throw DimensionError("export_png: channel " + std::to_string(c) + " out of range (cube has " +
                           std::to_string(cube.channels) + ")");
    }
    std::size_t n = 0;
    tiles.push_back(quantize(cube.channel(c), cube.height, cube.width, &n));
    clamped += n;
    char name[32];
    std::snprintf(name, sizeof name, "channel_%02zu.png", c);
    written.push_back(dir / name);
    write_png(written.back(), tiles.back());
  }
  if (clamped > 0) warn("export_png: " + std::to_string(clamped) + " value(s) outside [0,1] were clamped");
  written.push_back(dir / "contact_sheet.png");
  write_png(written.back(), contact_sheet(tiles));
  return written;
}

}  // namespace snapsci

#pragma once

#include <gsynth/error.hpp>

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gsynth {

/// Dense row-major image with interleaved channels.
template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, int c, T fill = T{})
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * c, fill) {}

  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels) +
           static_cast<std::size_t>(c);
  }
  T& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
  const T& at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }

  bool same_shape(const Image& o) const { return width == o.width && height == o.height && channels == o.channels; }
  bool empty() const { return data.empty(); }

  friend bool operator==(const Image&, const Image&) = default;
};

using ImageF = Image<double>;
using Image8 = Image<std::uint8_t>;
using Image16 = Image<std::uint16_t>;

/// Float [0,1] -> 8-bit with round-to-nearest.
inline std::uint8_t quantize8(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline Image8 quantize(const ImageF& img) {
  Image8 out(img.width, img.height, img.channels);
  std::transform(img.data.begin(), img.data.end(), out.data.begin(), quantize8);
  return out;
}

inline ImageF to_float(const Image8& img) {
  ImageF out(img.width, img.height, img.channels);
  std::transform(img.data.begin(), img.data.end(), out.data.begin(), [](std::uint8_t v) { return v / 255.0; });
  return out;
}

namespace detail {

template <typename T>
void write_png_impl(const Image<T>& img, const std::filesystem::path& path) {
  static_assert(sizeof(T) == 1 || sizeof(T) == 2);
  if (img.width < 1 || img.height < 1) {
    throw ParameterError("cannot write an empty image");
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  switch (img.channels) {
  case 1: image.format = PNG_FORMAT_GRAY; break;
  case 3: image.format = PNG_FORMAT_RGB; break;
  case 4: image.format = PNG_FORMAT_RGBA; break;
  default: throw ParameterError("PNG output supports 1, 3 or 4 channels");
  }
  if constexpr (sizeof(T) == 2) {
    // 16-bit samples are written verbatim with a linear (gamma 1.0) tag.
    if (img.channels != 1) {
      throw ParameterError("16-bit PNG output is grayscale only");
    }
    image.format = PNG_FORMAT_LINEAR_Y;
  }
  if (png_image_write_to_file(&image, path.string().c_str(), 0, img.data.data(), 0, nullptr) == 0) {
    throw IoError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

} // namespace detail

/// 8-bit PNG (gray, RGB or RGBA by channel count).
inline void write_png(const Image8& img, const std::filesystem::path& path) { detail::write_png_impl(img, path); }

/// 16-bit grayscale PNG; used for label ids.
inline void write_png(const Image16& img, const std::filesystem::path& path) { detail::write_png_impl(img, path); }

/// Reads any PNG as 8-bit RGB (alpha dropped, gray expanded, 16-bit reduced).
inline Image8 read_png_rgb8(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_file(&image, path.string().c_str()) == 0) {
    throw IoError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  Image8 out(static_cast<int>(image.width), static_cast<int>(image.height), 3);
  if (png_image_finish_read(&image, nullptr, out.data.data(), 0, nullptr) == 0) {
    png_image_free(&image);
    throw IoError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  return out;
}

/// Reads a 16-bit grayscale PNG written by write_png(Image16).
inline Image16 read_png_gray16(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_file(&image, path.string().c_str()) == 0) {
    throw IoError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_LINEAR_Y;
  Image16 out(static_cast<int>(image.width), static_cast<int>(image.height), 1);
  if (png_image_finish_read(&image, nullptr, out.data.data(), 0, nullptr) == 0) {
    png_image_free(&image);
    throw IoError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  return out;
}

} // namespace gsynth

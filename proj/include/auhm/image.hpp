#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "auhm/errors.hpp"

namespace auhm {

/// Planar RGB image, channel-major [3][height][width], values nominally in [0,1].
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> data;

  Image() = default;
  Image(std::size_t w, std::size_t h) : width(w), height(h), data(3 * w * h, 0.0f) {}

  float& at(std::size_t c, std::size_t y, std::size_t x) {
    return data[(c * height + y) * width + x];
  }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * height + y) * width + x];
  }
  std::size_t plane() const { return width * height; }
  bool operator==(const Image&) const = default;
};

/// Interleaved 8-bit RGB, the on-disk representation.
struct Rgb8Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> data;

  bool operator==(const Rgb8Image&) const = default;
};

inline std::uint8_t quantize_unit(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

inline float dequantize_unit(std::uint8_t v) { return static_cast<float>(v) / 255.0f; }

inline Rgb8Image to_rgb8(const Image& img) {
  Rgb8Image out{img.width, img.height, std::vector<std::uint8_t>(3 * img.plane())};
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        out.data[(y * img.width + x) * 3 + c] = quantize_unit(img.at(c, y, x));
      }
    }
  }
  return out;
}

inline Image to_float(const Rgb8Image& img) {
  Image out(img.width, img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        out.at(c, y, x) = dequantize_unit(img.data[(y * img.width + x) * 3 + c]);
      }
    }
  }
  return out;
}

/// Snaps every value to the nearest multiple of 1/255 inside [0,1], so the
/// image survives an 8-bit round trip unchanged.
inline void quantize_in_place(Image& img) {
  for (auto& v : img.data) v = dequantize_unit(quantize_unit(v));
}

inline Image mirror_horizontal(const Image& img) {
  Image out(img.width, img.height);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < img.height; ++y) {
      for (std::size_t x = 0; x < img.width; ++x) {
        out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
      }
    }
  }
  return out;
}

}  // namespace auhm

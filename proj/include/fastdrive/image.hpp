// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "fastdrive/tensor.hpp"

namespace fastdrive {

// Interleaved RGB, row-major, values nominally in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w) : height(h), width(w), pixels(h * w * 3, 0.0f) {}

  float& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  float at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * 3 + c];
  }

  // [H, W, 3] constant tensor.
  Tensor to_tensor() const;
  static Image from_tensor(const Tensor& hwc);

  bool operator==(const Image&) const = default;
};

// Binary per-pixel mask, 1 = foreground.
struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> values;

  Mask() = default;
  Mask(std::size_t h, std::size_t w) : height(h), width(w), values(h * w, 0) {}

  std::uint8_t& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
  double coverage() const;

  bool operator==(const Mask&) const = default;
};

// Binary PPM (P6), 8 bits per channel; values are clamped to [0,1] and
// rounded to the nearest of 256 levels.
void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);

}  // namespace fastdrive

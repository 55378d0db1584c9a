// SPDX-License-Identifier: Apache-2.0
#include "fastdrive/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "fastdrive/error.hpp"

namespace fastdrive {

Tensor Image::to_tensor() const { return Tensor({height, width, 3}, pixels); }

Image Image::from_tensor(const Tensor& hwc) {
  if (hwc.rank() != 3 || hwc.dim(2) != 3) {
    fail(ErrorCode::kShapeMismatch, "expected [H, W, 3], got " + shape_str(hwc.shape()));
  }
  Image img(hwc.dim(0), hwc.dim(1));
  img.pixels = hwc.to_vector();
  return img;
}

double Mask::coverage() const {
  if (values.empty()) return 0.0;
  std::size_t on = 0;
  for (std::uint8_t v : values) on += v;
  return static_cast<double>(on) / static_cast<double>(values.size());
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  std::vector<unsigned char> bytes(image.pixels.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const float v = std::clamp(image.pixels[i], 0.0f, 1.0f);
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIoError, "write failed for " + path.string());
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot open " + path.string());
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || maxval != 255) fail(ErrorCode::kBadMagic, path.string() + " is not an 8-bit P6");
  in.get();
  std::vector<unsigned char> bytes(w * h * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
    fail(ErrorCode::kTruncatedFile, path.string());
  }
  Image img(h, w);
  for (std::size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = bytes[i] / 255.0f;
  return img;
}

}  // namespace fastdrive

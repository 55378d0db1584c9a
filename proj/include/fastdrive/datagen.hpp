// SPDX-License-Identifier: Apache-2.0
//
// Procedural driving-like scenes with exact foreground masks, and the NFGS
// dataset container.
//
// NFGS layout (little-endian):
//   "NFGS" | version u32 | count u32 | size u16 |
//   count x ( image: size*size*3 u8 (round(pixel*255)) | mask: size*size u8 in {0,1} )
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "fastdrive/image.hpp"

namespace fastdrive {

struct ImageMaskPair {
  Image image;
  Mask mask;

  bool operator==(const ImageMaskPair&) const = default;
};

enum class BackgroundKind { kMixed, kGradient, kNoise, kFlat };

struct SceneConfig {
  std::size_t size = 96;
  std::size_t min_objects = 2;
  std::size_t max_objects = 6;
  double coverage_min = 0.10;
  double coverage_max = 0.45;
  BackgroundKind background = BackgroundKind::kMixed;
  std::uint64_t seed = 0;
  std::size_t max_retries = 64;

  void validate() const;
};

// Deterministic in (cfg, index). Throws CoverageUnsatisfiable when no draw
// within max_retries lands inside the coverage bounds.
ImageMaskPair generate_scene(const SceneConfig& cfg, std::uint64_t index);

std::vector<ImageMaskPair> generate_dataset(const SceneConfig& cfg, std::uint64_t first_index,
                                            std::size_t count);

inline constexpr std::uint32_t kDatasetVersion = 1;
// Scene indices of the held-out split start here, disjoint from any train split.
inline constexpr std::uint64_t kHeldOutFirstIndex = 1'000'000;

std::vector<std::uint8_t> encode_dataset(const std::vector<ImageMaskPair>& pairs);
std::vector<ImageMaskPair> decode_dataset(const std::vector<std::uint8_t>& bytes);

void write_dataset(const std::vector<ImageMaskPair>& pairs, const std::filesystem::path& path);
std::vector<ImageMaskPair> read_dataset(const std::filesystem::path& path);

}  // namespace fastdrive

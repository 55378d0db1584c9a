// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fastdrive/datagen.hpp"
#include "fastdrive/error.hpp"

using namespace fastdrive;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("fastdrive_test_" + name);
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST_CASE("scenes are deterministic per seed and index") {
  SceneConfig cfg;
  CHECK(generate_scene(cfg, 7) == generate_scene(cfg, 7));
  CHECK_FALSE(generate_scene(cfg, 7) == generate_scene(cfg, 8));
  SceneConfig other = cfg;
  other.seed = 1;
  CHECK_FALSE(generate_scene(cfg, 7) == generate_scene(other, 7));
}

TEST_CASE("generated samples respect value ranges and coverage bounds") {
  for (auto kind : {BackgroundKind::kMixed, BackgroundKind::kGradient, BackgroundKind::kNoise,
                    BackgroundKind::kFlat}) {
    SceneConfig cfg;
    cfg.background = kind;
    for (const auto& p : generate_dataset(cfg, 0, 64)) {
      REQUIRE(p.image.height == 96);
      REQUIRE(p.mask.values.size() == 96 * 96);
      bool in_range = true, on_grid = true, binary = true;
      for (float v : p.image.pixels) {
        in_range = in_range && v >= 0.0f && v <= 1.0f;
        // Pixels sit on the 8-bit grid so the file format is lossless.
        on_grid = on_grid && std::round(v * 255.0f) / 255.0f == v;
      }
      for (auto m : p.mask.values) binary = binary && m <= 1;
      CHECK(in_range);
      CHECK(on_grid);
      CHECK(binary);
      CHECK(p.mask.coverage() >= cfg.coverage_min);
      CHECK(p.mask.coverage() <= cfg.coverage_max);
    }
  }
}

TEST_CASE("foreground and background colour statistics differ") {
  SceneConfig cfg;
  double gap = 0;
  const auto pairs = generate_dataset(cfg, 0, 128);
  for (const auto& p : pairs) {
    double fs = 0, bs = 0;
    std::size_t fc = 0, bc = 0;
    for (std::size_t i = 0; i < p.mask.values.size(); ++i) {
      double v = 0;
      for (std::size_t c = 0; c < 3; ++c) v += p.image.pixels[i * 3 + c];
      if (p.mask.values[i]) {
        fs += v / 3;
        ++fc;
      } else {
        bs += v / 3;
        ++bc;
      }
    }
    gap += std::abs(fs / static_cast<double>(fc) - bs / static_cast<double>(bc));
  }
  CHECK(gap / static_cast<double>(pairs.size()) > 0.05);
}

TEST_CASE("zero objects cannot reach the coverage floor") {
  SceneConfig cfg;
  cfg.min_objects = 0;
  cfg.max_objects = 0;
  CHECK(code_of([&] { generate_scene(cfg, 0); }) == ErrorCode::kCoverageUnsatisfiable);
}

TEST_CASE("invalid scene configs are rejected") {
  SceneConfig cfg;
  cfg.coverage_min = 0.5;
  cfg.coverage_max = 0.4;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("dataset files round-trip and are byte-stable") {
  SceneConfig cfg;
  const auto pairs = generate_dataset(cfg, 0, 10);
  const auto path = temp_path("roundtrip.nfgs");
  write_dataset(pairs, path);
  CHECK(read_dataset(path) == pairs);
  CHECK(encode_dataset(pairs) == encode_dataset(generate_dataset(cfg, 0, 10)));
  const auto bytes = encode_dataset(pairs);
  CHECK(bytes.size() == 4 + 4 + 4 + 2 + 10 * (96 * 96 * 4));
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "NFGS");
  std::filesystem::remove(path);
}

TEST_CASE("dataset decoding errors") {
  const auto pairs = generate_dataset(SceneConfig{}, 0, 2);
  auto bytes = encode_dataset(pairs);

  SUBCASE("bad magic") {
    bytes[0] = 'X';
    CHECK(code_of([&] { decode_dataset(bytes); }) == ErrorCode::kBadMagic);
  }
  SUBCASE("count larger than payload") {
    bytes[8] = 3;
    CHECK(code_of([&] { decode_dataset(bytes); }) == ErrorCode::kTruncatedFile);
  }
  SUBCASE("short file") {
    bytes.resize(bytes.size() - 1);
    CHECK(code_of([&] { decode_dataset(bytes); }) == ErrorCode::kTruncatedFile);
  }
  SUBCASE("missing file") {
    CHECK(code_of([&] { read_dataset(temp_path("does_not_exist.nfgs")); }) ==
          ErrorCode::kIoError);
  }
}

// SPDX-License-Identifier: Apache-2.0
#include "fastdrive/datagen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include "fastdrive/error.hpp"

namespace fastdrive {

namespace {

using Rgb = std::array<float, 3>;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

float quantize(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<float>(std::lround(c * 255.0f)) / 255.0f;
}

class SceneRng {
 public:
  explicit SceneRng(std::uint64_t seed) : rng_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  std::size_t pick(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }
  Rgb jitter(const Rgb& base, double amount) {
    Rgb out;
    for (std::size_t c = 0; c < 3; ++c) out[c] = static_cast<float>(base[c] + uniform(-amount, amount));
    return out;
  }

 private:
  std::mt19937_64 rng_;
};

// Backgrounds: sky, foliage, facades. Muted, mid-to-bright.
constexpr std::array<Rgb, 6> kBackgroundPalette{{
    {0.55f, 0.70f, 0.85f},  // sky
    {0.35f, 0.50f, 0.30f},  // trees
    {0.62f, 0.58f, 0.52f},  // facade
    {0.48f, 0.45f, 0.50f},  // concrete
    {0.70f, 0.72f, 0.74f},  // overcast
    {0.45f, 0.40f, 0.32f},  // earth
}};

// Foreground: roads, vehicles, people, signs. Partly overlapping in hue with
// the background set, but darker roads and more saturated objects.
constexpr std::array<Rgb, 7> kRoadPalette{{
    {0.18f, 0.18f, 0.20f},
    {0.25f, 0.24f, 0.26f},
    {0.30f, 0.29f, 0.28f},
    {0.22f, 0.22f, 0.25f},
    {0.28f, 0.27f, 0.30f},
    {0.20f, 0.21f, 0.20f},
    {0.26f, 0.25f, 0.24f},
}};
constexpr std::array<Rgb, 7> kObjectPalette{{
    {0.85f, 0.15f, 0.12f},  // red car
    {0.12f, 0.25f, 0.80f},  // blue car
    {0.92f, 0.82f, 0.15f},  // taxi / sign
    {0.95f, 0.95f, 0.95f},  // white van
    {0.08f, 0.08f, 0.10f},  // black car
    {0.90f, 0.55f, 0.20f},  // pedestrian / cone
    {0.20f, 0.65f, 0.35f},  // green sign
}};

void paint_background(Image& img, BackgroundKind kind, SceneRng& rng) {
  const std::size_t n = img.height;
  const Rgb top = rng.jitter(kBackgroundPalette[rng.pick(0, kBackgroundPalette.size() - 1)], 0.06);
  const Rgb bottom = rng.jitter(kBackgroundPalette[rng.pick(0, kBackgroundPalette.size() - 1)], 0.06);
  // Value-noise lattice for the textured variant.
  const std::size_t cells = 6;
  std::vector<double> lattice((cells + 1) * (cells + 1));
  for (double& v : lattice) v = rng.uniform(-0.12, 0.12);
  for (std::size_t y = 0; y < n; ++y) {
    const double t = static_cast<double>(y) / static_cast<double>(n - 1);
    for (std::size_t x = 0; x < n; ++x) {
      double offset = 0.0;
      if (kind == BackgroundKind::kNoise) {
        const double gx = static_cast<double>(x) / n * cells, gy = static_cast<double>(y) / n * cells;
        const std::size_t ix = static_cast<std::size_t>(gx), iy = static_cast<std::size_t>(gy);
        const double fx = gx - ix, fy = gy - iy;
        const double a = lattice[iy * (cells + 1) + ix], b = lattice[iy * (cells + 1) + ix + 1];
        const double c = lattice[(iy + 1) * (cells + 1) + ix], d = lattice[(iy + 1) * (cells + 1) + ix + 1];
        offset = (a * (1 - fx) + b * fx) * (1 - fy) + (c * (1 - fx) + d * fx) * fy;
      }
      for (std::size_t ch = 0; ch < 3; ++ch) {
        double v = top[ch];
        if (kind != BackgroundKind::kFlat) v = top[ch] * (1.0 - t) + bottom[ch] * t;
        img.at(y, x, ch) = static_cast<float>(v + offset);
      }
    }
  }
}

void paint_pixel(Image& img, Mask& mask, std::size_t y, std::size_t x, const Rgb& color, double shade) {
  for (std::size_t ch = 0; ch < 3; ++ch) img.at(y, x, ch) = static_cast<float>(color[ch] * shade);
  mask.at(y, x) = 1;
}

// Road / lane: trapezoid widening towards the bottom edge.
void draw_trapezoid(Image& img, Mask& mask, SceneRng& rng) {
  const double n = static_cast<double>(img.height);
  const double top_y = rng.uniform(0.35, 0.7) * n;
  const double centre_top = rng.uniform(0.3, 0.7) * n, centre_bottom = rng.uniform(0.2, 0.8) * n;
  const double half_top = rng.uniform(0.02, 0.08) * n, half_bottom = rng.uniform(0.10, 0.28) * n;
  const Rgb color = rng.jitter(kRoadPalette[rng.pick(0, kRoadPalette.size() - 1)], 0.03);
  const bool lane_marks = rng.uniform(0.0, 1.0) < 0.6;
  for (std::size_t y = static_cast<std::size_t>(top_y); y < img.height; ++y) {
    const double t = (y - top_y) / std::max(1.0, n - 1 - top_y);
    const double c = centre_top + (centre_bottom - centre_top) * t;
    const double hw = half_top + (half_bottom - half_top) * t;
    const long x0 = std::max(0L, std::lround(c - hw)), x1 = std::min<long>(img.width - 1, std::lround(c + hw));
    for (long x = x0; x <= x1; ++x) {
      const bool mark = lane_marks && std::abs(x - c) < 0.6 + 0.8 * t && (y / 4) % 2 == 0;
      paint_pixel(img, mask, y, static_cast<std::size_t>(x), mark ? Rgb{0.95f, 0.95f, 0.9f} : color,
                  1.0 - 0.15 * (1.0 - t));
    }
  }
}

// Vehicle / sign: axis-aligned box with a darker lower band.
void draw_box(Image& img, Mask& mask, SceneRng& rng) {
  const double n = static_cast<double>(img.height);
  const double w = rng.uniform(0.08, 0.25) * n, h = rng.uniform(0.06, 0.18) * n;
  const double x0 = rng.uniform(0.0, n - w), y0 = rng.uniform(0.25 * n, n - h);
  const Rgb color = rng.jitter(kObjectPalette[rng.pick(0, kObjectPalette.size() - 1)], 0.05);
  for (std::size_t y = static_cast<std::size_t>(y0); y < static_cast<std::size_t>(y0 + h); ++y) {
    for (std::size_t x = static_cast<std::size_t>(x0); x < static_cast<std::size_t>(x0 + w); ++x) {
      const double shade = (y - y0) > 0.7 * h ? 0.55 : 1.0;
      paint_pixel(img, mask, y, x, color, shade);
    }
  }
}

// Pedestrian: filled disc with radial shading.
void draw_disc(Image& img, Mask& mask, SceneRng& rng) {
  const double n = static_cast<double>(img.height);
  const double r = rng.uniform(0.03, 0.08) * n;
  const double cx = rng.uniform(r, n - r), cy = rng.uniform(0.3 * n, n - r);
  const Rgb color = rng.jitter(kObjectPalette[rng.pick(0, kObjectPalette.size() - 1)], 0.05);
  const long y0 = std::max(0L, std::lround(cy - r)), y1 = std::min<long>(img.height - 1, std::lround(cy + r));
  const long x0 = std::max(0L, std::lround(cx - r)), x1 = std::min<long>(img.width - 1, std::lround(cx + r));
  for (long y = y0; y <= y1; ++y) {
    for (long x = x0; x <= x1; ++x) {
      const double d = std::hypot(x - cx, y - cy);
      if (d <= r) paint_pixel(img, mask, y, x, color, 1.0 - 0.35 * d / r);
    }
  }
}

}  // namespace

void SceneConfig::validate() const {
  if (size < 8) fail(ErrorCode::kInvalidArgument, "scene size must be >= 8");
  if (!(coverage_min > 0.0 && coverage_min < coverage_max && coverage_max < 1.0)) {
    fail(ErrorCode::kInvalidArgument, "coverage bounds must satisfy 0 < min < max < 1");
  }
  if (min_objects > max_objects) fail(ErrorCode::kInvalidArgument, "min_objects > max_objects");
}

ImageMaskPair generate_scene(const SceneConfig& cfg, std::uint64_t index) {
  cfg.validate();
  if (cfg.max_objects == 0) {
    fail(ErrorCode::kCoverageUnsatisfiable,
         "no foreground objects allowed; coverage lower bound is unreachable");
  }
  const std::uint64_t base = splitmix64(cfg.seed) ^ splitmix64(index + 0x1234567ULL);
  for (std::size_t attempt = 0; attempt < cfg.max_retries; ++attempt) {
    SceneRng rng(splitmix64(base + attempt));
    ImageMaskPair pair{Image(cfg.size, cfg.size), Mask(cfg.size, cfg.size)};
    BackgroundKind kind = cfg.background;
    if (kind == BackgroundKind::kMixed) {
      kind = static_cast<BackgroundKind>(rng.pick(1, 3));
    }
    paint_background(pair.image, kind, rng);
    const std::size_t objects = rng.pick(std::max<std::size_t>(cfg.min_objects, 1), cfg.max_objects);
    for (std::size_t i = 0; i < objects; ++i) {
      const std::size_t shape = i == 0 ? 0 : rng.pick(0, 2);
      if (shape == 0) draw_trapezoid(pair.image, pair.mask, rng);
      else if (shape == 1) draw_box(pair.image, pair.mask, rng);
      else draw_disc(pair.image, pair.mask, rng);
    }
    const double cov = pair.mask.coverage();
    if (cov < cfg.coverage_min || cov > cfg.coverage_max) continue;
    for (float& v : pair.image.pixels) v = quantize(v);
    return pair;
  }
  fail(ErrorCode::kCoverageUnsatisfiable,
       "scene " + std::to_string(index) + " missed coverage bounds after " +
           std::to_string(cfg.max_retries) + " draws");
}

std::vector<ImageMaskPair> generate_dataset(const SceneConfig& cfg, std::uint64_t first_index,
                                            std::size_t count) {
  std::vector<ImageMaskPair> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate_scene(cfg, first_index + i));
  return out;
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
std::uint32_t get_u32(const std::uint8_t* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

std::vector<std::uint8_t> encode_dataset(const std::vector<ImageMaskPair>& pairs) {
  const std::size_t size = pairs.empty() ? 0 : pairs.front().image.height;
  if (size > 0xffff) fail(ErrorCode::kInvalidArgument, "image size does not fit in u16");
  std::vector<std::uint8_t> out{'N', 'F', 'G', 'S'};
  put_u32(out, kDatasetVersion);
  put_u32(out, static_cast<std::uint32_t>(pairs.size()));
  put_u16(out, static_cast<std::uint16_t>(size));
  out.reserve(out.size() + pairs.size() * size * size * 4);
  for (const auto& p : pairs) {
    if (p.image.height != size || p.image.width != size || p.mask.height != size ||
        p.mask.width != size) {
      fail(ErrorCode::kInvalidArgument, "all records must share one square size");
    }
    for (float v : p.image.pixels) {
      out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
    }
    for (std::uint8_t m : p.mask.values) out.push_back(m ? 1 : 0);
  }
  return out;
}

std::vector<ImageMaskPair> decode_dataset(const std::vector<std::uint8_t>& bytes) {
  constexpr std::size_t kHeader = 4 + 4 + 4 + 2;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "NFGS", 4) != 0) {
    fail(ErrorCode::kBadMagic, "not an NFGS dataset");
  }
  if (bytes.size() < kHeader) fail(ErrorCode::kTruncatedFile, "header is incomplete");
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kDatasetVersion) {
    fail(ErrorCode::kBadMagic, "unsupported NFGS version " + std::to_string(version));
  }
  const std::uint32_t count = get_u32(bytes.data() + 8);
  const std::size_t size = bytes[12] | (bytes[13] << 8);
  const std::size_t record = size * size * 4;
  if (bytes.size() < kHeader + static_cast<std::size_t>(count) * record) {
    fail(ErrorCode::kTruncatedFile, "header declares " + std::to_string(count) +
                                        " records but payload holds " +
                                        std::to_string((bytes.size() - kHeader) / std::max<std::size_t>(record, 1)));
  }
  std::vector<ImageMaskPair> out(count);
  const std::uint8_t* p = bytes.data() + kHeader;
  for (auto& pair : out) {
    pair.image = Image(size, size);
    pair.mask = Mask(size, size);
    for (float& v : pair.image.pixels) v = static_cast<float>(*p++) / 255.0f;
    for (std::uint8_t& m : pair.mask.values) {
      if (*p > 1) fail(ErrorCode::kBadMagic, "mask byte outside {0,1}");
      m = *p++;
    }
  }
  return out;
}

void write_dataset(const std::vector<ImageMaskPair>& pairs, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = encode_dataset(pairs);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIoError, "write failed for " + path.string());
}

std::vector<ImageMaskPair> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_dataset(bytes);
}

}  // namespace fastdrive

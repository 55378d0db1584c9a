// SPDX-License-Identifier: Apache-2.0
#include "fastdrive/encoder.hpp"

#include <cmath>
#include <random>
#include <string>

#include "fastdrive/error.hpp"
#include "fastdrive/ops.hpp"

namespace fastdrive {

void EncoderConfig::validate() const {
  if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0) {
    fail(ErrorCode::kBadImageSize, "image_size " + std::to_string(image_size) +
                                       " is not divisible by patch_size " +
                                       std::to_string(patch_size));
  }
  if (hidden_dim == 0 || hidden_dim % 4 != 0) {
    fail(ErrorCode::kInvalidArgument,
         "hidden_dim must be a positive multiple of 4, got " + std::to_string(hidden_dim));
  }
}

Tensor sincos_pos_embed_2d(std::size_t grid, std::size_t dim) {
  if (dim % 4 != 0) fail(ErrorCode::kInvalidArgument, "pos-embed dim must be a multiple of 4");
  const std::size_t quarter = dim / 4;
  Tensor out({grid * grid, dim});
  auto d = out.data();
  for (std::size_t r = 0; r < grid; ++r) {
    for (std::size_t c = 0; c < grid; ++c) {
      float* row = d.data() + (r * grid + c) * dim;
      for (std::size_t k = 0; k < quarter; ++k) {
        const double omega = 1.0 / std::pow(10000.0, static_cast<double>(k) / quarter);
        row[k] = static_cast<float>(std::sin(r * omega));
        row[quarter + k] = static_cast<float>(std::cos(r * omega));
        row[2 * quarter + k] = static_cast<float>(std::sin(c * omega));
        row[3 * quarter + k] = static_cast<float>(std::cos(c * omega));
      }
    }
  }
  return out;
}

std::vector<float> patchify(const Image& image, std::size_t patch_size) {
  const std::size_t gh = image.height / patch_size, gw = image.width / patch_size;
  const std::size_t pd = patch_size * patch_size * 3;
  std::vector<float> out(gh * gw * pd);
  for (std::size_t gr = 0; gr < gh; ++gr) {
    for (std::size_t gc = 0; gc < gw; ++gc) {
      float* dst = out.data() + (gr * gw + gc) * pd;
      for (std::size_t py = 0; py < patch_size; ++py) {
        for (std::size_t px = 0; px < patch_size; ++px) {
          for (std::size_t ch = 0; ch < 3; ++ch) {
            *dst++ = image.at(gr * patch_size + py, gc * patch_size + px, ch);
          }
        }
      }
    }
  }
  return out;
}

Encoder::Encoder(EncoderConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.seed ^ 0x5eedf00dULL);
  const float scale = 1.0f / std::sqrt(static_cast<float>(cfg_.patch_dim()));
  projection_ = Tensor::randn({cfg_.patch_dim(), cfg_.hidden_dim}, rng, 2.0f * scale);
  bias_ = Tensor::randn({cfg_.hidden_dim}, rng, 0.1f);
  pos_embed_ = sincos_pos_embed_2d(cfg_.grid(), cfg_.hidden_dim);
}

TokenSequence Encoder::encode(const Image& image) const {
  if (image.height != cfg_.image_size || image.width != cfg_.image_size ||
      image.pixels.size() != image.height * image.width * 3) {
    fail(ErrorCode::kBadImageSize, "encoder expects " + std::to_string(cfg_.image_size) + "x" +
                                       std::to_string(cfg_.image_size) + ", got " +
                                       std::to_string(image.height) + "x" +
                                       std::to_string(image.width));
  }
  NoGradGuard no_grad;
  const std::size_t n = cfg_.num_tokens();
  Tensor patches({n, cfg_.patch_dim()}, patchify(image, cfg_.patch_size));
  TokenSequence seq;
  seq.tokens = add_row_vector(matmul(patches, projection_), bias_);
  seq.pos_embed = pos_embed_;
  seq.grid_coords.reserve(n);
  for (std::size_t r = 0; r < cfg_.grid(); ++r) {
    for (std::size_t c = 0; c < cfg_.grid(); ++c) seq.grid_coords.emplace_back(r, c);
  }
  return seq;
}

std::vector<bool> token_foreground_truth(const Mask& mask, const EncoderConfig& cfg,
                                         double theta_fg) {
  if (!(theta_fg > 0.0 && theta_fg <= 1.0)) {
    fail(ErrorCode::kInvalidArgument, "theta_fg must lie in (0, 1]");
  }
  if (mask.height != cfg.image_size || mask.width != cfg.image_size ||
      mask.values.size() != mask.height * mask.width) {
    fail(ErrorCode::kBadMaskSize, "mask is " + std::to_string(mask.height) + "x" +
                                      std::to_string(mask.width) + ", expected " +
                                      std::to_string(cfg.image_size));
  }
  const std::size_t p = cfg.patch_size, g = cfg.grid();
  const double area = static_cast<double>(p * p);
  std::vector<bool> out(g * g);
  for (std::size_t gr = 0; gr < g; ++gr) {
    for (std::size_t gc = 0; gc < g; ++gc) {
      std::size_t on = 0;
      for (std::size_t y = 0; y < p; ++y) {
        for (std::size_t x = 0; x < p; ++x) on += mask.at(gr * p + y, gc * p + x) ? 1 : 0;
      }
      out[gr * g + gc] = static_cast<double>(on) / area >= theta_fg;
    }
  }
  return out;
}

}  // namespace fastdrive

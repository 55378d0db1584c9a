// SPDX-License-Identifier: Apache-2.0
//
// Frozen patch encoder: a seeded, never-trained linear projection of each
// flattened patch. Position embeddings are returned alongside the tokens, not
// baked into them.
#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "fastdrive/image.hpp"
#include "fastdrive/tensor.hpp"

namespace fastdrive {

struct EncoderConfig {
  std::size_t image_size = 96;
  std::size_t patch_size = 8;
  std::size_t hidden_dim = 64;
  std::uint64_t seed = 0;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_tokens() const { return grid() * grid(); }
  std::size_t patch_dim() const { return patch_size * patch_size * 3; }
  // Throws BadImageSize / InvalidArgument.
  void validate() const;
};

struct TokenSequence {
  Tensor tokens;     // [N, D]
  Tensor pos_embed;  // [N, D]
  std::vector<std::pair<std::size_t, std::size_t>> grid_coords;  // (row, col), row-major

  std::size_t size() const { return tokens.defined() ? tokens.dim(0) : 0; }
  std::size_t width() const { return tokens.dim(1); }
};

// MAE-style 2-D sin/cos table for a grid x grid layout: the first half of
// each row encodes the patch row, the second half the column. dim % 4 == 0.
Tensor sincos_pos_embed_2d(std::size_t grid, std::size_t dim);

// Flattens each patch in (py, px, channel) order -> [N, patch*patch*3].
std::vector<float> patchify(const Image& image, std::size_t patch_size);

class Encoder {
 public:
  explicit Encoder(EncoderConfig cfg);

  const EncoderConfig& config() const { return cfg_; }
  TokenSequence encode(const Image& image) const;

  // [patch_dim, D] and [D]; frozen.
  const Tensor& projection() const { return projection_; }
  const Tensor& bias() const { return bias_; }

 private:
  EncoderConfig cfg_;
  Tensor projection_;
  Tensor bias_;
  Tensor pos_embed_;
};

// Token i is foreground iff its patch's foreground pixel fraction >= theta_fg.
std::vector<bool> token_foreground_truth(const Mask& mask, const EncoderConfig& cfg,
                                         double theta_fg);

}  // namespace fastdrive

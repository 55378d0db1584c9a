// SPDX-License-Identifier: Apache-2.0
//
// Reconstruction decoder: six full-attention layers over (masked tokens +
// position embeddings), then a per-token affine head that predicts one RGB
// patch, unpatchified into an [H, W, 3] image. One decoder serves both the
// foreground and the background stream. Padded (zero) token rows are kept
// as-is; there is no learned mask token.
#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "fastdrive/transformer.hpp"

namespace fastdrive {

struct DecoderConfig {
  LayerConfig layer;
  std::size_t num_layers = 6;
  std::size_t patch_size = 8;
  std::size_t image_size = 96;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t patch_dim() const { return patch_size * patch_size * 3; }
};

struct DecoderParams {
  DecoderConfig cfg;
  std::vector<TransformerLayer> layers;
  Tensor head_w;       // [D, 3 * P * P]
  Tensor head_b;       // [3 * P * P]
  // Per-token foreground logit head, used by the mask-prediction ablation.
  Tensor mask_head_w;  // [D, 1]
  Tensor mask_head_b;  // [1]

  static DecoderParams init(const DecoderConfig& cfg, std::uint64_t seed);

  // Pixel path only; `with_mask_head` adds the ablation head.
  ParamList parameters(bool with_mask_head = false) const;
};

// [grid*grid, P*P*3] patch rows -> [grid*P, grid*P, 3]; rows in grid row-major
// order, each row laid out (py, px, channel). Differentiable permutation.
Tensor unpatchify(const Tensor& patches, std::size_t grid, std::size_t patch_size);
// Inverse of unpatchify.
Tensor patchify_tensor(const Tensor& image, std::size_t patch_size);

// Hidden states after all decoder layers: [N, D].
Tensor decode_hidden(const Tensor& v_masked, const Tensor& pos_embed, const DecoderParams& params);

// [H, W, 3], unconstrained reals.
Tensor reconstruct(const Tensor& v_masked, const Tensor& pos_embed, const DecoderParams& params);

std::pair<Tensor, Tensor> reconstruct_pair(const Tensor& v_fore, const Tensor& v_back,
                                           const Tensor& pos_embed, const DecoderParams& params);

// [N, 1] per-token foreground logits through the ablation head.
Tensor predict_token_logits(const Tensor& v_masked, const Tensor& pos_embed,
                            const DecoderParams& params);

}  // namespace fastdrive

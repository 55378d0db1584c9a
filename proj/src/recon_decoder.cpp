// SPDX-License-Identifier: Apache-2.0
#include "fastdrive/recon_decoder.hpp"

#include <random>
#include <string>

#include "fastdrive/error.hpp"
#include "fastdrive/ops.hpp"

namespace fastdrive {

DecoderParams DecoderParams::init(const DecoderConfig& cfg, std::uint64_t seed) {
  if (cfg.patch_size == 0 || cfg.image_size % cfg.patch_size != 0) {
    fail(ErrorCode::kBadImageSize, "decoder image/patch sizes are incompatible");
  }
  std::mt19937_64 rng(seed);
  DecoderParams p;
  p.cfg = cfg;
  for (std::size_t i = 0; i < cfg.num_layers; ++i) {
    p.layers.push_back(TransformerLayer::init(cfg.layer, rng));
  }
  p.head_w = Tensor::randn({cfg.layer.hidden, cfg.patch_dim()}, rng, 0.02f, true);
  p.head_b = Tensor::zeros({cfg.patch_dim()}, true);
  p.mask_head_w = Tensor::randn({cfg.layer.hidden, 1}, rng, 0.02f, true);
  p.mask_head_b = Tensor::zeros({1}, true);
  return p;
}

ParamList DecoderParams::parameters(bool with_mask_head) const {
  ParamList out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].collect(out, "decoder.layer" + std::to_string(i) + ".");
  }
  out.push_back({"decoder.head.w", head_w});
  out.push_back({"decoder.head.b", head_b});
  if (with_mask_head) {
    out.push_back({"decoder.mask_head.w", mask_head_w});
    out.push_back({"decoder.mask_head.b", mask_head_b});
  }
  return out;
}

Tensor unpatchify(const Tensor& patches, std::size_t grid, std::size_t patch_size) {
  const std::size_t pd = patch_size * patch_size * 3;
  if (patches.rank() != 2 || patches.dim(0) != grid * grid || patches.dim(1) != pd) {
    fail(ErrorCode::kDimMismatch, "unpatchify: " + shape_str(patches.shape()) + " for grid " +
                                      std::to_string(grid) + ", patch " +
                                      std::to_string(patch_size));
  }
  Tensor t = reshape(patches, {grid, grid, patch_size, patch_size, 3});
  Tensor p = permute(t, {0, 2, 1, 3, 4});  // [gr, py, gc, px, c]
  return reshape(p, {grid * patch_size, grid * patch_size, 3});
}

Tensor patchify_tensor(const Tensor& image, std::size_t patch_size) {
  if (image.rank() != 3 || image.dim(2) != 3 || image.dim(0) != image.dim(1) ||
      image.dim(0) % patch_size != 0) {
    fail(ErrorCode::kDimMismatch, "patchify: " + shape_str(image.shape()));
  }
  const std::size_t grid = image.dim(0) / patch_size;
  Tensor t = reshape(image, {grid, patch_size, grid, patch_size, 3});
  Tensor p = permute(t, {0, 2, 1, 3, 4});  // [gr, gc, py, px, c]
  return reshape(p, {grid * grid, patch_size * patch_size * 3});
}

Tensor decode_hidden(const Tensor& v_masked, const Tensor& pos_embed, const DecoderParams& params) {
  const std::size_t n = params.cfg.grid() * params.cfg.grid();
  if (v_masked.rank() != 2 || v_masked.dim(0) != n || v_masked.dim(1) != params.cfg.layer.hidden ||
      pos_embed.shape() != v_masked.shape()) {
    fail(ErrorCode::kDimMismatch, "decoder expects [" + std::to_string(n) + ", " +
                                      std::to_string(params.cfg.layer.hidden) + "], got " +
                                      shape_str(v_masked.shape()));
  }
  Tensor h = add(v_masked, pos_embed);
  for (const auto& layer : params.layers) h = layer.forward(h);
  return h;
}

Tensor reconstruct(const Tensor& v_masked, const Tensor& pos_embed, const DecoderParams& params) {
  Tensor h = decode_hidden(v_masked, pos_embed, params);
  Tensor patches = add_row_vector(matmul(h, params.head_w), params.head_b);
  return unpatchify(patches, params.cfg.grid(), params.cfg.patch_size);
}

std::pair<Tensor, Tensor> reconstruct_pair(const Tensor& v_fore, const Tensor& v_back,
                                           const Tensor& pos_embed, const DecoderParams& params) {
  return {reconstruct(v_fore, pos_embed, params), reconstruct(v_back, pos_embed, params)};
}

Tensor predict_token_logits(const Tensor& v_masked, const Tensor& pos_embed,
                            const DecoderParams& params) {
  Tensor h = decode_hidden(v_masked, pos_embed, params);
  return add_row_vector(matmul(h, params.mask_head_w), params.mask_head_b);
}

}  // namespace fastdrive

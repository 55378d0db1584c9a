// SPDX-License-Identifier: Apache-2.0
#include "fastdrive/pruner.hpp"

#include <random>
#include <string>

#include "fastdrive/error.hpp"
#include "fastdrive/ops.hpp"

namespace fastdrive {

PrunerParams PrunerParams::init(const LayerConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  PrunerParams p;
  p.cfg = cfg;
  p.query = Tensor::randn({1, cfg.hidden}, rng, 0.02f, true);
  p.layer = TransformerLayer::init(cfg, rng);
  p.scorer_w = Tensor::randn({cfg.hidden, 1}, rng, 0.02f, true);
  p.scorer_b = Tensor::zeros({1}, true);
  return p;
}

PrunerParams PrunerParams::zeros(const LayerConfig& cfg) {
  PrunerParams p;
  p.cfg = cfg;
  p.query = Tensor::zeros({1, cfg.hidden}, true);
  p.layer = TransformerLayer::zeros(cfg);
  p.scorer_w = Tensor::zeros({cfg.hidden, 1}, true);
  p.scorer_b = Tensor::zeros({1}, true);
  return p;
}

ParamList PrunerParams::parameters() const {
  ParamList out;
  out.push_back({"pruner.query", query});
  layer.collect(out, "pruner.layer.");
  out.push_back({"pruner.scorer.w", scorer_w});
  out.push_back({"pruner.scorer.b", scorer_b});
  return out;
}

PrunerOutput pruner_forward(const TokenSequence& seq, const PrunerParams& params) {
  if (!seq.tokens.defined() || seq.tokens.rank() != 2 || seq.tokens.dim(1) != params.cfg.hidden ||
      seq.pos_embed.shape() != seq.tokens.shape()) {
    fail(ErrorCode::kDimMismatch,
         "pruner width " + std::to_string(params.cfg.hidden) + " vs tokens " +
             (seq.tokens.defined() ? shape_str(seq.tokens.shape()) : std::string("[]")));
  }
  const std::size_t n = seq.tokens.dim(0);
  Tensor x = concat_rows({params.query, add(seq.tokens, seq.pos_embed)});
  Tensor y = params.layer.forward(x);
  return {slice_rows(y, 0, 1), slice_rows(y, 1, n + 1)};
}

Tensor score(const Tensor& q_star, const Tensor& v_star, const PrunerParams& params) {
  const std::size_t d = params.cfg.hidden;
  if (q_star.shape() != Shape{1, d} || v_star.rank() != 2 || v_star.dim(1) != d) {
    fail(ErrorCode::kDimMismatch,
         "score: Q* " + shape_str(q_star.shape()) + ", V* " + shape_str(v_star.shape()));
  }
  Tensor fused = mul_row_vector(v_star, q_star);
  return add_row_vector(matmul(fused, params.scorer_w), params.scorer_b);
}

Tensor saliency(const TokenSequence& seq, const PrunerParams& params) {
  PrunerOutput out = pruner_forward(seq, params);
  return score(out.q_star, out.v_star, params);
}

PrunerParamCount param_count(const PrunerParams& params) {
  PrunerParamCount c;
  c.query = params.query.numel();
  ParamList layer;
  params.layer.collect(layer, "");
  c.layer = total_elements(layer);
  c.scorer = params.scorer_w.numel() + params.scorer_b.numel();
  return c;
}

PrunerParamCount param_count(const LayerConfig& cfg) {
  PrunerParamCount c;
  c.query = cfg.hidden;
  c.layer = layer_param_count(cfg);
  c.scorer = cfg.hidden + 1;
  return c;
}

}  // namespace fastdrive

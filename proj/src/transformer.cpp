// SPDX-License-Identifier: Apache-2.0
#include "fastdrive/transformer.hpp"

#include <cmath>

#include "fastdrive/error.hpp"
#include "fastdrive/ops.hpp"

namespace fastdrive {

std::size_t total_elements(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

void LayerConfig::validate() const {
  if (hidden == 0 || intermediate == 0 || heads == 0 || hidden % heads != 0) {
    fail(ErrorCode::kInvalidArgument, "layer config needs hidden % heads == 0 and positive dims");
  }
}

std::size_t layer_param_count(const LayerConfig& cfg) {
  const std::size_t d = cfg.hidden, i = cfg.intermediate;
  const std::size_t norms = 2 * 2 * d;
  const std::size_t attention = 4 * d * d + 3 * d;  // q, k, v carry biases; o does not
  const std::size_t mlp = 3 * d * i;
  return norms + attention + mlp;
}

TransformerLayer TransformerLayer::init(const LayerConfig& cfg, std::mt19937_64& rng,
                                        float stddev) {
  cfg.validate();
  const std::size_t d = cfg.hidden, i = cfg.intermediate;
  TransformerLayer l;
  l.cfg = cfg;
  l.ln1_gamma = Tensor::full({d}, 1.0f, true);
  l.ln1_beta = Tensor::zeros({d}, true);
  l.wq = Tensor::randn({d, d}, rng, stddev, true);
  l.bq = Tensor::zeros({d}, true);
  l.wk = Tensor::randn({d, d}, rng, stddev, true);
  l.bk = Tensor::zeros({d}, true);
  l.wv = Tensor::randn({d, d}, rng, stddev, true);
  l.bv = Tensor::zeros({d}, true);
  l.wo = Tensor::randn({d, d}, rng, stddev, true);
  l.ln2_gamma = Tensor::full({d}, 1.0f, true);
  l.ln2_beta = Tensor::zeros({d}, true);
  l.w_gate = Tensor::randn({d, i}, rng, stddev, true);
  l.w_up = Tensor::randn({d, i}, rng, stddev, true);
  l.w_down = Tensor::randn({i, d}, rng, stddev, true);
  return l;
}

TransformerLayer TransformerLayer::zeros(const LayerConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.hidden, i = cfg.intermediate;
  TransformerLayer l;
  l.cfg = cfg;
  l.ln1_gamma = Tensor::full({d}, 1.0f, true);
  l.ln1_beta = Tensor::zeros({d}, true);
  for (Tensor* w : {&l.wq, &l.wk, &l.wv, &l.wo}) *w = Tensor::zeros({d, d}, true);
  for (Tensor* b : {&l.bq, &l.bk, &l.bv}) *b = Tensor::zeros({d}, true);
  l.ln2_gamma = Tensor::full({d}, 1.0f, true);
  l.ln2_beta = Tensor::zeros({d}, true);
  l.w_gate = Tensor::zeros({d, i}, true);
  l.w_up = Tensor::zeros({d, i}, true);
  l.w_down = Tensor::zeros({i, d}, true);
  return l;
}

Tensor TransformerLayer::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != cfg.hidden) {
    fail(ErrorCode::kDimMismatch, "layer expects [T, " + std::to_string(cfg.hidden) + "], got " +
                                      shape_str(x.shape()));
  }
  const std::size_t t = x.dim(0), h = cfg.heads, dh = cfg.hidden / cfg.heads;

  Tensor normed = layer_norm(x, ln1_gamma, ln1_beta);
  Tensor q = add_row_vector(matmul(normed, wq), bq);
  Tensor k = add_row_vector(matmul(normed, wk), bk);
  Tensor v = add_row_vector(matmul(normed, wv), bv);

  Tensor qh = permute(reshape(q, {t, h, dh}), {1, 0, 2});  // [H, T, dh]
  Tensor kt = permute(reshape(k, {t, h, dh}), {1, 2, 0});  // [H, dh, T]
  Tensor vh = permute(reshape(v, {t, h, dh}), {1, 0, 2});  // [H, T, dh]

  // No causal mask: every position attends to all T positions.
  Tensor attn = softmax(mul_scalar(bmm(qh, kt), 1.0f / std::sqrt(static_cast<float>(dh))));
  Tensor ctx = reshape(permute(bmm(attn, vh), {1, 0, 2}), {t, cfg.hidden});
  Tensor resid = add(x, matmul(ctx, wo));

  Tensor normed2 = layer_norm(resid, ln2_gamma, ln2_beta);
  Tensor gated = mul(silu(matmul(normed2, w_gate)), matmul(normed2, w_up));
  return add(resid, matmul(gated, w_down));
}

void TransformerLayer::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + "ln1.gamma", ln1_gamma});
  out.push_back({prefix + "ln1.beta", ln1_beta});
  out.push_back({prefix + "attn.wq", wq});
  out.push_back({prefix + "attn.bq", bq});
  out.push_back({prefix + "attn.wk", wk});
  out.push_back({prefix + "attn.bk", bk});
  out.push_back({prefix + "attn.wv", wv});
  out.push_back({prefix + "attn.bv", bv});
  out.push_back({prefix + "attn.wo", wo});
  out.push_back({prefix + "ln2.gamma", ln2_gamma});
  out.push_back({prefix + "ln2.beta", ln2_beta});
  out.push_back({prefix + "mlp.w_gate", w_gate});
  out.push_back({prefix + "mlp.w_up", w_up});
  out.push_back({prefix + "mlp.w_down", w_down});
}

}  // namespace fastdrive

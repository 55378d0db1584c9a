// SPDX-License-Identifier: Apache-2.0
//
// ReconPruner: a learnable query token is prepended to the position-aware
// visual tokens, the pair goes through one full-attention decoder layer, and
// an affine scorer maps the Hadamard product V* (.) Q* to one saliency score
// per token.
#pragma once

#include <cstddef>
#include <cstdint>

#include "fastdrive/encoder.hpp"
#include "fastdrive/transformer.hpp"

namespace fastdrive {

struct PrunerParams {
  LayerConfig cfg;
  Tensor query;     // [1, D]
  TransformerLayer layer;
  Tensor scorer_w;  // [D, 1]
  Tensor scorer_b;  // [1]

  // query, scorer_w ~ N(0, 0.02^2); scorer_b = 0; layer per TransformerLayer::init.
  static PrunerParams init(const LayerConfig& cfg, std::uint64_t seed);
  // All learnable weights zero (norm gains 1).
  static PrunerParams zeros(const LayerConfig& cfg);

  ParamList parameters() const;
};

struct PrunerOutput {
  Tensor q_star;  // [1, D]
  Tensor v_star;  // [N, D]
};

PrunerOutput pruner_forward(const TokenSequence& seq, const PrunerParams& params);

// S = (V* (.) Q*) W + b, shape [N, 1].
Tensor score(const Tensor& q_star, const Tensor& v_star, const PrunerParams& params);

// pruner_forward followed by score.
Tensor saliency(const TokenSequence& seq, const PrunerParams& params);

struct PrunerParamCount {
  std::size_t query = 0;
  std::size_t layer = 0;
  std::size_t scorer = 0;
  std::size_t total() const { return query + layer + scorer; }
};

PrunerParamCount param_count(const PrunerParams& params);
// Same breakdown from dimensions alone (no allocation).
PrunerParamCount param_count(const LayerConfig& cfg);

}  // namespace fastdrive

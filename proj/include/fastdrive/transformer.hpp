// SPDX-License-Identifier: Apache-2.0
//
// Pre-norm transformer decoder layer with FULL (non-causal) multi-head
// self-attention and a SiLU-gated MLP, shared by the pruner and the
// reconstruction decoder.
#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "fastdrive/tensor.hpp"

namespace fastdrive {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using ParamList = std::vector<NamedTensor>;

std::size_t total_elements(const ParamList& params);

struct LayerConfig {
  std::size_t hidden = 64;
  std::size_t intermediate = 256;
  std::size_t heads = 4;

  void validate() const;
};

// Learnable scalars of one layer, by closed form.
std::size_t layer_param_count(const LayerConfig& cfg);

struct TransformerLayer {
  LayerConfig cfg;
  Tensor ln1_gamma, ln1_beta;
  Tensor wq, bq, wk, bk, wv, bv, wo;
  Tensor ln2_gamma, ln2_beta;
  Tensor w_gate, w_up, w_down;

  // Matrices ~ N(0, stddev^2), projection biases 0, norm gains 1.
  static TransformerLayer init(const LayerConfig& cfg, std::mt19937_64& rng,
                               float stddev = 0.02f);
  // Every matrix and bias zero; norm gains 1. The layer is then the identity.
  static TransformerLayer zeros(const LayerConfig& cfg);

  // x: [T, hidden] -> [T, hidden]
  Tensor forward(const Tensor& x) const;

  void collect(ParamList& out, const std::string& prefix) const;
};

}  // namespace fastdrive

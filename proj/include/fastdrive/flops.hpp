// SPDX-License-Identifier: Apache-2.0
//
// Prefill FLOPs accounting. One multiply-accumulate counts as 2 FLOPs; norms,
// softmax, activations and residual adds are excluded.
//
// Per layer, with T = M + L tokens:
//   q, k, v, o projections   2 * 4 * T * d^2
//   scores and weighted sum  2 * 2 * T^2 * d
//   gated MLP                2 * 3 * T * d * i
// plus 2 * d * vocab for the final-position logits when vocab > 0.
#pragma once

#include <cstdint>
#include <string>

#include "fastdrive/transformer.hpp"

namespace fastdrive {

inline constexpr const char* kFlopConvention = "1 MAC = 2 FLOPs; norms/softmax/activations excluded";

struct ModelSpec {
  std::size_t n_layers = 28;
  std::size_t hidden = 64;
  std::size_t intermediate = 256;
  std::size_t heads = 4;
  std::size_t vocab = 0;
  std::size_t visual_tokens = 3249;
  std::size_t text_tokens = 0;

  std::size_t seq_len() const { return visual_tokens + text_tokens; }
  LayerConfig layer() const { return {hidden, intermediate, heads}; }
  void validate() const;
};

std::uint64_t layer_flops(std::uint64_t t, std::uint64_t d, std::uint64_t i);
std::uint64_t prefill_flops(const ModelSpec& spec);

// One pruner layer over 1 + n tokens plus the 2 * n * d scorer.
std::uint64_t pruner_overhead_flops(std::size_t n, const LayerConfig& pruner);

// Runs spec.n_layers random layers on a random [T, d] input and reads the
// matmul counter. Toy sizes only.
std::uint64_t instrumented_prefill_flops(const ModelSpec& spec, std::uint64_t seed = 0);

struct BenchReport {
  ModelSpec spec;
  std::size_t kept_tokens = 0;
  std::uint64_t flops_unpruned = 0;
  std::uint64_t flops_pruned = 0;
  std::uint64_t overhead = 0;
  double ratio = 0;                // unpruned / pruned
  double ratio_with_overhead = 0;  // unpruned / (pruned + overhead)
  double overhead_fraction = 0;    // overhead / unpruned
};

BenchReport bench(const ModelSpec& spec, std::size_t kept_tokens, const LayerConfig& pruner);

}  // namespace fastdrive

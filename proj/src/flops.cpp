// SPDX-License-Identifier: Apache-2.0
#include "fastdrive/flops.hpp"

#include <random>

#include "fastdrive/error.hpp"
#include "fastdrive/ops.hpp"

namespace fastdrive {

void ModelSpec::validate() const {
  if (n_layers == 0 || hidden == 0 || intermediate == 0 || heads == 0 || seq_len() == 0) {
    fail(ErrorCode::kInvalidArgument, "model spec sizes must be positive");
  }
  if (hidden % heads != 0) {
    fail(ErrorCode::kInvalidArgument, "hidden size must be divisible by the head count");
  }
}

std::uint64_t layer_flops(std::uint64_t t, std::uint64_t d, std::uint64_t i) {
  return 8 * t * d * d + 4 * t * t * d + 6 * t * d * i;
}

std::uint64_t prefill_flops(const ModelSpec& spec) {
  spec.validate();
  return spec.n_layers * layer_flops(spec.seq_len(), spec.hidden, spec.intermediate) +
         2ull * spec.hidden * spec.vocab;
}

std::uint64_t pruner_overhead_flops(std::size_t n, const LayerConfig& pruner) {
  return layer_flops(n + 1, pruner.hidden, pruner.intermediate) + 2ull * n * pruner.hidden;
}

std::uint64_t instrumented_prefill_flops(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  NoGradGuard no_grad;
  Tensor x = Tensor::randn({spec.seq_len(), spec.hidden}, rng, 1.0f);
  const std::uint64_t before = matmul_flops();
  for (std::size_t l = 0; l < spec.n_layers; ++l) {
    x = TransformerLayer::init(spec.layer(), rng).forward(x);
  }
  if (spec.vocab > 0) {
    Tensor head = Tensor::randn({spec.hidden, spec.vocab}, rng, 0.02f);
    matmul(slice_rows(x, spec.seq_len() - 1, spec.seq_len()), head);
  }
  return matmul_flops() - before;
}

BenchReport bench(const ModelSpec& spec, std::size_t kept_tokens, const LayerConfig& pruner) {
  spec.validate();
  if (kept_tokens > spec.visual_tokens) {
    fail(ErrorCode::kInvalidArgument, "kept tokens exceed visual tokens");
  }
  BenchReport r;
  r.spec = spec;
  r.kept_tokens = kept_tokens;
  ModelSpec pruned = spec;
  pruned.visual_tokens = kept_tokens;
  r.flops_unpruned = prefill_flops(spec);
  r.flops_pruned = pruned.seq_len() == 0 ? 0 : prefill_flops(pruned);
  r.overhead = pruner_overhead_flops(spec.visual_tokens, pruner);
  const auto u = static_cast<double>(r.flops_unpruned);
  r.ratio = r.flops_pruned == 0 ? 0.0 : u / static_cast<double>(r.flops_pruned);
  r.ratio_with_overhead = u / static_cast<double>(r.flops_pruned + r.overhead);
  r.overhead_fraction = static_cast<double>(r.overhead) / u;
  return r;
}

}  // namespace fastdrive

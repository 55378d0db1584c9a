// SPDX-License-Identifier: Apache-2.0
//
// Inference-time Top-K token pruning and the downstream sequence layout.
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fastdrive/encoder.hpp"

namespace fastdrive {

struct PrunedSequence {
  Tensor tokens;     // [M, D]
  Tensor pos_embed;  // [M, D]
  std::vector<std::size_t> kept_indices;  // strictly increasing
  double ratio = 0;
  std::size_t n = 0;
  std::size_t size() const { return kept_indices.size(); }
};

// floor(n * (1 - p)). Throws InvalidArgument unless 0 <= p <= 1.
std::size_t retained_count(std::size_t n, double p);

// The k highest scores, ties broken by lower index, returned ascending.
std::vector<std::size_t> top_k_indices(std::span<const float> scores, std::size_t k);

PrunedSequence prune(const TokenSequence& seq, const Tensor& scores, double p);
// Keeps exactly k tokens; ratio is reported as 1 - k / n.
PrunedSequence prune_k(const TokenSequence& seq, const Tensor& scores, std::size_t k);

enum class SlotSource { kVisual, kText };

struct SequenceLayout {
  std::size_t visual = 0;
  std::size_t text = 0;
  std::vector<SlotSource> sources;
  // Original token index for visual slots, text position for text slots.
  std::vector<std::size_t> source_index;
  std::size_t total() const { return sources.size(); }
};

// [visual M | text L] as consumed by a language model.
SequenceLayout downstream_stub(const PrunedSequence& pruned, std::size_t text_len);

// {n, m, p, kept_indices, scores}
std::string pruned_to_json(const PrunedSequence& pruned, std::span<const float> scores);

}  // namespace fastdrive

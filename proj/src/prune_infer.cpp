// SPDX-License-Identifier: Apache-2.0
#include "fastdrive/prune_infer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "fastdrive/error.hpp"
#include "fastdrive/ops.hpp"

namespace fastdrive {

std::size_t retained_count(std::size_t n, double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    fail(ErrorCode::kInvalidArgument, "pruning ratio must be in [0, 1], got " + std::to_string(p));
  }
  // The small slack absorbs binary rounding of decimal ratios (1 - 0.9 < 0.1).
  const long double kept = static_cast<long double>(n) * (1.0L - static_cast<long double>(p));
  const auto m = static_cast<std::size_t>(std::floor(kept + 1e-9L));
  return std::min(m, n);
}

std::vector<std::size_t> top_k_indices(std::span<const float> scores, std::size_t k) {
  if (k > scores.size()) {
    fail(ErrorCode::kInvalidArgument, "cannot keep " + std::to_string(k) + " of " +
                                          std::to_string(scores.size()) + " tokens");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

PrunedSequence prune_k(const TokenSequence& seq, const Tensor& scores, std::size_t k) {
  const std::size_t n = seq.size();
  if (scores.numel() != n) {
    fail(ErrorCode::kDimMismatch, "scores hold " + std::to_string(scores.numel()) +
                                      " values for " + std::to_string(n) + " tokens");
  }
  PrunedSequence out;
  out.n = n;
  out.kept_indices = top_k_indices(scores.data(), k);
  out.ratio = n == 0 ? 0.0 : 1.0 - static_cast<double>(k) / static_cast<double>(n);
  out.tokens = gather_rows(seq.tokens, out.kept_indices);
  out.pos_embed = gather_rows(seq.pos_embed, out.kept_indices);
  return out;
}

PrunedSequence prune(const TokenSequence& seq, const Tensor& scores, double p) {
  PrunedSequence out = prune_k(seq, scores, retained_count(seq.size(), p));
  out.ratio = p;
  return out;
}

SequenceLayout downstream_stub(const PrunedSequence& pruned, std::size_t text_len) {
  SequenceLayout layout;
  layout.visual = pruned.size();
  layout.text = text_len;
  layout.sources.reserve(layout.visual + text_len);
  layout.source_index.reserve(layout.visual + text_len);
  for (std::size_t idx : pruned.kept_indices) {
    layout.sources.push_back(SlotSource::kVisual);
    layout.source_index.push_back(idx);
  }
  for (std::size_t t = 0; t < text_len; ++t) {
    layout.sources.push_back(SlotSource::kText);
    layout.source_index.push_back(t);
  }
  return layout;
}

std::string pruned_to_json(const PrunedSequence& pruned, std::span<const float> scores) {
  nlohmann::json j;
  j["n"] = pruned.n;
  j["m"] = pruned.size();
  j["p"] = pruned.ratio;
  j["kept_indices"] = pruned.kept_indices;
  j["scores"] = std::vector<float>(scores.begin(), scores.end());
  return j.dump();
}

}  // namespace fastdrive

// SPDX-License-Identifier: Apache-2.0
#include "fastdrive/masking.hpp"

#include <string>

#include "fastdrive/error.hpp"
#include "fastdrive/ops.hpp"

namespace fastdrive {

double SaliencyMask::fraction_positive() const {
  if (hard.empty()) return 0.0;
  std::size_t on = 0;
  for (auto v : hard) on += v;
  return static_cast<double>(on) / static_cast<double>(hard.size());
}

double fraction_positive(const Tensor& scores) {
  if (scores.numel() == 0) return 0.0;
  std::size_t on = 0;
  for (float s : scores.data()) on += s > 0.0f ? 1 : 0;
  return static_cast<double>(on) / static_cast<double>(scores.numel());
}

SaliencyMask binarize(const Tensor& scores) {
  const std::size_t n = scores.numel();
  SaliencyMask m;
  m.scores = scores;
  m.hard.resize(n);
  std::vector<float> hard_values(n);
  for (std::size_t i = 0; i < n; ++i) {
    m.hard[i] = scores.data()[i] > 0.0f ? 1 : 0;
    hard_values[i] = static_cast<float>(m.hard[i]);
  }
  Tensor hard({n, 1}, std::move(hard_values));
  Tensor soft = scores.rank() == 2 && scores.dim(1) == 1 ? scores : reshape(scores, {n, 1});
  m.m_tilde = straight_through(soft, hard);
  return m;
}

TokenSplit split(const Tensor& tokens, const SaliencyMask& mask) {
  if (tokens.rank() != 2 || tokens.dim(0) != mask.size()) {
    fail(ErrorCode::kDimMismatch, "split: tokens " + shape_str(tokens.shape()) + " vs mask of " +
                                      std::to_string(mask.size()));
  }
  return {scale_rows(tokens, mask.m_tilde), scale_rows(tokens, rsub_scalar(1.0f, mask.m_tilde))};
}

}  // namespace fastdrive

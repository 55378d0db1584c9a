// SPDX-License-Identifier: Apache-2.0
//
// Hard saliency thresholding with a straight-through estimator, and the
// complementary foreground/background token split.
//
// Note on the mask surrogate: the form M + stop_grad(1 - M) evaluates to all
// ones in the forward pass, which would disable masking. The surrogate used
// here is S + stop_grad(M - S): forward value exactly M, backward identity
// into S.
#pragma once

#include <cstdint>
#include <vector>

#include "fastdrive/tensor.hpp"

namespace fastdrive {

struct SaliencyMask {
  std::vector<std::uint8_t> hard;  // M_i = 1 iff S_i > 0
  Tensor m_tilde;                  // [N, 1], forward == M, d/dS == identity
  Tensor scores;                   // the S it came from

  std::size_t size() const { return hard.size(); }
  double fraction_positive() const;
};

SaliencyMask binarize(const Tensor& scores);

// mean(S > 0)
double fraction_positive(const Tensor& scores);

struct TokenSplit {
  Tensor fore;  // M~ (.) V, zero rows where M = 0
  Tensor back;  // (1 - M~) (.) V
};

TokenSplit split(const Tensor& tokens, const SaliencyMask& mask);

}  // namespace fastdrive

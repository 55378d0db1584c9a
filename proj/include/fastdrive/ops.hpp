// SPDX-License-Identifier: Apache-2.0
//
// Differentiable op suite. Shapes are explicit: nothing broadcasts
// implicitly, and every op that combines differently-shaped operands says so
// in its name (add_row_vector, scale_rows, ...). Mismatches throw
// ShapeMismatch.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fastdrive/tensor.hpp"

namespace fastdrive {

// [M,K] x [K,N] -> [M,N]
Tensor matmul(const Tensor& a, const Tensor& b);
// [B,M,K] x [B,K,N] -> [B,M,N]
Tensor bmm(const Tensor& a, const Tensor& b);
// 2-D transpose.
Tensor transpose(const Tensor& a);
// General axis permutation: out.shape[i] = a.shape[axes[i]].
Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes);
Tensor reshape(const Tensor& a, Shape shape);

// Row-wise (axis 0) concatenation; trailing dims must agree.
Tensor concat_rows(const std::vector<Tensor>& parts);
// Rows [begin, end) along axis 0.
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, float c);
Tensor mul_scalar(const Tensor& a, float c);
// c - a
Tensor rsub_scalar(float c, const Tensor& a);

// x[R,C] + b[C] (b may also be [1,C])
Tensor add_row_vector(const Tensor& x, const Tensor& b);
// x[R,C] * v[C] per row (v may also be [1,C])
Tensor mul_row_vector(const Tensor& x, const Tensor& v);
// x[R,C] * s[R] per row (s may also be [R,1])
Tensor scale_rows(const Tensor& x, const Tensor& s);

Tensor square(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor silu(const Tensor& a);
// tanh approximation
Tensor gelu(const Tensor& a);

// Softmax over the last axis.
Tensor softmax(const Tensor& a);
// Normalizes over the last axis, then applies gamma/beta of that length.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  float eps = 1e-5f);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Non-overlapping window average over the two leading axes of x[H,W,C].
Tensor avg_pool2d(const Tensor& x, std::size_t window);
// Separable 'valid' correlation of x[H,W,C] with the outer product of a
// fixed 1-D kernel; output [H-K+1, W-K+1, C].
Tensor filter2d_valid(const Tensor& x, std::span<const float> kernel);

// Forward: identity. Backward: no gradient flows through this edge.
Tensor stop_grad(const Tensor& a);
// Forward: exactly `hard`. Backward: identity into `soft`. Equivalent to
// soft + stop_grad(hard - soft) without the rounding in the forward sum.
Tensor straight_through(const Tensor& soft, const Tensor& hard);

// Mean binary cross-entropy of sigmoid(logits) against {0,1} targets.
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);

}  // namespace fastdrive

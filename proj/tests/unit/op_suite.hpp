// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference checks over every differentiable op, at dims <= 8.
#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fastdrive/ops.hpp"
#include "gradcheck.hpp"

namespace fastdrive::testing {

inline Tensor rand_tensor(Shape shape, std::mt19937_64& rng, bool rg = true, float lo = -1.0f,
                          float hi = 1.0f) {
  std::uniform_real_distribution<float> dist(lo, hi);
  std::vector<float> v(shape_numel(shape));
  for (float& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), rg);
}

using OpCheck = std::pair<std::string, GradCheckResult>;

inline std::vector<OpCheck> op_gradcheck_suite(std::uint64_t seed, double h = 1e-3) {
  std::mt19937_64 rng(seed);
  std::vector<OpCheck> results;
  auto record = [&](const GradCheckResult& r, const char* name) { results.emplace_back(name, r); };
  auto grad_check = [h](const std::function<Tensor()>& fn, Tensor wrt) {
    return fastdrive::testing::grad_check(fn, std::move(wrt), h);
  };


  Tensor a = rand_tensor({3, 4}, rng);
  Tensor b = rand_tensor({4, 5}, rng);
  Tensor w35 = rand_tensor({3, 5}, rng, false);
  record(grad_check([&] { return project(matmul(a, b), w35); }, a), "matmul/a");
  record(grad_check([&] { return project(matmul(a, b), w35); }, b), "matmul/b");

  Tensor ba = rand_tensor({2, 3, 4}, rng), bb = rand_tensor({2, 4, 2}, rng);
  Tensor wb = rand_tensor({2, 3, 2}, rng, false);
  record(grad_check([&] { return project(bmm(ba, bb), wb); }, ba), "bmm/a");
  record(grad_check([&] { return project(bmm(ba, bb), wb); }, bb), "bmm/b");

  Tensor w43 = rand_tensor({4, 3}, rng, false);
  record(grad_check([&] { return project(transpose(a), w43); }, a), "transpose");
  Tensor wp = rand_tensor({4, 2, 3}, rng, false);
  record(grad_check([&] { return project(permute(ba, {2, 0, 1}), wp); }, ba), "permute");
  Tensor w62 = rand_tensor({6, 2}, rng, false);
  record(grad_check([&] { return project(reshape(a, {6, 2}), w62); }, a), "reshape");

  Tensor c = rand_tensor({2, 4}, rng);
  Tensor w54 = rand_tensor({5, 4}, rng, false);
  record(grad_check([&] { return project(concat_rows({a, c}), w54); }, a), "concat/a");
  record(grad_check([&] { return project(concat_rows({a, c}), w54); }, c), "concat/c");
  Tensor w24 = rand_tensor({2, 4}, rng, false);
  record(grad_check([&] { return project(slice_rows(a, 1, 3), w24); }, a), "slice_rows");
  std::vector<std::size_t> rows{2, 0, 2};
  Tensor w34 = rand_tensor({3, 4}, rng, false);
  record(grad_check([&] { return project(gather_rows(a, rows), w34); }, a), "gather_rows");

  Tensor d = rand_tensor({3, 4}, rng);
  Tensor pos = rand_tensor({3, 4}, rng, true, 0.5f, 1.5f);
  record(grad_check([&] { return project(add(a, d), w34); }, d), "add");
  record(grad_check([&] { return project(sub(a, d), w34); }, d), "sub");
  record(grad_check([&] { return project(mul(a, d), w34); }, a), "mul");
  record(grad_check([&] { return project(div(a, pos), w34); }, a), "div/a");
  record(grad_check([&] { return project(div(a, pos), w34); }, pos), "div/b");
  record(grad_check([&] { return project(add_scalar(a, 0.3f), w34); }, a), "add_scalar");
  record(grad_check([&] { return project(mul_scalar(a, -1.7f), w34); }, a), "mul_scalar");
  record(grad_check([&] { return project(rsub_scalar(1.0f, a), w34); }, a), "rsub_scalar");

  Tensor row = rand_tensor({4}, rng);
  Tensor col = rand_tensor({3, 1}, rng);
  record(grad_check([&] { return project(add_row_vector(a, row), w34); }, row), "add_row_vector");
  record(grad_check([&] { return project(mul_row_vector(a, row), w34); }, a), "mul_row_vector/x");
  record(grad_check([&] { return project(mul_row_vector(a, row), w34); }, row), "mul_row_vector/v");
  record(grad_check([&] { return project(scale_rows(a, col), w34); }, a), "scale_rows/x");
  record(grad_check([&] { return project(scale_rows(a, col), w34); }, col), "scale_rows/s");

  record(grad_check([&] { return project(square(a), w34); }, a), "square");
  record(grad_check([&] { return project(sigmoid(a), w34); }, a), "sigmoid");
  record(grad_check([&] { return project(silu(a), w34); }, a), "silu");
  record(grad_check([&] { return project(gelu(a), w34); }, a), "gelu");
  record(grad_check([&] { return project(softmax(a), w34); }, a), "softmax");

  Tensor gamma = rand_tensor({4}, rng, true, 0.5f, 1.5f);
  Tensor beta = rand_tensor({4}, rng);
  Tensor x = rand_tensor({3, 4}, rng, true, -2.0f, 2.0f);
  record(grad_check([&] { return project(layer_norm(x, gamma, beta), w34); }, x), "layer_norm/x");
  record(grad_check([&] { return project(layer_norm(x, gamma, beta), w34); }, gamma), "layer_norm/g");
  record(grad_check([&] { return project(layer_norm(x, gamma, beta), w34); }, beta), "layer_norm/b");

  record(grad_check([&] { return sum(mul(a, w34)); }, a), "sum");
  record(grad_check([&] { return mean(square(a)); }, a), "mean");

  Tensor img = rand_tensor({8, 8, 2}, rng, true, 0.0f, 1.0f);
  Tensor wpool = rand_tensor({4, 4, 2}, rng, false);
  record(grad_check([&] { return project(avg_pool2d(img, 2), wpool); }, img), "avg_pool2d");
  const std::vector<float> kern{0.2f, 0.5f, 0.3f};
  Tensor wf = rand_tensor({6, 6, 2}, rng, false);
  record(grad_check([&] { return project(filter2d_valid(img, kern), wf); }, img), "filter2d_valid");

  Tensor logits = rand_tensor({6}, rng, true, -2.0f, 2.0f);
  Tensor targets({6}, {1, 0, 1, 1, 0, 0});
  record(grad_check([&] { return bce_with_logits(logits, targets); }, logits), "bce_with_logits");
  return results;
}

}  // namespace fastdrive::testing

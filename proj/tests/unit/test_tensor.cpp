// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstring>
#include <random>

#include "doctest.h"
#include "fastdrive/error.hpp"
#include "fastdrive/ops.hpp"
#include "gradcheck.hpp"
#include "op_suite.hpp"

using namespace fastdrive;
using fastdrive::testing::grad_check;
using fastdrive::testing::project;
using fastdrive::testing::rand_tensor;

namespace {

constexpr double kTol = 1e-3;

}  // namespace

TEST_CASE("matmul with identity leaves the operand unchanged") {
  std::mt19937_64 rng(1);
  Tensor x = rand_tensor({3, 5}, rng, false);
  Tensor y = matmul(Tensor::eye(3), x);
  CHECK(y.shape() == x.shape());
  CHECK(y.to_vector() == x.to_vector());
}

TEST_CASE("softmax of a constant row is uniform") {
  Tensor y = softmax(Tensor::full({1, 4}, 3.7f));
  for (float v : y.data()) CHECK(v == doctest::Approx(0.25f).epsilon(1e-7));
}

TEST_CASE("gradient of sum(square(x))") {
  Tensor x({3}, {1, 2, 3}, true);
  backward(sum(square(x)));
  CHECK(std::vector<float>(x.grad().begin(), x.grad().end()) == std::vector<float>{2, 4, 6});
}

TEST_CASE("mean gradient and accumulation across backward calls") {
  Tensor x({4}, {1, -2, 3, 0.5f}, true);
  Tensor loss = mean(x);
  backward(loss);
  for (float g : x.grad()) CHECK(g == 0.25f);
  backward(loss);
  for (float g : x.grad()) CHECK(g == 0.5f);
  x.zero_grad();
  for (float g : x.grad()) CHECK(g == 0.0f);
}

TEST_CASE("two backward calls double every leaf gradient exactly") {
  std::mt19937_64 rng(7);
  Tensor w = rand_tensor({4, 3}, rng);
  Tensor x = rand_tensor({2, 4}, rng);
  Tensor loss = mean(square(softmax(matmul(x, w))));
  backward(loss);
  std::vector<float> once(w.grad().begin(), w.grad().end());
  backward(loss);
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(w.grad()[i] == 2.0f * once[i]);
}

TEST_CASE("backward rejects non-scalar losses") {
  Tensor x({2}, {1, 2}, true);
  try {
    backward(square(x));
    FAIL("expected NonScalarLoss");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonScalarLoss);
  }
}

TEST_CASE("shape mismatches are errors") {
  Tensor a({2, 3}), b({3, 2}), c({2, 2});
  CHECK_THROWS_AS(add(a, b), Error);
  CHECK_THROWS_AS(matmul(a, c), Error);
  CHECK_THROWS_AS(reshape(a, {5}), Error);
  CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), Error);
  try {
    mul(a, b);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kShapeMismatch);
  }
}

TEST_CASE("debug sentinel flags non-finite values") {
  const bool previous = debug_checks();
  set_debug_checks(true);
  Tensor a({1}, {1.0f}), b({1}, {0.0f});
  try {
    div(a, b);
    FAIL("expected NonFiniteValue");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonFiniteValue);
  }
  set_debug_checks(false);
  CHECK(std::isinf(div(a, b).item()));
  set_debug_checks(previous);
}

TEST_CASE("stop_grad contracts") {
  SUBCASE("x + stop_grad(x) has all-ones gradient") {
    Tensor x({3}, {0.5f, -1.0f, 2.0f}, true);
    backward(sum(add(x, stop_grad(x))));
    for (float g : x.grad()) CHECK(g == 1.0f);
  }
  SUBCASE("stop_grad(x) * x at x=3") {
    Tensor x({1}, {3.0f}, true);
    Tensor y = mul(stop_grad(x), x);
    CHECK(y.item() == 9.0f);
    backward(y);
    CHECK(x.grad()[0] == 3.0f);
  }
  SUBCASE("backward through stop_grad alone yields zero gradient") {
    Tensor x({3}, {1, 2, 3}, true);
    Tensor y = sum(stop_grad(x));
    CHECK_FALSE(y.requires_grad());
    backward(y);
    CHECK((!x.has_grad() || std::all_of(x.grad().begin(), x.grad().end(),
                                        [](float g) { return g == 0.0f; })));
  }
  SUBCASE("forward values are bitwise equal") {
    std::mt19937_64 rng(3);
    Tensor x = rand_tensor({5, 7}, rng);
    Tensor y = stop_grad(x);
    CHECK(std::memcmp(x.data().data(), y.data().data(), x.numel() * sizeof(float)) == 0);
  }
}

TEST_CASE("straight_through forward is exact and backward is identity") {
  Tensor s({4, 1}, {0.3f, -0.2f, 1e-9f, 0.0f}, true);
  Tensor hard({4, 1}, {1, 0, 1, 0});
  Tensor m = straight_through(s, hard);
  CHECK(m.to_vector() == hard.to_vector());
  backward(sum(m));
  for (float g : s.grad()) CHECK(g == 1.0f);
  // Same gradient as the composite surrogate s + stop_grad(hard - s).
  Tensor s2({4, 1}, s.to_vector(), true);
  backward(sum(add(s2, stop_grad(sub(hard, s2)))));
  CHECK(std::vector<float>(s2.grad().begin(), s2.grad().end()) ==
        std::vector<float>(s.grad().begin(), s.grad().end()));
}

TEST_CASE("forward passes are deterministic") {
  std::mt19937_64 rng(11);
  Tensor x = rand_tensor({6, 8}, rng, false);
  Tensor w = rand_tensor({8, 8}, rng, false);
  Tensor g = Tensor::full({8}, 1.0f), b = Tensor::full({8}, 0.0f);
  auto run = [&] { return softmax(layer_norm(gelu(matmul(x, w)), g, b)).to_vector(); };
  CHECK(run() == run());
}

TEST_CASE("permute, reshape and slicing move values as expected") {
  Tensor x({2, 3}, {0, 1, 2, 3, 4, 5});
  CHECK(transpose(x).to_vector() == std::vector<float>{0, 3, 1, 4, 2, 5});
  Tensor y({2, 1, 3}, {0, 1, 2, 3, 4, 5});
  Tensor p = permute(y, {2, 0, 1});
  CHECK(p.shape() == Shape{3, 2, 1});
  CHECK(p.to_vector() == std::vector<float>{0, 3, 1, 4, 2, 5});
  CHECK(slice_rows(x, 1, 2).to_vector() == std::vector<float>{3, 4, 5});
  std::vector<std::size_t> rows{1, 0, 1};
  CHECK(gather_rows(x, rows).to_vector() == std::vector<float>{3, 4, 5, 0, 1, 2, 3, 4, 5});
  CHECK(concat_rows({x, slice_rows(x, 0, 1)}).shape() == Shape{3, 3});
}

TEST_CASE("avg_pool2d and filter2d_valid on hand-sized inputs") {
  Tensor x({2, 2, 1}, {1, 2, 3, 4});
  CHECK(avg_pool2d(x, 2).item() == 2.5f);
  Tensor img({3, 3, 1}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const float k[] = {0.25f, 0.5f, 0.25f};
  // 'valid' output is the single centre tap: sum of weights * pixels.
  const double expected = (1 + 2 * 2 + 3 + 2 * 4 + 4 * 5 + 2 * 6 + 7 + 2 * 8 + 9) / 16.0;
  CHECK(filter2d_valid(img, k).item() == doctest::Approx(expected));
}

TEST_CASE("bce_with_logits matches the closed form") {
  Tensor z({2}, {0.0f, 2.0f}), t({2}, {1.0f, 0.0f});
  const double expected = (std::log(2.0) + std::log1p(std::exp(2.0))) / 2.0;
  CHECK(bce_with_logits(z, t).item() == doctest::Approx(expected).epsilon(1e-6));
}

// Every registered op against central finite differences.
TEST_CASE("finite-difference gradient checks for every op") {
  for (const auto& [name, r] : fastdrive::testing::op_gradcheck_suite(2024)) {
    INFO(name << " rel_error=" << r.rel_error);
    CHECK(r.rel_error < kTol);
    CHECK(r.analytic_norm > 0.0);
  }
}

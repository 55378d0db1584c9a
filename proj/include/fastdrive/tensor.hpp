// SPDX-License-Identifier: Apache-2.0
//
// Dense f32 tensor with reverse-mode automatic differentiation.
//
// Every op records a node holding its inputs and a backward rule. Calling
// backward(loss) walks the graph reachable from `loss` once, in reverse
// topological order.
//
// Gradient policy:
//   * Leaf tensors (created by the user, requires_grad == true) ACCUMULATE
//     gradients across backward() calls; clear them with zero_grad().
//   * Interior tensors have their gradient reset at the start of each
//     backward() call, so the graph can be walked again and leaf gradients
//     add up exactly (two calls double them).
//   * The graph lives as long as the tensors that reference it.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace fastdrive {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;

namespace detail {

struct TensorImpl;

struct Node {
  const char* op = "";
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  // Reads out.grad and accumulates into the grads of `inputs`.
  std::function<void(const TensorImpl& out)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;
  bool requires_grad = false;
  std::shared_ptr<Node> node;

  // Lazily allocated, zero-initialized gradient buffer.
  std::span<float> grad_buffer();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  // Zero-filled.
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<float> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor randn(Shape shape, std::mt19937_64& rng, float stddev,
                      bool requires_grad = false);
  static Tensor eye(std::size_t n);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  inline std::span<float> data();
  inline std::span<const float> data() const;
  std::vector<float> to_vector() const;
  float item() const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool has_grad() const;
  std::span<const float> grad() const;
  void zero_grad();
  bool is_leaf() const;

  // Copies the values into a new leaf with no history.
  Tensor detach() const;

  bool same_as(const Tensor& other) const { return impl_ == other.impl_; }
  detail::TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<detail::TensorImpl>& impl_ptr() const { return impl_; }

  // Builds an op result. `inputs` are recorded only when grad mode is on and
  // at least one input requires grad.
  static Tensor make_result(const char* op, Shape shape, std::vector<float> data,
                            std::vector<Tensor> inputs,
                            std::function<void(const detail::TensorImpl&)> backward);

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
};

inline std::span<float> Tensor::data() { return impl_->data; }
inline std::span<const float> Tensor::data() const { return impl_->data; }

// Accumulates d(loss)/d(t) into every reachable leaf with requires_grad.
// Throws NonScalarLoss unless loss has exactly one element.
void backward(const Tensor& loss);

void zero_grads(std::span<Tensor> tensors);

bool grad_enabled();

// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// NaN/Inf sentinel run after every op. On by default in debug builds.
void set_debug_checks(bool enabled);
bool debug_checks();

// Count of FLOPs executed by matmul/bmm on this thread (1 MAC = 2 FLOPs).
std::uint64_t matmul_flops();
void reset_matmul_flops();

}  // namespace fastdrive

// SPDX-License-Identifier: Apache-2.0
#include "fastdrive/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "fastdrive/error.hpp"

namespace fastdrive {

namespace {

thread_local bool g_grad_enabled = true;

#ifdef NDEBUG
bool g_debug_checks = false;
#else
bool g_debug_checks = true;
#endif

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::span<float> detail::TensorImpl::grad_buffer() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
  return grad;
}

Tensor::Tensor(Shape shape) : impl_(std::make_shared<detail::TensorImpl>()) {
  impl_->data.assign(shape_numel(shape), 0.0f);
  impl_->shape = std::move(shape);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  Tensor t(std::move(shape));
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor::Tensor(Shape shape, std::vector<float> values, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  if (shape_numel(shape) != values.size()) {
    fail(ErrorCode::kShapeMismatch, "shape " + shape_str(shape) + " holds " +
                                        std::to_string(shape_numel(shape)) +
                                        " values, got " + std::to_string(values.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  std::vector<float> values(shape_numel(shape), value);
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, float stddev, bool requires_grad) {
  std::normal_distribution<float> dist(0.0f, stddev);
  std::vector<float> values(shape_numel(shape));
  for (float& v : values) v = dist(rng);
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::eye(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.data()[i * n + i] = 1.0f;
  return t;
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    fail(ErrorCode::kShapeMismatch,
         "axis " + std::to_string(axis) + " out of range for " + shape_str(impl_->shape));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }

std::vector<float> Tensor::to_vector() const { return impl_->data; }

float Tensor::item() const {
  if (numel() != 1) {
    fail(ErrorCode::kShapeMismatch, "item() on tensor of shape " + shape_str(shape()));
  }
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool value) { impl_->requires_grad = value; }
bool Tensor::has_grad() const { return impl_->grad.size() == impl_->data.size(); }
std::span<const float> Tensor::grad() const { return impl_->grad; }

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

bool Tensor::is_leaf() const { return impl_->node == nullptr; }

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data, false); }

Tensor Tensor::make_result(const char* op, Shape shape, std::vector<float> data,
                           std::vector<Tensor> inputs,
                           std::function<void(const detail::TensorImpl&)> backward_fn) {
  if (g_debug_checks) {
    for (float v : data) {
      if (!std::isfinite(v)) {
        fail(ErrorCode::kNonFiniteValue, std::string("op '") + op + "' produced " +
                                             std::to_string(v));
      }
    }
  }
  Tensor out(std::move(shape), std::move(data), false);
  if (!g_grad_enabled) return out;
  bool any = std::any_of(inputs.begin(), inputs.end(),
                         [](const Tensor& t) { return t.defined() && t.requires_grad(); });
  if (!any) return out;
  auto node = std::make_shared<detail::Node>();
  node->op = op;
  node->inputs.reserve(inputs.size());
  for (auto& t : inputs) node->inputs.push_back(t.impl_);
  node->backward = std::move(backward_fn);
  out.impl_->node = std::move(node);
  out.impl_->requires_grad = true;
  return out;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    fail(ErrorCode::kNonScalarLoss,
         "backward() needs a one-element loss, got " +
             (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<detail::TensorImpl*> visited;
  std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
  stack.emplace_back(loss.impl(), 0);
  visited.insert(loss.impl());
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    if (impl->node && next < impl->node->inputs.size()) {
      detail::TensorImpl* child = impl->node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(impl);
    stack.pop_back();
  }

  for (detail::TensorImpl* impl : order) {
    if (impl->node) impl->grad.assign(impl->data.size(), 0.0f);
  }
  loss.impl()->grad_buffer()[0] += 1.0f;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorImpl* impl = *it;
    if (impl->node) impl->node->backward(*impl);
  }
}

void zero_grads(std::span<Tensor> tensors) {
  for (Tensor& t : tensors) t.zero_grad();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void set_debug_checks(bool enabled) { g_debug_checks = enabled; }
bool debug_checks() { return g_debug_checks; }

}  // namespace fastdrive

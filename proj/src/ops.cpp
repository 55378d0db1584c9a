// SPDX-License-Identifier: Apache-2.0
#include "fastdrive/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>

#include "fastdrive/error.hpp"

namespace fastdrive {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

using detail::TensorImpl;

thread_local std::uint64_t g_matmul_flops = 0;

void check(bool ok, const char* op, const std::string& detail) {
  if (!ok) fail(ErrorCode::kShapeMismatch, std::string(op) + ": " + detail);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  check(a.shape() == b.shape(), op, shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// Row count and width of a tensor viewed as [rows, last_dim].
std::pair<std::size_t, std::size_t> rows_cols(const Tensor& a) {
  std::size_t cols = a.rank() == 0 ? 1 : a.shape().back();
  return {cols == 0 ? 0 : a.numel() / cols, cols};
}

// Fixed eight-lane f64 accumulation: order depends only on n, and the lanes
// break the add latency chain.
constexpr std::size_t kLanes = 8;

double reduce_lanes(const double (&acc)[kLanes]) {
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

double sum_f64(const float* p, std::size_t n) {
  double acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += p[i + l];
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += p[i];
  return reduce_lanes(acc) + tail;
}

double dot_f64(const float* a, const float* b, std::size_t n) {
  double acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) {
      acc[l] += static_cast<double>(a[i + l]) * static_cast<double>(b[i + l]);
    }
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return reduce_lanes(acc) + tail;
}

// Sum of squared deviations from mu.
double centered_sq_f64(const float* p, std::size_t n, double mu) {
  double acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) {
      const double d = p[i + l] - mu;
      acc[l] += d * d;
    }
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += (p[i] - mu) * (p[i] - mu);
  return reduce_lanes(acc) + tail;
}

template <typename Fwd, typename Deriv>
Tensor unary(const char* op, const Tensor& a, Fwd fwd, Deriv deriv) {
  std::vector<float> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x[i]);
  TensorImpl* ai = a.impl();
  return Tensor::make_result(op, a.shape(), std::move(out), {a},
                             [ai, deriv](const TensorImpl& o) {
                               auto g = ai->grad_buffer();
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                 g[i] += o.grad[i] * deriv(ai->data[i], o.data[i]);
                               }
                             });
}

}  // namespace

std::uint64_t matmul_flops() { return g_matmul_flops; }
void reset_matmul_flops() { g_matmul_flops = 0; }

Tensor matmul(const Tensor& a, const Tensor& b) {
  check(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0), "matmul",
        shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<float> out(m * n);
  MutMap(out.data(), m, n).noalias() =
      ConstMap(a.data().data(), m, k) * ConstMap(b.data().data(), k, n);
  g_matmul_flops += 2ull * m * k * n;
  TensorImpl* ai = a.impl();
  TensorImpl* bi = b.impl();
  return Tensor::make_result(
      "matmul", {m, n}, std::move(out), {a, b}, [ai, bi, m, k, n](const TensorImpl& o) {
        ConstMap g(o.grad.data(), m, n);
        if (ai->requires_grad) {
          MutMap(ai->grad_buffer().data(), m, k).noalias() +=
              g * ConstMap(bi->data.data(), k, n).transpose();
        }
        if (bi->requires_grad) {
          MutMap(bi->grad_buffer().data(), k, n).noalias() +=
              ConstMap(ai->data.data(), m, k).transpose() * g;
        }
      });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  check(a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(1),
        "bmm", shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  std::vector<float> out(batch * m * n);
  for (std::size_t s = 0; s < batch; ++s) {
    MutMap(out.data() + s * m * n, m, n).noalias() =
        ConstMap(a.data().data() + s * m * k, m, k) * ConstMap(b.data().data() + s * k * n, k, n);
  }
  g_matmul_flops += 2ull * batch * m * k * n;
  TensorImpl* ai = a.impl();
  TensorImpl* bi = b.impl();
  return Tensor::make_result(
      "bmm", {batch, m, n}, std::move(out), {a, b},
      [ai, bi, batch, m, k, n](const TensorImpl& o) {
        for (std::size_t s = 0; s < batch; ++s) {
          ConstMap g(o.grad.data() + s * m * n, m, n);
          if (ai->requires_grad) {
            MutMap(ai->grad_buffer().data() + s * m * k, m, k).noalias() +=
                g * ConstMap(bi->data.data() + s * k * n, k, n).transpose();
          }
          if (bi->requires_grad) {
            MutMap(bi->grad_buffer().data() + s * k * n, k, n).noalias() +=
                ConstMap(ai->data.data() + s * m * k, m, k).transpose() * g;
          }
        }
      });
}

Tensor transpose(const Tensor& a) {
  check(a.rank() == 2, "transpose", "expects rank 2, got " + shape_str(a.shape()));
  return permute(a, {1, 0});
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes) {
  const std::size_t rank = a.rank();
  check(axes.size() == rank, "permute", "axes/rank mismatch for " + shape_str(a.shape()));
  std::vector<bool> seen(rank, false);
  for (std::size_t ax : axes) {
    check(ax < rank && !seen[ax], "permute", "axes are not a permutation");
    seen[ax] = true;
  }
  Shape out_shape(rank);
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * a.shape()[i];
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = a.shape()[axes[i]];

  const std::size_t n = a.numel();
  auto index = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> counter(rank, 0);
  for (std::size_t o = 0; o < n; ++o) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < rank; ++i) src += counter[i] * in_strides[axes[i]];
    (*index)[o] = src;
    for (std::size_t i = rank; i-- > 0;) {
      if (++counter[i] < out_shape[i]) break;
      counter[i] = 0;
    }
  }
  std::vector<float> out(n);
  auto x = a.data();
  for (std::size_t o = 0; o < n; ++o) out[o] = x[(*index)[o]];
  TensorImpl* ai = a.impl();
  return Tensor::make_result("permute", std::move(out_shape), std::move(out), {a},
                             [ai, index](const TensorImpl& o) {
                               auto g = ai->grad_buffer();
                               for (std::size_t i = 0; i < index->size(); ++i) {
                                 g[(*index)[i]] += o.grad[i];
                               }
                             });
}

Tensor reshape(const Tensor& a, Shape shape) {
  check(shape_numel(shape) == a.numel(), "reshape",
        shape_str(a.shape()) + " -> " + shape_str(shape));
  TensorImpl* ai = a.impl();
  return Tensor::make_result("reshape", std::move(shape), a.to_vector(), {a},
                             [ai](const TensorImpl& o) {
                               auto g = ai->grad_buffer();
                               for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                             });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  check(!parts.empty() && parts[0].rank() >= 1, "concat_rows", "needs rank >= 1 inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t rows = 0;
  std::vector<float> out;
  std::vector<TensorImpl*> impls;
  for (const Tensor& p : parts) {
    check(p.rank() >= 1 && Shape(p.shape().begin() + 1, p.shape().end()) == tail,
          "concat_rows", "trailing dims differ: " + shape_str(p.shape()));
    rows += p.dim(0);
    out.insert(out.end(), p.data().begin(), p.data().end());
    impls.push_back(p.impl());
  }
  Shape shape{rows};
  shape.insert(shape.end(), tail.begin(), tail.end());
  return Tensor::make_result("concat_rows", std::move(shape), std::move(out), parts,
                             [impls](const TensorImpl& o) {
                               std::size_t offset = 0;
                               for (TensorImpl* p : impls) {
                                 if (p->requires_grad) {
                                   auto g = p->grad_buffer();
                                   for (std::size_t i = 0; i < g.size(); ++i) {
                                     g[i] += o.grad[offset + i];
                                   }
                                 }
                                 offset += p->data.size();
                               }
                             });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  check(a.rank() >= 1 && begin <= end && end <= a.dim(0), "slice_rows",
        "[" + std::to_string(begin) + ", " + std::to_string(end) + ") of " + shape_str(a.shape()));
  const std::size_t width = a.dim(0) == 0 ? 0 : a.numel() / a.dim(0);
  Shape shape = a.shape();
  shape[0] = end - begin;
  std::vector<float> out(a.data().begin() + begin * width, a.data().begin() + end * width);
  TensorImpl* ai = a.impl();
  return Tensor::make_result("slice_rows", std::move(shape), std::move(out), {a},
                             [ai, begin, width](const TensorImpl& o) {
                               auto g = ai->grad_buffer();
                               for (std::size_t i = 0; i < o.grad.size(); ++i) {
                                 g[begin * width + i] += o.grad[i];
                               }
                             });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  check(a.rank() >= 1, "gather_rows", "rank 0 input");
  const std::size_t width = a.dim(0) == 0 ? 0 : a.numel() / a.dim(0);
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<float> out;
  out.reserve(idx.size() * width);
  for (std::size_t r : idx) {
    check(r < a.dim(0), "gather_rows", "row " + std::to_string(r) + " out of range");
    auto src = a.data().subspan(r * width, width);
    out.insert(out.end(), src.begin(), src.end());
  }
  Shape shape = a.shape();
  shape[0] = idx.size();
  TensorImpl* ai = a.impl();
  return Tensor::make_result("gather_rows", std::move(shape), std::move(out), {a},
                             [ai, idx = std::move(idx), width](const TensorImpl& o) {
                               auto g = ai->grad_buffer();
                               for (std::size_t j = 0; j < idx.size(); ++j) {
                                 for (std::size_t c = 0; c < width; ++c) {
                                   g[idx[j] * width + c] += o.grad[j * width + c];
                                 }
                               }
                             });
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  TensorImpl* ai = a.impl();
  TensorImpl* bi = b.impl();
  return Tensor::make_result("add", a.shape(), std::move(out), {a, b},
                             [ai, bi](const TensorImpl& o) {
                               for (TensorImpl* t : {ai, bi}) {
                                 if (!t->requires_grad) continue;
                                 auto g = t->grad_buffer();
                                 for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                               }
                             });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  TensorImpl* ai = a.impl();
  TensorImpl* bi = b.impl();
  return Tensor::make_result("sub", a.shape(), std::move(out), {a, b},
                             [ai, bi](const TensorImpl& o) {
                               if (ai->requires_grad) {
                                 auto g = ai->grad_buffer();
                                 for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                               }
                               if (bi->requires_grad) {
                                 auto g = bi->grad_buffer();
                                 for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
                               }
                             });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  TensorImpl* ai = a.impl();
  TensorImpl* bi = b.impl();
  return Tensor::make_result("mul", a.shape(), std::move(out), {a, b},
                             [ai, bi](const TensorImpl& o) {
                               if (ai->requires_grad) {
                                 auto g = ai->grad_buffer();
                                 for (std::size_t i = 0; i < g.size(); ++i) {
                                   g[i] += o.grad[i] * bi->data[i];
                                 }
                               }
                               if (bi->requires_grad) {
                                 auto g = bi->grad_buffer();
                                 for (std::size_t i = 0; i < g.size(); ++i) {
                                   g[i] += o.grad[i] * ai->data[i];
                                 }
                               }
                             });
}

Tensor div(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "div");
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] / b.data()[i];
  TensorImpl* ai = a.impl();
  TensorImpl* bi = b.impl();
  return Tensor::make_result("div", a.shape(), std::move(out), {a, b},
                             [ai, bi](const TensorImpl& o) {
                               if (ai->requires_grad) {
                                 auto g = ai->grad_buffer();
                                 for (std::size_t i = 0; i < g.size(); ++i) {
                                   g[i] += o.grad[i] / bi->data[i];
                                 }
                               }
                               if (bi->requires_grad) {
                                 auto g = bi->grad_buffer();
                                 for (std::size_t i = 0; i < g.size(); ++i) {
                                   g[i] -= o.grad[i] * o.data[i] / bi->data[i];
                                 }
                               }
                             });
}

Tensor add_scalar(const Tensor& a, float c) {
  return unary("add_scalar", a, [c](float x) { return x + c; },
               [](float, float) { return 1.0f; });
}

Tensor mul_scalar(const Tensor& a, float c) {
  return unary("mul_scalar", a, [c](float x) { return x * c; },
               [c](float, float) { return c; });
}

Tensor rsub_scalar(float c, const Tensor& a) {
  return unary("rsub_scalar", a, [c](float x) { return c - x; },
               [](float, float) { return -1.0f; });
}

Tensor add_row_vector(const Tensor& x, const Tensor& b) {
  auto [rows, cols] = rows_cols(x);
  check(x.rank() == 2 && b.numel() == cols && (b.rank() == 1 || (b.rank() == 2 && b.dim(0) == 1)),
        "add_row_vector", shape_str(x.shape()) + " + " + shape_str(b.shape()));
  std::vector<float> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x.data()[r * cols + c] + b.data()[c];
  }
  TensorImpl* xi = x.impl();
  TensorImpl* bi = b.impl();
  return Tensor::make_result("add_row_vector", x.shape(), std::move(out), {x, b},
                             [xi, bi, rows, cols](const TensorImpl& o) {
                               if (xi->requires_grad) {
                                 auto g = xi->grad_buffer();
                                 for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                               }
                               if (bi->requires_grad) {
                                 std::vector<double> acc(cols, 0.0);
                                 for (std::size_t r = 0; r < rows; ++r) {
                                   const float* gr = o.grad.data() + r * cols;
                                   for (std::size_t c = 0; c < cols; ++c) acc[c] += gr[c];
                                 }
                                 auto g = bi->grad_buffer();
                                 for (std::size_t c = 0; c < cols; ++c) g[c] += static_cast<float>(acc[c]);
                               }
                             });
}

Tensor mul_row_vector(const Tensor& x, const Tensor& v) {
  auto [rows, cols] = rows_cols(x);
  check(x.rank() == 2 && v.numel() == cols && (v.rank() == 1 || (v.rank() == 2 && v.dim(0) == 1)),
        "mul_row_vector", shape_str(x.shape()) + " * " + shape_str(v.shape()));
  std::vector<float> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x.data()[r * cols + c] * v.data()[c];
  }
  TensorImpl* xi = x.impl();
  TensorImpl* vi = v.impl();
  return Tensor::make_result("mul_row_vector", x.shape(), std::move(out), {x, v},
                             [xi, vi, rows, cols](const TensorImpl& o) {
                               if (xi->requires_grad) {
                                 auto g = xi->grad_buffer();
                                 for (std::size_t r = 0; r < rows; ++r) {
                                   for (std::size_t c = 0; c < cols; ++c) {
                                     g[r * cols + c] += o.grad[r * cols + c] * vi->data[c];
                                   }
                                 }
                               }
                               if (vi->requires_grad) {
                                 std::vector<double> acc(cols, 0.0);
                                 for (std::size_t r = 0; r < rows; ++r) {
                                   const float* gr = o.grad.data() + r * cols;
                                   const float* xr = xi->data.data() + r * cols;
                                   for (std::size_t c = 0; c < cols; ++c) {
                                     acc[c] += static_cast<double>(gr[c]) * xr[c];
                                   }
                                 }
                                 auto g = vi->grad_buffer();
                                 for (std::size_t c = 0; c < cols; ++c) g[c] += static_cast<float>(acc[c]);
                               }
                             });
}

Tensor scale_rows(const Tensor& x, const Tensor& s) {
  auto [rows, cols] = rows_cols(x);
  check(x.rank() == 2 && s.numel() == rows && (s.rank() == 1 || (s.rank() == 2 && s.dim(1) == 1)),
        "scale_rows", shape_str(x.shape()) + " * " + shape_str(s.shape()));
  std::vector<float> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x.data()[r * cols + c] * s.data()[r];
  }
  TensorImpl* xi = x.impl();
  TensorImpl* si = s.impl();
  return Tensor::make_result("scale_rows", x.shape(), std::move(out), {x, s},
                             [xi, si, rows, cols](const TensorImpl& o) {
                               if (xi->requires_grad) {
                                 auto g = xi->grad_buffer();
                                 for (std::size_t r = 0; r < rows; ++r) {
                                   for (std::size_t c = 0; c < cols; ++c) {
                                     g[r * cols + c] += o.grad[r * cols + c] * si->data[r];
                                   }
                                 }
                               }
                               if (si->requires_grad) {
                                 auto g = si->grad_buffer();
                                 for (std::size_t r = 0; r < rows; ++r) {
                                   g[r] += static_cast<float>(dot_f64(
                                       o.grad.data() + r * cols, xi->data.data() + r * cols, cols));
                                 }
                               }
                             });
}

Tensor square(const Tensor& a) {
  return unary("square", a, [](float x) { return x * x; },
               [](float x, float) { return 2.0f * x; });
}

namespace {

using ConstArrMap = Eigen::Map<const Eigen::ArrayXf>;

// Vectorized exp that is independent of the caller's buffer address: values
// go through an aligned scratch padded to a whole number of packets, so every
// element takes the same code path.
void exp_inplace(float* p, std::size_t n) {
  constexpr std::size_t kPad = 16;
  thread_local Eigen::ArrayXf scratch;
  const std::size_t padded = (n + kPad - 1) / kPad * kPad;
  if (static_cast<std::size_t>(scratch.size()) < padded) {
    scratch.resize(static_cast<Eigen::Index>(padded));
  }
  auto head = scratch.head(static_cast<Eigen::Index>(padded));
  std::copy(p, p + n, head.data());
  std::fill(head.data() + n, head.data() + padded, 0.0f);
  head = head.exp();
  std::copy(head.data(), head.data() + n, p);
}

std::vector<float> logistic(std::span<const float> x) {
  std::vector<float> s(x.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = -x[i];
  exp_inplace(s.data(), s.size());
  for (float& v : s) v = 1.0f / (1.0f + v);
  return s;
}

}  // namespace

Tensor sigmoid(const Tensor& a) {
  std::vector<float> out = logistic(a.data());
  TensorImpl* ai = a.impl();
  return Tensor::make_result("sigmoid", a.shape(), std::move(out), {a},
                             [ai](const TensorImpl& o) {
                               auto g = ai->grad_buffer();
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                 const float y = o.data[i];
                                 g[i] += o.grad[i] * y * (1.0f - y);
                               }
                             });
}

Tensor silu(const Tensor& a) {
  auto sig = std::make_shared<std::vector<float>>(logistic(a.data()));
  std::vector<float> out(a.numel());
  const float* x = a.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * (*sig)[i];
  TensorImpl* ai = a.impl();
  return Tensor::make_result("silu", a.shape(), std::move(out), {a},
                             [ai, sig](const TensorImpl& o) {
                               auto g = ai->grad_buffer();
                               const float* xs = ai->data.data();
                               const float* ss = sig->data();
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                 g[i] += o.grad[i] * ss[i] * (1.0f + xs[i] * (1.0f - ss[i]));
                               }
                             });
}

Tensor gelu(const Tensor& a) {
  constexpr float kC = 0.7978845608028654f;  // sqrt(2/pi)
  constexpr float kA = 0.044715f;
  return unary(
      "gelu", a,
      [](float x) { return 0.5f * x * (1.0f + std::tanh(kC * (x + kA * x * x * x))); },
      [](float x, float) {
        const float t = std::tanh(kC * (x + kA * x * x * x));
        return 0.5f * (1.0f + t) + 0.5f * x * (1.0f - t * t) * kC * (1.0f + 3.0f * kA * x * x);
      });
}

Tensor softmax(const Tensor& a) {
  auto [rows, cols] = rows_cols(a);
  std::vector<float> out(a.numel());
  auto x = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = x.data() + r * cols;
    float* dst = out.data() + r * cols;
    const float mx = ConstArrMap(row, static_cast<Eigen::Index>(cols)).maxCoeff();
    for (std::size_t c = 0; c < cols; ++c) dst[c] = row[c] - mx;
  }
  exp_inplace(out.data(), out.size());
  for (std::size_t r = 0; r < rows; ++r) {
    float* dst = out.data() + r * cols;
    const double total = sum_f64(dst, cols);
    const float inv = static_cast<float>(1.0 / total);
    for (std::size_t c = 0; c < cols; ++c) dst[c] *= inv;
  }
  TensorImpl* ai = a.impl();
  return Tensor::make_result("softmax", a.shape(), std::move(out), {a},
                             [ai, rows, cols](const TensorImpl& o) {
                               auto g = ai->grad_buffer();
                               for (std::size_t r = 0; r < rows; ++r) {
                                 const float* y = o.data.data() + r * cols;
                                 const float* gy = o.grad.data() + r * cols;
                                 const float d = static_cast<float>(dot_f64(gy, y, cols));
                                 for (std::size_t c = 0; c < cols; ++c) {
                                   g[r * cols + c] += y[c] * (gy[c] - d);
                                 }
                               }
                             });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  auto [rows, cols] = rows_cols(x);
  check(gamma.numel() == cols && beta.numel() == cols, "layer_norm",
        "gamma/beta must have " + std::to_string(cols) + " elements");
  auto xhat = std::make_shared<std::vector<float>>(x.numel());
  auto rstd = std::make_shared<std::vector<float>>(rows);
  std::vector<float> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = x.data().data() + r * cols;
    const double mu = sum_f64(row, cols) / static_cast<double>(cols);
    const double var = centered_sq_f64(row, cols, mu) / static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = static_cast<float>(inv);
    for (std::size_t c = 0; c < cols; ++c) {
      const float h = static_cast<float>((row[c] - mu) * inv);
      (*xhat)[r * cols + c] = h;
      out[r * cols + c] = h * gamma.data()[c] + beta.data()[c];
    }
  }
  TensorImpl* xi = x.impl();
  TensorImpl* gi = gamma.impl();
  TensorImpl* bi = beta.impl();
  return Tensor::make_result(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [xi, gi, bi, xhat, rstd, rows, cols](const TensorImpl& o) {
        if (gi->requires_grad || bi->requires_grad) {
          std::vector<double> dg(cols, 0.0), db(cols, 0.0);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
              dg[c] += static_cast<double>(o.grad[r * cols + c]) * (*xhat)[r * cols + c];
              db[c] += o.grad[r * cols + c];
            }
          }
          if (gi->requires_grad) {
            auto g = gi->grad_buffer();
            for (std::size_t c = 0; c < cols; ++c) g[c] += static_cast<float>(dg[c]);
          }
          if (bi->requires_grad) {
            auto g = bi->grad_buffer();
            for (std::size_t c = 0; c < cols; ++c) g[c] += static_cast<float>(db[c]);
          }
        }
        if (!xi->requires_grad) return;
        auto g = xi->grad_buffer();
        std::vector<float> dy(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) dy[c] = o.grad[r * cols + c] * gi->data[c];
          const double mean_dy = sum_f64(dy.data(), cols) / static_cast<double>(cols);
          const double mean_dy_xhat =
              dot_f64(dy.data(), xhat->data() + r * cols, cols) / static_cast<double>(cols);
          for (std::size_t c = 0; c < cols; ++c) {
            g[r * cols + c] += static_cast<float>(
                (*rstd)[r] * (dy[c] - mean_dy - (*xhat)[r * cols + c] * mean_dy_xhat));
          }
        }
      });
}

Tensor sum(const Tensor& a) {
  const double acc = sum_f64(a.data().data(), a.numel());
  TensorImpl* ai = a.impl();
  return Tensor::make_result("sum", {1}, {static_cast<float>(acc)}, {a},
                             [ai](const TensorImpl& o) {
                               auto g = ai->grad_buffer();
                               for (float& v : g) v += o.grad[0];
                             });
}

Tensor mean(const Tensor& a) {
  const double acc = sum_f64(a.data().data(), a.numel());
  const double n = static_cast<double>(a.numel());
  TensorImpl* ai = a.impl();
  return Tensor::make_result("mean", {1}, {static_cast<float>(acc / n)}, {a},
                             [ai, n](const TensorImpl& o) {
                               auto g = ai->grad_buffer();
                               const float d = static_cast<float>(o.grad[0] / n);
                               for (float& v : g) v += d;
                             });
}

Tensor avg_pool2d(const Tensor& x, std::size_t window) {
  check(x.rank() == 3 && window > 0 && x.dim(0) % window == 0 && x.dim(1) % window == 0,
        "avg_pool2d", shape_str(x.shape()) + " window " + std::to_string(window));
  const std::size_t h = x.dim(0), w = x.dim(1), ch = x.dim(2);
  const std::size_t oh = h / window, ow = w / window;
  const double scale = 1.0 / static_cast<double>(window * window);
  std::vector<float> out(oh * ow * ch);
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      for (std::size_t c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (std::size_t a = 0; a < window; ++a) {
          for (std::size_t b = 0; b < window; ++b) {
            acc += x.data()[((i * window + a) * w + j * window + b) * ch + c];
          }
        }
        out[(i * ow + j) * ch + c] = static_cast<float>(acc * scale);
      }
    }
  }
  TensorImpl* xi = x.impl();
  return Tensor::make_result(
      "avg_pool2d", {oh, ow, ch}, std::move(out), {x},
      [xi, window, w, ch, oh, ow, scale](const TensorImpl& o) {
        auto g = xi->grad_buffer();
        for (std::size_t i = 0; i < oh; ++i) {
          for (std::size_t j = 0; j < ow; ++j) {
            for (std::size_t c = 0; c < ch; ++c) {
              const float d = static_cast<float>(o.grad[(i * ow + j) * ch + c] * scale);
              for (std::size_t a = 0; a < window; ++a) {
                for (std::size_t b = 0; b < window; ++b) {
                  g[((i * window + a) * w + j * window + b) * ch + c] += d;
                }
              }
            }
          }
        }
      });
}

Tensor filter2d_valid(const Tensor& x, std::span<const float> kernel) {
  const std::size_t k = kernel.size();
  check(x.rank() == 3 && k > 0 && x.dim(0) >= k && x.dim(1) >= k, "filter2d_valid",
        shape_str(x.shape()) + " kernel " + std::to_string(k));
  const std::size_t h = x.dim(0), w = x.dim(1), ch = x.dim(2);
  const std::size_t oh = h - k + 1, ow = w - k + 1;
  std::vector<double> kern(kernel.begin(), kernel.end());
  // Rows are flattened to (col, channel); a tap shift of b columns is b * ch.
  const std::size_t in_row = w * ch, out_row = ow * ch;
  // Horizontal pass [h, ow, ch], then vertical pass [oh, ow, ch].
  std::vector<double> tmp(h * out_row, 0.0);
  const float* xd = x.data().data();
  for (std::size_t r = 0; r < h; ++r) {
    double* dst = tmp.data() + r * out_row;
    for (std::size_t b = 0; b < k; ++b) {
      const float* src = xd + r * in_row + b * ch;
      const double kb = kern[b];
      for (std::size_t t = 0; t < out_row; ++t) dst[t] += kb * src[t];
    }
  }
  std::vector<float> out(oh * out_row);
  std::vector<double> acc(out_row);
  for (std::size_t i = 0; i < oh; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t a = 0; a < k; ++a) {
      const double* src = tmp.data() + (i + a) * out_row;
      const double ka = kern[a];
      for (std::size_t t = 0; t < out_row; ++t) acc[t] += ka * src[t];
    }
    float* dst = out.data() + i * out_row;
    for (std::size_t t = 0; t < out_row; ++t) dst[t] = static_cast<float>(acc[t]);
  }
  TensorImpl* xi = x.impl();
  return Tensor::make_result(
      "filter2d_valid", {oh, ow, ch}, std::move(out), {x},
      [xi, kern = std::move(kern), h, ch, oh, in_row, out_row](const TensorImpl& o) {
        const std::size_t k = kern.size();
        std::vector<double> gtmp(h * out_row, 0.0);
        for (std::size_t i = 0; i < oh; ++i) {
          const float* src = o.grad.data() + i * out_row;
          for (std::size_t a = 0; a < k; ++a) {
            double* dst = gtmp.data() + (i + a) * out_row;
            const double ka = kern[a];
            for (std::size_t t = 0; t < out_row; ++t) dst[t] += ka * src[t];
          }
        }
        std::vector<double> row(in_row);
        auto g = xi->grad_buffer();
        for (std::size_t r = 0; r < h; ++r) {
          std::fill(row.begin(), row.end(), 0.0);
          const double* src = gtmp.data() + r * out_row;
          for (std::size_t b = 0; b < k; ++b) {
            double* dst = row.data() + b * ch;
            const double kb = kern[b];
            for (std::size_t t = 0; t < out_row; ++t) dst[t] += kb * src[t];
          }
          float* gr = g.data() + r * in_row;
          for (std::size_t t = 0; t < in_row; ++t) gr[t] += static_cast<float>(row[t]);
        }
      });
}

Tensor stop_grad(const Tensor& a) {
  return Tensor::make_result("stop_grad", a.shape(), a.to_vector(), {}, nullptr);
}

Tensor straight_through(const Tensor& soft, const Tensor& hard) {
  check_same_shape(soft, hard, "straight_through");
  TensorImpl* si = soft.impl();
  return Tensor::make_result("straight_through", soft.shape(), hard.to_vector(), {soft},
                             [si](const TensorImpl& o) {
                               auto g = si->grad_buffer();
                               for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                             });
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  check_same_shape(logits, targets, "bce_with_logits");
  const std::size_t n = logits.numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = logits.data()[i];
    const double t = targets.data()[i];
    acc += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
  }
  TensorImpl* li = logits.impl();
  TensorImpl* ti = targets.impl();
  return Tensor::make_result(
      "bce_with_logits", {1}, {static_cast<float>(acc / static_cast<double>(n))},
      {logits, targets}, [li, ti, n](const TensorImpl& o) {
        if (!li->requires_grad) return;
        auto g = li->grad_buffer();
        const double scale = o.grad[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
          const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(li->data[i])));
          g[i] += static_cast<float>((s - ti->data[i]) * scale);
        }
      });
}

}  // namespace fastdrive

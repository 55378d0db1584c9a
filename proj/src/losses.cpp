// SPDX-License-Identifier: Apache-2.0
#include "fastdrive/losses.hpp"

#include <cmath>
#include <string>

#include "fastdrive/error.hpp"
#include "fastdrive/ops.hpp"

namespace fastdrive {

void LossConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0) || !(alpha >= 0.0 && alpha <= 1.0)) {
    fail(ErrorCode::kInvalidArgument, "lambda and alpha must lie in [0, 1]");
  }
  if (ssim_window < 3 || ssim_window % 2 == 0) {
    fail(ErrorCode::kInvalidArgument, "ssim_window must be odd and >= 3");
  }
  if (!(ssim_sigma > 0.0)) fail(ErrorCode::kInvalidArgument, "ssim_sigma must be positive");
}

std::vector<float> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> w(size);
  const double centre = (static_cast<double>(size) - 1.0) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - centre;
    w[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    total += w[i];
  }
  std::vector<float> out(size);
  for (std::size_t i = 0; i < size; ++i) out[i] = static_cast<float>(w[i] / total);
  return out;
}

Tensor mse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    fail(ErrorCode::kShapeMismatch, "mse: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  return mean(square(sub(a, b)));
}

Tensor ssim(const Tensor& a, const Tensor& b, const LossConfig& cfg) {
  cfg.validate();
  if (a.shape() != b.shape() || a.rank() != 3) {
    fail(ErrorCode::kShapeMismatch, "ssim: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  if (a.dim(0) < cfg.ssim_window || a.dim(1) < cfg.ssim_window) {
    fail(ErrorCode::kImageTooSmall, shape_str(a.shape()) + " is smaller than the " +
                                        std::to_string(cfg.ssim_window) + "-pixel window");
  }
  const std::vector<float> win = gaussian_window(cfg.ssim_window, cfg.ssim_sigma);
  const float c1 = static_cast<float>((cfg.k1 * cfg.dynamic_range) * (cfg.k1 * cfg.dynamic_range));
  const float c2 = static_cast<float>((cfg.k2 * cfg.dynamic_range) * (cfg.k2 * cfg.dynamic_range));

  Tensor mu_a = filter2d_valid(a, win);
  Tensor mu_b = filter2d_valid(b, win);
  Tensor mu_aa = mul(mu_a, mu_a);
  Tensor mu_bb = mul(mu_b, mu_b);
  Tensor mu_ab = mul(mu_a, mu_b);
  Tensor var_a = sub(filter2d_valid(mul(a, a), win), mu_aa);
  Tensor var_b = sub(filter2d_valid(mul(b, b), win), mu_bb);
  Tensor cov = sub(filter2d_valid(mul(a, b), win), mu_ab);

  Tensor num = mul(add_scalar(mul_scalar(mu_ab, 2.0f), c1), add_scalar(mul_scalar(cov, 2.0f), c2));
  Tensor den = mul(add_scalar(add(mu_aa, mu_bb), c1), add_scalar(add(var_a, var_b), c2));
  // Every channel has the same number of valid positions, so the global mean
  // equals the mean of per-channel means.
  return mean(div(num, den));
}

Tensor stream_loss(const Tensor& target, const Tensor& pred, const LossConfig& cfg) {
  const float lam = static_cast<float>(cfg.lambda);
  Tensor structural = rsub_scalar(1.0f, ssim(target, pred, cfg));
  return add(mul_scalar(structural, lam), mul_scalar(mse(target, pred), 1.0f - lam));
}

Tensor total_loss(const Tensor& fore, const Tensor& back, const LossConfig& cfg) {
  const float a = static_cast<float>(cfg.alpha);
  return add(mul_scalar(fore, a), mul_scalar(back, 1.0f - a));
}

std::pair<Tensor, Tensor> masked_targets(const Image& image, const Mask& mask) {
  if (image.height != mask.height || image.width != mask.width ||
      mask.values.size() != mask.height * mask.width) {
    fail(ErrorCode::kShapeMismatch, "image and mask sizes differ");
  }
  std::vector<float> fore(image.pixels.size()), back(image.pixels.size());
  for (std::size_t p = 0; p < mask.values.size(); ++p) {
    const bool on = mask.values[p] != 0;
    for (std::size_t c = 0; c < 3; ++c) {
      const float v = image.pixels[p * 3 + c];
      fore[p * 3 + c] = on ? v : 0.0f;
      back[p * 3 + c] = on ? 0.0f : v;
    }
  }
  Shape shape{image.height, image.width, 3};
  return {Tensor(shape, std::move(fore)), Tensor(shape, std::move(back))};
}

}  // namespace fastdrive

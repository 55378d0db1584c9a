// SPDX-License-Identifier: Apache-2.0
//
// Reconstruction losses over [H, W, 3] image tensors.
#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "fastdrive/image.hpp"
#include "fastdrive/tensor.hpp"

namespace fastdrive {

struct LossConfig {
  double lambda = 0.2;  // SSIM weight within a stream
  double alpha = 0.5;   // foreground-stream weight in the total
  std::size_t ssim_window = 11;
  double ssim_sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;

  void validate() const;
};

// Normalized 1-D Gaussian taps (the 2-D window is their outer product).
std::vector<float> gaussian_window(std::size_t size, double sigma);

Tensor mse(const Tensor& a, const Tensor& b);

// Mean local SSIM with a Gaussian window over 'valid' positions, computed per
// channel and averaged. Throws ImageTooSmall if a side is below the window.
Tensor ssim(const Tensor& a, const Tensor& b, const LossConfig& cfg = {});

// lambda * (1 - SSIM) + (1 - lambda) * MSE
Tensor stream_loss(const Tensor& target, const Tensor& pred, const LossConfig& cfg = {});

// alpha * fore + (1 - alpha) * back
Tensor total_loss(const Tensor& fore, const Tensor& back, const LossConfig& cfg = {});

// (image (.) mask, image (.) (1 - mask)) as constant [H, W, 3] tensors.
std::pair<Tensor, Tensor> masked_targets(const Image& image, const Mask& mask);

}  // namespace fastdrive

// SPDX-License-Identifier: Apache-2.0
//
// Foreground-retention, saliency-separability and reconstruction metrics.
#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fastdrive/datagen.hpp"
#include "fastdrive/training.hpp"

namespace fastdrive {

struct RetentionMetrics {
  double recall = 0;
  double precision = 0;
  double f1 = 0;
};

// recall is 1 when there is no foreground, precision is 1 when nothing is kept.
RetentionMetrics retention_metrics(std::span<const std::size_t> kept,
                                   const std::vector<bool>& foreground);

// P(score of a random foreground token > score of a random background token),
// ties counted as 1/2. Exact pairwise count. Throws SingleClass.
double saliency_auroc(std::span<const float> scores, const std::vector<bool>& foreground);

// 10 log10(1 / mse) with peak 1; +inf for identical images.
double psnr(const Tensor& a, const Tensor& b);

struct EvalConfig {
  std::vector<double> ratios{0.25, 0.5, 0.75};
  std::vector<double> thetas{0.05, 0.25, 0.5};
  double headline_theta = 0.25;
  bool reconstruction = true;
  void validate() const;
};

struct RatioMetrics {
  double ratio = 0;
  std::size_t kept = 0;
  RetentionMetrics mean;
};

struct ThetaMetrics {
  double theta = 0;
  double auroc = 0;              // mean over samples with both classes
  std::size_t auroc_samples = 0;
  std::vector<RatioMetrics> per_ratio;
};

struct ReconMetrics {
  double psnr_fore = 0;
  double psnr_back = 0;
  double ssim_fore = 0;
  double ssim_back = 0;
};

struct SampleRow {
  std::size_t index = 0;
  double auroc = 0;  // NaN when one class is missing
  double frac_pos = 0;
  double mean_fore_score = 0;
  double mean_back_score = 0;
  std::vector<double> recall;  // per ratio, headline theta
};

struct EvalReport {
  std::size_t samples = 0;
  double theta = 0;
  double auroc = 0;
  double mean_fore_score = 0;
  double mean_back_score = 0;
  double frac_pos = 0;
  std::vector<RatioMetrics> per_ratio;
  std::vector<ThetaMetrics> sweep;
  bool has_reconstruction = false;
  ReconMetrics reconstruction;
  std::vector<SampleRow> rows;
};

// Deterministic in (model, dataset, cfg). Reconstruction metrics are skipped
// for mask-prediction models.
EvalReport evaluate(const TrainState& model, const std::vector<ImageMaskPair>& dataset,
                    const EvalConfig& cfg = {});

// Report body as a JSON object (non-finite values become null).
std::string report_to_json(const EvalReport& report);
void write_report_csv(const EvalReport& report, std::ostream& out);

}  // namespace fastdrive

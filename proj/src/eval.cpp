// SPDX-License-Identifier: Apache-2.0
#include "fastdrive/eval.hpp"

#include <cmath>
#include <iomanip>
#include <limits>

#include <json.hpp>

#include "fastdrive/error.hpp"
#include "fastdrive/masking.hpp"
#include "fastdrive/ops.hpp"
#include "fastdrive/prune_infer.hpp"

namespace fastdrive {

using nlohmann::json;

RetentionMetrics retention_metrics(std::span<const std::size_t> kept,
                                   const std::vector<bool>& foreground) {
  std::size_t hit = 0;
  for (std::size_t idx : kept) {
    if (idx >= foreground.size()) {
      fail(ErrorCode::kInvalidArgument, "kept index " + std::to_string(idx) + " out of range");
    }
    if (foreground[idx]) ++hit;
  }
  std::size_t fg = 0;
  for (bool f : foreground) fg += f ? 1 : 0;
  RetentionMetrics m;
  m.recall = fg == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(fg);
  m.precision = kept.empty() ? 1.0 : static_cast<double>(hit) / static_cast<double>(kept.size());
  m.f1 = m.recall + m.precision == 0 ? 0.0
                                     : 2.0 * m.recall * m.precision / (m.recall + m.precision);
  return m;
}

double saliency_auroc(std::span<const float> scores, const std::vector<bool>& foreground) {
  if (scores.size() != foreground.size()) {
    fail(ErrorCode::kDimMismatch, "scores and labels differ in length");
  }
  std::vector<float> fg, bg;
  for (std::size_t i = 0; i < scores.size(); ++i) (foreground[i] ? fg : bg).push_back(scores[i]);
  if (fg.empty() || bg.empty()) {
    fail(ErrorCode::kSingleClass, "AUROC needs both foreground and background tokens");
  }
  std::uint64_t twice_wins = 0;
  for (float f : fg) {
    for (float b : bg) twice_wins += f > b ? 2 : (f == b ? 1 : 0);
  }
  return static_cast<double>(twice_wins) /
         (2.0 * static_cast<double>(fg.size()) * static_cast<double>(bg.size()));
}

double psnr(const Tensor& a, const Tensor& b) {
  const double m = mse(a, b).item();
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / m);
}

void EvalConfig::validate() const {
  for (double p : ratios) retained_count(1, p);
  if (thetas.empty()) fail(ErrorCode::kInvalidArgument, "theta sweep is empty");
  bool found = false;
  for (double t : thetas) {
    if (!(t > 0 && t <= 1)) fail(ErrorCode::kInvalidArgument, "theta must be in (0, 1]");
    found = found || t == headline_theta;
  }
  if (!found) fail(ErrorCode::kInvalidArgument, "headline theta is not part of the sweep");
}

EvalReport evaluate(const TrainState& model, const std::vector<ImageMaskPair>& dataset,
                    const EvalConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) fail(ErrorCode::kInvalidArgument, "evaluation dataset is empty");
  NoGradGuard no_grad;
  const EncoderConfig& enc = model.config.encoder;

  EvalReport report;
  report.samples = dataset.size();
  report.theta = cfg.headline_theta;
  report.has_reconstruction =
      cfg.reconstruction && model.config.mode != TrainMode::kMaskPrediction;

  std::vector<ThetaMetrics> sweep(cfg.thetas.size());
  for (std::size_t t = 0; t < cfg.thetas.size(); ++t) {
    sweep[t].theta = cfg.thetas[t];
    for (double p : cfg.ratios) sweep[t].per_ratio.push_back({p, 0, {}});
  }
  std::size_t headline = 0;
  for (std::size_t t = 0; t < cfg.thetas.size(); ++t) {
    if (cfg.thetas[t] == cfg.headline_theta) headline = t;
  }

  double fore_sum = 0, back_sum = 0;
  std::size_t fore_n = 0, back_n = 0;
  ReconMetrics recon;
  for (std::size_t s = 0; s < dataset.size(); ++s) {
    const ImageMaskPair& pair = dataset[s];
    TokenSequence seq = model.encoder.encode(pair.image);
    Tensor scores = saliency(seq, model.pruner);
    const auto sv = scores.data();
    SaliencyMask mask = binarize(scores);

    SampleRow row;
    row.index = s;
    row.frac_pos = mask.fraction_positive();
    report.frac_pos += row.frac_pos;

    std::vector<std::vector<std::size_t>> kept;
    for (double p : cfg.ratios) kept.push_back(prune(seq, scores, p).kept_indices);

    for (std::size_t t = 0; t < cfg.thetas.size(); ++t) {
      const auto fg = token_foreground_truth(pair.mask, enc, cfg.thetas[t]);
      bool both = false, any_fg = false, any_bg = false;
      for (bool f : fg) (f ? any_fg : any_bg) = true;
      both = any_fg && any_bg;
      const double a = both ? saliency_auroc(sv, fg) : std::numeric_limits<double>::quiet_NaN();
      if (both) {
        sweep[t].auroc += a;
        sweep[t].auroc_samples += 1;
      }
      for (std::size_t r = 0; r < cfg.ratios.size(); ++r) {
        const RetentionMetrics m = retention_metrics(kept[r], fg);
        sweep[t].per_ratio[r].kept = kept[r].size();
        sweep[t].per_ratio[r].mean.recall += m.recall;
        sweep[t].per_ratio[r].mean.precision += m.precision;
        sweep[t].per_ratio[r].mean.f1 += m.f1;
        if (t == headline) row.recall.push_back(m.recall);
      }
      if (t == headline) {
        row.auroc = a;
        double fs = 0, bs = 0;
        std::size_t fc = 0, bc = 0;
        for (std::size_t i = 0; i < fg.size(); ++i) {
          if (fg[i]) {
            fs += sv[i];
            ++fc;
          } else {
            bs += sv[i];
            ++bc;
          }
        }
        fore_sum += fs;
        back_sum += bs;
        fore_n += fc;
        back_n += bc;
        row.mean_fore_score = fc ? fs / static_cast<double>(fc) : 0.0;
        row.mean_back_score = bc ? bs / static_cast<double>(bc) : 0.0;
      }
    }

    if (report.has_reconstruction) {
      TokenSplit parts = split(seq.tokens, mask);
      auto [pred_fore, pred_back] =
          reconstruct_pair(parts.fore, parts.back, seq.pos_embed, model.decoder);
      auto [gt_fore, gt_back] = masked_targets(pair.image, pair.mask);
      const LossConfig& lc = model.config.loss;
      recon.psnr_fore += psnr(pred_fore, gt_fore);
      recon.psnr_back += psnr(pred_back, gt_back);
      recon.ssim_fore += ssim(pred_fore, gt_fore, lc).item();
      recon.ssim_back += ssim(pred_back, gt_back, lc).item();
    }
    report.rows.push_back(std::move(row));
  }

  const double n = static_cast<double>(dataset.size());
  for (auto& t : sweep) {
    t.auroc = t.auroc_samples ? t.auroc / static_cast<double>(t.auroc_samples)
                              : std::numeric_limits<double>::quiet_NaN();
    for (auto& r : t.per_ratio) {
      r.mean.recall /= n;
      r.mean.precision /= n;
      r.mean.f1 /= n;
    }
  }
  report.sweep = sweep;
  report.auroc = sweep[headline].auroc;
  report.per_ratio = sweep[headline].per_ratio;
  report.frac_pos /= n;
  report.mean_fore_score = fore_n ? fore_sum / static_cast<double>(fore_n) : 0.0;
  report.mean_back_score = back_n ? back_sum / static_cast<double>(back_n) : 0.0;
  if (report.has_reconstruction) {
    recon.psnr_fore /= n;
    recon.psnr_back /= n;
    recon.ssim_fore /= n;
    recon.ssim_back /= n;
    report.reconstruction = recon;
  }
  return report;
}

namespace {

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json ratios_json(const std::vector<RatioMetrics>& per_ratio) {
  json arr = json::array();
  for (const auto& r : per_ratio) {
    arr.push_back({{"p", r.ratio},
                   {"kept", r.kept},
                   {"recall", num(r.mean.recall)},
                   {"precision", num(r.mean.precision)},
                   {"f1", num(r.mean.f1)}});
  }
  return arr;
}

}  // namespace

std::string report_to_json(const EvalReport& r) {
  json j;
  j["samples"] = r.samples;
  j["theta_fg"] = r.theta;
  j["saliency"] = {{"auroc", num(r.auroc)},
                   {"mean_fore_score", num(r.mean_fore_score)},
                   {"mean_back_score", num(r.mean_back_score)},
                   {"fraction_positive", num(r.frac_pos)}};
  j["ratios"] = ratios_json(r.per_ratio);
  json sweep = json::array();
  for (const auto& t : r.sweep) {
    sweep.push_back({{"theta_fg", t.theta},
                     {"auroc", num(t.auroc)},
                     {"auroc_samples", t.auroc_samples},
                     {"ratios", ratios_json(t.per_ratio)}});
  }
  j["theta_sweep"] = sweep;
  if (r.has_reconstruction) {
    j["reconstruction"] = {{"psnr_fore", num(r.reconstruction.psnr_fore)},
                           {"psnr_back", num(r.reconstruction.psnr_back)},
                           {"ssim_fore", num(r.reconstruction.ssim_fore)},
                           {"ssim_back", num(r.reconstruction.ssim_back)}};
  } else {
    j["reconstruction"] = nullptr;
  }
  return j.dump();
}

void write_report_csv(const EvalReport& r, std::ostream& out) {
  out << "index,auroc,frac_pos,mean_fore_score,mean_back_score";
  for (const auto& p : r.per_ratio) out << ",recall_p" << p.ratio;
  out << '\n';
  out << std::setprecision(9);
  for (const auto& row : r.rows) {
    out << row.index << ',';
    if (std::isfinite(row.auroc)) out << row.auroc;
    out << ',' << row.frac_pos << ',' << row.mean_fore_score << ',' << row.mean_back_score;
    for (double v : row.recall) out << ',' << v;
    out << '\n';
  }
}

}  // namespace fastdrive

// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "doctest.h"
#include "fastdrive/eval.hpp"
#include "test_util.hpp"

using namespace fastdrive;
using fastdrive::testing::error_of;

namespace {

// Mann-Whitney U from average ranks.
double rank_sum_auroc(const std::vector<float>& s, const std::vector<bool>& fg) {
  const std::size_t n = s.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && s[order[j]] == s[order[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) rank[order[k]] = avg;
    i = j;
  }
  double r_pos = 0, n_pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (fg[i]) {
      r_pos += rank[i];
      n_pos += 1;
    }
  }
  const double n_neg = static_cast<double>(n) - n_pos;
  return (r_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg);
}

}  // namespace

TEST_CASE("retention metrics") {
  const std::vector<bool> fg{true, true, false, false};
  const std::vector<std::size_t> exact{0, 1}, disjoint{2, 3}, half{1, 2};
  auto m = retention_metrics(exact, fg);
  CHECK(m.recall == 1.0);
  CHECK(m.precision == 1.0);
  CHECK(m.f1 == 1.0);
  m = retention_metrics(disjoint, fg);
  CHECK(m.recall == 0.0);
  CHECK(m.precision == 0.0);
  CHECK(m.f1 == 0.0);
  m = retention_metrics(half, fg);
  CHECK(m.recall == 0.5);
  CHECK(m.precision == 0.5);
  CHECK(m.f1 == 0.5);
  const std::vector<std::size_t> bad{9};
  CHECK(error_of([&] { retention_metrics(bad, fg); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("auroc examples") {
  const std::vector<bool> fg{true, false, true, false};
  CHECK(saliency_auroc(std::vector<float>{3, 1, 2, 0}, fg) == 1.0);
  CHECK(saliency_auroc(std::vector<float>{0, 1, 0, 2}, fg) == 0.0);
  CHECK(saliency_auroc(std::vector<float>(4, 0.7f), fg) == 0.5);
  CHECK(error_of([] { saliency_auroc(std::vector<float>{1, 2}, {true, true}); }) ==
        ErrorCode::kSingleClass);
  CHECK(error_of([] { saliency_auroc(std::vector<float>{1, 2}, {true}); }) ==
        ErrorCode::kDimMismatch);
}

TEST_CASE("auroc agrees with the rank-sum formula") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 20;
    std::vector<float> s(n);
    std::vector<bool> fg(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<float>(rng() % 8);  // ties on purpose
      fg[i] = rng() % 3 == 0;
    }
    fg[0] = true;
    fg[1] = false;
    const double a = saliency_auroc(s, fg);
    CHECK(a == doctest::Approx(rank_sum_auroc(s, fg)).epsilon(1e-12));
    std::vector<float> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = std::exp(0.3f * s[i]) - 5.0f;
    CHECK(saliency_auroc(t, fg) == a);
  }
}

TEST_CASE("psnr") {
  const Tensor a = Tensor::zeros({4, 4, 3});
  CHECK(std::isinf(psnr(a, a)));
  CHECK(psnr(a, Tensor::full({4, 4, 3}, 0.1f)) == doctest::Approx(20.0).epsilon(1e-5));
}

TEST_CASE("evaluation report") {
  TrainConfig cfg;
  TrainState model(cfg);
  const auto data = generate_dataset(SceneConfig{}, 500, 6);
  EvalConfig ec;
  ec.ratios = {0.0, 0.25, 0.5, 0.75, 1.0};
  const EvalReport r = evaluate(model, data, ec);
  CHECK(r.samples == 6);
  CHECK(r.sweep.size() == 3);
  CHECK(r.has_reconstruction);
  for (const auto& row : r.rows) {
    CHECK(row.recall.front() == 1.0);
    for (std::size_t k = 1; k < row.recall.size(); ++k) {
      CHECK(row.recall[k] <= row.recall[k - 1]);
    }
  }
  CHECK(r.per_ratio[0].kept == 144);
  CHECK(r.per_ratio[3].kept == 36);

  const std::string js = report_to_json(r);
  CHECK(js == report_to_json(evaluate(model, data, ec)));
  const auto j = nlohmann::json::parse(js);
  for (const char* key : {"samples", "theta_fg", "saliency", "ratios", "theta_sweep",
                          "reconstruction"}) {
    CHECK(j.contains(key));
  }
  CHECK(j["saliency"].contains("auroc"));
  CHECK(j["saliency"].contains("fraction_positive"));
  CHECK(j["theta_sweep"].size() == 3);

  std::ostringstream csv;
  write_report_csv(r, csv);
  const std::string text = csv.str();
  const auto lines = std::count(text.begin(), text.end(), '\n');
  CHECK(lines == 7);

  EvalConfig bad;
  bad.headline_theta = 0.3;
  CHECK(error_of([&] { evaluate(model, data, bad); }) == ErrorCode::kInvalidArgument);
  CHECK(error_of([&] { evaluate(model, {}, ec); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("mask-prediction models report no reconstruction") {
  TrainConfig cfg;
  cfg.mode = TrainMode::kMaskPrediction;
  TrainState model(cfg);
  const auto data = generate_dataset(SceneConfig{}, 600, 2);
  const EvalReport r = evaluate(model, data);
  CHECK_FALSE(r.has_reconstruction);
  CHECK(nlohmann::json::parse(report_to_json(r))["reconstruction"].is_null());
}

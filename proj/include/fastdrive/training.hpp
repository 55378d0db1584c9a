// SPDX-License-Identifier: Apache-2.0
//
// ReconPruner training: AdamW, cosine schedule, train step, training loop,
// checkpoints.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fastdrive/datagen.hpp"
#include "fastdrive/encoder.hpp"
#include "fastdrive/losses.hpp"
#include "fastdrive/pruner.hpp"
#include "fastdrive/recon_decoder.hpp"

namespace fastdrive {

enum class TrainMode { kFull, kForeOnly, kMaskPrediction };

std::string train_mode_name(TrainMode mode);
// Throws InvalidArgument for unknown names.
TrainMode parse_train_mode(const std::string& name);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Per-parameter first/second moments, keyed by position in the ParamList.
struct AdamWState {
  std::uint64_t step = 0;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
};

// One bias-corrected AdamW update with decoupled weight decay. Reads each
// parameter's accumulated grad (missing grad counts as zero). Weight decay
// applies to tensors of rank >= 2 only.
void adamw_update(std::vector<Tensor>& params, AdamWState& state, const AdamWConfig& cfg,
                  double lr);

// lr0 * 0.5 * (1 + cos(pi * step / total_steps)).
double cosine_lr(std::uint64_t step, std::uint64_t total_steps, double lr0);

struct TrainConfig {
  EncoderConfig encoder;
  LayerConfig layer;
  std::size_t decoder_layers = 6;
  LossConfig loss;
  AdamWConfig adamw;
  TrainMode mode = TrainMode::kFull;
  double lr = 3e-4;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  double theta_fg = 0.25;
  std::uint64_t seed = 0;

  void validate() const;
  // Loss config after mode adjustments (fore_only forces alpha = 1).
  LossConfig effective_loss() const;
  DecoderConfig decoder_config() const;
};

std::string config_to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const std::string& json);

struct TrainState {
  TrainConfig config;
  Encoder encoder;
  PrunerParams pruner;
  DecoderParams decoder;
  AdamWState optimizer;
  std::uint64_t step = 0;
  std::uint64_t total_steps = 0;

  explicit TrainState(const TrainConfig& cfg);
  // Parameters the optimizer updates for the configured mode, in a fixed order.
  ParamList trainable() const;
};

struct StepMetrics {
  double l_all = 0;
  double l_fore = 0;
  double l_back = 0;
  double frac_pos = 0;
  double lr = 0;
};

struct SampleLoss {
  Tensor l_all;
  Tensor l_fore;
  Tensor l_back;
  double frac_pos = 0;
};

// Forward pass of one sample through the mode's objective; builds a graph.
SampleLoss sample_loss(const ImageMaskPair& sample, const TrainState& state);

// Forward, backward and one optimizer update over the batch. The learning
// rate is cosine_lr(state.step, state.total_steps, lr). Throws NonFiniteLoss.
StepMetrics train_step(const std::vector<const ImageMaskPair*>& batch, TrainState& state);

struct EpochLog {
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  StepMetrics mean;
};

std::string log_line(const EpochLog& entry);

struct TrainResult {
  StepMetrics first_step;
  std::vector<EpochLog> epochs;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Runs epochs * ceil(count / batch) steps. Writes one JSON line per epoch to
// `log` when given.
TrainResult train(TrainState& state, const std::vector<ImageMaskPair>& dataset,
                  std::ostream* log = nullptr, const EpochCallback& on_epoch = {});

// Named tensor table: parameters, optimizer moments, step and config echo.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace fastdrive

// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "doctest.h"
#include "fastdrive/checkpoint.hpp"
#include "fastdrive/ops.hpp"
#include "fastdrive/training.hpp"
#include "test_util.hpp"

using namespace fastdrive;
using fastdrive::testing::error_of;

namespace {

TrainConfig tiny_config(TrainMode mode = TrainMode::kFull) {
  TrainConfig cfg;
  cfg.encoder = {32, 8, 16, 5};
  cfg.layer = {16, 32, 2};
  cfg.decoder_layers = 1;
  cfg.mode = mode;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.lr = 1e-3;
  cfg.seed = 7;
  return cfg;
}

std::vector<ImageMaskPair> tiny_data(std::size_t n, std::uint64_t first = 0) {
  SceneConfig sc;
  sc.size = 32;
  return generate_dataset(sc, first, n);
}

std::vector<std::vector<float>> snapshot(const ParamList& params) {
  std::vector<std::vector<float>> out;
  for (const auto& p : params) out.push_back(p.tensor.to_vector());
  return out;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("fastdrive_test_" + name);
}

}  // namespace

TEST_CASE("adamw first step") {
  Tensor vec = Tensor({1}, {1.0f}, true);
  Tensor mat = Tensor({1, 1}, {1.0f}, true);
  std::vector<Tensor> params{vec, mat};
  backward(add(sum(mul_scalar(vec, 0.5f)), sum(mul_scalar(mat, 0.5f))));
  AdamWState st;
  AdamWConfig cfg;
  adamw_update(params, st, cfg, 0.1);
  // Bias-corrected first step moves by lr * sign(g); decay only on matrices.
  CHECK(vec.data()[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(mat.data()[0] == doctest::Approx(0.9 - 0.1 * 0.01).epsilon(1e-6));
  CHECK(st.step == 1);

  const float before = vec.data()[0];
  adamw_update(params, st, cfg, 0.0);
  CHECK(vec.data()[0] == before);
}

TEST_CASE("cosine schedule") {
  CHECK(cosine_lr(0, 100, 3e-4) == doctest::Approx(3e-4));
  CHECK(cosine_lr(50, 100, 3e-4) == doctest::Approx(1.5e-4));
  CHECK(cosine_lr(100, 100, 3e-4) == doctest::Approx(0.0));
  for (std::uint64_t s = 1; s <= 100; ++s) CHECK(cosine_lr(s, 100, 1.0) <= cosine_lr(s - 1, 100, 1.0));
}

TEST_CASE("config json round trip and validation") {
  TrainConfig cfg = tiny_config(TrainMode::kForeOnly);
  cfg.loss.lambda = 0.3;
  const TrainConfig back = config_from_json(config_to_json(cfg));
  CHECK(config_to_json(back) == config_to_json(cfg));
  CHECK(back.mode == TrainMode::kForeOnly);
  CHECK(back.effective_loss().alpha == 1.0);
  CHECK(parse_train_mode("mask_prediction") == TrainMode::kMaskPrediction);
  CHECK(error_of([] { parse_train_mode("bogus"); }) == ErrorCode::kInvalidArgument);
  TrainConfig bad = tiny_config();
  bad.layer.hidden = 24;
  CHECK(error_of([&] { bad.validate(); }).has_value());
}

TEST_CASE("one step trains the pruner and leaves the encoder frozen") {
  TrainState st(tiny_config());
  const auto data = tiny_data(4);
  const auto proj = st.encoder.projection().to_vector();
  const auto scorer = st.pruner.scorer_w.to_vector();
  std::vector<const ImageMaskPair*> batch;
  for (const auto& p : data) batch.push_back(&p);
  st.total_steps = 10;
  const StepMetrics m = train_step(batch, st);
  CHECK(std::isfinite(m.l_all));
  CHECK(m.frac_pos >= 0.0);
  CHECK(m.frac_pos <= 1.0);
  double g = 0;
  for (float v : st.pruner.scorer_w.grad()) g += std::abs(v);
  CHECK(g > 0);
  CHECK(st.pruner.scorer_w.to_vector() != scorer);
  CHECK(st.encoder.projection().to_vector() == proj);
  CHECK(st.step == 1);
}

TEST_CASE("mode-specific parameter sets") {
  auto has = [](const ParamList& params, const std::string& needle) {
    for (const auto& p : params) {
      if (p.name.find(needle) != std::string::npos) return true;
    }
    return false;
  };
  TrainState full(tiny_config());
  TrainState mask(tiny_config(TrainMode::kMaskPrediction));
  CHECK(has(full.trainable(), "decoder.head.w"));
  CHECK_FALSE(has(mask.trainable(), "decoder.head.w"));
  CHECK_FALSE(has(full.trainable(), "mask_head"));
  CHECK(has(mask.trainable(), "mask_head"));
}

TEST_CASE("training is deterministic") {
  const auto data = tiny_data(6);
  std::ostringstream log_a, log_b;
  TrainState a(tiny_config()), b(tiny_config());
  const TrainResult ra = train(a, data, &log_a);
  train(b, data, &log_b);
  CHECK(log_a.str() == log_b.str());
  CHECK(snapshot(a.trainable()) == snapshot(b.trainable()));
  CHECK(a.step == 4);
  CHECK(ra.epochs.size() == 2);

  std::istringstream lines(log_a.str());
  std::string line;
  std::size_t count = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* key : {"epoch", "step", "l_all", "l_fore", "l_back", "frac_pos", "lr"}) {
      CHECK(j.contains(key));
    }
    ++count;
  }
  CHECK(count == 2);

  TrainConfig other = tiny_config();
  other.seed = 8;
  TrainState c(other);
  train(c, data);
  CHECK(snapshot(c.trainable()) != snapshot(a.trainable()));
}

TEST_CASE("all three modes train") {
  const auto data = tiny_data(4);
  for (TrainMode mode : {TrainMode::kFull, TrainMode::kForeOnly, TrainMode::kMaskPrediction}) {
    TrainConfig cfg = tiny_config(mode);
    cfg.epochs = 1;
    TrainState st(cfg);
    const TrainResult r = train(st, data);
    CHECK(std::isfinite(r.epochs.back().mean.l_all));
  }
}

TEST_CASE("checkpoint round trip resumes bitwise") {
  const auto data = tiny_data(8);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 1;
  TrainState st(cfg);
  train(st, data);
  const auto path = temp_path("ckpt.rpck");
  save_checkpoint(st, path);
  TrainState loaded = load_checkpoint(path);
  CHECK(config_to_json(loaded.config) == config_to_json(st.config));
  CHECK(snapshot(loaded.trainable()) == snapshot(st.trainable()));
  CHECK(loaded.step == st.step);
  CHECK(loaded.total_steps == st.total_steps);
  CHECK(loaded.optimizer.step == st.optimizer.step);
  CHECK(loaded.optimizer.m == st.optimizer.m);
  CHECK(loaded.optimizer.v == st.optimizer.v);

  std::vector<const ImageMaskPair*> batch{&data[0], &data[1]};
  train_step(batch, st);
  train_step(batch, loaded);
  CHECK(snapshot(loaded.trainable()) == snapshot(st.trainable()));

  // A second save of the reloaded state is byte-identical.
  const auto again = temp_path("ckpt2.rpck");
  TrainState reread = load_checkpoint(path);
  save_checkpoint(reread, again);
  CHECK(encode_tensor_table(read_tensor_table(again)) == encode_tensor_table(read_tensor_table(path)));
  std::filesystem::remove(path);
  std::filesystem::remove(again);
  CHECK(error_of([&] { load_checkpoint(path); }) == ErrorCode::kIoError);
}

TEST_CASE("non-finite loss is reported") {
  TrainState st(tiny_config());
  st.decoder.head_b.data()[0] = NAN;
  const auto data = tiny_data(1);
  std::vector<const ImageMaskPair*> batch{&data[0]};
  st.total_steps = 1;
  CHECK(error_of([&] { train_step(batch, st); }) == ErrorCode::kNonFiniteLoss);
}

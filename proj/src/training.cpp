// SPDX-License-Identifier: Apache-2.0
#include "fastdrive/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>

#include <json.hpp>

#include "fastdrive/checkpoint.hpp"
#include "fastdrive/error.hpp"
#include "fastdrive/masking.hpp"
#include "fastdrive/ops.hpp"

namespace fastdrive {

using nlohmann::json;

std::string train_mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::kFull: return "full";
    case TrainMode::kForeOnly: return "fore_only";
    case TrainMode::kMaskPrediction: return "mask_prediction";
  }
  return "unknown";
}

TrainMode parse_train_mode(const std::string& name) {
  if (name == "full") return TrainMode::kFull;
  if (name == "fore_only") return TrainMode::kForeOnly;
  if (name == "mask_prediction") return TrainMode::kMaskPrediction;
  fail(ErrorCode::kInvalidArgument,
       "unknown mode '" + name + "' (expected full, fore_only or mask_prediction)");
}

void adamw_update(std::vector<Tensor>& params, AdamWState& state, const AdamWConfig& cfg,
                  double lr) {
  if (state.m.size() != params.size()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k];
    auto data = p.data();
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != data.size()) {
      m.assign(data.size(), 0.0f);
      v.assign(data.size(), 0.0f);
    }
    const bool has_grad = p.has_grad();
    const auto grad = p.grad();
    const double decay = p.rank() >= 2 ? cfg.weight_decay : 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = has_grad ? grad[i] : 0.0;
      const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double update = (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps) + decay * data[i];
      data[i] = static_cast<float>(data[i] - lr * update);
    }
  }
}

double cosine_lr(std::uint64_t step, std::uint64_t total_steps, double lr0) {
  if (total_steps == 0) return lr0;
  const double t = static_cast<double>(std::min(step, total_steps)) / static_cast<double>(total_steps);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

void TrainConfig::validate() const {
  encoder.validate();
  layer.validate();
  loss.validate();
  if (encoder.hidden_dim != layer.hidden) {
    fail(ErrorCode::kDimMismatch, "encoder width " + std::to_string(encoder.hidden_dim) +
                                      " differs from layer width " + std::to_string(layer.hidden));
  }
  if (!(lr > 0) || !std::isfinite(lr)) fail(ErrorCode::kInvalidArgument, "lr must be > 0");
  if (epochs < 1) fail(ErrorCode::kInvalidArgument, "epochs must be >= 1");
  if (batch_size < 1) fail(ErrorCode::kInvalidArgument, "batch size must be >= 1");
  if (decoder_layers < 1) fail(ErrorCode::kInvalidArgument, "decoder needs at least one layer");
  if (!(theta_fg > 0 && theta_fg <= 1)) {
    fail(ErrorCode::kInvalidArgument, "theta_fg must be in (0, 1]");
  }
}

LossConfig TrainConfig::effective_loss() const {
  LossConfig l = loss;
  if (mode == TrainMode::kForeOnly) l.alpha = 1.0;
  return l;
}

DecoderConfig TrainConfig::decoder_config() const {
  DecoderConfig d;
  d.layer = layer;
  d.num_layers = decoder_layers;
  d.patch_size = encoder.patch_size;
  d.image_size = encoder.image_size;
  return d;
}

std::string config_to_json(const TrainConfig& c) {
  json j;
  j["encoder"] = {{"image_size", c.encoder.image_size},
                  {"patch_size", c.encoder.patch_size},
                  {"hidden_dim", c.encoder.hidden_dim},
                  {"seed", c.encoder.seed}};
  j["layer"] = {{"hidden", c.layer.hidden},
                {"intermediate", c.layer.intermediate},
                {"heads", c.layer.heads}};
  j["decoder_layers"] = c.decoder_layers;
  j["loss"] = {{"lambda", c.loss.lambda},       {"alpha", c.loss.alpha},
               {"ssim_window", c.loss.ssim_window}, {"ssim_sigma", c.loss.ssim_sigma},
               {"k1", c.loss.k1},               {"k2", c.loss.k2},
               {"dynamic_range", c.loss.dynamic_range}};
  j["adamw"] = {{"beta1", c.adamw.beta1},
                {"beta2", c.adamw.beta2},
                {"eps", c.adamw.eps},
                {"weight_decay", c.adamw.weight_decay}};
  j["mode"] = train_mode_name(c.mode);
  j["lr"] = c.lr;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["theta_fg"] = c.theta_fg;
  j["seed"] = c.seed;
  return j.dump();
}

TrainConfig config_from_json(const std::string& text) {
  TrainConfig c;
  try {
    const json j = json::parse(text);
    const auto& e = j.at("encoder");
    c.encoder.image_size = e.at("image_size");
    c.encoder.patch_size = e.at("patch_size");
    c.encoder.hidden_dim = e.at("hidden_dim");
    c.encoder.seed = e.at("seed");
    const auto& l = j.at("layer");
    c.layer.hidden = l.at("hidden");
    c.layer.intermediate = l.at("intermediate");
    c.layer.heads = l.at("heads");
    c.decoder_layers = j.at("decoder_layers");
    const auto& lo = j.at("loss");
    c.loss.lambda = lo.at("lambda");
    c.loss.alpha = lo.at("alpha");
    c.loss.ssim_window = lo.at("ssim_window");
    c.loss.ssim_sigma = lo.at("ssim_sigma");
    c.loss.k1 = lo.at("k1");
    c.loss.k2 = lo.at("k2");
    c.loss.dynamic_range = lo.at("dynamic_range");
    const auto& a = j.at("adamw");
    c.adamw.beta1 = a.at("beta1");
    c.adamw.beta2 = a.at("beta2");
    c.adamw.eps = a.at("eps");
    c.adamw.weight_decay = a.at("weight_decay");
    c.mode = parse_train_mode(j.at("mode"));
    c.lr = j.at("lr");
    c.epochs = j.at("epochs");
    c.batch_size = j.at("batch_size");
    c.theta_fg = j.at("theta_fg");
    c.seed = j.at("seed");
  } catch (const json::exception& ex) {
    fail(ErrorCode::kInvalidArgument, std::string("bad config echo: ") + ex.what());
  }
  return c;
}

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

TrainState::TrainState(const TrainConfig& cfg)
    : config(cfg),
      encoder((cfg.validate(), cfg.encoder)),
      pruner(PrunerParams::init(cfg.layer, derive_seed(cfg.seed, 1))),
      decoder(DecoderParams::init(cfg.decoder_config(), derive_seed(cfg.seed, 2))) {}

ParamList TrainState::trainable() const {
  ParamList out = pruner.parameters();
  if (config.mode == TrainMode::kMaskPrediction) {
    for (std::size_t i = 0; i < decoder.layers.size(); ++i) {
      decoder.layers[i].collect(out, "decoder.layer" + std::to_string(i) + ".");
    }
    out.push_back({"decoder.mask_head.w", decoder.mask_head_w});
    out.push_back({"decoder.mask_head.b", decoder.mask_head_b});
  } else {
    ParamList dec = decoder.parameters(false);
    out.insert(out.end(), dec.begin(), dec.end());
  }
  return out;
}

SampleLoss sample_loss(const ImageMaskPair& sample, const TrainState& state) {
  const TrainConfig& cfg = state.config;
  const LossConfig loss_cfg = cfg.effective_loss();
  TokenSequence seq = state.encoder.encode(sample.image);
  Tensor s = saliency(seq, state.pruner);
  SaliencyMask mask = binarize(s);
  TokenSplit parts = split(seq.tokens, mask);

  SampleLoss out;
  out.frac_pos = mask.fraction_positive();
  if (cfg.mode == TrainMode::kMaskPrediction) {
    const auto fg = token_foreground_truth(sample.mask, cfg.encoder, cfg.theta_fg);
    std::vector<float> t_fore(fg.size()), t_back(fg.size());
    for (std::size_t i = 0; i < fg.size(); ++i) {
      t_fore[i] = fg[i] ? 1.0f : 0.0f;
      t_back[i] = 1.0f - t_fore[i];
    }
    const Shape shape{fg.size(), 1};
    out.l_fore = bce_with_logits(predict_token_logits(parts.fore, seq.pos_embed, state.decoder),
                                 Tensor(shape, std::move(t_fore)));
    out.l_back = bce_with_logits(predict_token_logits(parts.back, seq.pos_embed, state.decoder),
                                 Tensor(shape, std::move(t_back)));
  } else {
    auto [gt_fore, gt_back] = masked_targets(sample.image, sample.mask);
    out.l_fore = stream_loss(gt_fore, reconstruct(parts.fore, seq.pos_embed, state.decoder), loss_cfg);
    if (loss_cfg.alpha >= 1.0) {
      NoGradGuard no_grad;
      out.l_back = stream_loss(gt_back, reconstruct(parts.back, seq.pos_embed, state.decoder), loss_cfg);
    } else {
      out.l_back = stream_loss(gt_back, reconstruct(parts.back, seq.pos_embed, state.decoder), loss_cfg);
    }
  }
  out.l_all = total_loss(out.l_fore, out.l_back, loss_cfg);
  return out;
}

StepMetrics train_step(const std::vector<const ImageMaskPair*>& batch, TrainState& state) {
  if (batch.empty()) fail(ErrorCode::kInvalidArgument, "empty batch");
  ParamList named = state.trainable();
  std::vector<Tensor> params;
  params.reserve(named.size());
  for (auto& p : named) {
    p.tensor.zero_grad();
    params.push_back(p.tensor);
  }

  StepMetrics m;
  const float scale = 1.0f / static_cast<float>(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    SampleLoss s = sample_loss(*batch[b], state);
    const double l_all = s.l_all.item();
    if (!std::isfinite(l_all)) {
      fail(ErrorCode::kNonFiniteLoss,
           "non-finite loss at step " + std::to_string(state.step) + ", batch item " +
               std::to_string(b) + ": l_all=" + std::to_string(l_all) +
               " l_fore=" + std::to_string(s.l_fore.item()) +
               " l_back=" + std::to_string(s.l_back.item()) +
               " frac_pos=" + std::to_string(s.frac_pos));
    }
    backward(mul_scalar(s.l_all, scale));
    m.l_all += l_all;
    m.l_fore += s.l_fore.item();
    m.l_back += s.l_back.item();
    m.frac_pos += s.frac_pos;
  }
  const double n = static_cast<double>(batch.size());
  m.l_all /= n;
  m.l_fore /= n;
  m.l_back /= n;
  m.frac_pos /= n;
  m.lr = cosine_lr(state.step, state.total_steps, state.config.lr);
  adamw_update(params, state.optimizer, state.config.adamw, m.lr);
  state.step += 1;
  return m;
}

std::string log_line(const EpochLog& e) {
  json j = {{"epoch", e.epoch},         {"step", e.step},
            {"l_all", e.mean.l_all},    {"l_fore", e.mean.l_fore},
            {"l_back", e.mean.l_back},  {"frac_pos", e.mean.frac_pos},
            {"lr", e.mean.lr}};
  return j.dump();
}

TrainResult train(TrainState& state, const std::vector<ImageMaskPair>& dataset, std::ostream* log,
                  const EpochCallback& on_epoch) {
  if (dataset.empty()) fail(ErrorCode::kInvalidArgument, "training dataset is empty");
  const TrainConfig& cfg = state.config;
  const std::size_t per_epoch = (dataset.size() + cfg.batch_size - 1) / cfg.batch_size;
  state.total_steps = per_epoch * cfg.epochs;

  std::vector<std::size_t> order(dataset.size());
  TrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(derive_seed(cfg.seed, 100 + epoch));
    std::shuffle(order.begin(), order.end(), rng);

    EpochLog entry;
    entry.epoch = epoch;
    for (std::size_t s = 0; s < per_epoch; ++s) {
      std::vector<const ImageMaskPair*> batch;
      const std::size_t end = std::min(order.size(), (s + 1) * cfg.batch_size);
      for (std::size_t i = s * cfg.batch_size; i < end; ++i) batch.push_back(&dataset[order[i]]);
      StepMetrics m = train_step(batch, state);
      if (epoch == 0 && s == 0) result.first_step = m;
      entry.mean.l_all += m.l_all;
      entry.mean.l_fore += m.l_fore;
      entry.mean.l_back += m.l_back;
      entry.mean.frac_pos += m.frac_pos;
      entry.mean.lr = m.lr;
    }
    const double n = static_cast<double>(per_epoch);
    entry.mean.l_all /= n;
    entry.mean.l_fore /= n;
    entry.mean.l_back /= n;
    entry.mean.frac_pos /= n;
    entry.step = state.step;
    if (log) *log << log_line(entry) << '\n' << std::flush;
    if (on_epoch) on_epoch(entry);
    result.epochs.push_back(entry);
  }
  return result;
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  ParamList table = state.pruner.parameters();
  ParamList dec = state.decoder.parameters(true);
  table.insert(table.end(), dec.begin(), dec.end());

  ParamList trainable = state.trainable();
  for (std::size_t k = 0; k < trainable.size() && k < state.optimizer.m.size(); ++k) {
    const Shape& shape = trainable[k].tensor.shape();
    if (state.optimizer.m[k].empty()) continue;
    table.push_back({"adamw.m." + trainable[k].name, Tensor(shape, state.optimizer.m[k])});
    table.push_back({"adamw.v." + trainable[k].name, Tensor(shape, state.optimizer.v[k])});
  }
  auto counter = [](std::uint64_t v) {
    // 24-bit limbs are exact in f32.
    return Tensor({3}, {static_cast<float>(v & 0xffffff), static_cast<float>((v >> 24) & 0xffffff),
                        static_cast<float>(v >> 48)});
  };
  table.push_back({"meta.step", counter(state.step)});
  table.push_back({"meta.total_steps", counter(state.total_steps)});
  table.push_back({"meta.adamw_step", counter(state.optimizer.step)});
  table.push_back({"meta.config_json", text_to_tensor(config_to_json(state.config))});
  write_tensor_table(table, path);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  ParamList table = read_tensor_table(path);
  std::map<std::string, Tensor> by_name;
  for (auto& e : table) by_name.emplace(e.name, e.tensor);
  auto find = [&](const std::string& name) -> const Tensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) fail(ErrorCode::kTruncatedFile, "checkpoint lacks '" + name + "'");
    return it->second;
  };
  auto counter = [&](const std::string& name) {
    const auto d = find(name).data();
    if (d.size() != 3) fail(ErrorCode::kBadMagic, "malformed counter '" + name + "'");
    return static_cast<std::uint64_t>(d[0]) | static_cast<std::uint64_t>(d[1]) << 24 |
           static_cast<std::uint64_t>(d[2]) << 48;
  };

  TrainState state(config_from_json(tensor_to_text(find("meta.config_json"))));
  ParamList all = state.pruner.parameters();
  ParamList dec = state.decoder.parameters(true);
  all.insert(all.end(), dec.begin(), dec.end());
  for (auto& p : all) {
    const Tensor& src = find(p.name);
    if (src.shape() != p.tensor.shape()) {
      fail(ErrorCode::kShapeMismatch, "checkpoint tensor '" + p.name + "' has shape " +
                                          shape_str(src.shape()) + ", expected " +
                                          shape_str(p.tensor.shape()));
    }
    std::copy(src.data().begin(), src.data().end(), p.tensor.data().begin());
  }

  ParamList trainable = state.trainable();
  state.optimizer.m.assign(trainable.size(), {});
  state.optimizer.v.assign(trainable.size(), {});
  for (std::size_t k = 0; k < trainable.size(); ++k) {
    auto m = by_name.find("adamw.m." + trainable[k].name);
    auto v = by_name.find("adamw.v." + trainable[k].name);
    if (m == by_name.end() || v == by_name.end()) continue;
    state.optimizer.m[k] = m->second.to_vector();
    state.optimizer.v[k] = v->second.to_vector();
  }
  state.step = counter("meta.step");
  state.total_steps = counter("meta.total_steps");
  state.optimizer.step = counter("meta.adamw_step");
  return state;
}

}  // namespace fastdrive

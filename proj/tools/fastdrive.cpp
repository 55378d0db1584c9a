// SPDX-License-Identifier: Apache-2.0
//
// fastdrive: datagen, train, prune, eval, bench and viz subcommands.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fastdrive/datagen.hpp"
#include "fastdrive/error.hpp"
#include "fastdrive/eval.hpp"
#include "fastdrive/flops.hpp"
#include "fastdrive/masking.hpp"
#include "fastdrive/prune_infer.hpp"
#include "fastdrive/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fastdrive;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Raised for invalid inputs detected before any work starts.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename F>
auto checked_input(F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

json provenance(const std::string& command, std::uint64_t seed, const json& config) {
  const std::string dumped = config.dump();
  return {{"tool", "fastdrive"},
          {"version", FASTDRIVE_VERSION},
          {"command", command},
          {"seed", seed},
          {"config", config},
          {"config_hash", hex64(fnv1a64(dumped))}};
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return hex64(fnv1a64(bytes));
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIoError, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorCode::kIoError, "write failed for " + path.string());
}

void emit_json(const json& j, const std::string& out) {
  const std::string text = j.dump(2) + "\n";
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    write_text(out, text);
  }
}

// A dataset argument may name a file or a directory holding train/test files.
fs::path resolve_dataset(const std::string& arg, const char* default_name) {
  fs::path p(arg);
  if (fs::is_directory(p)) p /= default_name;
  if (!fs::exists(p)) fail(ErrorCode::kIoError, "dataset not found: " + p.string());
  return p;
}

std::vector<ImageMaskPair> load_dataset(const std::string& arg, const char* default_name) {
  return checked_input([&] { return read_dataset(resolve_dataset(arg, default_name)); });
}

// ---------------------------------------------------------------- datagen

struct DatagenArgs {
  std::size_t count = 2048;
  std::size_t test_count = 256;
  std::size_t size = 96;
  std::uint64_t seed = 0;
  std::size_t min_objects = 2;
  std::size_t max_objects = 6;
  std::string background = "mixed";
  std::string out = "data";
};

BackgroundKind parse_background(const std::string& s) {
  if (s == "mixed") return BackgroundKind::kMixed;
  if (s == "gradient") return BackgroundKind::kGradient;
  if (s == "noise") return BackgroundKind::kNoise;
  if (s == "flat") return BackgroundKind::kFlat;
  fail(ErrorCode::kInvalidArgument, "unknown background kind: " + s);
}

int cmd_datagen(const DatagenArgs& a) {
  SceneConfig sc = checked_input([&] {
    SceneConfig c;
    c.size = a.size;
    c.seed = a.seed;
    c.min_objects = a.min_objects;
    c.max_objects = a.max_objects;
    c.background = parse_background(a.background);
    c.validate();
    return c;
  });
  const fs::path dir(a.out);
  fs::create_directories(dir);
  const fs::path train_path = dir / "train.fdds", test_path = dir / "test.fdds";
  write_dataset(generate_dataset(sc, 0, a.count), train_path);
  write_dataset(generate_dataset(sc, kHeldOutFirstIndex, a.test_count), test_path);

  const json config = {{"count", a.count},           {"test_count", a.test_count},
                       {"size", a.size},             {"min_objects", a.min_objects},
                       {"max_objects", a.max_objects}, {"background", a.background},
                       {"test_first_index", kHeldOutFirstIndex}};
  json manifest = provenance("datagen", a.seed, config);
  manifest["files"] = {{"train", {{"path", "train.fdds"}, {"fnv1a64", file_hash(train_path)}}},
                       {"test", {{"path", "test.fdds"}, {"fnv1a64", file_hash(test_path)}}}};
  emit_json(manifest, (dir / "datagen.json").string());
  std::cout << "wrote " << a.count << " train and " << a.test_count << " test pairs to "
            << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string data;
  std::size_t epochs = 10;
  double lr = 3e-4;
  double alpha = 0.5;
  double lambda = 0.2;
  std::string mode = "full";
  std::uint64_t seed = 0;
  std::size_t batch = 16;
  std::size_t limit = 0;
  std::string out = "run";
};

int cmd_train(const TrainArgs& a) {
  auto data = load_dataset(a.data, "train.fdds");
  if (a.limit > 0 && a.limit < data.size()) data.resize(a.limit);
  TrainConfig cfg = checked_input([&] {
    if (data.empty()) fail(ErrorCode::kInvalidArgument, "training dataset is empty");
    TrainConfig c;
    c.encoder.image_size = data.front().image.height;
    c.epochs = a.epochs;
    c.lr = a.lr;
    c.loss.alpha = a.alpha;
    c.loss.lambda = a.lambda;
    c.mode = parse_train_mode(a.mode);
    c.seed = a.seed;
    c.batch_size = a.batch;
    c.validate();
    return c;
  });

  const fs::path dir(a.out);
  fs::create_directories(dir);
  std::ofstream log(dir / "train_log.jsonl", std::ios::binary);
  if (!log) fail(ErrorCode::kIoError, "cannot write " + (dir / "train_log.jsonl").string());

  TrainState state(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult result = train(state, data, &log, [](const EpochLog& e) {
    std::cerr << log_line(e) << "\n";
  });
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  log.close();
  save_checkpoint(state, dir / "checkpoint.rpck");

  json manifest = provenance("train", cfg.seed, json::parse(config_to_json(cfg)));
  manifest["samples"] = data.size();
  manifest["steps"] = state.step;
  manifest["first_step"] = {{"l_all", result.first_step.l_all},
                            {"frac_pos", result.first_step.frac_pos}};
  const auto& last = result.epochs.back().mean;
  manifest["final_epoch"] = {{"l_all", last.l_all},
                             {"l_fore", last.l_fore},
                             {"l_back", last.l_back},
                             {"frac_pos", last.frac_pos}};
  manifest["files"] = {
      {"checkpoint", {{"path", "checkpoint.rpck"}, {"fnv1a64", file_hash(dir / "checkpoint.rpck")}}},
      {"log", {{"path", "train_log.jsonl"}, {"fnv1a64", file_hash(dir / "train_log.jsonl")}}}};
  emit_json(manifest, (dir / "train.json").string());
  std::cerr << "trained " << state.step << " steps in " << std::fixed << std::setprecision(1)
            << seconds << " s\n";
  return kExitOk;
}

// Checkpoint, or a fresh model when no checkpoint is given.
TrainState load_model(const std::string& checkpoint, std::uint64_t seed, std::size_t image_size,
                      const std::string& mode) {
  return checked_input([&] {
    if (!checkpoint.empty()) {
      if (!fs::exists(checkpoint)) fail(ErrorCode::kIoError, "checkpoint not found: " + checkpoint);
      return load_checkpoint(checkpoint);
    }
    TrainConfig c;
    c.seed = seed;
    c.encoder.image_size = image_size;
    c.mode = parse_train_mode(mode);
    c.validate();
    return TrainState(c);
  });
}

// ---------------------------------------------------------------- prune

struct PruneArgs {
  std::string checkpoint;
  std::string data;
  std::size_t index = 0;
  std::size_t image_size = 96;
  std::optional<double> ratio;
  std::optional<std::size_t> keep;
  std::size_t text_tokens = 0;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_prune(const PruneArgs& a) {
  if (a.ratio.has_value() == a.keep.has_value()) {
    throw UsageError("exactly one of --ratio or --keep is required");
  }
  ImageMaskPair pair;
  std::size_t size = a.image_size;
  if (!a.data.empty()) {
    auto data = load_dataset(a.data, "test.fdds");
    if (a.index >= data.size()) throw UsageError("--index out of range");
    pair = data[a.index];
    size = pair.image.height;
  } else {
    pair = checked_input([&] {
      SceneConfig sc;
      sc.size = size;
      sc.seed = a.seed;
      return generate_scene(sc, kHeldOutFirstIndex + a.index);
    });
  }
  TrainState model = load_model(a.checkpoint, a.seed, size, "full");
  TokenSequence seq = checked_input([&] { return model.encoder.encode(pair.image); });

  Tensor scores;
  {
    NoGradGuard guard;
    scores = saliency(seq, model.pruner);
  }
  PrunedSequence pruned = checked_input([&] {
    return a.ratio ? prune(seq, scores, *a.ratio) : prune_k(seq, scores, *a.keep);
  });
  const SequenceLayout layout = downstream_stub(pruned, a.text_tokens);

  json out = json::parse(pruned_to_json(pruned, scores.data()));
  out["layout"] = {{"visual", layout.visual}, {"text", layout.text}, {"total", layout.total()}};
  const json config = {{"checkpoint", a.checkpoint}, {"data", a.data},
                       {"index", a.index},           {"image_size", size},
                       {"ratio", a.ratio ? json(*a.ratio) : json(nullptr)},
                       {"keep", a.keep ? json(*a.keep) : json(nullptr)},
                       {"text_tokens", a.text_tokens}};
  out["provenance"] = provenance("prune", model.config.seed, config);
  emit_json(out, a.out);
  if (!a.out.empty() && a.out != "-") {
    std::cerr << "kept " << pruned.size() << " of " << pruned.n << " tokens\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::vector<double> ratios{0.25, 0.5, 0.75};
  std::vector<double> thetas{0.05, 0.25, 0.5};
  double theta = 0.25;
  std::uint64_t seed = 0;
  std::string mode = "full";
  bool no_recon = false;
  std::string out = "report.json";
  std::string csv;
};

int cmd_eval(const EvalArgs& a) {
  auto data = load_dataset(a.data, "test.fdds");
  EvalConfig ec = checked_input([&] {
    if (data.empty()) fail(ErrorCode::kInvalidArgument, "evaluation dataset is empty");
    EvalConfig c;
    c.ratios = a.ratios;
    c.thetas = a.thetas;
    c.headline_theta = a.theta;
    c.reconstruction = !a.no_recon;
    c.validate();
    return c;
  });
  TrainState model = load_model(a.checkpoint, a.seed, data.front().image.height, a.mode);
  const EvalReport report = checked_input([&] {
    if (data.front().image.height != model.config.encoder.image_size) {
      fail(ErrorCode::kBadImageSize, "dataset image size does not match the model");
    }
    return evaluate(model, data, ec);
  });

  json out = json::parse(report_to_json(report));
  const json config = {{"checkpoint", a.checkpoint.empty() ? json(nullptr) : json(a.checkpoint)},
                       {"data", a.data},
                       {"ratios", a.ratios},
                       {"thetas", a.thetas},
                       {"headline_theta", a.theta},
                       {"reconstruction", ec.reconstruction},
                       {"model", json::parse(config_to_json(model.config))}};
  out["provenance"] = provenance("eval", model.config.seed, config);
  emit_json(out, a.out);
  if (!a.csv.empty()) {
    std::ostringstream csv;
    write_report_csv(report, csv);
    write_text(a.csv, csv.str());
  }
  return kExitOk;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  ModelSpec spec;
  std::optional<double> ratio;
  std::optional<std::size_t> keep;
  std::size_t pruner_hidden = 64;
  std::size_t pruner_intermediate = 256;
  std::size_t pruner_heads = 4;
  bool time = false;
  std::size_t time_layers = 2;
  std::string out;
};

double time_prefill(ModelSpec spec, std::size_t layers) {
  spec.n_layers = layers;
  spec.vocab = 0;
  const auto t0 = std::chrono::steady_clock::now();
  instrumented_prefill_flops(spec);
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_bench(const BenchArgs& a) {
  const LayerConfig pruner{a.pruner_hidden, a.pruner_intermediate, a.pruner_heads};
  const std::size_t kept = checked_input([&] {
    a.spec.validate();
    pruner.validate();
    if (a.ratio.has_value() && a.keep.has_value()) {
      fail(ErrorCode::kInvalidArgument, "--ratio and --keep are exclusive");
    }
    if (a.keep) return *a.keep;
    return retained_count(a.spec.visual_tokens, a.ratio.value_or(0.75));
  });
  const BenchReport r = checked_input([&] { return bench(a.spec, kept, pruner); });
  const json spec = {{"n_layers", a.spec.n_layers},
                     {"hidden", a.spec.hidden},
                     {"intermediate", a.spec.intermediate},
                     {"heads", a.spec.heads},
                     {"vocab", a.spec.vocab},
                     {"visual_tokens", a.spec.visual_tokens},
                     {"text_tokens", a.spec.text_tokens}};
  json out = {{"spec", spec},
              {"convention", kFlopConvention},
              {"kept_tokens", r.kept_tokens},
              {"flops_unpruned", r.flops_unpruned},
              {"flops_pruned", r.flops_pruned},
              {"overhead", r.overhead},
              {"ratio", r.ratio},
              {"ratio_with_overhead", r.ratio_with_overhead},
              {"overhead_fraction", r.overhead_fraction},
              {"reference_ratio_range", {7.5, 10.6}}};
  if (a.time) {
    ModelSpec pruned = a.spec;
    pruned.visual_tokens = kept;
    out["wall_clock_ms"] = {
        {"layers_timed", a.time_layers},
        {"unpruned", time_prefill(a.spec, a.time_layers)},
        {"pruned", time_prefill(pruned, a.time_layers)},
        {"note", "desk model on this machine; not comparable to published GPU timings"}};
  }
  json config = spec;
  config["kept_tokens"] = kept;
  config["pruner"] = {{"hidden", pruner.hidden},
                      {"intermediate", pruner.intermediate},
                      {"heads", pruner.heads}};
  out["provenance"] = provenance("bench", 0, config);
  emit_json(out, a.out);
  return kExitOk;
}

// ---------------------------------------------------------------- viz

struct VizArgs {
  std::string checkpoint;
  std::string data;
  std::size_t index = 0;
  double ratio = 0.5;
  std::uint64_t seed = 0;
  std::string out = "viz";
};

// Blue (low) to red (high).
std::array<float, 3> heat(float t) {
  t = std::clamp(t, 0.0f, 1.0f);
  return {t, 1.0f - std::abs(2.0f * t - 1.0f), 1.0f - t};
}

int cmd_viz(const VizArgs& a) {
  auto data = load_dataset(a.data, "test.fdds");
  if (a.index >= data.size()) throw UsageError("--index out of range");
  const ImageMaskPair& pair = data[a.index];
  TrainState model = load_model(a.checkpoint, a.seed, pair.image.height, "full");
  checked_input([&] {
    retained_count(1, a.ratio);
    if (pair.image.height != model.config.encoder.image_size) {
      fail(ErrorCode::kBadImageSize, "dataset image size does not match the model");
    }
  });

  NoGradGuard guard;
  const EncoderConfig& enc = model.config.encoder;
  TokenSequence seq = model.encoder.encode(pair.image);
  Tensor scores = saliency(seq, model.pruner);
  SaliencyMask mask = binarize(scores);
  TokenSplit parts = split(seq.tokens, mask);
  auto [fore, back] = reconstruct_pair(parts.fore, parts.back, seq.pos_embed, model.decoder);
  const PrunedSequence pruned = prune(seq, scores, a.ratio);

  // Saliency heatmap over the patch grid; dropped tokens are dimmed.
  const auto sv = scores.data();
  const auto [lo, hi] = std::minmax_element(sv.begin(), sv.end());
  const float span = *hi - *lo > 0 ? *hi - *lo : 1.0f;
  std::vector<bool> kept(sv.size(), false);
  for (std::size_t i : pruned.kept_indices) kept[i] = true;
  Image sal(enc.image_size, enc.image_size);
  const std::size_t g = enc.grid(), p = enc.patch_size;
  for (std::size_t r = 0; r < g; ++r) {
    for (std::size_t c = 0; c < g; ++c) {
      const std::size_t i = r * g + c;
      auto rgb = heat((sv[i] - *lo) / span);
      const float dim = kept[i] ? 1.0f : 0.35f;
      for (std::size_t y = 0; y < p; ++y) {
        for (std::size_t x = 0; x < p; ++x) {
          const bool edge = y == 0 || x == 0;
          for (std::size_t ch = 0; ch < 3; ++ch) {
            sal.at(r * p + y, c * p + x, ch) = edge && kept[i] ? 1.0f : rgb[ch] * dim;
          }
        }
      }
    }
  }
  auto clamp_image = [](const Tensor& t) {
    Image img = Image::from_tensor(t);
    for (float& v : img.pixels) v = std::clamp(v, 0.0f, 1.0f);
    return img;
  };

  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_ppm(dir / "input.ppm", pair.image);
  write_ppm(dir / "saliency.ppm", sal);
  write_ppm(dir / "recon_fore.ppm", clamp_image(fore));
  write_ppm(dir / "recon_back.ppm", clamp_image(back));

  const json config = {{"checkpoint", a.checkpoint}, {"data", a.data}, {"index", a.index},
                       {"ratio", a.ratio}};
  json manifest = provenance("viz", model.config.seed, config);
  manifest["images"] = {"input.ppm", "saliency.ppm", "recon_fore.ppm", "recon_back.ppm"};
  manifest["kept_tokens"] = pruned.size();
  manifest["fraction_positive"] = mask.fraction_positive();
  emit_json(manifest, (dir / "viz.json").string());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FastDrive reconstruction-based visual token pruning"};
  app.require_subcommand(1);
  app.set_version_flag("--version", FASTDRIVE_VERSION);
  app.set_config("--config", "", "key=value config file; command-line flags take precedence");

  DatagenArgs dg;
  auto* datagen = app.add_subcommand("datagen", "generate synthetic image/mask datasets");
  datagen->add_option("--count", dg.count, "training pairs")->capture_default_str();
  datagen->add_option("--test-count", dg.test_count, "held-out pairs")->capture_default_str();
  datagen->add_option("--size", dg.size, "image side in pixels")->capture_default_str();
  datagen->add_option("--seed", dg.seed)->capture_default_str();
  datagen->add_option("--min-objects", dg.min_objects)->capture_default_str();
  datagen->add_option("--max-objects", dg.max_objects)->capture_default_str();
  datagen->add_option("--background", dg.background, "mixed|gradient|noise|flat")
      ->capture_default_str();
  datagen->add_option("--out", dg.out, "output directory")->capture_default_str();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train the pruner and reconstruction decoder");
  train_cmd->add_option("--data", tr.data, "dataset file or directory")->required();
  train_cmd->add_option("--epochs", tr.epochs)->capture_default_str();
  train_cmd->add_option("--lr", tr.lr)->capture_default_str();
  train_cmd->add_option("--alpha", tr.alpha, "foreground-stream weight")->capture_default_str();
  train_cmd->add_option("--lambda", tr.lambda, "SSIM weight")->capture_default_str();
  train_cmd->add_option("--mode", tr.mode, "full|fore_only|mask_prediction")
      ->capture_default_str();
  train_cmd->add_option("--seed", tr.seed)->capture_default_str();
  train_cmd->add_option("--batch", tr.batch)->capture_default_str();
  train_cmd->add_option("--limit", tr.limit, "use only the first N pairs (0 = all)")
      ->capture_default_str();
  train_cmd->add_option("--out", tr.out, "output directory")->capture_default_str();

  PruneArgs pr;
  auto* prune_cmd = app.add_subcommand("prune", "score and prune the tokens of one image");
  prune_cmd->add_option("--checkpoint", pr.checkpoint, "trained checkpoint (default: fresh)");
  prune_cmd->add_option("--data", pr.data, "dataset file or directory (default: synthesize)");
  prune_cmd->add_option("--index", pr.index)->capture_default_str();
  prune_cmd->add_option("--image-size", pr.image_size, "side when synthesizing; 456 gives 3249 tokens")
      ->capture_default_str();
  prune_cmd->add_option("--ratio", pr.ratio, "pruning ratio p in [0, 1]");
  prune_cmd->add_option("--keep", pr.keep, "retain exactly this many tokens");
  prune_cmd->add_option("--text-tokens", pr.text_tokens)->capture_default_str();
  prune_cmd->add_option("--seed", pr.seed)->capture_default_str();
  prune_cmd->add_option("--out", pr.out, "output JSON (default: stdout)");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate saliency, retention and reconstruction");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "trained checkpoint (default: fresh)");
  eval_cmd->add_option("--data", ev.data, "dataset file or directory")->required();
  eval_cmd->add_option("--ratios", ev.ratios)->delimiter(',')->capture_default_str();
  eval_cmd->add_option("--thetas", ev.thetas)->delimiter(',')->capture_default_str();
  eval_cmd->add_option("--theta", ev.theta, "headline theta_fg")->capture_default_str();
  eval_cmd->add_option("--seed", ev.seed, "seed of the fresh model")->capture_default_str();
  eval_cmd->add_option("--mode", ev.mode, "mode of the fresh model")->capture_default_str();
  eval_cmd->add_flag("--no-recon", ev.no_recon, "skip reconstruction metrics");
  eval_cmd->add_option("--out", ev.out, "report JSON")->capture_default_str();
  eval_cmd->add_option("--csv", ev.csv, "per-sample CSV");

  BenchArgs be;
  auto* bench_cmd = app.add_subcommand("bench", "FLOPs accounting for pruned vs unpruned prefill");
  bench_cmd->add_option("--layers", be.spec.n_layers)->capture_default_str();
  bench_cmd->add_option("--hidden", be.spec.hidden)->capture_default_str();
  bench_cmd->add_option("--intermediate", be.spec.intermediate)->capture_default_str();
  bench_cmd->add_option("--heads", be.spec.heads)->capture_default_str();
  bench_cmd->add_option("--vocab", be.spec.vocab)->capture_default_str();
  bench_cmd->add_option("--visual", be.spec.visual_tokens)->capture_default_str();
  bench_cmd->add_option("--text", be.spec.text_tokens)->capture_default_str();
  bench_cmd->add_option("--ratio", be.ratio, "pruning ratio (default 0.75)");
  bench_cmd->add_option("--keep", be.keep, "retained visual tokens");
  bench_cmd->add_option("--pruner-hidden", be.pruner_hidden)->capture_default_str();
  bench_cmd->add_option("--pruner-intermediate", be.pruner_intermediate)->capture_default_str();
  bench_cmd->add_option("--pruner-heads", be.pruner_heads)->capture_default_str();
  bench_cmd->add_flag("--time", be.time, "also time a desk-scale forward pass");
  bench_cmd->add_option("--time-layers", be.time_layers)->capture_default_str();
  bench_cmd->add_option("--out", be.out, "output JSON (default: stdout)");

  VizArgs vz;
  auto* viz_cmd = app.add_subcommand("viz", "write input, saliency and reconstruction PPMs");
  viz_cmd->add_option("--checkpoint", vz.checkpoint, "trained checkpoint (default: fresh)");
  viz_cmd->add_option("--data", vz.data, "dataset file or directory")->required();
  viz_cmd->add_option("--index", vz.index)->capture_default_str();
  viz_cmd->add_option("--ratio", vz.ratio, "pruning ratio for the kept-token overlay")
      ->capture_default_str();
  viz_cmd->add_option("--seed", vz.seed)->capture_default_str();
  viz_cmd->add_option("--out", vz.out, "output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*datagen) return cmd_datagen(dg);
    if (*train_cmd) return cmd_train(tr);
    if (*prune_cmd) return cmd_prune(pr);
    if (*eval_cmd) return cmd_eval(ev);
    if (*bench_cmd) return cmd_bench(be);
    if (*viz_cmd) return cmd_viz(vz);
  } catch (const UsageError& e) {
    std::cerr << "fastdrive: error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "fastdrive: error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "fastdrive: error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

// SPDX-License-Identifier: Apache-2.0
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>
#include <cstring>

#include "fastdrive/datagen.hpp"
#include "fastdrive/error.hpp"
#include "fastdrive/eval.hpp"
#include "fastdrive/flops.hpp"
#include "fastdrive/losses.hpp"
#include "fastdrive/masking.hpp"
#include "fastdrive/prune_infer.hpp"
#include "fastdrive/training.hpp"

namespace py = pybind11;
using namespace fastdrive;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

py::array_t<float> to_numpy(const std::vector<float>& v, std::vector<py::ssize_t> shape) {
  py::array_t<float> out(shape);
  std::memcpy(out.mutable_data(), v.data(), v.size() * sizeof(float));
  return out;
}

py::array_t<float> to_numpy(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  return to_numpy(t.to_vector(), shape);
}

Image image_from_numpy(const FloatArray& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) {
    throw py::value_error("image must have shape (H, W, 3)");
  }
  Image img(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), img.pixels.begin());
  return img;
}

Tensor tensor_from_numpy(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

py::tuple scene(std::size_t size, std::uint64_t seed, std::uint64_t index) {
  SceneConfig sc;
  sc.size = size;
  sc.seed = seed;
  const ImageMaskPair p = generate_scene(sc, index);
  py::array_t<std::uint8_t> mask({static_cast<py::ssize_t>(p.mask.height),
                                  static_cast<py::ssize_t>(p.mask.width)});
  std::copy(p.mask.values.begin(), p.mask.values.end(), mask.mutable_data());
  return py::make_tuple(to_numpy(p.image.pixels, {static_cast<py::ssize_t>(p.image.height),
                                                  static_cast<py::ssize_t>(p.image.width), 3}),
                        mask);
}

// Inference-side view of a trained or freshly initialized model.
class Model {
 public:
  explicit Model(TrainState state) : state_(std::move(state)) {}

  static Model load(const std::filesystem::path& path) { return Model(load_checkpoint(path)); }
  static Model fresh(std::uint64_t seed, std::size_t image_size) {
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.encoder.image_size = image_size;
    return Model(TrainState(cfg));
  }

  py::array_t<float> saliency_scores(const FloatArray& image) const {
    NoGradGuard guard;
    Tensor s = saliency(state_.encoder.encode(image_from_numpy(image)), state_.pruner);
    return to_numpy(s.to_vector(), {static_cast<py::ssize_t>(s.numel())});
  }

  std::vector<std::size_t> prune_indices(const FloatArray& image, double ratio) const {
    NoGradGuard guard;
    TokenSequence seq = state_.encoder.encode(image_from_numpy(image));
    return prune(seq, saliency(seq, state_.pruner), ratio).kept_indices;
  }

  py::tuple reconstruct(const FloatArray& image) const {
    NoGradGuard guard;
    TokenSequence seq = state_.encoder.encode(image_from_numpy(image));
    TokenSplit parts = split(seq.tokens, binarize(saliency(seq, state_.pruner)));
    auto [fore, back] = reconstruct_pair(parts.fore, parts.back, seq.pos_embed, state_.decoder);
    return py::make_tuple(to_numpy(fore), to_numpy(back));
  }

  std::string config_json() const { return config_to_json(state_.config); }
  std::size_t num_tokens() const { return state_.config.encoder.num_tokens(); }
  std::size_t image_size() const { return state_.config.encoder.image_size; }

 private:
  TrainState state_;
};

}  // namespace

PYBIND11_MODULE(_fastdrive, m) {
  m.doc() = "Reconstruction-based visual token pruning";
  m.attr("__version__") = FASTDRIVE_VERSION;

  py::register_exception<Error>(m, "FastDriveError", PyExc_RuntimeError);

  m.def("scene", &scene, py::arg("size") = 96, py::arg("seed") = 0, py::arg("index") = 0,
        "Synthetic (image[H,W,3] float32, mask[H,W] uint8) pair.");
  m.def("retained_count", &retained_count, py::arg("n"), py::arg("ratio"));
  m.def(
      "top_k_indices",
      [](const FloatArray& scores, std::size_t k) {
        return top_k_indices(std::span<const float>(scores.data(), scores.size()), k);
      },
      py::arg("scores"), py::arg("k"), "Top-k indices, ties to lower index, ascending order.");
  m.def(
      "ssim",
      [](const FloatArray& a, const FloatArray& b, std::size_t window) {
        LossConfig cfg;
        cfg.ssim_window = window;
        return static_cast<double>(ssim(tensor_from_numpy(a), tensor_from_numpy(b), cfg).item());
      },
      py::arg("a"), py::arg("b"), py::arg("window") = 11);
  m.def(
      "saliency_auroc",
      [](const FloatArray& scores, const std::vector<bool>& fg) {
        return saliency_auroc(std::span<const float>(scores.data(), scores.size()), fg);
      },
      py::arg("scores"), py::arg("foreground"));
  m.def(
      "prefill_flops",
      [](std::size_t layers, std::size_t hidden, std::size_t intermediate, std::size_t heads,
         std::size_t visual, std::size_t text, std::size_t vocab) {
        ModelSpec s;
        s.n_layers = layers;
        s.hidden = hidden;
        s.intermediate = intermediate;
        s.heads = heads;
        s.visual_tokens = visual;
        s.text_tokens = text;
        s.vocab = vocab;
        return prefill_flops(s);
      },
      py::arg("layers") = 28, py::arg("hidden") = 64, py::arg("intermediate") = 256,
      py::arg("heads") = 4, py::arg("visual") = 3249, py::arg("text") = 0, py::arg("vocab") = 0);

  py::class_<Model>(m, "Model")
      .def_static("load", &Model::load, py::arg("path"))
      .def_static("fresh", &Model::fresh, py::arg("seed") = 0, py::arg("image_size") = 96)
      .def("saliency", &Model::saliency_scores, py::arg("image"))
      .def("prune", &Model::prune_indices, py::arg("image"), py::arg("ratio"))
      .def("reconstruct", &Model::reconstruct, py::arg("image"))
      .def_property_readonly("config_json", &Model::config_json)
      .def_property_readonly("num_tokens", &Model::num_tokens)
      .def_property_readonly("image_size", &Model::image_size);
}

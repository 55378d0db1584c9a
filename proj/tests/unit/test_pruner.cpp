// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <numeric>

#include "doctest.h"
#include "fastdrive/encoder.hpp"
#include "fastdrive/error.hpp"
#include "fastdrive/masking.hpp"
#include "fastdrive/ops.hpp"
#include "fastdrive/pruner.hpp"
#include "gradcheck.hpp"

using namespace fastdrive;
using fastdrive::testing::grad_check;
using fastdrive::testing::project;

namespace {

LayerConfig tiny_layer() { return {8, 16, 2}; }

TokenSequence random_sequence(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TokenSequence seq;
  seq.tokens = Tensor::randn({n, d}, rng, 1.0f);
  seq.pos_embed = Tensor::randn({n, d}, rng, 0.5f);
  for (std::size_t i = 0; i < n; ++i) seq.grid_coords.emplace_back(0, i);
  return seq;
}

// Layer weights scaled up so attention is far from uniform.
PrunerParams lively_params(const LayerConfig& cfg, std::uint64_t seed) {
  PrunerParams p = PrunerParams::init(cfg, seed);
  std::mt19937_64 rng(seed + 100);
  ParamList all = p.parameters();
  for (auto& e : all) {
    if (e.name.find("gamma") != std::string::npos) continue;
    Tensor r = Tensor::randn(e.tensor.shape(), rng, 0.3f);
    std::copy(r.data().begin(), r.data().end(), e.tensor.data().begin());
  }
  return p;
}

}  // namespace

TEST_CASE("zero layer weights give a residual passthrough") {
  LayerConfig cfg = tiny_layer();
  PrunerParams p = PrunerParams::zeros(cfg);
  std::mt19937_64 rng(1);
  Tensor q = Tensor::randn({1, 8}, rng, 1.0f);
  std::copy(q.data().begin(), q.data().end(), p.query.data().begin());
  TokenSequence seq = random_sequence(1, 8, 2);
  PrunerOutput out = pruner_forward(seq, p);
  CHECK(out.q_star.to_vector() == q.to_vector());
  CHECK(out.v_star.to_vector() == add(seq.tokens, seq.pos_embed).to_vector());
}

TEST_CASE("permuting tokens permutes the pruner outputs") {
  LayerConfig cfg = tiny_layer();
  PrunerParams p = lively_params(cfg, 3);
  TokenSequence seq = random_sequence(6, 8, 4);
  std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  TokenSequence shuffled;
  shuffled.tokens = gather_rows(seq.tokens, perm);
  shuffled.pos_embed = gather_rows(seq.pos_embed, perm);
  PrunerOutput a = pruner_forward(seq, p), b = pruner_forward(shuffled, p);
  for (std::size_t j = 0; j < perm.size(); ++j) {
    for (std::size_t d = 0; d < 8; ++d) {
      CHECK(b.v_star.data()[j * 8 + d] ==
            doctest::Approx(a.v_star.data()[perm[j] * 8 + d]).epsilon(1e-5));
    }
  }
  for (std::size_t d = 0; d < 8; ++d) {
    CHECK(b.q_star.data()[d] == doctest::Approx(a.q_star.data()[d]).epsilon(1e-5));
  }
}

TEST_CASE("query gradient through the pruner matches finite differences") {
  LayerConfig cfg = tiny_layer();
  PrunerParams p = lively_params(cfg, 5);
  TokenSequence seq = random_sequence(5, 8, 6);
  std::mt19937_64 rng(7);
  Tensor wq = Tensor::randn({1, 8}, rng, 1.0f), wv = Tensor::randn({5, 8}, rng, 1.0f);
  auto loss = [&] {
    PrunerOutput o = pruner_forward(seq, p);
    return add(project(o.q_star, wq), project(o.v_star, wv));
  };
  CHECK(grad_check(loss, p.query).rel_error < 1e-3);
  Tensor ws = Tensor::randn({5, 1}, rng, 1.0f);
  auto score_loss = [&] { return project(saliency(seq, p), ws); };
  CHECK(grad_check(score_loss, p.query).rel_error < 1e-3);
  CHECK(grad_check(score_loss, p.scorer_w).rel_error < 1e-3);
  CHECK(grad_check(score_loss, p.layer.wk).rel_error < 1e-3);
}

TEST_CASE("scorer examples") {
  PrunerParams p = PrunerParams::zeros({2, 4, 1});

  SUBCASE("hand-computed two-token case") {
    std::copy_n(std::vector<float>{1, 1}.begin(), 2, p.scorer_w.data().begin());
    Tensor v({2, 2}, {1, 2, 3, 4});
    Tensor q({1, 2}, {0.5f, -1.0f});
    // Brute force: S_i = sum_d V[i,d] * Q[d] * W[d] + b.
    std::vector<float> expect(2);
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t d = 0; d < 2; ++d) {
        expect[i] += v.data()[i * 2 + d] * q.data()[d] * p.scorer_w.data()[d];
      }
    }
    CHECK(expect == std::vector<float>{-1.5f, -2.5f});
    CHECK(score(q, v, p).to_vector() == expect);
  }
  SUBCASE("zero query gives the bias everywhere") {
    std::mt19937_64 rng(1);
    Tensor w = Tensor::randn({2, 1}, rng, 1.0f);
    std::copy(w.data().begin(), w.data().end(), p.scorer_w.data().begin());
    p.scorer_b.data()[0] = -0.3f;
    Tensor s = score(Tensor::zeros({1, 2}), Tensor::randn({5, 2}, rng, 1.0f), p);
    for (float v : s.data()) CHECK(v == -0.3f);
  }
  SUBCASE("zero weight gives the bias everywhere") {
    p.scorer_b.data()[0] = 0.7f;
    std::mt19937_64 rng(2);
    Tensor s = score(Tensor::randn({1, 2}, rng, 1.0f), Tensor::randn({4, 2}, rng, 1.0f), p);
    CHECK(s.shape() == Shape{4, 1});
    for (float v : s.data()) CHECK(v == 0.7f);
  }
  SUBCASE("width mismatch") {
    try {
      score(Tensor::zeros({1, 3}), Tensor::zeros({4, 3}), p);
      FAIL("expected DimMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kDimMismatch);
    }
  }
}

TEST_CASE("zero-initialised pruner scores every token identically") {
  PrunerParams p = PrunerParams::zeros(tiny_layer());
  p.scorer_b.data()[0] = 0.25f;
  Tensor s = saliency(random_sequence(9, 8, 3), p);
  for (float v : s.data()) CHECK(v == 0.25f);
}

TEST_CASE("attention is full: changing any token changes every score") {
  PrunerParams p = lively_params(tiny_layer(), 9);
  TokenSequence seq = random_sequence(6, 8, 10);
  const auto base = saliency(seq, p).to_vector();
  for (std::size_t t = 0; t < 6; ++t) {
    TokenSequence mod = seq;
    mod.tokens = Tensor(seq.tokens.shape(), seq.tokens.to_vector());
    mod.tokens.data()[t * 8 + 3] += 0.5f;
    const auto s = saliency(mod, p).to_vector();
    for (std::size_t i = 0; i < 6; ++i) CHECK(s[i] != base[i]);
  }
}

TEST_CASE("gradients reach query, scorer and layer") {
  PrunerParams p = PrunerParams::init(LayerConfig{}, 11);
  Encoder enc(EncoderConfig{});
  Image img(96, 96);
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<float> u(0, 1);
  for (float& v : img.pixels) v = u(rng);
  Tensor w = Tensor::randn({144, 1}, rng, 1.0f);
  backward(project(saliency(enc.encode(img), p), w));
  for (const auto& e : p.parameters()) {
    REQUIRE(e.tensor.has_grad());
    double norm = 0;
    for (float g : e.tensor.grad()) norm += g * g;
    CHECK_MESSAGE(norm > 0, e.name);
  }
}

TEST_CASE("parameter count") {
  SUBCASE("desk dims: formula equals enumeration") {
    LayerConfig cfg;  // 64, 256, 4 heads
    PrunerParams p = PrunerParams::init(cfg, 0);
    PrunerParamCount counted = param_count(p);
    // Independent tally of every tensor.
    const std::size_t d = 64, i = 256;
    const std::size_t norms = 4 * d, attn = 4 * d * d + 3 * d, mlp = 3 * d * i;
    CHECK(counted.query == d);
    CHECK(counted.scorer == d + 1);
    CHECK(counted.layer == norms + attn + mlp);
    CHECK(counted.total() == param_count(cfg).total());
    CHECK(counted.total() == total_elements(p.parameters()));
  }
  SUBCASE("3B-class dims land near 0.07-0.09B") {
    PrunerParamCount c = param_count(LayerConfig{2048, 11008, 16});
    CHECK(c.scorer == 2049);
    const double billions = static_cast<double>(c.total()) / 1e9;
    CHECK(billions > 0.07);
    CHECK(billions < 0.09);
  }
}

TEST_CASE("binarize uses a strict threshold") {
  SaliencyMask m = binarize(Tensor({3, 1}, {0.5f, -0.2f, 0.0f}));
  CHECK(m.hard == std::vector<std::uint8_t>{1, 0, 0});
  CHECK(m.m_tilde.to_vector() == std::vector<float>{1, 0, 0});
  CHECK(m.fraction_positive() == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("straight-through mask forward equals the hard threshold bitwise") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor s = Tensor::randn({37, 1}, rng, 1.0f, true);
    SaliencyMask m = binarize(s);
    bool exact = true;
    for (std::size_t i = 0; i < 37; ++i) {
      const float hard = s.data()[i] > 0.0f ? 1.0f : 0.0f;
      exact = exact && m.m_tilde.data()[i] == hard && m.hard[i] == hard;
    }
    CHECK(exact);
  }
}

TEST_CASE("gradient of sum of the mask is all ones") {
  Tensor s({5, 1}, {-2, -1, 0, 1, 2}, true);
  backward(sum(binarize(s).m_tilde));
  for (float g : s.grad()) CHECK(g == 1.0f);
}

TEST_CASE("all-negative scores pad every foreground slot") {
  std::mt19937_64 rng(14);
  Tensor v = Tensor::randn({6, 4}, rng, 1.0f);
  SaliencyMask m = binarize(Tensor::full({6, 1}, -0.1f));
  TokenSplit parts = split(v, m);
  for (float x : parts.fore.data()) CHECK(x == 0.0f);
  CHECK(parts.back.to_vector() == v.to_vector());

  SaliencyMask all_on = binarize(Tensor::full({6, 1}, 0.1f));
  TokenSplit on = split(v, all_on);
  CHECK(on.fore.to_vector() == v.to_vector());
  for (float x : on.back.data()) CHECK(x == 0.0f);
}

TEST_CASE("split length mismatch") {
  try {
    split(Tensor::zeros({4, 2}), binarize(Tensor::zeros({3, 1})));
    FAIL("expected DimMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDimMismatch);
  }
}

TEST_CASE("split gradient matches the frozen surrogate") {
  std::mt19937_64 rng(15);
  Tensor v = Tensor::randn({7, 5}, rng, 1.0f);
  Tensor s = Tensor::randn({7, 1}, rng, 1.0f, true);
  SaliencyMask base = binarize(s);
  // c = M - S at the base point, held constant while S is perturbed.
  Tensor c = sub(base.m_tilde.detach(), s.detach());
  Tensor wf = Tensor::randn({7, 5}, rng, 1.0f), wb = Tensor::randn({7, 5}, rng, 1.0f);

  s.zero_grad();
  TokenSplit parts = split(v, base);
  backward(add(project(parts.fore, wf), project(parts.back, wb)));
  std::vector<float> ste(s.grad().begin(), s.grad().end());

  auto surrogate = [&] {
    SaliencyMask m;
    m.hard = base.hard;
    m.scores = s;
    m.m_tilde = add(s, c);
    TokenSplit p = split(v, m);
    return add(project(p.fore, wf), project(p.back, wb));
  };
  auto r = grad_check(surrogate, s);
  CHECK(r.rel_error < 1e-3);
  for (std::size_t i = 0; i < ste.size(); ++i) {
    CHECK(ste[i] == doctest::Approx(s.grad()[i]).epsilon(1e-6));
  }
}

TEST_CASE("fraction positive") {
  CHECK(fraction_positive(Tensor({4, 1}, {1, -1, 2, 0})) == 0.5);
  CHECK(fraction_positive(Tensor::full({3, 1}, -1.0f)) == 0.0);
}

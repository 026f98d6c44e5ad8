// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "seau/checkpoint.hpp"
#include "seau/error.hpp"
#include "seau/optim.hpp"
#include "seau/tensor.hpp"
#include "test_util.hpp"

using namespace seau;
using namespace seau::ad;
using seau::testing::grad_check;
using seau::testing::nudge_from_zero;

namespace {

constexpr uint64_t kSeeds[] = {11, 22, 33, 44, 55};
constexpr double kGradTol = 1e-4;

// Random probe so the scalar loss exercises every output element.
Tensor probe_loss(const Tensor& out, uint64_t seed) {
  Tensor r = Tensor::randn(out.shape(), RngStream(seed ^ 0xfeed), 1.0f, false);
  return mean(mul(out, r));
}

}  // namespace

TEST_CASE("elementwise op gradients match finite differences") {
  struct Case {
    const char* name;
    Tensor (*op)(const Tensor&);
    bool needs_nudge;
    bool positive_only;
  };
  const Case cases[] = {
      {"relu", relu, true, false},   {"gelu", gelu, false, false},
      {"swish", swish, false, false}, {"tanh", tanh, false, false},
      {"sigmoid", sigmoid, false, false}, {"exp", exp, false, false},
      {"log", log, false, true},
  };
  for (const Case& c : cases) {
    CAPTURE(c.name);
    for (uint64_t seed : kSeeds) {
      RngStream rng(seed);
      Tensor x = Tensor::randn({4, 6}, rng.fork("x"), 0.8f);
      if (c.positive_only) {
        for (float& v : x.values_mut()) v = 0.3f + std::abs(v);
      }
      if (c.needs_nudge) nudge_from_zero(x, 0.05f);
      auto f = [&](std::vector<Tensor>& in) { return probe_loss(c.op(in[0]), seed); };
      CHECK(grad_check(f, {x}) < kGradTol);
    }
  }
}

TEST_CASE("matmul / add / mul / transpose gradients") {
  for (uint64_t seed : kSeeds) {
    RngStream rng(seed);
    Tensor a = Tensor::randn({3, 5}, rng.fork("a"), 0.7f);
    Tensor b = Tensor::randn({5, 4}, rng.fork("b"), 0.7f);
    Tensor c = Tensor::randn({3, 4}, rng.fork("c"), 0.7f);
    Tensor row = Tensor::randn({4}, rng.fork("row"), 0.7f);
    auto f = [&](std::vector<Tensor>& in) {
      Tensor mm = matmul(in[0], in[1]);
      Tensor t = transpose(transpose(mm));
      return probe_loss(mul(add(add(t, in[3]), in[2]), sub(t, in[2])), seed);
    };
    CHECK(grad_check(f, {a, b, c, row}) < kGradTol);
  }
}

TEST_CASE("reshape / slice / concat gradients") {
  for (uint64_t seed : kSeeds) {
    RngStream rng(seed);
    Tensor a = Tensor::randn({4, 6}, rng.fork("a"), 0.8f);
    Tensor b = Tensor::randn({2, 6}, rng.fork("b"), 0.8f);
    auto f = [&](std::vector<Tensor>& in) {
      Tensor top = slice_rows(in[0], 0, 2);
      Tensor bottom = slice_rows(in[0], 2, 4);
      Tensor wide = concat_cols({top, bottom});            // 2 x 12
      Tensor stack = concat_rows({wide, reshape(in[1], {1, 12})});
      return probe_loss(slice_cols(stack, 3, 11), seed);
    };
    CHECK(grad_check(f, {a, b}) < kGradTol);
  }
}

TEST_CASE("softmax and layer_norm gradients") {
  for (uint64_t seed : kSeeds) {
    RngStream rng(seed);
    Tensor x = Tensor::randn({3, 7}, rng.fork("x"), 1.0f);
    Tensor g = Tensor::randn({7}, rng.fork("g"), 0.5f);
    Tensor b = Tensor::randn({7}, rng.fork("b"), 0.5f);
    for (float& v : g.values_mut()) v += 1.0f;
    auto f = [&](std::vector<Tensor>& in) {
      return probe_loss(softmax_rows(layer_norm(in[0], in[1], in[2])), seed);
    };
    CHECK(grad_check(f, {x, g, b}) < kGradTol);
  }
}

TEST_CASE("conv2d and depthwise_conv1d gradients") {
  for (uint64_t seed : kSeeds) {
    RngStream rng(seed);
    Tensor x = Tensor::randn({2, 6, 5}, rng.fork("x"), 0.8f);
    Tensor w = Tensor::randn({3, 2, 3, 3}, rng.fork("w"), 0.5f);
    Tensor b = Tensor::randn({3}, rng.fork("b"), 0.5f);
    auto f = [&](std::vector<Tensor>& in) {
      return probe_loss(conv2d(in[0], in[1], in[2], 2, 1), seed);
    };
    CHECK(grad_check(f, {x, w, b}) < kGradTol);

    Tensor xt = Tensor::randn({7, 4}, rng.fork("xt"), 0.8f);
    Tensor wk = Tensor::randn({5, 4}, rng.fork("wk"), 0.5f);
    Tensor bk = Tensor::randn({4}, rng.fork("bk"), 0.5f);
    auto fd = [&](std::vector<Tensor>& in) {
      return probe_loss(depthwise_conv1d(in[0], in[1], in[2]), seed);
    };
    CHECK(grad_check(fd, {xt, wk, bk}) < kGradTol);
  }
}

TEST_CASE("embedding_lookup gradient accumulates over repeated ids") {
  for (uint64_t seed : kSeeds) {
    RngStream rng(seed);
    Tensor table = Tensor::randn({6, 4}, rng.fork("t"), 0.8f);
    std::vector<int> ids = {3, 1, 3, 0, 3};
    auto f = [&](std::vector<Tensor>& in) {
      return probe_loss(embedding_lookup(in[0], ids), seed);
    };
    CHECK(grad_check(f, {table}) < kGradTol);
  }
}

TEST_CASE("cross_entropy / cosine / normalize / mask_rows / dropout gradients") {
  for (uint64_t seed : kSeeds) {
    RngStream rng(seed);
    Tensor logits = Tensor::randn({5, 4}, rng.fork("l"), 1.2f);
    std::vector<int> targets = {1, 3, 0, 2, 2};
    std::vector<uint8_t> mask = {1, 0, 1, 1, 0};
    auto f_ce = [&](std::vector<Tensor>& in) { return cross_entropy(in[0], targets, mask); };
    CHECK(grad_check(f_ce, {logits}) < kGradTol);

    Tensor a = Tensor::randn({6}, rng.fork("a"), 1.0f);
    Tensor b = Tensor::randn({6}, rng.fork("b"), 1.0f);
    auto f_cos = [&](std::vector<Tensor>& in) { return cosine_similarity(in[0], in[1]); };
    CHECK(grad_check(f_cos, {a, b}) < kGradTol);

    Tensor m = Tensor::randn({4, 5}, rng.fork("m"), 1.0f);
    auto f_norm = [&](std::vector<Tensor>& in) { return probe_loss(row_l2_normalize(in[0]), seed); };
    CHECK(grad_check(f_norm, {m}) < kGradTol);

    Tensor x = Tensor::randn({5, 3}, rng.fork("x"), 0.8f);
    Tensor emb = Tensor::randn({3}, rng.fork("e"), 0.8f);
    std::vector<uint8_t> rows = {0, 1, 0, 1, 1};
    auto f_mask = [&](std::vector<Tensor>& in) {
      return probe_loss(mask_rows(in[0], rows, in[1]), seed);
    };
    CHECK(grad_check(f_mask, {x, emb}) < kGradTol);

    Tensor xd = Tensor::randn({4, 6}, rng.fork("xd"), 0.8f);
    auto f_drop = [&](std::vector<Tensor>& in) {
      return probe_loss(dropout(in[0], 0.3f, RngStream(seed * 31), true), seed);
    };
    CHECK(grad_check(f_drop, {xd}) < kGradTol);
  }
}

TEST_CASE("composite two-layer network gradient") {
  for (uint64_t seed : kSeeds) {
    RngStream rng(seed);
    Tensor x = Tensor::randn({4, 5}, rng.fork("x"), 0.8f);
    Tensor w1 = Tensor::randn({5, 8}, rng.fork("w1"), 0.5f);
    Tensor b1 = Tensor::randn({8}, rng.fork("b1"), 0.2f);
    Tensor w2 = Tensor::randn({8, 3}, rng.fork("w2"), 0.5f);
    std::vector<int> targets = {0, 2, 1, 2};
    std::vector<uint8_t> mask = {1, 1, 1, 1};
    auto f = [&](std::vector<Tensor>& in) {
      Tensor h = gelu(add(matmul(in[0], in[1]), in[2]));
      return cross_entropy(matmul(h, in[3]), targets, mask);
    };
    CHECK(grad_check(f, {x, w1, b1, w2}) < kGradTol);
  }
}

TEST_CASE("backward contracts") {
  Tensor w = Tensor::randn({3, 3}, RngStream(1), 1.0f);
  Tensor loss = sum(w);
  backward(loss);
  for (float g : w.grad()) CHECK(g == 1.0f);

  // loss = 0 * f(w) has zero gradient everywhere.
  w.zero_grad();
  Tensor loss2 = scale(sum(tanh(w)), 0.0f);
  backward(loss2);
  for (float g : w.grad()) CHECK(g == 0.0f);

  // Second backward on the same loss is a state error.
  CHECK_THROWS_AS(backward(loss), StateError);

  // Non-scalar loss rejected.
  CHECK_THROWS_AS(backward(tanh(w)), ShapeError);
}

TEST_CASE("gradient accumulates across backward calls until zero_grad") {
  Tensor w = Tensor::full({2}, 1.0f, true);
  backward(sum(w));
  backward(sum(w));
  for (float g : w.grad()) CHECK(g == 2.0f);
  w.zero_grad();
  for (float g : w.grad()) CHECK(g == 0.0f);
}

TEST_CASE("shape errors name both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 5});
  try {
    (void)matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4,5]") != std::string::npos);
  }
}

TEST_CASE("non-finite results raise NumericError") {
  Tensor x = Tensor::full({2}, -1.0f);
  CHECK_THROWS_AS((void)log(x), NumericError);
}

TEST_CASE("cosine similarity basics and scale invariance") {
  RngStream rng(9);
  Tensor v = Tensor::randn({8}, rng.fork("v"), 1.0f, false);
  CHECK(cosine_similarity(v, v).scalar() == doctest::Approx(1.0).epsilon(1e-6));
  for (uint64_t seed : kSeeds) {
    RngStream r2(seed);
    Tensor a = Tensor::randn({8}, r2.fork("a"), 1.0f, false);
    Tensor b = Tensor::randn({8}, r2.fork("b"), 1.0f, false);
    float base = cosine_similarity(a, b).scalar();
    float scaled = cosine_similarity(scale(a, 3.7f), scale(b, 0.02f)).scalar();
    CHECK(std::abs(base - scaled) < 1e-6);
  }
}

TEST_CASE("softmax of equal logits is uniform") {
  const int c = 7;
  Tensor x = Tensor::full({1, c}, 2.5f);
  Tensor p = softmax_rows(x);
  for (float v : p.values()) CHECK(v == doctest::Approx(1.0 / c).epsilon(1e-7));
}

TEST_CASE("layer_norm output is standardized per row") {
  RngStream rng(77);
  Tensor x = Tensor::randn({10, 32}, rng, 2.0f, false);
  Tensor g = Tensor::full({32}, 1.0f);
  Tensor b = Tensor::zeros({32});
  Tensor y = layer_norm(x, g, b);
  for (int64_t i = 0; i < 10; ++i) {
    double mean = 0.0, var = 0.0;
    for (int64_t j = 0; j < 32; ++j) mean += y.at(i * 32 + j);
    mean /= 32.0;
    for (int64_t j = 0; j < 32; ++j) {
      double d = y.at(i * 32 + j) - mean;
      var += d * d;
    }
    var /= 32.0;
    CHECK(std::abs(mean) < 1e-5);
    CHECK(std::abs(var - 1.0) < 1e-3);
  }
}

TEST_CASE("dropout is identity in eval and seeded in train") {
  RngStream rng(4);
  Tensor x = Tensor::randn({20, 10}, rng, 1.0f, false);
  Tensor eval_out = dropout(x, 0.4f, RngStream(123), false);
  CHECK(seau::testing::bits_equal(eval_out.values(), x.values()));

  Tensor t1 = dropout(x, 0.4f, RngStream(123), true);
  Tensor t2 = dropout(x, 0.4f, RngStream(123), true);
  CHECK(seau::testing::bits_equal(t1.values(), t2.values()));

  // Dropped fraction near p for a large tensor.
  int64_t zeros = 0;
  for (float v : t1.values()) {
    if (v == 0.0f) ++zeros;
  }
  double frac = static_cast<double>(zeros) / static_cast<double>(t1.numel());
  CHECK(frac > 0.25);
  CHECK(frac < 0.55);

  CHECK_THROWS_AS((void)dropout(x, 1.0f, RngStream(1), true), ConfigError);
}

// ---- optimizer ----

namespace {

// Step-by-step double-precision reference for one parameter vector.
struct RefAdam {
  std::vector<double> m, v;
  int64_t t = 0;
  void step(std::vector<double>& p, const std::vector<double>& g, double lr, double b1, double b2,
            double eps) {
    if (m.empty()) {
      m.assign(p.size(), 0.0);
      v.assign(p.size(), 0.0);
    }
    ++t;
    for (size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      double mh = m[i] / (1 - std::pow(b1, static_cast<double>(t)));
      double vh = v[i] / (1 - std::pow(b2, static_cast<double>(t)));
      p[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
};

}  // namespace

TEST_CASE("first Adam step on a unit gradient matches the closed form") {
  ParameterGroup g("p");
  Tensor p = g.add("w", Tensor::full({1}, 0.5f, true));
  p.grad_mut()[0] = 1.0f;
  AdamState state;
  AdamConfig cfg;
  cfg.clip_norm = 0.0;
  adam_step({&g}, state, cfg, 0.01f);
  // update = -lr * 1 / (1 + eps)
  double want = 0.5 - 0.01 * (1.0 / (1.0 + 1e-8));
  CHECK(std::abs(g.params[0].values()[0] - want) < 1e-7);
}

TEST_CASE("grad_scale matches the double-precision oracle and keeps direction") {
  for (float gs : {1.0f, 0.1f}) {
    ParameterGroup grp("p", false, gs);
    Tensor p = grp.add("w", Tensor::from_values({3}, {0.4f, -0.2f, 0.9f}, true));
    AdamState state;
    AdamConfig cfg;
    cfg.clip_norm = 0.0;

    std::vector<double> ref_p = {0.4, -0.2, 0.9};
    RefAdam ref;
    std::vector<std::vector<float>> grads = {{0.3f, -0.7f, 0.1f}, {0.2f, 0.1f, -0.4f},
                                             {-0.6f, 0.5f, 0.2f}};
    for (const auto& gr : grads) {
      auto gm = p.grad_mut();
      std::copy(gr.begin(), gr.end(), gm.begin());
      adam_step({&grp}, state, cfg, 0.005f);
      std::vector<double> gd(gr.begin(), gr.end());
      for (double& x : gd) x *= gs;
      ref.step(ref_p, gd, 0.005, 0.9, 0.98, 1e-8);
      for (size_t i = 0; i < 3; ++i) {
        CHECK(std::abs(grp.params[0].values()[i] - ref_p[i]) < 1e-6);
      }
    }
  }
}

TEST_CASE("frozen groups stay bit-identical and grads are cleared") {
  ParameterGroup frozen("ext", true);
  ParameterGroup live("enc");
  Tensor pf = frozen.add("w", Tensor::randn({4}, RngStream(3), 1.0f));
  Tensor pl = live.add("w", Tensor::randn({4}, RngStream(4), 1.0f));
  std::vector<float> before(pf.values().begin(), pf.values().end());
  for (auto g : {&pf, &pl}) {
    auto gm = g->grad_mut();
    for (float& x : gm) x = 0.5f;
  }
  AdamState state;
  adam_step({&frozen, &live}, state, AdamConfig{}, 0.01f);
  CHECK(seau::testing::bits_equal(pf.values(), before));
  for (float g : pf.grad()) CHECK(g == 0.0f);
  bool moved = false;
  for (size_t i = 0; i < 4; ++i) {
    if (pl.values()[i] != 0.0f && pl.grad()[i] == 0.0f) moved = true;
  }
  CHECK(moved);
}

TEST_CASE("global-norm clip bounds the applied gradient") {
  ParameterGroup grp("p");
  Tensor p = grp.add("w", Tensor::zeros({2}, true));
  auto gm = p.grad_mut();
  gm[0] = 30.0f;
  gm[1] = 40.0f;  // norm 50
  AdamState state;
  AdamConfig cfg;
  cfg.clip_norm = 5.0;
  double norm = adam_step({&grp}, state, cfg, 0.001f);
  CHECK(norm == doctest::Approx(50.0));
  // After clipping the effective gradient is (3, 4); Adam normalizes again,
  // so just check the update happened and is finite and small.
  CHECK(std::abs(p.values()[0]) < 0.0011);
  CHECK(std::abs(p.values()[1]) < 0.0011);
}

TEST_CASE("lr schedules") {
  LrSchedule lin = LrSchedule::warmup_linear_decay(8000, 0.0005, 400000);
  CHECK(lr_at(lin, 0) == doctest::Approx(0.0));
  CHECK(lr_at(lin, 4000) == doctest::Approx(0.00025));
  CHECK(lr_at(lin, 8000) == doctest::Approx(0.0005));
  CHECK(lr_at(lin, 400000) == doctest::Approx(0.0));
  CHECK(lr_at(lin, 500000) == doctest::Approx(0.0));  // clamps past the end
  // Linear between warmup and total.
  CHECK(lr_at(lin, (8000 + 400000) / 2) == doctest::Approx(0.00025));

  const int64_t spe = 100;
  LrSchedule hh = LrSchedule::warmup_hold_halve(80, 0.0007, spe, 15);
  CHECK(lr_at(hh, 80) == doctest::Approx(0.0007));
  CHECK(lr_at(hh, 40) == doctest::Approx(0.00035));
  // End of epoch 15 -> peak/2.
  CHECK(lr_at(hh, 15 * spe) == doctest::Approx(0.00035));
  // Start of epoch 17 -> (peak/2) * 0.5.
  CHECK(lr_at(hh, 16 * spe) == doctest::Approx(0.000175));
  // Start of epoch 18 -> (peak/2) * 0.25.
  CHECK(lr_at(hh, 17 * spe) == doctest::Approx(0.0000875));
  CHECK_THROWS_AS((void)lr_at(hh, -1), ConfigError);
}

TEST_CASE("checkpoint round-trips tensors and adam state bit-exactly") {
  namespace fs = std::filesystem;
  fs::path path = fs::temp_directory_path() / "seau_test_ckpt.bin";

  ParameterGroup grp("enc");
  Tensor w = grp.add("w", Tensor::randn({3, 4}, RngStream(8), 0.7f));
  Tensor b = grp.add("b", Tensor::randn({4}, RngStream(9), 0.7f));
  auto gm = w.grad_mut();
  for (float& g : gm) g = 0.25f;
  AdamState state;
  adam_step({&grp}, state, AdamConfig{}, 0.01f);

  Checkpoint out;
  out.config = {{"arch", "test"}, {"dim", 4}};
  out.add_groups({&grp});
  out.add_adam(state);
  out.save(path);

  Checkpoint in = Checkpoint::load(path);
  CHECK(in.config["arch"] == "test");
  CHECK(in.config["dim"] == 4);

  ParameterGroup grp2("enc");
  Tensor w2 = grp2.add("w", Tensor::zeros({3, 4}, true));
  Tensor b2 = grp2.add("b", Tensor::zeros({4}, true));
  in.load_into_groups({&grp2});
  CHECK(seau::testing::bits_equal(w2.values(), w.values()));
  CHECK(seau::testing::bits_equal(b2.values(), b.values()));

  AdamState state2 = in.extract_adam();
  CHECK(state2.step_count() == 1);
  CHECK(state2.slots().at("enc.w").m == state.slots().at("enc.w").m);
  CHECK(state2.slots().at("enc.w").v == state.slots().at("enc.w").v);

  // Shape mismatch lists the offending tensor.
  ParameterGroup bad("enc");
  bad.add("w", Tensor::zeros({5, 5}, true));
  bad.add("b", Tensor::zeros({4}, true));
  try {
    in.load_into_groups({&bad});
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()).find("enc.w") != std::string::npos);
  }
  fs::remove(path);
}

TEST_CASE("identical seeds give bit-identical training trajectories") {
  auto run = [](uint64_t seed) {
    RngStream rng(seed);
    ParameterGroup grp("p");
    Tensor w = grp.add("w", Tensor::randn({6, 6}, rng.fork("w"), 0.4f));
    Tensor x = Tensor::randn({4, 6}, rng.fork("x"), 1.0f, false);
    AdamState state;
    AdamConfig cfg;
    for (int step = 0; step < 20; ++step) {
      Tensor y = tanh(matmul(x, w));
      Tensor loss = mean(mul(y, y));
      backward(loss);
      adam_step({&grp}, state, cfg, 0.01f);
    }
    return std::vector<float>(w.values().begin(), w.values().end());
  };
  auto a = run(42);
  auto b = run(42);
  CHECK(a == b);
  auto c = run(43);
  CHECK(a != c);
}

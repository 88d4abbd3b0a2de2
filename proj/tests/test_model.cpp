#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "depthnet/checkpoint.hpp"
#include "depthnet/train.hpp"

#include <cstdio>

using namespace depthnet;

namespace {

ModelConfig tiny_config(bool glkam = true, bool gbpm = true) {
  ModelConfig cfg;
  cfg.base_channels = 8;
  cfg.n_bins = 16;
  cfg.ppm_grids = {1, 2};
  cfg.use_glkam = glkam;
  cfg.use_gbpm = gbpm;
  cfg.seed = 9;
  return cfg;
}

Tensor random_rgb(int h, int w, uint64_t seed) {
  Rng rng(seed);
  Tensor t({3, h, w});
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = float(rng.uniform(0, 1));
  return t;
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig cfg = tiny_config();
  cfg.base_channels = 6;  // not a multiple of 4
  CHECK_THROWS_AS(DepthNet{cfg}, ValueError);
  cfg = tiny_config();
  cfg.ppm_grids = {2, 1};
  CHECK_THROWS_AS(DepthNet{cfg}, ValueError);
  cfg = tiny_config();
  cfg.d_min = 5;
  cfg.d_max = 2;
  CHECK_THROWS_AS(DepthNet{cfg}, ValueError);
}

TEST_CASE("encoder scale and channel contract") {
  ModelConfig cfg;
  cfg.base_channels = 16;
  cfg.n_bins = 32;
  cfg.ppm_grids = {1, 2};
  DepthNet model(cfg);
  auto pyr = model.encode(random_rgb(64, 64, 1));
  CHECK(pyr.e1.shape() == Shape{16, 16, 16});
  CHECK(pyr.e2.shape() == Shape{32, 8, 8});
  CHECK(pyr.e3.shape() == Shape{64, 4, 4});
  CHECK(pyr.e4.shape() == Shape{128, 2, 2});

  CHECK_THROWS_AS(model.encode(random_rgb(48, 64, 2)), ShapeError);
  CHECK_THROWS_AS(model.encode(Tensor::zeros({1, 64, 64})), ShapeError);
}

TEST_CASE("attention toggle preserves every pyramid shape") {
  auto on = DepthNet(tiny_config(true, true));
  auto off = DepthNet(tiny_config(false, true));
  auto rgb = random_rgb(64, 64, 3);
  auto p1 = on.encode(rgb);
  auto p2 = off.encode(rgb);
  CHECK(p1.e1.shape() == p2.e1.shape());
  CHECK(p1.e2.shape() == p2.e2.shape());
  CHECK(p1.e3.shape() == p2.e3.shape());
  CHECK(p1.e4.shape() == p2.e4.shape());
}

TEST_CASE("gradient reaches the first stage from a bottleneck loss") {
  DepthNet model(tiny_config());
  auto rgb = random_rgb(64, 64, 5);
  auto pyr = model.encode(rgb);
  model.params().zero_grads();
  sum(pyr.e4).backward();
  auto* stem = model.params().find("enc.stem.conv0.w");
  REQUIRE(stem);
  double norm = 0;
  for (float g : stem->tensor.grad()) norm += double(g) * g;
  CHECK(norm > 0);
}

TEST_CASE("pyramid pooling preserves shape and constants") {
  DepthNet model(tiny_config());
  auto rgb = random_rgb(64, 64, 7);
  auto pyr = model.encode(rgb);
  auto out = model.ppm_forward(pyr.e4);
  CHECK(out.shape() == pyr.e4.shape());

  // constant bottleneck: pooled branches are constant at every scale, so the
  // fused map is constant per channel
  auto constant = model.ppm_forward(Tensor::full(pyr.e4.shape(), 0.6f));
  const int plane = out.dim(1) * out.dim(2);
  for (int ch = 0; ch < constant.dim(0); ++ch)
    for (int p = 1; p < plane; ++p)
      CHECK(constant.values()[size_t(ch * plane + p)] ==
            doctest::Approx(constant.values()[size_t(ch * plane)]).epsilon(1e-5));

  CHECK_THROWS_AS(model.ppm_forward(Tensor::zeros({32, 2, 2})), ShapeError);
  // grids beyond the bottleneck extent are a hard error from the pool
  ModelConfig cfg = tiny_config();
  cfg.ppm_grids = {1, 2, 3, 6};
  DepthNet big(cfg);
  auto small_pyr = big.encode(random_rgb(64, 64, 7));
  CHECK_THROWS_AS(big.ppm_forward(small_pyr.e4), ValueError);
}

TEST_CASE("decoder walks back to quarter scale") {
  DepthNet model(tiny_config());
  auto rgb = random_rgb(64, 64, 9);
  auto pyr = model.encode(rgb);
  auto context = model.ppm_forward(pyr.e4);
  auto d4 = model.decode(pyr, context);
  CHECK(d4.shape() == Shape{8, 16, 16});

  SUBCASE("zero skips and zero context stay zero through the linear path") {
    FeaturePyramid zero;
    zero.e1 = Tensor::zeros(pyr.e1.shape());
    zero.e2 = Tensor::zeros(pyr.e2.shape());
    zero.e3 = Tensor::zeros(pyr.e3.shape());
    zero.e4 = Tensor::zeros(pyr.e4.shape());
    auto out = model.decode(zero, Tensor::zeros(context.shape()));
    for (float v : out.values()) CHECK(v == 0.f);
  }

  SUBCASE("scale mismatch between skip and decoder feature is an error") {
    FeaturePyramid bad = pyr;
    bad.e3 = Tensor::zeros({32, 8, 8});
    CHECK_THROWS_AS(model.decode(bad, context), ShapeError);
  }
}

TEST_CASE("depth probabilities form a distribution per pixel") {
  DepthNet model(tiny_config());
  auto rgb = random_rgb(64, 64, 11);
  auto pyr = model.encode(rgb);
  auto d4 = model.decode(pyr, model.ppm_forward(pyr.e4));
  auto probs = model.depth_probabilities(d4);
  CHECK(probs.shape() == Shape{16, 16, 16});
  const int plane = 16 * 16;
  for (int p = 0; p < plane; ++p) {
    double acc = 0;
    for (int k = 0; k < 16; ++k) acc += probs.values()[size_t(k * plane + p)];
    CHECK(acc == doctest::Approx(1.0).epsilon(1e-6));
  }

  // zero head -> uniform distribution everywhere
  auto* hw = model.params().find("head.prob.w");
  auto* hb = model.params().find("head.prob.b");
  REQUIRE(hw);
  REQUIRE(hb);
  std::fill(hw->tensor.values().begin(), hw->tensor.values().end(), 0.f);
  std::fill(hb->tensor.values().begin(), hb->tensor.values().end(), 0.f);
  auto uniform = model.depth_probabilities(d4);
  for (float v : uniform.values()) CHECK(v == doctest::Approx(1.f / 16).epsilon(1e-6));
}

TEST_CASE("depth prediction is the expectation over bin centers") {
  SUBCASE("one-hot probabilities reproduce the chosen center") {
    Tensor centers({3}, {2.f, 5.f, 8.f});
    Tensor p = Tensor::zeros({3, 2, 2});
    for (int i = 0; i < 4; ++i) p.data()[1 * 4 + i] = 1.f;
    auto d = predict_depth(p, centers, 4, 4);
    CHECK(d.shape() == Shape{1, 4, 4});
    for (float v : d.values()) CHECK(v == doctest::Approx(5.f));
  }

  SUBCASE("half-half probabilities average the centers") {
    Tensor centers({2}, {2.5f, 7.5f});
    Tensor p = Tensor::full({2, 2, 2}, 0.5f);
    auto d = predict_depth(p, centers, 2, 2);
    for (float v : d.values()) CHECK(v == doctest::Approx(5.f));
  }

  SUBCASE("random distributions stay inside the center hull") {
    Rng rng(13);
    Tensor centers({4}, {1.f, 2.f, 6.f, 9.f});
    Tensor p({4, 3, 3});
    for (int pos = 0; pos < 9; ++pos) {
      double total = 0;
      double draws[4];
      for (auto& v : draws) {
        v = rng.uniform(0.05, 1.0);
        total += v;
      }
      for (int k = 0; k < 4; ++k) p.data()[k * 9 + pos] = float(draws[k] / total);
    }
    auto d = predict_depth(p, centers, 6, 6);
    for (float v : d.values()) {
      CHECK(v >= 1.f - 1e-5f);
      CHECK(v <= 9.f + 1e-5f);
    }
  }

  SUBCASE("unnormalized probabilities are rejected") {
    Tensor centers({2}, {2.f, 8.f});
    Tensor p = Tensor::full({2, 2, 2}, 0.6f);  // sums to 1.2
    CHECK_THROWS_AS(predict_depth(p, centers, 2, 2), ValueError);
  }
}

TEST_CASE("full forward keeps depth inside the configured range") {
  for (bool glkam : {false, true}) {
    for (bool gbpm : {false, true}) {
      DepthNet model(tiny_config(glkam, gbpm));
      auto rgb = random_rgb(64, 64, 17);
      auto depth = model.predict(rgb);
      CHECK(depth.shape() == Shape{1, 64, 64});
      for (float v : depth.values()) {
        CHECK(v > float(model.config().d_min));
        CHECK(v < float(model.config().d_max));
      }
    }
  }
}

TEST_CASE("uniform bins when the bin module is off") {
  DepthNet model(tiny_config(true, false));
  auto rgb = random_rgb(64, 64, 19);
  auto pyr = model.encode(rgb);
  auto widths = model.bin_widths(model.ppm_forward(pyr.e4));
  for (float v : widths.values()) CHECK(v == 1.f / 16);
}

TEST_CASE("flip-averaged inference") {
  DepthNet model(tiny_config());

  SUBCASE("constant-output model returns the constant") {
    // uniform bins + a zeroed head make the prediction a true constant
    DepthNet stub(tiny_config(true, false));
    auto* hw = stub.params().find("head.prob.w");
    auto* hb = stub.params().find("head.prob.b");
    std::fill(hw->tensor.values().begin(), hw->tensor.values().end(), 0.f);
    std::fill(hb->tensor.values().begin(), hb->tensor.values().end(), 0.f);
    auto rgb = random_rgb(64, 64, 23);
    auto single = stub.predict(rgb);
    auto averaged = stub.infer_flip_averaged(rgb);
    CHECK(averaged.shape() == Shape{1, 64, 64});
    for (int64_t i = 0; i < single.size(); ++i)
      CHECK(averaged.values()[i] == doctest::Approx(single.values()[i]).epsilon(1e-6));
  }

  SUBCASE("mirror-symmetric input yields a mirror-symmetric averaged map") {
    Tensor rgb = random_rgb(64, 64, 29);
    // symmetrize: right half mirrors the left
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 32; ++x)
          rgb.data()[c * 64 * 64 + y * 64 + (63 - x)] = rgb.data()[c * 64 * 64 + y * 64 + x];
    auto averaged = model.infer_flip_averaged(rgb);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 32; ++x)
        CHECK(averaged.values()[size_t(y * 64 + x)] ==
              doctest::Approx(averaged.values()[size_t(y * 64 + (63 - x))]).epsilon(1e-5));
  }
}

TEST_CASE("forward loss on a generated scene") {
  DepthNet model(tiny_config());
  auto scene = generate_scene(31, 64, 64, model.config().d_min, model.config().d_max);
  auto loss = model.forward_loss(scene.rgb, scene.depth, scene.mask);
  CHECK(std::isfinite(loss.item()));
  CHECK(loss.item() > 0.f);

  CHECK_THROWS_AS(
      model.forward_loss(scene.rgb, scene.depth, Tensor::zeros(scene.mask.shape())),
      ValueError);
}

TEST_CASE("every parameter receives gradient from one backward pass") {
  for (bool gbpm : {false, true}) {
    DepthNet model(tiny_config(true, gbpm));
    auto scene = generate_scene(37, 64, 64, model.config().d_min, model.config().d_max);
    model.params().zero_grads();
    model.forward_loss(scene.rgb, scene.depth, scene.mask).backward();
    auto dead = model.params().zero_grad_params();
    if (!dead.empty())
      for (const auto& name : dead) MESSAGE("zero-grad parameter: ", name);
    CHECK(dead.empty());
  }
}

TEST_CASE("checkpoint round trip preserves parameters and predictions") {
  DepthNet model(tiny_config());
  auto rgb = random_rgb(64, 64, 41);
  auto before = model.predict(rgb);

  const std::string path = "test_checkpoint_roundtrip.dten";
  save_checkpoint(path, model);
  DepthNet loaded = load_checkpoint(path);
  CHECK(loaded.config().base_channels == model.config().base_channels);
  CHECK(loaded.config().use_gbpm == model.config().use_gbpm);
  CHECK(loaded.params().count() == model.params().count());
  for (size_t i = 0; i < model.params().count(); ++i)
    CHECK(loaded.params().all()[i].tensor.values() == model.params().all()[i].tensor.values());
  auto after = loaded.predict(rgb);
  CHECK(after.values() == before.values());
  std::remove(path.c_str());
}

TEST_CASE("short training run reduces the loss on one scene") {
  ModelConfig cfg = tiny_config();
  DepthNet model(cfg);
  std::vector<DepthSample> scenes{generate_scene(43, 64, 64, cfg.d_min, cfg.d_max)};
  TrainOptions opts;
  opts.steps = 30;
  opts.batch_size = 1;
  opts.lr_start = 1e-3;
  opts.lr_end = 5e-4;
  opts.seed = 4;
  opts.use_augment = false;
  auto log = train(model, scenes, opts);
  REQUIRE(log.size() == 30);
  CHECK(log.back().loss < log.front().loss);
}

TEST_CASE("zero training steps leave the parameters at initialization") {
  ModelConfig cfg = tiny_config();
  DepthNet trained(cfg);
  std::vector<DepthSample> scenes{generate_scene(47, 64, 64, cfg.d_min, cfg.d_max)};
  TrainOptions opts;
  opts.steps = 0;
  auto log = train(trained, scenes, opts);
  CHECK(log.empty());
  DepthNet fresh(cfg);
  for (size_t i = 0; i < fresh.params().count(); ++i)
    CHECK(trained.params().all()[i].tensor.values() == fresh.params().all()[i].tensor.values());
}

TEST_CASE("300 steps on a single scene cut the loss substantially") {
  // measured ~3.7x with this seed and schedule; the quarter-scale head
  // leaves an edge residual that caps single-scene overfitting
  ModelConfig cfg;
  cfg.base_channels = 16;
  cfg.n_bins = 32;
  cfg.ppm_grids = {1, 2};
  cfg.seed = 5;
  DepthNet model(cfg);
  std::vector<DepthSample> scenes{generate_scene(50, 64, 64, cfg.d_min, cfg.d_max)};
  TrainOptions opts;
  opts.steps = 300;
  opts.batch_size = 1;
  opts.lr_start = 5e-4;
  opts.lr_end = 3e-4;
  opts.seed = 21;
  opts.use_augment = false;
  auto log = train(model, scenes, opts);
  CHECK(log.back().loss <= log.front().loss / 2.5);
}

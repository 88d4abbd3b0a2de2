#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "depthnet/gradcheck.hpp"
#include "depthnet/objective.hpp"

using namespace depthnet;

namespace {

// independent scalar implementation, one metric at a time
struct OracleMetrics {
  double abs_rel = 0, rmse = 0, log10 = 0, sq_rel = 0, d1 = 0, d2 = 0, d3 = 0;
  int64_t n = 0;
};

OracleMetrics oracle_metrics(const std::vector<float>& pred, const std::vector<float>& gt,
                             const std::vector<float>& mask) {
  OracleMetrics o;
  for (size_t i = 0; i < pred.size(); ++i)
    if (mask[i] != 0.f) ++o.n;
  double acc = 0;
  for (size_t i = 0; i < pred.size(); ++i)
    if (mask[i] != 0.f) acc += std::abs(double(pred[i]) - gt[i]) / gt[i];
  o.abs_rel = acc / double(o.n);
  acc = 0;
  for (size_t i = 0; i < pred.size(); ++i)
    if (mask[i] != 0.f) acc += (double(pred[i]) - gt[i]) * (double(pred[i]) - gt[i]);
  o.rmse = std::sqrt(acc / double(o.n));
  acc = 0;
  for (size_t i = 0; i < pred.size(); ++i)
    if (mask[i] != 0.f) acc += std::abs(std::log10(double(pred[i])) - std::log10(double(gt[i])));
  o.log10 = acc / double(o.n);
  acc = 0;
  for (size_t i = 0; i < pred.size(); ++i)
    if (mask[i] != 0.f)
      acc += (double(pred[i]) - gt[i]) * (double(pred[i]) - gt[i]) / double(gt[i]);
  o.sq_rel = acc / double(o.n);
  for (int which = 1; which <= 3; ++which) {
    int64_t hits = 0;
    const double threshold = std::pow(1.25, which);
    for (size_t i = 0; i < pred.size(); ++i)
      if (mask[i] != 0.f &&
          std::max(double(pred[i]) / gt[i], double(gt[i]) / pred[i]) < threshold)
        ++hits;
    (which == 1 ? o.d1 : which == 2 ? o.d2 : o.d3) = double(hits) / double(o.n);
  }
  return o;
}

}  // namespace

TEST_CASE("silog loss hand cases") {
  SUBCASE("perfect prediction") {
    Tensor d({1, 2, 2}, {1.f, 2.f, 3.f, 4.f});
    auto loss = silog_loss(d, d, Tensor::ones({1, 2, 2}));
    CHECK(std::abs(loss.item()) <= 1e-4f);  // the radicand clamp leaves ~1e-5
  }

  SUBCASE("two-pixel case g = [0, 1]") {
    const float e = std::exp(1.f);
    Tensor pred({1, 1, 2}, {2.f, 3.f});
    Tensor gt({1, 1, 2}, {2.f, 3.f * e});
    auto loss = silog_loss(pred, gt, Tensor::ones({1, 1, 2}));
    // 10 * sqrt(0.5 - 0.85 * 0.25) = 5.3619
    CHECK(loss.item() == doctest::Approx(5.3619f).epsilon(2e-4));
  }

  SUBCASE("uniform scaling with lambda = 1 is free") {
    Tensor gt({1, 2, 2}, {1.f, 2.f, 3.f, 4.f});
    Tensor pred({1, 2, 2}, {2.f, 4.f, 6.f, 8.f});
    SilogParams p;
    p.lambda = 1.0;
    auto loss = silog_loss(pred, gt, Tensor::ones({1, 2, 2}), p);
    CHECK(std::abs(loss.item()) <= 1e-3f);
  }

  SUBCASE("uniform misscaling costs alpha*|log s|*sqrt(1-lambda)") {
    Tensor gt({1, 2, 2}, {1.f, 2.f, 3.f, 4.f});
    for (float s : {0.5f, 2.f}) {
      Tensor pred({1, 2, 2});
      for (int i = 0; i < 4; ++i) pred.data()[i] = gt.values()[size_t(i)] * s;
      auto loss = silog_loss(pred, gt, Tensor::ones({1, 2, 2}));
      const double expect = 10.0 * std::abs(std::log(double(s))) * std::sqrt(0.15);
      CHECK(loss.item() == doctest::Approx(float(expect)).epsilon(1e-4));
    }
  }
}

TEST_CASE("silog validation") {
  Tensor d = Tensor::ones({1, 2, 2});
  CHECK_THROWS_AS(silog_loss(d, d, Tensor::zeros({1, 2, 2})), ValueError);
  CHECK_THROWS_AS(silog_loss(d, d, Tensor::ones({1, 2, 3})), ShapeError);
  SilogParams bad;
  bad.lambda = 1.5;
  CHECK_THROWS_AS(silog_loss(d, d, Tensor::ones({1, 2, 2}), bad), ValueError);
  bad.lambda = 0.85;
  bad.alpha = -1;
  CHECK_THROWS_AS(silog_loss(d, d, Tensor::ones({1, 2, 2}), bad), ValueError);
}

TEST_CASE("silog is nonnegative for lambda <= 1") {
  Rng rng(51);
  for (int trial = 0; trial < 1000; ++trial) {
    Tensor pred({1, 2, 3}), gt({1, 2, 3});
    for (int i = 0; i < 6; ++i) {
      pred.data()[i] = float(rng.uniform(0.05, 12.0));
      gt.data()[i] = float(rng.uniform(0.05, 12.0));
    }
    auto loss = silog_loss(pred, gt, Tensor::ones({1, 2, 3}));
    CHECK(loss.item() >= 0.f);
  }
}

TEST_CASE("silog masks out invalid pixels") {
  Tensor pred({1, 1, 3}, {2.f, 99.f, 4.f});
  Tensor gt({1, 1, 3}, {2.f, 1.f, 4.f});
  Tensor mask({1, 1, 3}, {1.f, 0.f, 1.f});
  auto loss = silog_loss(pred, gt, mask);
  CHECK(std::abs(loss.item()) <= 1e-4f);  // the mismatching pixel is masked
}

TEST_CASE("silog gradient matches finite differences") {
  Rng rng(53);
  DTensor pred({1, 3, 3}), gt({1, 3, 3});
  for (int i = 0; i < 9; ++i) {
    pred.data()[i] = rng.uniform(0.5, 9.0);
    gt.data()[i] = rng.uniform(0.5, 9.0);
  }
  DTensor mask = DTensor::ones({1, 3, 3});
  mask.data()[4] = 0.0;
  auto fwd = [&] { return silog_loss(pred, gt, mask); };
  auto rep = gradcheck<double>(fwd, {{"pred", pred}}, rng, 1e-5, 9);
  CHECK(rep.max_rel_err <= 1e-4);
}

TEST_CASE("metric hand cases") {
  SUBCASE("perfect prediction") {
    Tensor d({1, 2, 2}, {1.f, 2.f, 3.f, 4.f});
    auto r = compute_metrics(d, d, Tensor::ones({1, 2, 2}));
    CHECK(r.abs_rel == 0.0);
    CHECK(r.rmse == 0.0);
    CHECK(r.log10 == 0.0);
    CHECK(r.sq_rel == 0.0);
    CHECK(r.delta1 == 1.0);
    CHECK(r.delta2 == 1.0);
    CHECK(r.delta3 == 1.0);
    CHECK(r.n_valid == 4);
  }

  SUBCASE("single pixel, prediction 2 against truth 1") {
    Tensor pred({1, 1, 1}, {2.f});
    Tensor gt({1, 1, 1}, {1.f});
    auto r = compute_metrics(pred, gt, Tensor::ones({1, 1, 1}));
    CHECK(r.abs_rel == doctest::Approx(1.0));
    CHECK(r.rmse == doctest::Approx(1.0));
    CHECK(r.sq_rel == doctest::Approx(1.0));
    CHECK(r.log10 == doctest::Approx(0.30103).epsilon(1e-5));
    CHECK(r.delta1 == 0.0);
    CHECK(r.delta2 == 0.0);
    CHECK(r.delta3 == 0.0);  // 2 > 1.25^3 = 1.953125
  }

  SUBCASE("single pixel, prediction 1.2 against truth 1") {
    Tensor pred({1, 1, 1}, {1.2f});
    Tensor gt({1, 1, 1}, {1.f});
    auto r = compute_metrics(pred, gt, Tensor::ones({1, 1, 1}));
    CHECK(r.abs_rel == doctest::Approx(0.2).epsilon(1e-5));
    CHECK(r.delta1 == 1.0);  // 1.2 < 1.25
  }
}

TEST_CASE("metrics agree with the independent oracle on random maps") {
  Rng rng(57);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 16 * 16;
    std::vector<float> pred(size_t(n), 0.f), gt(size_t(n), 0.f), mask(size_t(n), 0.f);
    for (int i = 0; i < n; ++i) {
      pred[size_t(i)] = float(rng.uniform(0.1, 10.0));
      gt[size_t(i)] = float(rng.uniform(0.1, 10.0));
      mask[size_t(i)] = rng.uniform() < 0.9 ? 1.f : 0.f;
    }
    auto r = compute_metrics(Tensor({1, 16, 16}, pred), Tensor({1, 16, 16}, gt),
                             Tensor({1, 16, 16}, mask));
    auto o = oracle_metrics(pred, gt, mask);
    CHECK(r.abs_rel == doctest::Approx(o.abs_rel).epsilon(1e-6));
    CHECK(r.rmse == doctest::Approx(o.rmse).epsilon(1e-6));
    CHECK(r.log10 == doctest::Approx(o.log10).epsilon(1e-6));
    CHECK(r.sq_rel == doctest::Approx(o.sq_rel).epsilon(1e-6));
    CHECK(r.delta1 == o.d1);
    CHECK(r.delta2 == o.d2);
    CHECK(r.delta3 == o.d3);
    CHECK(r.n_valid == o.n);
    // nested thresholds
    CHECK(r.delta1 <= r.delta2);
    CHECK(r.delta2 <= r.delta3);
  }
}

TEST_CASE("metrics are invariant to a horizontal flip of all inputs") {
  Rng rng(61);
  std::vector<float> pred(64), gt(64), mask(64);
  for (int i = 0; i < 64; ++i) {
    pred[size_t(i)] = float(rng.uniform(0.1, 10.0));
    gt[size_t(i)] = float(rng.uniform(0.1, 10.0));
    mask[size_t(i)] = rng.uniform() < 0.85 ? 1.f : 0.f;
  }
  Tensor p({1, 8, 8}, pred), g({1, 8, 8}, gt), m({1, 8, 8}, mask);
  auto direct = compute_metrics(p, g, m);
  NoGradGuard ng;
  auto flipped = compute_metrics(hflip(p), hflip(g), hflip(m));
  CHECK(direct.abs_rel == doctest::Approx(flipped.abs_rel).epsilon(1e-12));
  CHECK(direct.rmse == doctest::Approx(flipped.rmse).epsilon(1e-12));
  CHECK(direct.log10 == doctest::Approx(flipped.log10).epsilon(1e-12));
  CHECK(direct.sq_rel == doctest::Approx(flipped.sq_rel).epsilon(1e-12));
  CHECK(direct.delta1 == flipped.delta1);
  CHECK(direct.delta2 == flipped.delta2);
  CHECK(direct.delta3 == flipped.delta3);
}

TEST_CASE("validity mask") {
  SUBCASE("all-zero depth gives an empty mask") {
    auto mask = build_validity_mask(Tensor::zeros({1, 2, 2}), 1e-3, 10.0);
    for (float v : mask.values()) CHECK(v == 0.f);
    CHECK_THROWS_AS(
        compute_metrics(Tensor::ones({1, 2, 2}), Tensor::zeros({1, 2, 2}), mask), ValueError);
  }

  SUBCASE("range bounds: valid iff d_min < d <= d_max") {
    Tensor gt({1, 1, 4}, {5.f, 200.f, 80.f, 2.f});
    auto mask = build_validity_mask(gt, 2.0, 80.0);
    CHECK(mask.values() == std::vector<float>{1.f, 0.f, 1.f, 0.f});
  }

  SUBCASE("non-finite pixels are excluded") {
    Tensor gt({1, 1, 3}, {5.f, std::numeric_limits<float>::quiet_NaN(),
                          std::numeric_limits<float>::infinity()});
    auto mask = build_validity_mask(gt, 1e-3, 10.0);
    CHECK(mask.values() == std::vector<float>{1.f, 0.f, 0.f});
  }
}

TEST_CASE("report serialization carries every field") {
  Tensor pred({1, 1, 1}, {1.2f});
  Tensor gt({1, 1, 1}, {1.f});
  auto r = compute_metrics(pred, gt, Tensor::ones({1, 1, 1}));
  auto text = r.to_kv_text();
  for (const char* key : {"abs_rel=", "rmse=", "log10=", "sq_rel=", "delta1=", "delta2=",
                          "delta3=", "n_valid="})
    CHECK(text.find(key) != std::string::npos);
}

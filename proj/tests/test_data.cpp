#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "depthnet/checkpoint.hpp"
#include "depthnet/data.hpp"
#include "depthnet/objective.hpp"

#include <cstdio>

using namespace depthnet;

TEST_CASE("scene generation is deterministic per seed") {
  auto a = generate_scene(7, 64, 64, 1e-3, 10.0);
  auto b = generate_scene(7, 64, 64, 1e-3, 10.0);
  CHECK(a.rgb.values() == b.rgb.values());
  CHECK(a.depth.values() == b.depth.values());
  CHECK(a.mask.values() == b.mask.values());

  auto c = generate_scene(8, 64, 64, 1e-3, 10.0);
  CHECK(a.depth.values() != c.depth.values());
}

TEST_CASE("scene depth lands inside the configured range with a full mask") {
  for (uint64_t seed : {0ull, 1ull, 5ull, 99ull}) {
    auto s = generate_scene(seed, 64, 64, 1e-3, 10.0);
    int64_t valid = 0;
    for (int64_t i = 0; i < s.depth.size(); ++i) {
      const float d = s.depth.values()[size_t(i)];
      CHECK(d > 1e-3f);
      CHECK(d <= 10.f);
      if (s.mask.values()[size_t(i)] != 0.f) ++valid;
    }
    CHECK(double(valid) / double(s.depth.size()) >= 0.99);
    for (float v : s.rgb.values()) {
      CHECK(v >= 0.f);
      CHECK(v <= 1.f);
    }
  }
}

TEST_CASE("occluding objects sit nearer than the background ramp") {
  auto s = generate_scene(0, 64, 64, 1e-3, 10.0);
  // per-row background estimate: the row maximum is ramp territory
  int64_t nearer = 0;
  for (int y = 0; y < 64; ++y) {
    float row_max = 0.f;
    for (int x = 0; x < 64; ++x) row_max = std::max(row_max, s.depth.values()[size_t(y * 64 + x)]);
    for (int x = 0; x < 64; ++x)
      if (s.depth.values()[size_t(y * 64 + x)] < 0.85f * row_max) ++nearer;
  }
  CHECK(nearer > 64 * 64 / 100);  // the occluders cover a visible fraction

  // the ramp recedes from bottom to top
  float bottom_max = 0.f, top_max = 0.f;
  for (int x = 0; x < 64; ++x) {
    bottom_max = std::max(bottom_max, s.depth.values()[size_t(63 * 64 + x)]);
    top_max = std::max(top_max, s.depth.values()[size_t(x)]);
  }
  CHECK(top_max > bottom_max);
}

TEST_CASE("augmentation basics") {
  auto s = generate_scene(11, 64, 64, 1e-3, 10.0);

  SUBCASE("forced double flip restores the original") {
    auto once = augment_with(s, true, 0.0, 1.0);
    auto twice = augment_with(once, true, 0.0, 1.0);
    CHECK(twice.rgb.values() == s.rgb.values());
    CHECK(twice.depth.values() == s.depth.values());
    CHECK(twice.mask.values() == s.mask.values());
  }

  SUBCASE("brightness never touches depth") {
    auto bright = augment_with(s, false, 0.0, 1.1);
    CHECK(bright.depth.values() == s.depth.values());
    CHECK(bright.mask.values() == s.mask.values());
    for (int64_t i = 0; i < s.rgb.size(); ++i)
      CHECK(bright.rgb.values()[size_t(i)] ==
            doctest::Approx(std::min(1.f, s.rgb.values()[size_t(i)] * 1.1f)).epsilon(1e-6));
  }

  SUBCASE("zero-degree rotation is the identity") {
    auto same = augment_with(s, false, 0.0, 1.0);
    CHECK(same.rgb.values() == s.rgb.values());
    CHECK(same.depth.values() == s.depth.values());
  }

  SUBCASE("rotation keeps rgb/depth correspondence and masks the border") {
    auto rotated = augment_with(s, false, 2.0, 1.0);
    int64_t valid = 0;
    for (float v : rotated.mask.values()) valid += v != 0.f;
    CHECK(valid > 0);
    CHECK(valid < rotated.mask.size());  // the border is masked out
    auto r = compute_metrics(rotated.depth, rotated.depth, rotated.mask);
    CHECK(r.abs_rel == 0.0);
    CHECK(r.delta1 == 1.0);
  }

  SUBCASE("rng-driven augmentation is deterministic") {
    Rng r1(13), r2(13);
    auto a = augment(s, r1);
    auto b = augment(s, r2);
    CHECK(a.rgb.values() == b.rgb.values());
    CHECK(a.depth.values() == b.depth.values());
  }
}

TEST_CASE("container round trips are bit-exact") {
  Rng rng(17);
  Container c;
  std::vector<float> f32(24);
  for (auto& v : f32) v = float(rng.uniform(-1e6, 1e6));
  std::vector<double> f64(6);
  for (auto& v : f64) v = rng.uniform(-1e12, 1e12);
  c.add("weights", {2, 3, 4}, f32);
  c.add("stats", {6}, f64);

  const std::string path = "test_container_roundtrip.dten";
  c.write(path);
  Container back = Container::read(path);
  REQUIRE(back.count() == 2);
  CHECK(back.at("weights").shape == Shape{2, 3, 4});
  CHECK(back.at("weights").f32() == f32);
  CHECK(back.at("stats").f64() == f64);

  // a second serialize gives identical bytes
  CHECK(c.serialize() == back.serialize());
  std::remove(path.c_str());
}

TEST_CASE("container error taxonomy") {
  Container c;
  c.add("alpha", {2}, std::vector<float>{1.f, 2.f});
  c.add("beta!", {2}, std::vector<float>{3.f, 4.f});
  auto bytes = c.serialize();

  SUBCASE("duplicate names are rejected at build time") {
    CHECK_THROWS_AS(c.add("alpha", {1}, std::vector<float>{0.f}), ContainerError);
    try {
      c.add("alpha", {1}, std::vector<float>{0.f});
    } catch (const ContainerError& e) {
      CHECK(e.kind() == ContainerError::Kind::duplicate_name);
    }
  }

  SUBCASE("bad magic") {
    auto bad = bytes;
    bad[0] = 'X';
    try {
      Container::parse(bad);
      FAIL("expected bad magic");
    } catch (const ContainerError& e) {
      CHECK(e.kind() == ContainerError::Kind::bad_magic);
    }
  }

  SUBCASE("unsupported version") {
    auto bad = bytes;
    bad[4] = 9;
    try {
      Container::parse(bad);
      FAIL("expected bad version");
    } catch (const ContainerError& e) {
      CHECK(e.kind() == ContainerError::Kind::bad_version);
    }
  }

  SUBCASE("truncated payload") {
    auto bad = bytes;
    bad.resize(bad.size() - 3);
    try {
      Container::parse(bad);
      FAIL("expected truncation");
    } catch (const ContainerError& e) {
      CHECK(e.kind() == ContainerError::Kind::truncated);
    }
  }

  SUBCASE("unknown dtype code") {
    // dtype byte of the first entry follows magic(4)+version(2)+count(2)+len(2)+name(5)
    auto bad = bytes;
    bad[15] = 7;
    try {
      Container::parse(bad);
      FAIL("expected unknown dtype");
    } catch (const ContainerError& e) {
      CHECK(e.kind() == ContainerError::Kind::unknown_dtype);
    }
  }

  SUBCASE("duplicate names on disk") {
    // rename the second entry to collide with the first; same length
    auto bad = bytes;
    const auto pos = std::search(bad.begin(), bad.end(), std::begin("beta!"),
                                 std::begin("beta!") + 5);
    REQUIRE(pos != bad.end());
    std::copy_n("alpha", 5, pos);
    try {
      Container::parse(bad);
      FAIL("expected duplicate name");
    } catch (const ContainerError& e) {
      CHECK(e.kind() == ContainerError::Kind::duplicate_name);
    }
  }

  SUBCASE("trailing bytes") {
    auto bad = bytes;
    bad.push_back(0);
    try {
      Container::parse(bad);
      FAIL("expected trailing bytes");
    } catch (const ContainerError& e) {
      CHECK(e.kind() == ContainerError::Kind::trailing_bytes);
    }
  }

  SUBCASE("missing entry lookup") {
    try {
      c.at("gamma");
      FAIL("expected missing entry");
    } catch (const ContainerError& e) {
      CHECK(e.kind() == ContainerError::Kind::missing_entry);
    }
  }
}

TEST_CASE("empty container is a valid file") {
  Container c;
  auto bytes = c.serialize();
  Container back = Container::parse(bytes);
  CHECK(back.count() == 0);
}

TEST_CASE("sample snapshots round trip through the container") {
  auto s = generate_scene(23, 64, 64, 1e-3, 10.0);
  const std::string path = "test_sample_roundtrip.dten";
  save_sample(path, s);
  auto back = load_sample(path);
  CHECK(back.rgb.values() == s.rgb.values());
  CHECK(back.depth.values() == s.depth.values());
  CHECK(back.mask.values() == s.mask.values());
  CHECK(back.scene_seed == s.scene_seed);
  std::remove(path.c_str());
}

TEST_CASE("scene validation") {
  CHECK_THROWS_AS(generate_scene(1, 50, 64, 1e-3, 10.0), ValueError);
  CHECK_THROWS_AS(generate_scene(1, 64, 64, 5.0, 2.0), ValueError);
}

#include <doctest.h>

#include <cmath>

#include "anyshot/geometry.hpp"
#include "anyshot/rng.hpp"

using namespace anyshot;

TEST_CASE("iou identity, disjoint, and hand geometry") {
  const Box b{0.1, 0.1, 0.4, 0.3};
  CHECK(iou(b, b) == 1.0);
  CHECK(iou(Box{0, 0, 0.1, 0.1}, Box{0.2, 0.2, 0.3, 0.3}) == 0.0);
  // inter = 1, union = 4 + 4 - 1 = 7 (in units of the 0..3 square)
  const Box a{0.0, 0.0, 0.2, 0.2};
  const Box c{0.1, 0.1, 0.3, 0.3};
  CHECK(iou(a, c) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("iou symmetry and bounds on random pairs") {
  for (int t = 0; t < 500; ++t) {
    auto rand_box = [&](uint64_t tag) {
      const double x1 = rng_uniform_in(0.0, 0.8, 7, tag, t, 0);
      const double y1 = rng_uniform_in(0.0, 0.8, 7, tag, t, 1);
      const double w = rng_uniform_in(0.05, 0.2, 7, tag, t, 2);
      const double h = rng_uniform_in(0.05, 0.2, 7, tag, t, 3);
      return Box{x1, y1, x1 + w, y1 + h};
    };
    const Box a = rand_box(1), b = rand_box(2);
    CHECK(iou(a, b) == iou(b, a));
    CHECK(iou(a, b) >= 0.0);
    CHECK(iou(a, b) <= 1.0);
  }
}

TEST_CASE("delta encoding examples") {
  const Box anchor{0.0, 0.0, 0.2, 0.2};
  SUBCASE("identity") {
    const Delta4 d = encode_deltas(anchor, anchor);
    CHECK(d.tx == 0.0);
    CHECK(d.ty == 0.0);
    CHECK(d.tw == 0.0);
    CHECK(d.th == 0.0);
  }
  SUBCASE("unit shift in anchor widths") {
    // anchor center (1,1) size 2x2, target center (2,1) same size, in a
    // scaled frame; ratios are scale-free so use a 0.1 unit
    const Box a{0.0, 0.0, 0.2, 0.2};
    const Box t{0.1, 0.0, 0.3, 0.2};
    const Delta4 d = encode_deltas(a, t);
    CHECK(d.tx == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(d.ty == doctest::Approx(0.0));
    CHECK(d.tw == doctest::Approx(0.0));
  }
  SUBCASE("doubled width") {
    const Box t{-0.1, 0.0, 0.3, 0.2};
    const Delta4 d = encode_deltas(anchor, t);
    CHECK(d.tw == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(d.tx == doctest::Approx(0.0));
  }
}

TEST_CASE("apply_deltas examples") {
  const Box anchor{0.4, 0.4, 0.6, 0.6};
  SUBCASE("zero delta is identity") {
    const Box out = apply_deltas(anchor, Delta4{});
    CHECK(out.x1 == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(out.y2 == doctest::Approx(0.6).epsilon(1e-15));
  }
  SUBCASE("half-width shift") {
    const Box out = apply_deltas(anchor, Delta4{0.5, 0, 0, 0});
    CHECK(out.x1 == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(out.x2 == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(out.y1 == doctest::Approx(0.4).epsilon(1e-12));
  }
}

TEST_CASE("delta round trip within 1e-12 for unclipped targets") {
  for (int t = 0; t < 1000; ++t) {
    const double aw = rng_uniform_in(0.05, 0.3, 11, 1, t, 0);
    const double ah = rng_uniform_in(0.05, 0.3, 11, 1, t, 1);
    const double ax = rng_uniform_in(0.3, 0.5, 11, 1, t, 2);
    const double ay = rng_uniform_in(0.3, 0.5, 11, 1, t, 3);
    const Box anchor{ax, ay, ax + aw, ay + ah};
    // keep targets inside the unit square so clipping is a no-op
    const double tw = aw * std::exp(rng_uniform_in(-0.5, 0.5, 11, 2, t, 0));
    const double th = ah * std::exp(rng_uniform_in(-0.5, 0.5, 11, 2, t, 1));
    const double tx = rng_uniform_in(0.35, 0.55, 11, 2, t, 2);
    const double ty = rng_uniform_in(0.35, 0.55, 11, 2, t, 3);
    const Box target{tx - tw / 2, ty - th / 2, tx + tw / 2, ty + th / 2};
    REQUIRE(target.valid());
    const Box rt = apply_deltas(anchor, encode_deltas(anchor, target));
    CHECK(std::abs(rt.x1 - target.x1) < 1e-12);
    CHECK(std::abs(rt.y1 - target.y1) < 1e-12);
    CHECK(std::abs(rt.x2 - target.x2) < 1e-12);
    CHECK(std::abs(rt.y2 - target.y2) < 1e-12);
  }
}

TEST_CASE("nms basics") {
  const Box b1{0.1, 0.1, 0.3, 0.3};
  const Box b2{0.6, 0.6, 0.8, 0.8};
  SUBCASE("single detection kept") {
    auto out = nms({{b1, 0.7, 0}}, 0.5);
    CHECK(out.size() == 1);
  }
  SUBCASE("duplicate suppressed") {
    auto out = nms({{b1, 0.9, 0}, {b1, 0.8, 0}}, 0.5);
    REQUIRE(out.size() == 1);
    CHECK(out[0].score == 0.9);
  }
  SUBCASE("disjoint kept") {
    auto out = nms({{b1, 0.9, 0}, {b2, 0.8, 0}}, 0.5);
    CHECK(out.size() == 2);
  }
  SUBCASE("different classes never suppress each other") {
    auto out = nms({{b1, 0.9, 0}, {b1, 0.8, 1}}, 0.5);
    CHECK(out.size() == 2);
  }
  SUBCASE("empty input") { CHECK(nms({}, 0.5).empty()); }
}

TEST_CASE("nms output properties on random inputs") {
  for (int t = 0; t < 100; ++t) {
    std::vector<ScoredBox> dets;
    const int n = 1 + rng_index(12, 13, 1, t);
    for (int i = 0; i < n; ++i) {
      const double x = rng_uniform_in(0.0, 0.6, 13, 2, t * 100 + i);
      const double y = rng_uniform_in(0.0, 0.6, 13, 3, t * 100 + i);
      dets.push_back({Box{x, y, x + 0.3, y + 0.3},
                      rng_uniform(13, 4, t * 100 + i),
                      rng_index(3, 13, 5, t * 100 + i)});
    }
    const auto kept = nms(dets, 0.5);
    CHECK(kept.size() <= dets.size());
    for (size_t i = 1; i < kept.size(); ++i) CHECK(kept[i - 1].score >= kept[i].score);
    for (size_t i = 0; i < kept.size(); ++i)
      for (size_t j = i + 1; j < kept.size(); ++j)
        if (kept[i].class_id == kept[j].class_id)
          CHECK(iou(kept[i].box, kept[j].box) < 0.5);
  }
}

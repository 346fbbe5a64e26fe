#include <doctest.h>

#include <cmath>
#include <sstream>

#include "anyshot/rng.hpp"
#include "anyshot/similarity.hpp"

using namespace anyshot;

namespace {

EmbeddingTable small_table() {
  EmbeddingTable t;
  t.insert("dining", (Vec(2) << 1.0, 0.0).finished());
  t.insert("table", (Vec(2) << 0.0, 1.0).finished());
  t.insert("unit", (Vec(2) << 1.0, 0.0).finished());
  t.insert("ortho", (Vec(2) << 0.0, 1.0).finished());
  t.insert("mix", (Vec(2) << 0.6, 0.8).finished());
  return t;
}

}  // namespace

TEST_CASE("embed_label single token and mean of tokens") {
  const EmbeddingTable t = small_table();
  CHECK(embed_label("unit", t)[0] == 1.0);
  const Vec mean = embed_label("dining table", t);
  CHECK(mean[0] == doctest::Approx(0.5));
  CHECK(mean[1] == doctest::Approx(0.5));
  CHECK_THROWS_AS(embed_label("zzz", t), std::out_of_range);
}

TEST_CASE("lingual_matrix dot products") {
  const EmbeddingTable t = small_table();
  ClassSplit split;
  split.base = {"unit", "ortho"};
  split.novel = {"mix"};
  const Mat s = lingual_matrix(split, t);
  REQUIRE(s.rows() == 1);
  REQUIRE(s.cols() == 2);
  CHECK(s(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(s(0, 1) == doctest::Approx(0.8).epsilon(1e-12));

  ClassSplit self;
  self.base = {"unit"};
  self.novel = {"dining"};
  CHECK(lingual_matrix(self, t)(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("embedding file round trip") {
  const EmbeddingTable t = small_table();
  std::ostringstream out;
  save_embeddings(t, out);
  std::istringstream in(out.str());
  const EmbeddingTable back = load_embeddings(in);
  CHECK(back.vectors.size() == t.vectors.size());
  CHECK(back.vectors.at("mix")[1] == 0.8);
}

TEST_CASE("visual_vector restriction and renormalization") {
  SUBCASE("already normalized base entries unchanged") {
    Vec p(4);
    p << 0.5, 0.5, 0.0, 0.0;
    const Vec v = visual_vector(p, 2);
    CHECK(v[0] == doctest::Approx(0.5));
    CHECK(v[1] == doctest::Approx(0.5));
  }
  SUBCASE("hand normalization") {
    Vec p(5);
    p << 0.1, 0.1, 0.2, 0.3, 0.3;
    const Vec v = visual_vector(p, 3);
    CHECK(v[0] == doctest::Approx(0.25));
    CHECK(v[1] == doctest::Approx(0.25));
    CHECK(v[2] == doctest::Approx(0.5));
  }
  SUBCASE("one-hot stays one-hot") {
    Vec p(3);
    p << 0.0, 0.7, 0.3;
    const Vec v = visual_vector(p, 2);
    CHECK(v[0] == 0.0);
    CHECK(v[1] == 1.0);
  }
  SUBCASE("degenerate mass falls back to uniform") {
    Vec p(3);
    p << 0.0, 0.0, 1.0;
    const Vec v = visual_vector(p, 2);
    CHECK(v[0] == doctest::Approx(0.5));
    CHECK(v[1] == doctest::Approx(0.5));
  }
}

TEST_CASE("combine_similarity rows") {
  SUBCASE("uniform inputs give uniform rows") {
    const Mat s_lin = Mat::Constant(2, 3, 0.7);
    const Vec s_vis = Vec::Constant(3, 1.0 / 3);
    const Mat s = combine_similarity(s_lin, s_vis);
    for (int n = 0; n < 2; ++n)
      for (int b = 0; b < 3; ++b) CHECK(s(n, b) == doctest::Approx(1.0 / 3));
  }
  SUBCASE("hand softmax") {
    Mat s_lin(1, 2);
    s_lin << 1.0, 0.0;
    const Vec s_vis = Vec::Ones(2);
    const Mat s = combine_similarity(s_lin, s_vis);
    const double e = std::exp(1.0);
    CHECK(s(0, 0) == doctest::Approx(e / (e + 1)).epsilon(1e-12));
    CHECK(s(0, 1) == doctest::Approx(1 / (e + 1)).epsilon(1e-12));
  }
  SUBCASE("softmax shift invariance") {
    Mat a(1, 3), b(1, 3);
    a << 0.2, -0.4, 1.1;
    b = a.array() + 3.5;
    const Vec ones = Vec::Ones(3);
    const Mat sa = combine_similarity(a, ones);
    const Mat sb = combine_similarity(b, ones);
    for (int j = 0; j < 3; ++j) CHECK(sa(0, j) == doctest::Approx(sb(0, j)).epsilon(1e-12));
  }
}

TEST_CASE("combined rows positive and stochastic for random inputs") {
  for (int t = 0; t < 200; ++t) {
    const int nn = 1 + rng_index(4, 21, 1, t);
    const int nb = 1 + rng_index(5, 21, 2, t);
    Mat s_lin(nn, nb);
    Vec s_vis(nb);
    for (int n = 0; n < nn; ++n)
      for (int b = 0; b < nb; ++b)
        s_lin(n, b) = rng_uniform_in(-3, 3, 21, 3, t * 100 + n * 10 + b);
    for (int b = 0; b < nb; ++b) s_vis[b] = rng_uniform(21, 4, t * 10 + b);
    const Mat s = combine_similarity(s_lin, s_vis);
    for (int n = 0; n < nn; ++n) {
      CHECK(std::abs(s.row(n).sum() - 1.0) < 1e-9);
      for (int b = 0; b < nb; ++b) CHECK(s(n, b) > 0.0);
    }
  }
}

TEST_CASE("base-class permutation equivariance of the similarity pipeline") {
  Mat s_lin(2, 3);
  s_lin << 0.3, -1.0, 2.0, 0.0, 0.5, -0.2;
  Vec probs(5);
  probs << 0.1, 0.3, 0.2, 0.25, 0.15;
  const Vec s_vis = visual_vector(probs, 3);
  const Mat s = combine_similarity(s_lin, s_vis);

  const int perm[3] = {2, 0, 1};
  Mat s_lin_p(2, 3);
  Vec probs_p(5);
  probs_p[3] = probs[3];
  probs_p[4] = probs[4];
  for (int b = 0; b < 3; ++b) {
    s_lin_p.col(b) = s_lin.col(perm[b]);
    probs_p[b] = probs[perm[b]];
  }
  const Mat s_p = combine_similarity(s_lin_p, visual_vector(probs_p, 3));
  for (int n = 0; n < 2; ++n)
    for (int b = 0; b < 3; ++b)
      CHECK(s_p(n, b) == doctest::Approx(s(n, perm[b])).epsilon(1e-12));
}

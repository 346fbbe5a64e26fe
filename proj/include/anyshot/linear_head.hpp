#pragma once

#include <Eigen/Dense>

#include "anyshot/embeddings.hpp"
#include "anyshot/rng.hpp"

namespace anyshot {

// Affine map y = W z + b. Heads over structured outputs (per-class deltas,
// mask grids) store rows in row-major output order.
struct LinearHead {
  Mat W;
  Vec b;

  int out_dim() const { return static_cast<int>(W.rows()); }
  int in_dim() const { return static_cast<int>(W.cols()); }

  static LinearHead zero(int out, int in) {
    return {Mat::Zero(out, in), Vec::Zero(out)};
  }

  // small gaussian weights, zero bias; draws keyed by (seed, tag, index)
  static LinearHead gaussian(int out, int in, double sigma, uint64_t seed, uint64_t tag) {
    LinearHead h = zero(out, in);
    for (int i = 0; i < out; ++i)
      for (int j = 0; j < in; ++j)
        h.W(i, j) = sigma * rng_normal(seed, tag, static_cast<uint64_t>(i), static_cast<uint64_t>(j));
    return h;
  }

  // rows: P x in -> P x out
  Mat forward(const Mat& features) const {
    return (features * W.transpose()).rowwise() + b.transpose();
  }

  Vec forward_one(const Vec& z) const { return W * z + b; }
};

}  // namespace anyshot

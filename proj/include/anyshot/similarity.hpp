#pragma once

#include <Eigen/Dense>

#include "anyshot/embeddings.hpp"

namespace anyshot {

// max-shifted softmax of a vector
Vec softmax(const Vec& logits);

// Keep the first num_base entries of the all-class weak probabilities and
// renormalize to sum 1. Mass below 1e-12 falls back to the uniform vector
// so untrained detectors still transfer.
Vec visual_vector(const Vec& weak_probs, int num_base);

// Row n of the result is softmax over base classes of
// s_lin.row(n) .* s_vis; rows are strictly positive and sum to 1.
Mat combine_similarity(const Mat& s_lin, const Vec& s_vis);

}  // namespace anyshot

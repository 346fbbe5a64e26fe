#include "anyshot/similarity.hpp"

#include <stdexcept>

namespace anyshot {

Vec softmax(const Vec& logits) {
  const double m = logits.maxCoeff();
  Vec e = (logits.array() - m).exp();
  return e / e.sum();
}

Vec visual_vector(const Vec& weak_probs, int num_base) {
  if (num_base <= 0 || num_base > weak_probs.size())
    throw std::invalid_argument("visual_vector: invalid base-class count");
  Vec v = weak_probs.head(num_base);
  const double mass = v.sum();
  if (mass < 1e-12) return Vec::Constant(num_base, 1.0 / num_base);
  return v / mass;
}

Mat combine_similarity(const Mat& s_lin, const Vec& s_vis) {
  if (s_lin.cols() != s_vis.size())
    throw std::invalid_argument("combine_similarity: dimension mismatch");
  Mat s(s_lin.rows(), s_lin.cols());
  for (Eigen::Index n = 0; n < s_lin.rows(); ++n) {
    Vec row = s_lin.row(n).transpose().cwiseProduct(s_vis);
    s.row(n) = softmax(row).transpose();
  }
  return s;
}

}  // namespace anyshot

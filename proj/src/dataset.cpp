#include "anyshot/dataset.hpp"

#include <stdexcept>

namespace anyshot {

Mat ImageRecord::feature_matrix() const {
  if (proposals.empty()) return Mat(0, 0);
  Mat f(proposals.size(), proposals[0].z.size());
  for (size_t p = 0; p < proposals.size(); ++p) f.row(p) = proposals[p].z.transpose();
  return f;
}

std::string mask_to_string(const MaskGrid& mask) {
  std::string s(kMaskCells, '0');
  for (int i = 0; i < kMaskSize; ++i)
    for (int j = 0; j < kMaskSize; ++j)
      if (mask(i, j) >= 0.5) s[i * kMaskSize + j] = '1';
  return s;
}

MaskGrid mask_from_string(const std::string& s) {
  if (s.size() != kMaskCells)
    throw std::invalid_argument("mask string must have exactly 196 characters");
  MaskGrid m = MaskGrid::Zero();
  for (int i = 0; i < kMaskSize; ++i)
    for (int j = 0; j < kMaskSize; ++j) {
      const char ch = s[i * kMaskSize + j];
      if (ch != '0' && ch != '1')
        throw std::invalid_argument("mask string must contain only '0'/'1'");
      m(i, j) = ch == '1' ? 1.0 : 0.0;
    }
  return m;
}

}  // namespace anyshot

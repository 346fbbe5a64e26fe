#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "anyshot/class_split.hpp"
#include "anyshot/embeddings.hpp"
#include "anyshot/geometry.hpp"

namespace anyshot {

inline constexpr int kMaskSize = 14;
inline constexpr int kMaskCells = kMaskSize * kMaskSize;

// 14x14 grid, row-major; binary for targets, probabilities for predictions
using MaskGrid = Eigen::Matrix<double, kMaskSize, kMaskSize, Eigen::RowMajor>;

struct Annotation {
  int class_id = 0;  // canonical all-class index
  Box box;
  MaskGrid mask = MaskGrid::Zero();
};

struct Proposal {
  Box rbox;
  Vec z;
};

struct ImageRecord {
  int image_id = 0;
  std::vector<Proposal> proposals;
  std::vector<int> image_labels;  // one 0/1 per class, canonical order
  std::vector<Annotation> annotations;

  int num_proposals() const { return static_cast<int>(proposals.size()); }

  // P x d matrix of proposal features
  Mat feature_matrix() const;
};

struct Dataset {
  ClassSplit split;
  EmbeddingTable embeddings;
  std::vector<ImageRecord> train;
  std::vector<ImageRecord> test;
};

// serialize mask to 196 chars of '0'/'1', row-major (threshold 0.5)
std::string mask_to_string(const MaskGrid& mask);
MaskGrid mask_from_string(const std::string& s);

}  // namespace anyshot

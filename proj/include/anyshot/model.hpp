#pragma once

#include <functional>
#include <string>

#include "anyshot/class_split.hpp"
#include "anyshot/dataset.hpp"
#include "anyshot/linear_head.hpp"
#include "anyshot/weak_detector.hpp"

namespace anyshot {

// Residuals and heads layered on top of the weak detector. The delta blocks
// are exactly zero at construction; base heads train during base training,
// novel (direct-adaptation) blocks only during fine-tuning.
struct TransferParams {
  LinearHead delta_base_cls;   // (B+1) x d, row 0 = background
  LinearHead base_reg;         // (B*4) x d
  LinearHead base_seg;         // (B*196) x d
  LinearHead delta_novel_cls;  // N x d
  LinearHead delta_novel_reg;  // (N*4) x d
  LinearHead delta_novel_seg;  // (N*196) x d
};

struct Model {
  ClassSplit split;
  int feature_dim = 0;
  WeakDetectorParams weak;
  TransferParams transfer;

  int num_base() const { return split.num_base(); }
  int num_novel() const { return split.num_novel(); }
  int num_classes() const { return split.num_classes(); }
};

// Fresh model: small gaussian weights for the weak-detector streams, all
// transfer blocks zero.
Model init_model(const ClassSplit& split, int feature_dim, int refine_streams,
                 uint64_t seed, double init_sigma = 0.01);

// Visits every parameter block in a fixed order; data points at contiguous
// doubles (Eigen storage).
using BlockVisitor = std::function<void(const std::string& name, double* data, int count)>;
void for_each_block(Model& model, const BlockVisitor& visit);

void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace anyshot

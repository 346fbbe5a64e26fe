#pragma once

#include <string>
#include <vector>

#include "anyshot/model.hpp"
#include "anyshot/synthworld.hpp"

namespace anyshot {

struct TrainConfig {
  double alpha = 1.0;  // weak-loss weight in the base objective
  double learning_rate = 0.01;
  double finetune_learning_rate = 0.0003;  // few-shot phase runs cooler
  double momentum = 0.9;
  int base_iterations = 2000;
  int finetune_iterations_per_shot = 50;
  int batch_size = 8;
  uint64_t seed = 1;
  int k = 0;  // shots per novel class
  double fg_iou_threshold = 0.5;
  bool detect = true;
  bool segment = true;
  bool stop_gradient_weak = false;  // cut L_rcnn gradients into the weak branch
  int refine_streams = 3;
  double init_sigma = 0.18;
};

enum class TargetScope { kBase, kNovel, kAll };

struct TargetAssignment {
  std::vector<int> label;     // 0 = background, 1+c = all-class index c
  std::vector<int> gt_index;  // index into record.annotations, -1 for bg
  Mat reg_target;             // P x 4, rows meaningful for foreground only
  std::vector<MaskGrid> mask_target;  // per proposal, foreground only
  int num_foreground = 0;
};

// Foreground iff best IoU against an in-scope annotation reaches the
// threshold (inclusive). Regression target is the delta from rbox to the
// matched box; mask target is the matched mask rasterized into the proposal
// box.
TargetAssignment assign_targets(const ImageRecord& record, const ClassSplit& split,
                                TargetScope scope, double fg_iou_threshold);

struct LossReport {
  double total = 0.0;
  double rcnn_cls = 0.0;
  double rcnn_reg = 0.0;
  double rcnn_mask = 0.0;
  double weak_mil = 0.0;
  double weak_refine = 0.0;
};

struct LossOptions {
  TargetScope rcnn_scope = TargetScope::kBase;
  bool include_rcnn = true;
  bool include_weak = true;
  double alpha = 1.0;
  bool detect = true;
  bool segment = true;
  bool stop_gradient_weak = false;
  double fg_iou_threshold = 0.5;
};

// Pseudo-label sets per image (outer) per refinement stream (inner); pass to
// pin pseudo-labels across loss evaluations (they are constants by contract).
using FrozenPseudoLabels = std::vector<std::vector<PseudoLabelSet>>;

FrozenPseudoLabels snapshot_pseudo_labels(const std::vector<ImageRecord>& batch,
                                          const Model& model);

// Single evaluation path for training, fine-tuning, and the gradient
// checker. grads, when given, must be a zero-initialized model-shaped
// accumulator (see zeros_like). assignments, when given, override the
// per-image target computation (one entry per batch image).
LossReport compute_loss(const std::vector<ImageRecord>& batch, const Model& model,
                        const Mat& s_lin, const LossOptions& opts,
                        const FrozenPseudoLabels* frozen = nullptr,
                        Model* grads = nullptr,
                        const std::vector<TargetAssignment>* assignments = nullptr);

// base-phase objective: L_rcnn over base targets + alpha * L_weak
LossReport total_loss(const std::vector<ImageRecord>& batch, const Model& model,
                      const Mat& s_lin, const TrainConfig& config);

// rcnn components only, with externally supplied assignments
LossReport rcnn_loss(const std::vector<ImageRecord>& batch, const Model& model,
                     const Mat& s_lin, const std::vector<TargetAssignment>& assignments,
                     const LossOptions& opts);

Model zeros_like(const Model& model);

struct TraceRow {
  int iteration = 0;
  LossReport loss;
};

// SGD with momentum on the base-phase trainable set (weak detector +
// delta_base_cls + base_reg + base_seg), 10x learning-rate decay at 60% and
// 80% of the schedule. Records the loss every iteration plus a final row
// after the last update.
std::vector<TraceRow> base_train(Model& model, const std::vector<ImageRecord>& train,
                                 const Mat& s_lin, const TrainConfig& config);

struct FineTuneInfo {
  int iterations = 0;
  int base_annotations_ignored = 0;
};

// k-shot adaptation: trains only the three direct-adaptation blocks on
// L_rcnn over novel targets, finetune_iterations_per_shot * k steps.
// Rejects k = 0.
FineTuneInfo fine_tune(Model& model, const std::vector<ImageRecord>& kshot,
                       const Mat& s_lin, const TrainConfig& config);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_block;
  int worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// Central finite differences against the analytic gradient for every
// parameter scalar. Pseudo-labels are snapshotted once and held constant on
// both sides.
GradCheckReport grad_check(Model& model, const std::vector<ImageRecord>& batch,
                           const Mat& s_lin, const LossOptions& opts,
                           double step = 1e-6);

}  // namespace anyshot

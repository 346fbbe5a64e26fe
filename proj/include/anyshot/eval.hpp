#pragma once

#include <optional>
#include <string>
#include <vector>

#include "anyshot/transfer_heads.hpp"

namespace anyshot {

struct MatchResult {
  std::vector<bool> det_is_tp;   // per detection, score-descending order
  std::vector<bool> gt_matched;  // per ground truth
};

// Greedy matching for one class in one image: detections in score order take
// the unmatched ground truth with highest IoU >= threshold.
MatchResult match_detections(const std::vector<Detection>& dets_sorted,
                             const std::vector<Annotation>& gts,
                             double iou_threshold, bool use_mask_iou);

// Both masks pasted into their boxes on a shared 112x112 unit-square raster
// (nearest neighbor, threshold 0.5), then binary IoU.
double mask_paste_iou(const MaskGrid& mask_a, const Box& box_a,
                      const MaskGrid& mask_b, const Box& box_b);

// All-point interpolated area under the precision envelope. num_gt = 0 with
// no detections -> nullopt (class excluded from aggregates); with detections
// -> 0.
std::optional<double> average_precision(const std::vector<bool>& tp_flags, int num_gt);

struct ClassEval {
  int class_id = 0;
  std::string name;
  bool is_base = true;
  int num_gt = 0;
  std::optional<double> ap50;
  std::optional<double> map;  // mean over IoU 0.50:0.05:0.95
  std::optional<double> mask_ap50;
  std::optional<double> mask_map;
};

struct EvalReport {
  std::vector<ClassEval> per_class;
  std::optional<double> base_ap50, base_map, novel_ap50, novel_map, all_ap50, all_map;
  std::optional<double> base_mask_ap50, base_mask_map, novel_mask_ap50, novel_mask_map;
  std::optional<double> all_mask_ap50, all_mask_map;
};

struct EvalOptions {
  PredictMode scope = PredictMode::kAll;
  bool segment = true;  // also compute mask metrics
  int threads = 1;      // per-image prediction workers; results are
                        // position-keyed so the count never changes output
  PredictOptions predict;
};

EvalReport evaluate_model(const Model& model, const Mat& s_lin,
                          const std::vector<ImageRecord>& test_set,
                          const EvalOptions& opts);

}  // namespace anyshot

#pragma once

#include <vector>

#include "anyshot/dataset.hpp"
#include "anyshot/linear_head.hpp"

namespace anyshot {

inline constexpr double kImageScoreEps = 1e-6;

// Two-stream image-label detector plus R refinement heads. Refinement heads
// emit |C|+1 logits with index 0 = background.
struct WeakDetectorParams {
  LinearHead cls_stream;
  LinearHead det_stream;
  std::vector<LinearHead> refine;

  int num_classes() const { return cls_stream.out_dim(); }
  int feature_dim() const { return cls_stream.in_dim(); }
  int num_refine() const { return static_cast<int>(refine.size()); }
};

struct WsddnResult {
  Mat cls_softmax;      // P x C, softmax over classes per proposal
  Mat det_softmax;      // P x C, softmax over proposals per class
  Mat proposal_scores;  // elementwise product of the two streams
  Vec image_scores;     // column sums clamped to [eps, 1-eps]
};

// throws std::invalid_argument on an empty image
WsddnResult wsddn_forward(const Mat& features, const WeakDetectorParams& params);

struct WeakAggregate {
  Mat fg_logits;  // P x C, mean over refinement heads of foreground logits
  Vec bg_logit;   // P, mean background logit (carried for full inference)
  Mat probs;      // P x C, row-stochastic over foreground classes
};

WeakAggregate weak_aggregate(const Mat& features, const WeakDetectorParams& params);

// One label per proposal: 0 = background, 1+c = all-class index c.
struct PseudoLabelSet {
  std::vector<int> label;
  Vec weight;
};

// Supervision for refinement stream r from the scores of stream r-1
// (WSDDN proposal scores when r = 1). For each positive image class, the
// top-scoring proposal and everything at IoU >= threshold with it inherit
// the class and the top score as loss weight; the rest is background with
// weight 1. Conflicts resolve by higher weight, then lower class index.
PseudoLabelSet oicr_pseudo_labels(const Mat& prev_scores,
                                  const std::vector<int>& image_labels,
                                  const std::vector<Box>& boxes,
                                  double iou_threshold = 0.5);

struct WeakLossTerms {
  double mil = 0.0;
  double refine = 0.0;
  double total() const { return mil + refine; }
};

// MIL binary cross-entropy on image scores plus weighted cross-entropy of
// each refinement stream against pseudo-labels from the previous stream,
// averaged over proposals then images. Pseudo-labels are constants: pass
// frozen sets (one per image, outer index image, inner index stream) to pin
// them, e.g. for finite-difference checks.
WeakLossTerms weak_loss(const std::vector<ImageRecord>& batch,
                        const WeakDetectorParams& params,
                        const std::vector<std::vector<PseudoLabelSet>>* frozen = nullptr);

}  // namespace anyshot

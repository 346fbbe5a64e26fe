#pragma once

#include <optional>
#include <vector>

#include "anyshot/model.hpp"
#include "anyshot/similarity.hpp"

namespace anyshot {

// --- single-proposal head compositions ------------------------------------

// [bg | base] logits: aggregated weak logits plus the residual head output.
Vec base_cls_logits(const Vec& z, const WeakDetectorParams& weak,
                    const TransferParams& transfer);

// per-base-class delta rows, decoded against rbox at inference
Mat base_reg_deltas(const Vec& z, const TransferParams& transfer);

// raw mask logits, B x 196 row-major; probabilities are sigmoid
Mat base_seg_logits(const Vec& z, const TransferParams& transfer, bool segment_enabled);

// weak novel logits + S(z) * foreground residuals + optional direct term
Vec novel_cls_logits(const Vec& z, const WeakDetectorParams& weak,
                     const TransferParams& transfer, const Mat& s_of_z,
                     bool include_direct);

Mat novel_reg_deltas(const Vec& z, const TransferParams& transfer,
                     const Mat& s_of_z, bool include_direct);

Mat novel_seg_logits(const Vec& z, const TransferParams& transfer,
                     const Mat& s_of_z, bool include_direct, bool segment_enabled);

// --- inference -------------------------------------------------------------

struct Detection {
  int image_id = 0;
  int class_id = 0;
  double score = 0.0;
  Box box;
  std::optional<MaskGrid> mask;  // probabilities in [0,1]
};

enum class PredictMode { kBaseOnly, kNovelOnly, kAll };

// Inference-time ablation ladder. Each variant builds on the previous one;
// kFull is kLinVisRegSeg with direct-adaptation terms included.
enum class Variant { kWeak, kAvgDelta, kLin, kLinVis, kLinVisReg, kLinVisRegSeg, kFull };

struct PredictOptions {
  PredictMode mode = PredictMode::kAll;
  double score_threshold = 0.001;
  double nms_threshold = 0.5;
  Variant variant = Variant::kFull;
  // false: base classes score against the trained background, novel classes
  // among themselves; true: one softmax over [bg|base|novel]
  bool joint_softmax = false;
  bool segment = true;         // attach masks to detections
  bool include_direct = true;  // direct-adaptation terms in Eqs. 3-5
};

Variant parse_variant(const std::string& name);
std::string variant_name(Variant v);

// Similarity rows used by a variant for one proposal.
Mat variant_similarity(Variant v, const Mat& s_lin, const Vec& s_vis);

std::vector<Detection> predict_image(const ImageRecord& record, const Model& model,
                                     const Mat& s_lin, const PredictOptions& opts);

}  // namespace anyshot

#include "anyshot/weak_detector.hpp"

#include <cmath>
#include <stdexcept>

#include "anyshot/similarity.hpp"

namespace anyshot {

namespace {

Mat row_softmax(const Mat& logits) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i)
    out.row(i) = softmax(logits.row(i).transpose()).transpose();
  return out;
}

Mat col_softmax(const Mat& logits) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j)
    out.col(j) = softmax(logits.col(j));
  return out;
}

}  // namespace

WsddnResult wsddn_forward(const Mat& features, const WeakDetectorParams& params) {
  if (features.rows() == 0)
    throw std::invalid_argument("wsddn_forward: image has no proposals");
  WsddnResult r;
  r.cls_softmax = row_softmax(params.cls_stream.forward(features));
  r.det_softmax = col_softmax(params.det_stream.forward(features));
  r.proposal_scores = r.cls_softmax.cwiseProduct(r.det_softmax);
  r.image_scores = r.proposal_scores.colwise().sum().transpose();
  r.image_scores = r.image_scores.cwiseMax(kImageScoreEps).cwiseMin(1.0 - kImageScoreEps);
  return r;
}

WeakAggregate weak_aggregate(const Mat& features, const WeakDetectorParams& params) {
  const int num_classes = params.num_classes();
  const double inv_r = 1.0 / params.num_refine();
  WeakAggregate agg;
  agg.fg_logits = Mat::Zero(features.rows(), num_classes);
  agg.bg_logit = Vec::Zero(features.rows());
  for (const LinearHead& head : params.refine) {
    Mat logits = head.forward(features);
    agg.bg_logit += inv_r * logits.col(0);
    agg.fg_logits += inv_r * logits.rightCols(num_classes);
  }
  agg.probs = row_softmax(agg.fg_logits);
  return agg;
}

PseudoLabelSet oicr_pseudo_labels(const Mat& prev_scores,
                                  const std::vector<int>& image_labels,
                                  const std::vector<Box>& boxes,
                                  double iou_threshold) {
  const int num_proposals = static_cast<int>(prev_scores.rows());
  PseudoLabelSet out;
  out.label.assign(num_proposals, 0);
  out.weight = Vec::Ones(num_proposals);

  for (int c = 0; c < static_cast<int>(image_labels.size()); ++c) {
    if (image_labels[c] != 1) continue;
    int top = 0;
    for (int p = 1; p < num_proposals; ++p)
      if (prev_scores(p, c) > prev_scores(top, c)) top = p;
    const double w = prev_scores(top, c);
    for (int p = 0; p < num_proposals; ++p) {
      if (iou(boxes[p], boxes[top]) < iou_threshold) continue;
      const bool claimed = out.label[p] != 0;
      if (!claimed || w > out.weight[p] ||
          (w == out.weight[p] && c + 1 < out.label[p])) {
        out.label[p] = c + 1;
        out.weight[p] = w;
      }
    }
  }
  return out;
}

WeakLossTerms weak_loss(const std::vector<ImageRecord>& batch,
                        const WeakDetectorParams& params,
                        const std::vector<std::vector<PseudoLabelSet>>* frozen) {
  if (batch.empty()) throw std::invalid_argument("weak_loss: empty batch");
  const int num_classes = params.num_classes();
  WeakLossTerms terms;
  for (size_t i = 0; i < batch.size(); ++i) {
    const ImageRecord& rec = batch[i];
    const Mat features = rec.feature_matrix();
    const int num_proposals = rec.num_proposals();
    const WsddnResult wsddn = wsddn_forward(features, params);

    for (int c = 0; c < num_classes; ++c) {
      if (rec.image_labels[c] < 0) continue;  // unknown: no supervision
      const double phi = wsddn.image_scores[c];
      terms.mil += rec.image_labels[c] ? -std::log(phi) : -std::log(1.0 - phi);
    }

    std::vector<Box> boxes(rec.proposals.size());
    for (size_t p = 0; p < rec.proposals.size(); ++p) boxes[p] = rec.proposals[p].rbox;

    Mat prev = wsddn.proposal_scores;
    for (int r = 0; r < params.num_refine(); ++r) {
      const PseudoLabelSet labels =
          frozen ? (*frozen)[i][r]
                 : oicr_pseudo_labels(prev, rec.image_labels, boxes);
      const Mat logits = params.refine[r].forward(features);
      double stream_loss = 0.0;
      Mat probs(num_proposals, num_classes + 1);
      for (int p = 0; p < num_proposals; ++p) {
        probs.row(p) = softmax(logits.row(p).transpose()).transpose();
        stream_loss -= labels.weight[p] * std::log(probs(p, labels.label[p]));
      }
      terms.refine += stream_loss / num_proposals;
      prev = probs.rightCols(num_classes);
    }
  }
  terms.mil /= static_cast<double>(batch.size());
  terms.refine /= static_cast<double>(batch.size());
  return terms;
}

}  // namespace anyshot

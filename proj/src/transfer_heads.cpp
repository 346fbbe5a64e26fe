#include "anyshot/transfer_heads.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace anyshot {

namespace {

void check_rows(const Mat& s, int novel, int base) {
  if (s.rows() != novel || s.cols() != base)
    throw std::invalid_argument("similarity matrix has wrong shape for class split");
}

Mat row_softmax(const Mat& m) {
  Mat out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    out.row(i) = softmax(m.row(i).transpose()).transpose();
  return out;
}

}  // namespace

Vec base_cls_logits(const Vec& z, const WeakDetectorParams& weak,
                    const TransferParams& transfer) {
  const WeakAggregate agg = weak_aggregate(z.transpose(), weak);
  const int nb = transfer.delta_base_cls.out_dim() - 1;
  Vec out(nb + 1);
  out[0] = agg.bg_logit[0];
  out.tail(nb) = agg.fg_logits.row(0).head(nb).transpose();
  out += transfer.delta_base_cls.forward_one(z);
  return out;
}

Mat base_reg_deltas(const Vec& z, const TransferParams& transfer) {
  const int nb = transfer.delta_base_cls.out_dim() - 1;
  Vec flat = transfer.base_reg.forward_one(z);
  return Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      flat.data(), nb, 4);
}

Mat base_seg_logits(const Vec& z, const TransferParams& transfer, bool segment_enabled) {
  if (!segment_enabled)
    throw std::logic_error("segmentation task is disabled");
  const int nb = transfer.delta_base_cls.out_dim() - 1;
  Vec flat = transfer.base_seg.forward_one(z);
  return Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      flat.data(), nb, kMaskCells);
}

Vec novel_cls_logits(const Vec& z, const WeakDetectorParams& weak,
                     const TransferParams& transfer, const Mat& s_of_z,
                     bool include_direct) {
  const int nb = transfer.delta_base_cls.out_dim() - 1;
  const int nn = transfer.delta_novel_cls.out_dim();
  check_rows(s_of_z, nn, nb);
  const WeakAggregate agg = weak_aggregate(z.transpose(), weak);
  const Vec base_residual = transfer.delta_base_cls.forward_one(z).tail(nb);
  Vec out = agg.fg_logits.row(0).tail(nn).transpose() + s_of_z * base_residual;
  if (include_direct) out += transfer.delta_novel_cls.forward_one(z);
  return out;
}

Mat novel_reg_deltas(const Vec& z, const TransferParams& transfer,
                     const Mat& s_of_z, bool include_direct) {
  const int nb = transfer.delta_base_cls.out_dim() - 1;
  const int nn = transfer.delta_novel_cls.out_dim();
  check_rows(s_of_z, nn, nb);
  Mat out = s_of_z * base_reg_deltas(z, transfer);
  if (include_direct) {
    Vec flat = transfer.delta_novel_reg.forward_one(z);
    out += Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        flat.data(), nn, 4);
  }
  return out;
}

Mat novel_seg_logits(const Vec& z, const TransferParams& transfer,
                     const Mat& s_of_z, bool include_direct, bool segment_enabled) {
  if (!segment_enabled)
    throw std::logic_error("segmentation task is disabled");
  const int nb = transfer.delta_base_cls.out_dim() - 1;
  const int nn = transfer.delta_novel_cls.out_dim();
  check_rows(s_of_z, nn, nb);
  Mat out = s_of_z * base_seg_logits(z, transfer, true);
  if (include_direct) {
    Vec flat = transfer.delta_novel_seg.forward_one(z);
    out += Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        flat.data(), nn, kMaskCells);
  }
  return out;
}

Variant parse_variant(const std::string& name) {
  if (name == "weak") return Variant::kWeak;
  if (name == "avg") return Variant::kAvgDelta;
  if (name == "lin") return Variant::kLin;
  if (name == "lin+vis") return Variant::kLinVis;
  if (name == "lin+vis+reg") return Variant::kLinVisReg;
  if (name == "lin+vis+reg+seg") return Variant::kLinVisRegSeg;
  if (name == "full") return Variant::kFull;
  throw std::invalid_argument("unknown variant: " + name);
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kWeak: return "weak";
    case Variant::kAvgDelta: return "avg";
    case Variant::kLin: return "lin";
    case Variant::kLinVis: return "lin+vis";
    case Variant::kLinVisReg: return "lin+vis+reg";
    case Variant::kLinVisRegSeg: return "lin+vis+reg+seg";
    case Variant::kFull: return "full";
  }
  return "full";
}

Mat variant_similarity(Variant v, const Mat& s_lin, const Vec& s_vis) {
  switch (v) {
    case Variant::kWeak:
    case Variant::kAvgDelta:
      return Mat::Constant(s_lin.rows(), s_lin.cols(), 1.0 / s_lin.cols());
    case Variant::kLin:
      return row_softmax(s_lin);
    default:
      return combine_similarity(s_lin, s_vis);
  }
}

namespace {

MaskGrid uniform_mask() { return MaskGrid::Constant(1.0); }

MaskGrid sigmoid_mask(const Eigen::Ref<const Vec>& logits) {
  MaskGrid m;
  for (int i = 0; i < kMaskSize; ++i)
    for (int j = 0; j < kMaskSize; ++j)
      m(i, j) = 1.0 / (1.0 + std::exp(-logits[i * kMaskSize + j]));
  return m;
}

}  // namespace

std::vector<Detection> predict_image(const ImageRecord& record, const Model& model,
                                     const Mat& s_lin, const PredictOptions& opts) {
  std::vector<Detection> dets;
  if (record.proposals.empty()) return dets;

  const int nb = model.num_base();
  const int nn = model.num_novel();
  const Mat features = record.feature_matrix();
  const WeakAggregate agg = weak_aggregate(features, model.weak);
  const bool novel_reg =
      opts.variant == Variant::kLinVisReg || opts.variant == Variant::kLinVisRegSeg ||
      opts.variant == Variant::kFull;
  const bool novel_seg =
      opts.variant == Variant::kLinVisRegSeg || opts.variant == Variant::kFull;
  const bool direct = opts.include_direct && opts.variant == Variant::kFull;

  for (int p = 0; p < record.num_proposals(); ++p) {
    const Vec& z = record.proposals[p].z;
    const Box& rbox = record.proposals[p].rbox;

    Vec scores(model.num_classes());
    Mat base_deltas, novel_deltas, base_masks, novel_masks;

    if (opts.variant == Variant::kWeak) {
      Vec logits(model.num_classes() + 1);
      logits[0] = agg.bg_logit[p];
      logits.tail(model.num_classes()) = agg.fg_logits.row(p).transpose();
      scores = softmax(logits).tail(model.num_classes());
    } else {
      const Vec s_vis = visual_vector(agg.probs.row(p).transpose(), nb);
      const Mat s = variant_similarity(opts.variant, s_lin, s_vis);

      const Vec residual = model.transfer.delta_base_cls.forward_one(z);
      Vec base_logits(nb + 1);
      base_logits[0] = agg.bg_logit[p] + residual[0];
      base_logits.tail(nb) =
          agg.fg_logits.row(p).head(nb).transpose() + residual.tail(nb);

      Vec novel_logits =
          agg.fg_logits.row(p).tail(nn).transpose() + s * residual.tail(nb);
      if (direct) novel_logits += model.transfer.delta_novel_cls.forward_one(z);

      if (opts.joint_softmax) {
        Vec joint(1 + nb + nn);
        joint[0] = base_logits[0];
        joint.segment(1, nb) = base_logits.tail(nb);
        joint.tail(nn) = novel_logits;
        const Vec probs = softmax(joint);
        scores.head(nb) = probs.segment(1, nb);
        scores.tail(nn) = probs.tail(nn);
      } else {
        // independent group scoring: base classes against the trained
        // background, novel classes among themselves (the novel group has
        // no trained background logit of its own)
        scores.head(nb) = softmax(base_logits).tail(nb);
        scores.tail(nn) = softmax(novel_logits);
      }

      base_deltas = base_reg_deltas(z, model.transfer);
      if (novel_reg) {
        novel_deltas = s * base_deltas;
        if (direct) {
          Vec flat = model.transfer.delta_novel_reg.forward_one(z);
          novel_deltas +=
              Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                  flat.data(), nn, 4);
        }
      }
      if (opts.segment) {
        base_masks = base_seg_logits(z, model.transfer, true);
        if (novel_seg) {
          novel_masks = s * base_masks;
          if (direct) {
            Vec flat = model.transfer.delta_novel_seg.forward_one(z);
            novel_masks +=
                Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                    flat.data(), nn, kMaskCells);
          }
        }
      }
    }

    const int c_lo = opts.mode == PredictMode::kNovelOnly ? nb : 0;
    const int c_hi = opts.mode == PredictMode::kBaseOnly ? nb : model.num_classes();
    for (int c = c_lo; c < c_hi; ++c) {
      if (scores[c] < opts.score_threshold) continue;
      Detection d;
      d.image_id = record.image_id;
      d.class_id = c;
      d.score = scores[c];
      if (opts.variant == Variant::kWeak) {
        d.box = rbox;
      } else if (c < nb) {
        Delta4 delta{base_deltas(c, 0), base_deltas(c, 1), base_deltas(c, 2),
                     base_deltas(c, 3)};
        d.box = apply_deltas(rbox, delta);
      } else if (novel_reg) {
        const int n = c - nb;
        Delta4 delta{novel_deltas(n, 0), novel_deltas(n, 1), novel_deltas(n, 2),
                     novel_deltas(n, 3)};
        d.box = apply_deltas(rbox, delta);
      } else {
        d.box = rbox;
      }
      if (opts.segment) {
        if (opts.variant == Variant::kWeak) {
          d.mask = uniform_mask();
        } else if (c < nb) {
          d.mask = sigmoid_mask(base_masks.row(c).transpose());
        } else if (novel_seg) {
          d.mask = sigmoid_mask(novel_masks.row(c - nb).transpose());
        } else {
          d.mask = uniform_mask();
        }
      }
      dets.push_back(std::move(d));
    }
  }

  // greedy per-class NMS with the same ordering contract as geometry::nms
  std::vector<size_t> order(dets.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    if (dets[a].class_id != dets[b].class_id) return dets[a].class_id < dets[b].class_id;
    const Box& ba = dets[a].box;
    const Box& bb = dets[b].box;
    if (ba.x1 != bb.x1) return ba.x1 < bb.x1;
    if (ba.y1 != bb.y1) return ba.y1 < bb.y1;
    if (ba.x2 != bb.x2) return ba.x2 < bb.x2;
    return ba.y2 < bb.y2;
  });

  std::vector<Detection> out;
  out.reserve(dets.size());
  for (size_t i : order) {
    bool suppressed = false;
    for (const Detection& k : out) {
      if (k.class_id == dets[i].class_id &&
          iou(k.box, dets[i].box) >= opts.nms_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) out.push_back(std::move(dets[i]));
  }
  return out;
}

}  // namespace anyshot

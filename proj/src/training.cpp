#include "anyshot/training.hpp"

#include <cmath>
#include <stdexcept>

#include "anyshot/rng.hpp"
#include "anyshot/similarity.hpp"

namespace anyshot {

namespace {

constexpr uint64_t kBatchStream = 0xb47c;

double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

double smooth_l1_grad(double x) {
  return std::abs(x) < 1.0 ? x : (x > 0 ? 1.0 : -1.0);
}

// numerically stable binary cross-entropy with logits
double bce_with_logits(double logit, double target) {
  return std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Vec softmax_backward(const Vec& s, const Vec& ds) {
  return (s.array() * (ds.array() - ds.dot(s))).matrix();
}

double log_sum_exp(const Eigen::Ref<const Vec>& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

void accumulate_linear(LinearHead& g, const Mat& d_out, const Mat& features, double scale) {
  g.W.noalias() += scale * d_out.transpose() * features;
  g.b.noalias() += scale * d_out.colwise().sum().transpose();
}

}  // namespace

TargetAssignment assign_targets(const ImageRecord& record, const ClassSplit& split,
                                TargetScope scope, double fg_iou_threshold) {
  if (record.proposals.empty())
    throw std::invalid_argument("assign_targets: image has no proposals");
  const int nb = split.num_base();
  std::vector<int> in_scope;
  for (int a = 0; a < static_cast<int>(record.annotations.size()); ++a) {
    const int c = record.annotations[a].class_id;
    if (scope == TargetScope::kAll || (scope == TargetScope::kBase && c < nb) ||
        (scope == TargetScope::kNovel && c >= nb))
      in_scope.push_back(a);
  }

  const int num_proposals = record.num_proposals();
  TargetAssignment t;
  t.label.assign(num_proposals, 0);
  t.gt_index.assign(num_proposals, -1);
  t.reg_target = Mat::Zero(num_proposals, 4);
  t.mask_target.assign(num_proposals, MaskGrid::Zero());

  for (int p = 0; p < num_proposals; ++p) {
    const Box& rbox = record.proposals[p].rbox;
    double best = -1.0;
    int best_a = -1;
    for (int a : in_scope) {
      const double ov = iou(rbox, record.annotations[a].box);
      if (ov > best) {
        best = ov;
        best_a = a;
      }
    }
    if (best_a < 0 || best < fg_iou_threshold) continue;

    const Annotation& gt = record.annotations[best_a];
    t.label[p] = 1 + gt.class_id;
    t.gt_index[p] = best_a;
    ++t.num_foreground;
    const Delta4 d = encode_deltas(rbox, gt.box);
    t.reg_target.row(p) << d.tx, d.ty, d.tw, d.th;

    // gt mask resampled onto the proposal grid
    MaskGrid& m = t.mask_target[p];
    for (int i = 0; i < kMaskSize; ++i) {
      const double y = rbox.y1 + (i + 0.5) / kMaskSize * rbox.height();
      for (int j = 0; j < kMaskSize; ++j) {
        const double x = rbox.x1 + (j + 0.5) / kMaskSize * rbox.width();
        if (x < gt.box.x1 || x >= gt.box.x2 || y < gt.box.y1 || y >= gt.box.y2) continue;
        const int mi = std::min(kMaskSize - 1, static_cast<int>((y - gt.box.y1) /
                                                                gt.box.height() * kMaskSize));
        const int mj = std::min(kMaskSize - 1, static_cast<int>((x - gt.box.x1) /
                                                                gt.box.width() * kMaskSize));
        m(i, j) = gt.mask(mi, mj);
      }
    }
  }
  return t;
}

FrozenPseudoLabels snapshot_pseudo_labels(const std::vector<ImageRecord>& batch,
                                          const Model& model) {
  FrozenPseudoLabels frozen(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) {
    const ImageRecord& rec = batch[i];
    const Mat features = rec.feature_matrix();
    const WsddnResult wsddn = wsddn_forward(features, model.weak);
    std::vector<Box> boxes(rec.proposals.size());
    for (size_t p = 0; p < rec.proposals.size(); ++p) boxes[p] = rec.proposals[p].rbox;

    Mat prev = wsddn.proposal_scores;
    for (int r = 0; r < model.weak.num_refine(); ++r) {
      frozen[i].push_back(oicr_pseudo_labels(prev, rec.image_labels, boxes));
      const Mat logits = model.weak.refine[r].forward(features);
      Mat probs(logits.rows(), logits.cols());
      for (Eigen::Index p = 0; p < logits.rows(); ++p)
        probs.row(p) = softmax(logits.row(p).transpose()).transpose();
      prev = probs.rightCols(model.num_classes());
    }
  }
  return frozen;
}

LossReport compute_loss(const std::vector<ImageRecord>& batch, const Model& model,
                        const Mat& s_lin, const LossOptions& opts,
                        const FrozenPseudoLabels* frozen, Model* grads,
                        const std::vector<TargetAssignment>* assignments) {
  if (batch.empty()) throw std::invalid_argument("compute_loss: empty batch");
  const int nc = model.num_classes();
  const int nb = model.num_base();
  const int nn = model.num_novel();
  const int rstreams = model.weak.num_refine();
  const double lambda = 1.0 / batch.size();

  LossReport report;

  for (size_t img = 0; img < batch.size(); ++img) {
    const ImageRecord& rec = batch[img];
    const int num_proposals = rec.num_proposals();
    if (num_proposals == 0)
      throw std::invalid_argument("compute_loss: image has no proposals");
    const Mat features = rec.feature_matrix();

    // ---- shared weak-branch forward -------------------------------------
    std::vector<Mat> refine_logits(rstreams), refine_probs(rstreams);
    for (int r = 0; r < rstreams; ++r) {
      refine_logits[r] = model.weak.refine[r].forward(features);
      refine_probs[r].resize(num_proposals, nc + 1);
      for (int p = 0; p < num_proposals; ++p)
        refine_probs[r].row(p) =
            softmax(refine_logits[r].row(p).transpose()).transpose();
    }
    Mat fg_logits = Mat::Zero(num_proposals, nc);
    Vec bg_logit = Vec::Zero(num_proposals);
    for (int r = 0; r < rstreams; ++r) {
      bg_logit += refine_logits[r].col(0) / rstreams;
      fg_logits += refine_logits[r].rightCols(nc) / rstreams;
    }
    Mat weak_probs(num_proposals, nc);
    for (int p = 0; p < num_proposals; ++p)
      weak_probs.row(p) = softmax(fg_logits.row(p).transpose()).transpose();

    // gradient accumulators (pre-activation space)
    std::vector<Mat> d_refine(rstreams);
    for (int r = 0; r < rstreams; ++r)
      d_refine[r] = Mat::Zero(num_proposals, nc + 1);
    Mat d_fg_rcnn = Mat::Zero(num_proposals, nc);
    Vec d_bg_rcnn = Vec::Zero(num_proposals);
    Mat d_weak_probs = Mat::Zero(num_proposals, nc);

    // ---- weak loss -------------------------------------------------------
    if (opts.include_weak) {
      const WsddnResult wsddn = wsddn_forward(features, model.weak);
      double mil = 0.0;
      Vec d_phi = Vec::Zero(nc);
      const Vec raw_sums = wsddn.proposal_scores.colwise().sum().transpose();
      for (int c = 0; c < nc; ++c) {
        if (rec.image_labels[c] < 0) continue;  // unknown: no supervision
        const double phi = wsddn.image_scores[c];
        const bool label = rec.image_labels[c] == 1;
        mil += label ? -std::log(phi) : -std::log(1.0 - phi);
        const bool clamped = raw_sums[c] < kImageScoreEps ||
                             raw_sums[c] > 1.0 - kImageScoreEps;
        if (!clamped)
          d_phi[c] = opts.alpha * (label ? -1.0 / phi : 1.0 / (1.0 - phi));
      }
      report.weak_mil += lambda * mil;

      if (grads) {
        // X = SC .* SD, phi_c = sum_p X[p,c]
        Mat d_sc(num_proposals, nc), d_sd(num_proposals, nc);
        for (int p = 0; p < num_proposals; ++p)
          for (int c = 0; c < nc; ++c) {
            d_sc(p, c) = d_phi[c] * wsddn.det_softmax(p, c);
            d_sd(p, c) = d_phi[c] * wsddn.cls_softmax(p, c);
          }
        Mat d_a(num_proposals, nc), d_b(num_proposals, nc);
        for (int p = 0; p < num_proposals; ++p)
          d_a.row(p) = softmax_backward(wsddn.cls_softmax.row(p).transpose(),
                                        d_sc.row(p).transpose())
                           .transpose();
        for (int c = 0; c < nc; ++c)
          d_b.col(c) = softmax_backward(wsddn.det_softmax.col(c), d_sd.col(c));
        accumulate_linear(grads->weak.cls_stream, d_a, features, lambda);
        accumulate_linear(grads->weak.det_stream, d_b, features, lambda);
      }

      // refinement streams against pseudo-labels (constants)
      std::vector<Box> boxes(rec.proposals.size());
      for (size_t p = 0; p < rec.proposals.size(); ++p) boxes[p] = rec.proposals[p].rbox;
      Mat prev = wsddn.proposal_scores;
      double refine_loss = 0.0;
      for (int r = 0; r < rstreams; ++r) {
        const PseudoLabelSet labels =
            frozen ? (*frozen)[img][r]
                   : oicr_pseudo_labels(prev, rec.image_labels, boxes);
        for (int p = 0; p < num_proposals; ++p) {
          const int l = labels.label[p];
          const double w = labels.weight[p];
          refine_loss +=
              w * (log_sum_exp(refine_logits[r].row(p).transpose()) -
                   refine_logits[r](p, l)) /
              num_proposals;
          if (grads) {
            const double s = opts.alpha * w / num_proposals;
            d_refine[r].row(p) += s * refine_probs[r].row(p);
            d_refine[r](p, l) -= s;
          }
        }
        prev = refine_probs[r].rightCols(nc);
      }
      report.weak_refine += lambda * refine_loss;
    }

    // ---- rcnn branch -----------------------------------------------------
    if (!opts.include_rcnn) {
      if (grads)
        for (int r = 0; r < rstreams; ++r)
          accumulate_linear(grads->weak.refine[r], d_refine[r], features, lambda);
      continue;
    }
    const TargetAssignment assign =
        assignments ? (*assignments)[img]
                    : assign_targets(rec, model.split, opts.rcnn_scope,
                                     opts.fg_iou_threshold);

    // per-proposal similarity
    std::vector<Mat> sim(num_proposals);
    Mat vis(num_proposals, nb);
    std::vector<bool> vis_uniform(num_proposals, false);
    Vec base_mass(num_proposals);
    for (int p = 0; p < num_proposals; ++p) {
      base_mass[p] = weak_probs.row(p).head(nb).sum();
      if (base_mass[p] < 1e-12) {
        vis_uniform[p] = true;
        vis.row(p).setConstant(1.0 / nb);
      } else {
        vis.row(p) = weak_probs.row(p).head(nb) / base_mass[p];
      }
      sim[p] = combine_similarity(s_lin, vis.row(p).transpose());
    }

    const Mat residual = model.transfer.delta_base_cls.forward(features);  // P x (B+1)
    const Mat novel_direct = model.transfer.delta_novel_cls.forward(features);  // P x N

    Mat joint(num_proposals, 1 + nc);
    for (int p = 0; p < num_proposals; ++p) {
      joint(p, 0) = bg_logit[p] + residual(p, 0);
      for (int b = 0; b < nb; ++b)
        joint(p, 1 + b) = fg_logits(p, b) + residual(p, 1 + b);
      const Vec delta_fg = residual.row(p).tail(nb).transpose();
      for (int n = 0; n < nn; ++n)
        joint(p, 1 + nb + n) = fg_logits(p, nb + n) +
                               sim[p].row(n).dot(delta_fg) + novel_direct(p, n);
    }

    double cls = 0.0;
    Mat d_joint = Mat::Zero(num_proposals, 1 + nc);
    for (int p = 0; p < num_proposals; ++p) {
      const double lse = log_sum_exp(joint.row(p).transpose());
      cls += (lse - joint(p, assign.label[p])) / num_proposals;
      if (grads) {
        Vec q = (joint.row(p).transpose().array() - lse).exp();
        d_joint.row(p) = q.transpose() / num_proposals;
        d_joint(p, assign.label[p]) -= 1.0 / num_proposals;
      }
    }
    report.rcnn_cls += lambda * cls;

    Mat d_residual = Mat::Zero(num_proposals, nb + 1);
    Mat d_novel_direct = Mat::Zero(num_proposals, nn);
    std::vector<Mat> d_sim(num_proposals);
    for (int p = 0; p < num_proposals; ++p) d_sim[p] = Mat::Zero(nn, nb);

    if (grads) {
      for (int p = 0; p < num_proposals; ++p) {
        d_bg_rcnn[p] += d_joint(p, 0);
        d_residual(p, 0) += d_joint(p, 0);
        for (int b = 0; b < nb; ++b) {
          d_fg_rcnn(p, b) += d_joint(p, 1 + b);
          d_residual(p, 1 + b) += d_joint(p, 1 + b);
        }
        const Vec delta_fg = residual.row(p).tail(nb).transpose();
        for (int n = 0; n < nn; ++n) {
          const double dj = d_joint(p, 1 + nb + n);
          if (dj == 0.0) continue;
          d_fg_rcnn(p, nb + n) += dj;
          d_novel_direct(p, n) += dj;
          d_sim[p].row(n) += dj * delta_fg.transpose();
          d_residual.row(p).tail(nb) += dj * sim[p].row(n);
        }
      }
    }

    // regression and mask heads over foreground proposals
    const double fg_norm = assign.num_foreground > 0 ? 1.0 / assign.num_foreground : 0.0;
    Mat reg_base, reg_novel, d_reg_base, d_reg_novel;
    Mat seg_base, seg_novel, d_seg_base, d_seg_novel;
    if (opts.detect) {
      reg_base = model.transfer.base_reg.forward(features);      // P x 4B
      reg_novel = model.transfer.delta_novel_reg.forward(features);  // P x 4N
      d_reg_base = Mat::Zero(num_proposals, 4 * nb);
      d_reg_novel = Mat::Zero(num_proposals, 4 * nn);
    }
    if (opts.segment) {
      seg_base = model.transfer.base_seg.forward(features);      // P x 196B
      seg_novel = model.transfer.delta_novel_seg.forward(features);  // P x 196N
      d_seg_base = Mat::Zero(num_proposals, kMaskCells * nb);
      d_seg_novel = Mat::Zero(num_proposals, kMaskCells * nn);
    }

    double reg = 0.0, mask = 0.0;
    for (int p = 0; p < num_proposals; ++p) {
      if (assign.label[p] == 0) continue;
      const int c = assign.label[p] - 1;

      if (opts.detect) {
        for (int j = 0; j < 4; ++j) {
          double pred;
          if (c < nb) {
            pred = reg_base(p, 4 * c + j);
          } else {
            const int n = c - nb;
            pred = reg_novel(p, 4 * n + j);
            for (int b = 0; b < nb; ++b) pred += sim[p](n, b) * reg_base(p, 4 * b + j);
          }
          const double e = pred - assign.reg_target(p, j);
          reg += fg_norm * smooth_l1(e);
          if (grads) {
            const double g = fg_norm * smooth_l1_grad(e);
            if (c < nb) {
              d_reg_base(p, 4 * c + j) += g;
            } else {
              const int n = c - nb;
              d_reg_novel(p, 4 * n + j) += g;
              for (int b = 0; b < nb; ++b) {
                d_reg_base(p, 4 * b + j) += g * sim[p](n, b);
                d_sim[p](n, b) += g * reg_base(p, 4 * b + j);
              }
            }
          }
        }
      }

      if (opts.segment) {
        const MaskGrid& target = assign.mask_target[p];
        for (int cell = 0; cell < kMaskCells; ++cell) {
          const double t = target(cell / kMaskSize, cell % kMaskSize);
          double logit;
          if (c < nb) {
            logit = seg_base(p, kMaskCells * c + cell);
          } else {
            const int n = c - nb;
            logit = seg_novel(p, kMaskCells * n + cell);
            for (int b = 0; b < nb; ++b)
              logit += sim[p](n, b) * seg_base(p, kMaskCells * b + cell);
          }
          mask += fg_norm / kMaskCells * bce_with_logits(logit, t);
          if (grads) {
            const double g = fg_norm / kMaskCells * (sigmoid(logit) - t);
            if (c < nb) {
              d_seg_base(p, kMaskCells * c + cell) += g;
            } else {
              const int n = c - nb;
              d_seg_novel(p, kMaskCells * n + cell) += g;
              for (int b = 0; b < nb; ++b) {
                d_seg_base(p, kMaskCells * b + cell) += g * sim[p](n, b);
                d_sim[p](n, b) += g * seg_base(p, kMaskCells * b + cell);
              }
            }
          }
        }
      }
    }
    report.rcnn_reg += lambda * reg;
    report.rcnn_mask += lambda * mask;

    if (grads) {
      // similarity backward: S rows -> visual vector -> weak probabilities
      if (!opts.stop_gradient_weak) {
        for (int p = 0; p < num_proposals; ++p) {
          if (d_sim[p].isZero(0.0)) continue;
          Vec dv = Vec::Zero(nb);
          for (int n = 0; n < nn; ++n) {
            const Vec dq = softmax_backward(sim[p].row(n).transpose(),
                                            d_sim[p].row(n).transpose());
            dv += dq.cwiseProduct(s_lin.row(n).transpose());
          }
          if (vis_uniform[p]) continue;
          const Vec v = vis.row(p).transpose();
          const double inner = dv.dot(v);
          d_weak_probs.row(p).head(nb) +=
              ((dv.array() - inner) / base_mass[p]).matrix().transpose();
        }
        for (int p = 0; p < num_proposals; ++p)
          d_fg_rcnn.row(p) += softmax_backward(weak_probs.row(p).transpose(),
                                               d_weak_probs.row(p).transpose())
                                  .transpose();
        // the classifier heads share the aggregated refinement output
        for (int r = 0; r < rstreams; ++r) {
          d_refine[r].col(0) += d_bg_rcnn / rstreams;
          d_refine[r].rightCols(nc) += d_fg_rcnn / rstreams;
        }
      }

      for (int r = 0; r < rstreams; ++r)
        accumulate_linear(grads->weak.refine[r], d_refine[r], features, lambda);
      accumulate_linear(grads->transfer.delta_base_cls, d_residual, features, lambda);
      accumulate_linear(grads->transfer.delta_novel_cls, d_novel_direct, features, lambda);
      if (opts.detect) {
        accumulate_linear(grads->transfer.base_reg, d_reg_base, features, lambda);
        accumulate_linear(grads->transfer.delta_novel_reg, d_reg_novel, features, lambda);
      }
      if (opts.segment) {
        accumulate_linear(grads->transfer.base_seg, d_seg_base, features, lambda);
        accumulate_linear(grads->transfer.delta_novel_seg, d_seg_novel, features, lambda);
      }
    }
  }

  report.total = report.rcnn_cls + report.rcnn_reg + report.rcnn_mask +
                 opts.alpha * (report.weak_mil + report.weak_refine);
  return report;
}

LossReport total_loss(const std::vector<ImageRecord>& batch, const Model& model,
                      const Mat& s_lin, const TrainConfig& config) {
  LossOptions opts;
  opts.rcnn_scope = TargetScope::kBase;
  opts.include_weak = true;
  opts.alpha = config.alpha;
  opts.detect = config.detect;
  opts.segment = config.segment;
  opts.stop_gradient_weak = config.stop_gradient_weak;
  opts.fg_iou_threshold = config.fg_iou_threshold;
  return compute_loss(batch, model, s_lin, opts);
}

LossReport rcnn_loss(const std::vector<ImageRecord>& batch, const Model& model,
                     const Mat& s_lin, const std::vector<TargetAssignment>& assignments,
                     const LossOptions& opts) {
  LossOptions o = opts;
  o.include_weak = false;
  o.alpha = 0.0;
  return compute_loss(batch, model, s_lin, o, nullptr, nullptr, &assignments);
}

Model zeros_like(const Model& model) {
  Model z = model;
  for_each_block(z, [](const std::string&, double* data, int count) {
    std::fill(data, data + count, 0.0);
  });
  return z;
}

namespace {

struct BlockRef {
  std::string name;
  double* data;
  int count;
};

std::vector<BlockRef> collect_blocks(Model& m) {
  std::vector<BlockRef> blocks;
  for_each_block(m, [&](const std::string& name, double* data, int count) {
    blocks.push_back({name, data, count});
  });
  return blocks;
}

bool base_trainable(const std::string& name) {
  return name.rfind("weak.", 0) == 0 ||
         name.rfind("transfer.delta_base_cls", 0) == 0 ||
         name.rfind("transfer.base_reg", 0) == 0 ||
         name.rfind("transfer.base_seg", 0) == 0;
}

bool finetune_trainable(const std::string& name) {
  return name.rfind("transfer.delta_novel_", 0) == 0;
}

std::vector<ImageRecord> sample_batch(const std::vector<ImageRecord>& pool,
                                      int batch_size, uint64_t seed, uint64_t iteration) {
  std::vector<ImageRecord> batch;
  const int n = static_cast<int>(pool.size());
  const int take = std::min(batch_size, n);
  for (int i = 0; i < take; ++i)
    batch.push_back(pool[rng_index(n, seed, kBatchStream, iteration, i)]);
  return batch;
}

void sgd_step(Model& model, Model& grads, Model& velocity, double lr, double momentum,
              bool (*trainable)(const std::string&)) {
  auto p_blocks = collect_blocks(model);
  auto g_blocks = collect_blocks(grads);
  auto v_blocks = collect_blocks(velocity);
  for (size_t b = 0; b < p_blocks.size(); ++b) {
    if (!trainable(p_blocks[b].name)) continue;
    double* p = p_blocks[b].data;
    double* g = g_blocks[b].data;
    double* v = v_blocks[b].data;
    for (int i = 0; i < p_blocks[b].count; ++i) {
      v[i] = momentum * v[i] + g[i];
      p[i] -= lr * v[i];
    }
  }
}

void zero_blocks(Model& m) {
  for_each_block(m, [](const std::string&, double* data, int count) {
    std::fill(data, data + count, 0.0);
  });
}

}  // namespace

std::vector<TraceRow> base_train(Model& model, const std::vector<ImageRecord>& train,
                                 const Mat& s_lin, const TrainConfig& config) {
  if (train.empty()) throw std::invalid_argument("base_train: empty dataset");
  LossOptions opts;
  opts.rcnn_scope = TargetScope::kBase;
  opts.include_weak = true;
  opts.alpha = config.alpha;
  opts.detect = config.detect;
  opts.segment = config.segment;
  opts.stop_gradient_weak = config.stop_gradient_weak;
  opts.fg_iou_threshold = config.fg_iou_threshold;

  Model grads = zeros_like(model);
  Model velocity = zeros_like(model);
  std::vector<TraceRow> trace;
  trace.reserve(config.base_iterations + 1);

  for (int t = 0; t <= config.base_iterations; ++t) {
    const std::vector<ImageRecord> batch =
        sample_batch(train, config.batch_size, config.seed, static_cast<uint64_t>(t));
    const bool last = t == config.base_iterations;
    zero_blocks(grads);
    const LossReport report =
        compute_loss(batch, model, s_lin, opts, nullptr, last ? nullptr : &grads);
    trace.push_back({t, report});
    if (last) break;

    double lr = config.learning_rate;
    if (t >= config.base_iterations * 8 / 10)
      lr *= 0.01;
    else if (t >= config.base_iterations * 6 / 10)
      lr *= 0.1;
    sgd_step(model, grads, velocity, lr, config.momentum, base_trainable);
  }
  return trace;
}

FineTuneInfo fine_tune(Model& model, const std::vector<ImageRecord>& kshot,
                       const Mat& s_lin, const TrainConfig& config) {
  if (config.k <= 0)
    throw std::invalid_argument(
        "fine_tune requires k >= 1; for k = 0 use the zero-shot prediction path "
        "(transfer heads apply without fine-tuning)");
  if (kshot.empty()) throw std::invalid_argument("fine_tune: empty k-shot dataset");

  FineTuneInfo info;
  info.iterations = config.finetune_iterations_per_shot * config.k;
  const int nb = model.num_base();
  for (const ImageRecord& rec : kshot)
    for (const Annotation& ann : rec.annotations)
      if (ann.class_id < nb) ++info.base_annotations_ignored;

  LossOptions opts;
  opts.rcnn_scope = TargetScope::kNovel;
  opts.include_weak = false;
  opts.alpha = 0.0;
  opts.detect = config.detect;
  opts.segment = config.segment;
  opts.stop_gradient_weak = config.stop_gradient_weak;
  opts.fg_iou_threshold = config.fg_iou_threshold;

  Model grads = zeros_like(model);
  Model velocity = zeros_like(model);
  for (int t = 0; t < info.iterations; ++t) {
    const std::vector<ImageRecord> batch = sample_batch(
        kshot, config.batch_size, config.seed ^ 0xf17e, static_cast<uint64_t>(t));
    zero_blocks(grads);
    compute_loss(batch, model, s_lin, opts, nullptr, &grads);
    sgd_step(model, grads, velocity, config.finetune_learning_rate, config.momentum,
             finetune_trainable);
  }
  return info;
}

GradCheckReport grad_check(Model& model, const std::vector<ImageRecord>& batch,
                           const Mat& s_lin, const LossOptions& opts, double step) {
  const FrozenPseudoLabels frozen =
      opts.include_weak ? snapshot_pseudo_labels(batch, model) : FrozenPseudoLabels{};
  const FrozenPseudoLabels* frozen_ptr = opts.include_weak ? &frozen : nullptr;

  Model grads = zeros_like(model);
  compute_loss(batch, model, s_lin, opts, frozen_ptr, &grads);

  GradCheckReport report;
  auto p_blocks = collect_blocks(model);
  auto g_blocks = collect_blocks(grads);
  for (size_t b = 0; b < p_blocks.size(); ++b) {
    double* data = p_blocks[b].data;
    const double* analytic = g_blocks[b].data;
    for (int i = 0; i < p_blocks[b].count; ++i) {
      const double saved = data[i];
      data[i] = saved + step;
      const double up = compute_loss(batch, model, s_lin, opts, frozen_ptr).total;
      data[i] = saved - step;
      const double down = compute_loss(batch, model, s_lin, opts, frozen_ptr).total;
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double rel = std::abs(analytic[i] - numeric) /
                         std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_block = p_blocks[b].name;
        report.worst_index = i;
        report.analytic_at_worst = analytic[i];
        report.numeric_at_worst = numeric;
      }
    }
  }
  return report;
}

}  // namespace anyshot

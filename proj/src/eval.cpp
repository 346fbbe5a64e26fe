#include "anyshot/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace anyshot {

namespace {

constexpr int kRaster = 112;  // multiple of 14 so aligned pastes are exact

// nearest-neighbor paste of a mask into its box on the shared raster
void paste(const MaskGrid& mask, const Box& box, std::vector<char>& raster) {
  raster.assign(kRaster * kRaster, 0);
  const double w = box.width();
  const double h = box.height();
  if (w <= 0 || h <= 0) return;
  for (int i = 0; i < kRaster; ++i) {
    const double y = (i + 0.5) / kRaster;
    if (y < box.y1 || y >= box.y2) continue;
    const int mi = std::min(kMaskSize - 1,
                            static_cast<int>((y - box.y1) / h * kMaskSize));
    for (int j = 0; j < kRaster; ++j) {
      const double x = (j + 0.5) / kRaster;
      if (x < box.x1 || x >= box.x2) continue;
      const int mj = std::min(kMaskSize - 1,
                              static_cast<int>((x - box.x1) / w * kMaskSize));
      if (mask(mi, mj) >= 0.5) raster[i * kRaster + j] = 1;
    }
  }
}

}  // namespace

double mask_paste_iou(const MaskGrid& mask_a, const Box& box_a,
                      const MaskGrid& mask_b, const Box& box_b) {
  std::vector<char> ra, rb;
  paste(mask_a, box_a, ra);
  paste(mask_b, box_b, rb);
  int inter = 0, uni = 0;
  for (int i = 0; i < kRaster * kRaster; ++i) {
    inter += ra[i] & rb[i];
    uni += ra[i] | rb[i];
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / uni;
}

MatchResult match_detections(const std::vector<Detection>& dets_sorted,
                             const std::vector<Annotation>& gts,
                             double iou_threshold, bool use_mask_iou) {
  MatchResult res;
  res.det_is_tp.assign(dets_sorted.size(), false);
  res.gt_matched.assign(gts.size(), false);
  for (size_t d = 0; d < dets_sorted.size(); ++d) {
    double best = -1.0;
    int best_g = -1;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (res.gt_matched[g]) continue;
      double overlap;
      if (use_mask_iou) {
        if (!dets_sorted[d].mask) continue;
        overlap = mask_paste_iou(*dets_sorted[d].mask, dets_sorted[d].box,
                                 gts[g].mask, gts[g].box);
      } else {
        overlap = iou(dets_sorted[d].box, gts[g].box);
      }
      if (overlap >= iou_threshold && overlap > best) {
        best = overlap;
        best_g = static_cast<int>(g);
      }
    }
    if (best_g >= 0) {
      res.det_is_tp[d] = true;
      res.gt_matched[best_g] = true;
    }
  }
  return res;
}

std::optional<double> average_precision(const std::vector<bool>& tp_flags, int num_gt) {
  if (num_gt < 0) throw std::invalid_argument("num_gt must be >= 0");
  if (num_gt == 0) {
    if (tp_flags.empty()) return std::nullopt;
    return 0.0;
  }
  // cumulative precision/recall, then right-to-left precision envelope
  const int n = static_cast<int>(tp_flags.size());
  std::vector<double> prec(n), rec(n);
  int tp = 0;
  for (int i = 0; i < n; ++i) {
    if (tp_flags[i]) ++tp;
    prec[i] = static_cast<double>(tp) / (i + 1);
    rec[i] = static_cast<double>(tp) / num_gt;
  }
  for (int i = n - 2; i >= 0; --i) prec[i] = std::max(prec[i], prec[i + 1]);
  double ap = 0.0;
  double prev_rec = 0.0;
  for (int i = 0; i < n; ++i) {
    if (rec[i] > prev_rec) {
      ap += (rec[i] - prev_rec) * prec[i];
      prev_rec = rec[i];
    }
  }
  return ap;
}

namespace {

struct PooledDet {
  double score;
  int image_index;
  int det_index;
  const Detection* det;
};

std::optional<double> mean_of(const std::vector<double>& vals) {
  if (vals.empty()) return std::nullopt;
  double s = 0.0;
  for (double v : vals) s += v;
  return s / vals.size();
}

}  // namespace

EvalReport evaluate_model(const Model& model, const Mat& s_lin,
                          const std::vector<ImageRecord>& test_set,
                          const EvalOptions& opts) {
  if (test_set.empty()) throw std::invalid_argument("evaluate_model: empty test set");
  const int nb = model.num_base();
  const int nc = model.num_classes();

  PredictOptions popts = opts.predict;
  popts.mode = opts.scope;
  popts.segment = opts.segment;

  std::vector<std::vector<Detection>> dets_per_image(test_set.size());
  const int workers = std::max(1, std::min<int>(opts.threads, test_set.size()));
  if (workers == 1) {
    for (size_t i = 0; i < test_set.size(); ++i)
      dets_per_image[i] = predict_image(test_set[i], model, s_lin, popts);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (size_t i = next.fetch_add(1); i < test_set.size(); i = next.fetch_add(1))
          dets_per_image[i] = predict_image(test_set[i], model, s_lin, popts);
      });
    for (auto& t : pool) t.join();
  }

  std::vector<double> thresholds;
  for (int t = 0; t < 10; ++t) thresholds.push_back(0.5 + 0.05 * t);

  const int c_lo = opts.scope == PredictMode::kNovelOnly ? nb : 0;
  const int c_hi = opts.scope == PredictMode::kBaseOnly ? nb : nc;

  EvalReport report;
  for (int c = c_lo; c < c_hi; ++c) {
    ClassEval ce;
    ce.class_id = c;
    ce.name = model.split.name(c);
    ce.is_base = c < nb;

    // pool detections of class c across images, deterministic order
    std::vector<PooledDet> pooled;
    for (size_t i = 0; i < test_set.size(); ++i)
      for (size_t d = 0; d < dets_per_image[i].size(); ++d)
        if (dets_per_image[i][d].class_id == c)
          pooled.push_back({dets_per_image[i][d].score, static_cast<int>(i),
                            static_cast<int>(d), &dets_per_image[i][d]});
    std::sort(pooled.begin(), pooled.end(), [](const PooledDet& a, const PooledDet& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.image_index != b.image_index) return a.image_index < b.image_index;
      return a.det_index < b.det_index;
    });

    std::vector<std::vector<Annotation>> gts(test_set.size());
    for (size_t i = 0; i < test_set.size(); ++i)
      for (const Annotation& a : test_set[i].annotations)
        if (a.class_id == c) gts[i].push_back(a);
    for (const auto& g : gts) ce.num_gt += static_cast<int>(g.size());

    // overlap matrices cached once per image, reused for every threshold
    std::vector<std::vector<int>> img_dets(test_set.size());
    for (size_t k = 0; k < pooled.size(); ++k)
      img_dets[pooled[k].image_index].push_back(static_cast<int>(k));
    std::vector<Mat> box_overlap(test_set.size()), mask_overlap(test_set.size());
    for (size_t i = 0; i < test_set.size(); ++i) {
      const auto& ids = img_dets[i];
      box_overlap[i].resize(ids.size(), gts[i].size());
      if (opts.segment) mask_overlap[i].resize(ids.size(), gts[i].size());
      for (size_t d = 0; d < ids.size(); ++d) {
        const Detection& det = *pooled[ids[d]].det;
        for (size_t g = 0; g < gts[i].size(); ++g) {
          box_overlap[i](d, g) = iou(det.box, gts[i][g].box);
          if (opts.segment)
            mask_overlap[i](d, g) =
                det.mask ? mask_paste_iou(*det.mask, det.box, gts[i][g].mask,
                                          gts[i][g].box)
                         : 0.0;
        }
      }
    }

    auto ap_at = [&](double thr, bool use_mask) -> std::optional<double> {
      std::vector<bool> flags(pooled.size(), false);
      for (size_t i = 0; i < test_set.size(); ++i) {
        const Mat& ov = use_mask ? mask_overlap[i] : box_overlap[i];
        std::vector<bool> taken(gts[i].size(), false);
        for (size_t d = 0; d < img_dets[i].size(); ++d) {
          double best = -1.0;
          int best_g = -1;
          for (size_t g = 0; g < gts[i].size(); ++g) {
            if (taken[g]) continue;
            if (ov(d, g) >= thr && ov(d, g) > best) {
              best = ov(d, g);
              best_g = static_cast<int>(g);
            }
          }
          if (best_g >= 0) {
            taken[best_g] = true;
            flags[img_dets[i][d]] = true;
          }
        }
      }
      return average_precision(flags, ce.num_gt);
    };

    std::vector<double> aps, mask_aps;
    for (double thr : thresholds) {
      if (auto ap = ap_at(thr, false)) {
        aps.push_back(*ap);
        if (thr == 0.5) ce.ap50 = *ap;
      }
      if (opts.segment) {
        if (auto ap = ap_at(thr, true)) {
          mask_aps.push_back(*ap);
          if (thr == 0.5) ce.mask_ap50 = *ap;
        }
      }
    }
    ce.map = mean_of(aps);
    if (opts.segment) ce.mask_map = mean_of(mask_aps);
    report.per_class.push_back(std::move(ce));
  }

  auto aggregate = [&](bool base_set, auto member) -> std::optional<double> {
    std::vector<double> vals;
    for (const ClassEval& ce : report.per_class)
      if (ce.is_base == base_set && (ce.*member).has_value())
        vals.push_back(*(ce.*member));
    return mean_of(vals);
  };
  auto aggregate_all = [&](auto member) -> std::optional<double> {
    std::vector<double> vals;
    for (const ClassEval& ce : report.per_class)
      if ((ce.*member).has_value()) vals.push_back(*(ce.*member));
    return mean_of(vals);
  };

  report.base_ap50 = aggregate(true, &ClassEval::ap50);
  report.base_map = aggregate(true, &ClassEval::map);
  report.novel_ap50 = aggregate(false, &ClassEval::ap50);
  report.novel_map = aggregate(false, &ClassEval::map);
  report.all_ap50 = aggregate_all(&ClassEval::ap50);
  report.all_map = aggregate_all(&ClassEval::map);
  if (opts.segment) {
    report.base_mask_ap50 = aggregate(true, &ClassEval::mask_ap50);
    report.base_mask_map = aggregate(true, &ClassEval::mask_map);
    report.novel_mask_ap50 = aggregate(false, &ClassEval::mask_ap50);
    report.novel_mask_map = aggregate(false, &ClassEval::mask_map);
    report.all_mask_ap50 = aggregate_all(&ClassEval::mask_ap50);
    report.all_mask_map = aggregate_all(&ClassEval::mask_map);
  }
  return report;
}


}  // namespace anyshot

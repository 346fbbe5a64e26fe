#include "anyshot/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace anyshot {

bool Box::valid() const {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
         std::isfinite(y2) && x2 > x1 && y2 > y1;
}

double iou(const Box& a, const Box& b) {
  const double ix = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double iy = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  return inter / (a.area() + b.area() - inter);
}

Delta4 encode_deltas(const Box& anchor, const Box& target) {
  Delta4 d;
  d.tx = (target.cx() - anchor.cx()) / anchor.width();
  d.ty = (target.cy() - anchor.cy()) / anchor.height();
  d.tw = std::log(target.width() / anchor.width());
  d.th = std::log(target.height() / anchor.height());
  return d;
}

Box apply_deltas(const Box& anchor, const Delta4& d) {
  const double tw = std::clamp(d.tw, -kDeltaClamp, kDeltaClamp);
  const double th = std::clamp(d.th, -kDeltaClamp, kDeltaClamp);
  const double cx = anchor.cx() + d.tx * anchor.width();
  const double cy = anchor.cy() + d.ty * anchor.height();
  const double w = std::exp(tw) * anchor.width();
  const double h = std::exp(th) * anchor.height();
  Box out{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
  out.x1 = std::clamp(out.x1, 0.0, 1.0);
  out.y1 = std::clamp(out.y1, 0.0, 1.0);
  out.x2 = std::clamp(out.x2, 0.0, 1.0);
  out.y2 = std::clamp(out.y2, 0.0, 1.0);
  return out;
}

namespace {

bool box_less(const Box& a, const Box& b) {
  if (a.x1 != b.x1) return a.x1 < b.x1;
  if (a.y1 != b.y1) return a.y1 < b.y1;
  if (a.x2 != b.x2) return a.x2 < b.x2;
  return a.y2 < b.y2;
}

bool det_order(const ScoredBox& a, const ScoredBox& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.class_id != b.class_id) return a.class_id < b.class_id;
  return box_less(a.box, b.box);
}

}  // namespace

std::vector<ScoredBox> nms(std::vector<ScoredBox> dets, double iou_threshold) {
  std::sort(dets.begin(), dets.end(), det_order);
  std::vector<ScoredBox> kept;
  kept.reserve(dets.size());
  for (const ScoredBox& d : dets) {
    bool suppressed = false;
    for (const ScoredBox& k : kept) {
      if (k.class_id == d.class_id && iou(k.box, d.box) >= iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

}  // namespace anyshot

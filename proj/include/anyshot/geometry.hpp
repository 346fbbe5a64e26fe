#pragma once

#include <vector>

namespace anyshot {

// Axis-aligned box in the unit image square, corner coordinates.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
  bool valid() const;
};

// (tx, ty, tw, th): center offsets normalized by anchor size, log size ratios.
struct Delta4 {
  double tx = 0.0;
  double ty = 0.0;
  double tw = 0.0;
  double th = 0.0;
};

struct ScoredBox {
  Box box;
  double score = 0.0;
  int class_id = 0;
};

// log-ratio clamp applied before exponentiation when decoding deltas
inline constexpr double kDeltaClamp = 4.0;

double iou(const Box& a, const Box& b);

Delta4 encode_deltas(const Box& anchor, const Box& target);

// Inverse of encode_deltas; tw/th clamped to |t| <= kDeltaClamp, output
// clipped to the unit square.
Box apply_deltas(const Box& anchor, const Delta4& d);

// Greedy per-class suppression. Ties break by (score desc, class_id asc,
// box lexicographic) so output order is deterministic.
std::vector<ScoredBox> nms(std::vector<ScoredBox> dets, double iou_threshold);

}  // namespace anyshot

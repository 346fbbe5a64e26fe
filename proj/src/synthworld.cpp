#include "anyshot/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "anyshot/rng.hpp"

namespace anyshot {

namespace {

const char* kNatoNames[] = {"alpha",  "bravo",   "charlie", "delta",  "echo",
                            "foxtrot", "golf",    "hotel",   "india",  "juliett",
                            "kilo",    "lima",    "mike",    "november", "oscar",
                            "papa",    "quebec",  "romeo",   "sierra", "tango",
                            "uniform", "victor",  "whiskey", "xray",   "yankee",
                            "zulu"};

std::string class_name(int c) {
  if (c < 26) return kNatoNames[c];
  return "class" + std::to_string(c);
}

// rng stream tags
enum Stream : uint64_t {
  kProto = 1,
  kImage = 2,
  kObject = 3,
  kJitter = 4,
  kNoise = 5,
  kNegative = 6,
  kShared = 7,
  kKshot = 8,
  kBudget = 9,
  kPose = 10,
};

Vec random_unit(int dim, uint64_t seed, uint64_t tag, uint64_t idx) {
  Vec v(dim);
  for (int i = 0; i < dim; ++i)
    v[i] = rng_normal(seed, tag, idx, static_cast<uint64_t>(i));
  v.normalize();
  return v;
}

// Gram-Schmidt against previous rows
void orthonormalize(std::vector<Vec>& vs) {
  for (size_t i = 0; i < vs.size(); ++i) {
    for (size_t j = 0; j < i; ++j) vs[i] -= vs[i].dot(vs[j]) * vs[j];
    const double n = vs[i].norm();
    if (n < 1e-9) throw std::runtime_error("prototype collapse; raise feature_dim");
    vs[i] /= n;
  }
}

}  // namespace

void WorldConfig::validate() const {
  std::ostringstream problems;
  auto bad = [&](const std::string& msg) { problems << "  - " << msg << "\n"; };
  if (num_classes < 2) bad("num_classes must be >= 2");
  if (num_base < 1 || num_base >= num_classes)
    bad("num_base must satisfy 1 <= num_base < num_classes");
  // 4 delta coordinates + enough room to orthonormalize all prototype parts
  const int needed = 4 + num_classes + 1;
  if (feature_dim < needed)
    bad("feature_dim must be >= 4 + num_classes + 1 = " + std::to_string(needed));
  if (images_train < 1) bad("images_train must be >= 1");
  if (images_test < 1) bad("images_test must be >= 1");
  if (objects_min < 1 || objects_max < objects_min)
    bad("objects range must satisfy 1 <= min <= max");
  if (proposal_jitter < 0) bad("proposal_jitter must be >= 0");
  if (negative_proposals_per_image < 0) bad("negative_proposals_per_image must be >= 0");
  if (feature_noise < 0) bad("feature_noise must be >= 0");
  if (novel_parent_overlap < 0 || novel_parent_overlap > 1)
    bad("novel_parent_overlap must lie in [0,1]");
  if (novel_shared_overlap < 0 || novel_shared_overlap > 1)
    bad("novel_shared_overlap must lie in [0,1]");
  if (embedding_scale <= 0) bad("embedding_scale must be > 0");
  if (instance_pose < 0 || instance_pose > 1) bad("instance_pose must lie in [0,1]");
  if (novel_frequency_boost <= 0) bad("novel_frequency_boost must be > 0");
  const std::string all = problems.str();
  if (!all.empty()) throw std::invalid_argument("invalid world config:\n" + all);
}

namespace {

struct World {
  std::vector<Vec> prototypes;  // per class, dim = feature_dim - 4
};

World build_prototypes(const WorldConfig& cfg) {
  const int dp = cfg.feature_dim - 4;
  const int nb = cfg.num_base;
  const int nn = cfg.num_classes - nb;

  // orthonormal frame: base directions, one shared novel direction, one
  // unique direction per novel class
  std::vector<Vec> frame;
  for (int b = 0; b < nb; ++b) frame.push_back(random_unit(dp, cfg.seed, kProto, b));
  frame.push_back(random_unit(dp, cfg.seed, kShared, 0));
  for (int n = 0; n < nn; ++n)
    frame.push_back(random_unit(dp, cfg.seed, kProto, 1000 + n));
  orthonormalize(frame);

  World w;
  w.prototypes.resize(cfg.num_classes);
  for (int b = 0; b < nb; ++b) w.prototypes[b] = frame[b];
  const Vec& shared = frame[nb];
  for (int n = 0; n < nn; ++n) {
    // second parents cycle within the used parent set so each parent class
    // is shared by two novel classes
    const int parent = n % nb;
    const int parent2 = ((n + 1) % nn) % nb;
    const double wp = cfg.novel_parent_overlap;
    const double wq = cfg.novel_second_parent_overlap;
    const double wm = cfg.novel_shared_overlap;
    const double wu2 = 1.0 - wp * wp - wq * wq - wm * wm;
    const double wu = wu2 > 0 ? std::sqrt(wu2) : 0.0;
    Vec p = wp * frame[parent] + wq * frame[parent2] + wm * shared +
            wu * frame[nb + 1 + n];
    w.prototypes[nb + n] = cfg.novel_norm * p.normalized();
  }
  return w;
}

Box random_box(uint64_t seed, uint64_t tag, uint64_t img, uint64_t obj) {
  const double w = rng_uniform_in(0.12, 0.40, seed, tag, img, obj * 5 + 0);
  const double h = rng_uniform_in(0.12, 0.40, seed, tag, img, obj * 5 + 1);
  const double cx = rng_uniform_in(w / 2, 1.0 - w / 2, seed, tag, img, obj * 5 + 2);
  const double cy = rng_uniform_in(h / 2, 1.0 - h / 2, seed, tag, img, obj * 5 + 3);
  return Box{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
}

MaskGrid shape_mask(int class_id, const Box& /*box*/) {
  // rectangle for even classes, centered ellipse for odd; both fill well
  // under half the box so a uniform mask cannot reach IoU 0.5
  MaskGrid m = MaskGrid::Zero();
  const bool rect = class_id % 2 == 0;
  for (int i = 0; i < kMaskSize; ++i) {
    for (int j = 0; j < kMaskSize; ++j) {
      const double v = (i + 0.5) / kMaskSize - 0.5;
      const double u = (j + 0.5) / kMaskSize - 0.5;
      bool inside;
      if (rect)
        inside = std::abs(u) <= 0.35 && std::abs(v) <= 0.30;
      else
        inside = (u / 0.40) * (u / 0.40) + (v / 0.32) * (v / 0.32) <= 1.0;
      if (inside) m(i, j) = 1.0;
    }
  }
  return m;
}

Vec make_feature(const WorldConfig& cfg, const World& world, int class_id,
                 const Delta4* delta, uint64_t seed, uint64_t img, uint64_t prop) {
  const int dp = cfg.feature_dim - 4;
  Vec z = Vec::Zero(cfg.feature_dim);
  if (delta) {
    z[0] = delta->tx;
    z[1] = delta->ty;
    z[2] = delta->tw;
    z[3] = delta->th;
  }
  if (class_id >= 0) {
    Vec proto = world.prototypes[class_id];
    if (cfg.instance_pose > 0) {
      const double rho = cfg.instance_pose *
                         rng_uniform(cfg.seed, kPose, img * 1024 + prop, 0);
      Vec lean(dp);
      for (int i = 0; i < dp; ++i)
        lean[i] = rng_normal(cfg.seed, kPose, img * 1024 + prop, 1 + i);
      lean.normalize();
      proto = ((1.0 - rho) * proto + rho * proto.norm() * lean).normalized() *
              proto.norm();
    }
    z.tail(dp) = proto;
  }
  for (int i = 0; i < cfg.feature_dim; ++i)
    z[i] += cfg.feature_noise *
            rng_normal(seed, kNoise, img * 1024 + prop, static_cast<uint64_t>(i));
  return z;
}

ImageRecord make_image(const WorldConfig& cfg, const World& world, int image_id,
                       uint64_t stream_offset) {
  const uint64_t img = stream_offset;
  ImageRecord rec;
  rec.image_id = image_id;
  rec.image_labels.assign(cfg.num_classes, 0);

  const int span = cfg.objects_max - cfg.objects_min + 1;
  const int num_objects = cfg.objects_min + rng_index(span, cfg.seed, kImage, img, 0);

  int prop_counter = 0;
  for (int o = 0; o < num_objects; ++o) {
    Annotation ann;
    const int nn = cfg.num_classes - cfg.num_base;
    const double novel_mass = cfg.novel_frequency_boost * nn;
    const double u = rng_uniform(cfg.seed, kObject, img, 1000 + o) *
                     (cfg.num_base + novel_mass);
    if (u < cfg.num_base)
      ann.class_id = rng_index(cfg.num_base, cfg.seed, kObject, img, o);
    else
      ann.class_id = cfg.num_base + rng_index(nn, cfg.seed, kObject, img, o);
    ann.box = random_box(cfg.seed, kObject, img, 100 + o);
    ann.mask = shape_mask(ann.class_id, ann.box);
    rec.annotations.push_back(ann);
    rec.image_labels[ann.class_id] = 1;

    // jittered positive proposal; resample until IoU >= 0.5 survives clipping
    Box rbox;
    for (uint64_t attempt = 0;; ++attempt) {
      const double j = cfg.proposal_jitter;
      Delta4 away;
      away.tx = rng_uniform_in(-0.5 * j, 0.5 * j, cfg.seed, kJitter, img, o * 97 + attempt * 7 + 0);
      away.ty = rng_uniform_in(-0.5 * j, 0.5 * j, cfg.seed, kJitter, img, o * 97 + attempt * 7 + 1);
      away.tw = rng_uniform_in(-0.7 * j, 0.7 * j, cfg.seed, kJitter, img, o * 97 + attempt * 7 + 2);
      away.th = rng_uniform_in(-0.7 * j, 0.7 * j, cfg.seed, kJitter, img, o * 97 + attempt * 7 + 3);
      rbox = apply_deltas(ann.box, away);
      if (rbox.valid() && iou(rbox, ann.box) >= 0.5) break;
      if (attempt > 200) {  // tiny jitter always passes
        rbox = ann.box;
        break;
      }
    }
    const Delta4 target = encode_deltas(rbox, ann.box);
    rec.proposals.push_back(
        {rbox, make_feature(cfg, world, ann.class_id, &target, cfg.seed, img, prop_counter)});
    ++prop_counter;
  }

  for (int k = 0; k < cfg.negative_proposals_per_image; ++k) {
    Box nbox;
    bool clear = false;
    for (uint64_t attempt = 0; attempt < 50 && !clear; ++attempt) {
      nbox = random_box(cfg.seed, kNegative, img, k * 61 + attempt);
      clear = true;
      for (const Annotation& ann : rec.annotations)
        if (iou(nbox, ann.box) >= 0.5) clear = false;
    }
    if (!clear) continue;  // crowded image; drop this negative
    rec.proposals.push_back(
        {nbox, make_feature(cfg, world, -1, nullptr, cfg.seed, img, prop_counter)});
    ++prop_counter;
  }
  return rec;
}

}  // namespace

Dataset generate_dataset(const WorldConfig& cfg) {
  cfg.validate();
  const World world = build_prototypes(cfg);

  Dataset ds;
  for (int c = 0; c < cfg.num_base; ++c) ds.split.base.push_back(class_name(c));
  for (int c = cfg.num_base; c < cfg.num_classes; ++c)
    ds.split.novel.push_back(class_name(c));
  ds.split.validate();

  for (int c = 0; c < cfg.num_classes; ++c)
    ds.embeddings.insert(class_name(c), cfg.embedding_scale * world.prototypes[c]);

  ds.train.reserve(cfg.images_train);
  for (int i = 0; i < cfg.images_train; ++i)
    ds.train.push_back(make_image(cfg, world, i, static_cast<uint64_t>(i)));
  ds.test.reserve(cfg.images_test);
  for (int i = 0; i < cfg.images_test; ++i)
    ds.test.push_back(make_image(cfg, world, 100000 + i,
                                 0x80000000ULL + static_cast<uint64_t>(i)));
  return ds;
}

std::vector<ImageRecord> sample_kshot(const Dataset& dataset, int k, uint64_t seed) {
  if (k < 0) throw std::invalid_argument("k must be >= 0");
  if (k == 0) return {};
  const int nb = dataset.split.num_base();
  const int nn = dataset.split.num_novel();

  // candidate (record, annotation) pairs per novel class, in dataset order
  std::vector<std::vector<std::pair<int, int>>> candidates(nn);
  for (int r = 0; r < static_cast<int>(dataset.train.size()); ++r) {
    const auto& anns = dataset.train[r].annotations;
    for (int a = 0; a < static_cast<int>(anns.size()); ++a)
      if (anns[a].class_id >= nb) candidates[anns[a].class_id - nb].push_back({r, a});
  }

  std::vector<std::vector<std::pair<int, int>>> selected(nn);
  for (int n = 0; n < nn; ++n) {
    auto& pool = candidates[n];
    if (static_cast<int>(pool.size()) < k)
      throw std::runtime_error("not enough instances of novel class '" +
                               dataset.split.novel[n] + "': need " + std::to_string(k) +
                               ", have " + std::to_string(pool.size()));
    // seeded Fisher-Yates prefix
    for (int i = 0; i < k; ++i) {
      const int j = i + rng_index(static_cast<int>(pool.size()) - i, seed, kKshot,
                                  static_cast<uint64_t>(n), static_cast<uint64_t>(i));
      std::swap(pool[i], pool[j]);
      selected[n].push_back(pool[i]);
    }
  }

  // group selections per record; keep base annotations, keep only selected
  // novel annotations
  std::map<int, std::set<int>> keep;  // record -> annotation indices
  for (const auto& sel : selected)
    for (const auto& [r, a] : sel) keep[r].insert(a);

  std::vector<ImageRecord> views;
  views.reserve(keep.size());
  for (const auto& [r, ann_ids] : keep) {
    ImageRecord view = dataset.train[r];
    std::vector<Annotation> kept;
    for (int a = 0; a < static_cast<int>(view.annotations.size()); ++a) {
      const Annotation& ann = view.annotations[a];
      if (ann.class_id < nb || ann_ids.count(a)) kept.push_back(ann);
    }
    view.annotations = std::move(kept);
    views.push_back(std::move(view));
  }
  return views;
}

BudgetAllocation budget_allocate(const Dataset& dataset, int budget,
                                 double weak_fraction, uint64_t seed) {
  if (budget < 0) throw std::invalid_argument("budget must be >= 0");
  if (weak_fraction < 0.0 || weak_fraction > 1.0)
    throw std::invalid_argument("weak_fraction must lie in [0,1]");

  BudgetAllocation alloc;
  alloc.shots_per_class = static_cast<int>(std::lround((1.0 - weak_fraction) * budget));
  alloc.weak_image_count = 7 * static_cast<int>(std::lround(weak_fraction * budget));
  alloc.kshot = sample_kshot(dataset, alloc.shots_per_class, seed);

  std::set<int> consumed;
  for (const ImageRecord& rec : alloc.kshot) consumed.insert(rec.image_id);

  std::vector<int> pool;
  for (const ImageRecord& rec : dataset.train)
    if (!consumed.count(rec.image_id)) pool.push_back(rec.image_id);
  std::sort(pool.begin(), pool.end());

  if (static_cast<int>(pool.size()) < alloc.weak_image_count)
    throw std::runtime_error(
        "budget allocation infeasible: need " + std::to_string(alloc.weak_image_count) +
        " weakly-labeled images, only " + std::to_string(pool.size()) + " available");

  for (int i = 0; i < alloc.weak_image_count; ++i) {
    const int j = i + rng_index(static_cast<int>(pool.size()) - i, seed, kBudget,
                                static_cast<uint64_t>(i));
    std::swap(pool[i], pool[j]);
    alloc.weak_image_ids.insert(pool[i]);
  }
  return alloc;
}

std::vector<ImageRecord> apply_weak_budget(const Dataset& dataset,
                                           const std::set<int>& weak_image_ids) {
  // Outside the weak subset, novel image labels become unknown (-1): the MIL
  // loss skips them rather than treating the class as absent.
  const int nb = dataset.split.num_base();
  std::vector<ImageRecord> out = dataset.train;
  for (ImageRecord& rec : out) {
    if (weak_image_ids.count(rec.image_id)) continue;
    for (int c = nb; c < static_cast<int>(rec.image_labels.size()); ++c)
      rec.image_labels[c] = -1;
  }
  return out;
}

}  // namespace anyshot

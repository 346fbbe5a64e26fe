#include <doctest.h>

#include <cmath>

#include "anyshot/io.hpp"
#include "anyshot/training.hpp"

using namespace anyshot;

namespace {

WorldConfig tiny_world() {
  WorldConfig cfg;
  cfg.num_classes = 4;
  cfg.num_base = 2;
  cfg.feature_dim = 10;
  cfg.images_train = 16;
  cfg.images_test = 6;
  cfg.objects_min = 1;
  cfg.objects_max = 2;
  cfg.negative_proposals_per_image = 2;
  cfg.seed = 5;
  return cfg;
}

struct Fixture {
  Dataset ds = generate_dataset(tiny_world());
  Mat s_lin = lingual_matrix(ds.split, ds.embeddings);
  Model model = init_model(ds.split, 10, 2, 21, 0.2);
};

ImageRecord identity_record(const ClassSplit& split) {
  // one proposal exactly on a class-0 object
  ImageRecord rec;
  rec.image_id = 0;
  rec.image_labels.assign(split.num_classes(), 0);
  rec.image_labels[0] = 1;
  Annotation ann;
  ann.class_id = 0;
  ann.box = Box{0.2, 0.2, 0.5, 0.6};
  ann.mask = MaskGrid::Zero();
  for (int i = 3; i < 9; ++i)
    for (int j = 2; j < 7; ++j) ann.mask(i, j) = 1.0;
  rec.annotations.push_back(ann);
  rec.proposals.push_back({ann.box, Vec::Zero(10)});
  return rec;
}

}  // namespace

TEST_CASE("assign_targets core rules") {
  ClassSplit split;
  split.base = {"alpha", "bravo"};
  split.novel = {"charlie"};
  ImageRecord rec = identity_record(split);

  SUBCASE("proposal equal to gt is foreground with zero delta") {
    const TargetAssignment t = assign_targets(rec, split, TargetScope::kBase, 0.5);
    CHECK(t.label[0] == 1);
    CHECK(t.num_foreground == 1);
    CHECK(t.reg_target.row(0).cwiseAbs().maxCoeff() == 0.0);
    // identical boxes resample the mask exactly
    CHECK((t.mask_target[0] - rec.annotations[0].mask).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("disjoint proposal is background") {
    rec.proposals[0].rbox = Box{0.7, 0.7, 0.9, 0.9};
    const TargetAssignment t = assign_targets(rec, split, TargetScope::kBase, 0.5);
    CHECK(t.label[0] == 0);
    CHECK(t.num_foreground == 0);
  }
  SUBCASE("IoU exactly one-half is foreground") {
    // binary-exact coordinates so the ratio is exactly 0.5
    rec.annotations[0].box = Box{0.25, 0.25, 0.75, 0.75};
    rec.proposals[0].rbox = Box{0.25, 0.25, 0.5, 0.75};
    REQUIRE(iou(rec.proposals[0].rbox, rec.annotations[0].box) == 0.5);
    const TargetAssignment t = assign_targets(rec, split, TargetScope::kBase, 0.5);
    CHECK(t.label[0] == 1);
  }
  SUBCASE("scope filters annotations") {
    rec.annotations[0].class_id = 2;  // novel
    const TargetAssignment base = assign_targets(rec, split, TargetScope::kBase, 0.5);
    CHECK(base.num_foreground == 0);
    const TargetAssignment nov = assign_targets(rec, split, TargetScope::kNovel, 0.5);
    CHECK(nov.label[0] == 3);
  }
}

TEST_CASE("rcnn loss values on a hand model") {
  ClassSplit split;
  split.base = {"alpha", "bravo"};
  split.novel = {"charlie"};
  Model model = init_model(split, 10, 2, 3, 0.0);  // all-zero weak streams
  const Mat s_lin = Mat::Ones(1, 2);
  const ImageRecord rec = identity_record(split);

  LossOptions opts;
  opts.rcnn_scope = TargetScope::kBase;
  opts.include_weak = false;
  opts.alpha = 0.0;

  SUBCASE("exact deltas give zero regression loss") {
    const LossReport r = compute_loss({rec}, model, s_lin, opts);
    CHECK(r.rcnn_reg == 0.0);
  }
  SUBCASE("single coordinate off by one contributes one-half") {
    model.transfer.base_reg.b[0] = 1.0;  // class 0, tx
    const LossReport r = compute_loss({rec}, model, s_lin, opts);
    CHECK(r.rcnn_reg == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("linear regime below the transition point") {
    model.transfer.base_reg.b[1] = 2.5;  // |e| > 1 -> |e| - 0.5
    const LossReport r = compute_loss({rec}, model, s_lin, opts);
    CHECK(r.rcnn_reg == doctest::Approx(2.0).epsilon(1e-12));
  }
  SUBCASE("saturated correct mask logits give tiny mask loss") {
    const MaskGrid& target = rec.annotations[0].mask;
    for (int cell = 0; cell < kMaskCells; ++cell)
      model.transfer.base_seg.b[cell] =
          target(cell / kMaskSize, cell % kMaskSize) > 0.5 ? 20.0 : -20.0;
    const LossReport r = compute_loss({rec}, model, s_lin, opts);
    CHECK(r.rcnn_mask < 1e-6);
  }
}

TEST_CASE("loss report decomposition and alpha weighting") {
  Fixture f;
  std::vector<ImageRecord> batch(f.ds.train.begin(), f.ds.train.begin() + 4);

  LossOptions opts;
  const LossReport r1 = compute_loss(batch, f.model, f.s_lin, opts);
  CHECK(r1.total == doctest::Approx(r1.rcnn_cls + r1.rcnn_reg + r1.rcnn_mask +
                                    r1.weak_mil + r1.weak_refine)
                        .epsilon(1e-9));
  CHECK(r1.rcnn_cls >= 0.0);
  CHECK(r1.weak_mil >= 0.0);
  CHECK(r1.weak_refine >= 0.0);

  opts.alpha = 0.0;
  const LossReport r0 = compute_loss(batch, f.model, f.s_lin, opts);
  CHECK(r0.total == doctest::Approx(r0.rcnn_cls + r0.rcnn_reg + r0.rcnn_mask)
                        .epsilon(1e-12));
  CHECK(r0.weak_mil == doctest::Approx(r1.weak_mil));  // reported, not weighted

  opts.alpha = 2.0;
  const LossReport r2 = compute_loss(batch, f.model, f.s_lin, opts);
  CHECK(r2.total == doctest::Approx(r2.rcnn_cls + r2.rcnn_reg + r2.rcnn_mask +
                                    2.0 * (r2.weak_mil + r2.weak_refine))
                        .epsilon(1e-9));
}

TEST_CASE("base_train determinism and zero-iteration identity") {
  Fixture f;
  TrainConfig cfg;
  cfg.base_iterations = 0;
  cfg.seed = 9;
  Model m0 = f.model;
  const auto trace0 = base_train(m0, f.ds.train, f.s_lin, cfg);
  CHECK(trace0.size() == 1);
  bool identical = true;
  // compare blocks against the untouched fixture model
  {
    auto a = m0;
    auto b = f.model;
    std::vector<double> va, vb;
    for_each_block(a, [&](const std::string&, double* d, int n) {
      va.insert(va.end(), d, d + n);
    });
    for_each_block(b, [&](const std::string&, double* d, int n) {
      vb.insert(vb.end(), d, d + n);
    });
    identical = va == vb;
  }
  CHECK(identical);

  cfg.base_iterations = 25;
  Model ma = f.model;
  Model mb = f.model;
  const auto ta = base_train(ma, f.ds.train, f.s_lin, cfg);
  const auto tb = base_train(mb, f.ds.train, f.s_lin, cfg);
  REQUIRE(ta.size() == tb.size());
  for (size_t i = 0; i < ta.size(); ++i)
    CHECK(ta[i].loss.total == tb[i].loss.total);
  std::vector<double> va, vb;
  for_each_block(ma, [&](const std::string&, double* d, int n) {
    va.insert(va.end(), d, d + n);
  });
  for_each_block(mb, [&](const std::string&, double* d, int n) {
    vb.insert(vb.end(), d, d + n);
  });
  CHECK(va == vb);
}

TEST_CASE("base_train leaves novel blocks at exact zero and reduces the loss") {
  Fixture f;
  TrainConfig cfg;
  cfg.base_iterations = 120;
  cfg.batch_size = 6;
  cfg.learning_rate = 0.05;
  Model m = f.model;
  const auto trace = base_train(m, f.ds.train, f.s_lin, cfg);
  REQUIRE(trace.size() == 121);
  CHECK(trace.back().loss.total < trace.front().loss.total);
  CHECK(m.transfer.delta_novel_cls.W.cwiseAbs().maxCoeff() == 0.0);
  CHECK(m.transfer.delta_novel_reg.W.cwiseAbs().maxCoeff() == 0.0);
  CHECK(m.transfer.delta_novel_seg.W.cwiseAbs().maxCoeff() == 0.0);
  CHECK(m.transfer.delta_novel_cls.b.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fine_tune freezes everything except direct-adaptation blocks") {
  Fixture f;
  TrainConfig cfg;
  cfg.base_iterations = 40;
  Model m = f.model;
  base_train(m, f.ds.train, f.s_lin, cfg);

  cfg.k = 2;
  const auto kshot = sample_kshot(f.ds, 2, 11);
  REQUIRE(!kshot.empty());

  const Model before = m;
  const FineTuneInfo info = fine_tune(m, kshot, f.s_lin, cfg);
  CHECK(info.iterations == 100);

  std::vector<std::pair<std::string, std::vector<double>>> ba, bb;
  Model mb = before, mm = m;
  for_each_block(mb, [&](const std::string& name, double* d, int n) {
    ba.push_back({name, std::vector<double>(d, d + n)});
  });
  for_each_block(mm, [&](const std::string& name, double* d, int n) {
    bb.push_back({name, std::vector<double>(d, d + n)});
  });
  REQUIRE(ba.size() == bb.size());
  bool novel_changed = false;
  for (size_t i = 0; i < ba.size(); ++i) {
    if (ba[i].first.rfind("transfer.delta_novel_", 0) == 0) {
      if (ba[i].second != bb[i].second) novel_changed = true;
    } else {
      CHECK(ba[i].second == bb[i].second);  // bit-exact frozen
    }
  }
  CHECK(novel_changed);
}

TEST_CASE("fine_tune rejects k = 0 with a pointer to the zero-shot path") {
  Fixture f;
  TrainConfig cfg;
  cfg.k = 0;
  try {
    fine_tune(f.model, f.ds.train, f.s_lin, cfg);
    FAIL("expected rejection");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("zero-shot") != std::string::npos);
  }
}

TEST_CASE("analytic gradients match finite differences") {
  Fixture f;
  std::vector<ImageRecord> batch(f.ds.train.begin(), f.ds.train.begin() + 2);

  SUBCASE("full objective") {
    LossOptions opts;
    const GradCheckReport r = grad_check(f.model, batch, f.s_lin, opts, 1e-6);
    CAPTURE(r.worst_block);
    CAPTURE(r.analytic_at_worst);
    CAPTURE(r.numeric_at_worst);
    CHECK(r.max_relative_error < 1e-5);
    CHECK(!r.worst_block.empty());
  }
  SUBCASE("weak loss alone") {
    LossOptions opts;
    opts.include_rcnn = false;
    const GradCheckReport r = grad_check(f.model, batch, f.s_lin, opts, 1e-6);
    CHECK(r.max_relative_error < 1e-5);
  }
  SUBCASE("constant loss region has zero gradients both ways") {
    // alpha 0, no weak, and no in-scope annotations: only the cls term
    // remains, which still varies; instead check an rcnn-only loss on a
    // record with no foreground and no detect/segment terms
    LossOptions opts;
    opts.include_weak = false;
    opts.alpha = 0.0;
    opts.detect = false;
    opts.segment = false;
    const GradCheckReport r = grad_check(f.model, batch, f.s_lin, opts, 1e-6);
    CHECK(r.max_relative_error < 1e-5);
  }
}

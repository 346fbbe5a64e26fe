#pragma once

#include <set>
#include <string>
#include <vector>

#include "anyshot/dataset.hpp"

namespace anyshot {

// Desk-scale stand-in for backbone + RPN: images are proposal sets with
// synthetic features. Four feature coordinates carry the proposal->object
// delta coding so linear regressors are learnable; the rest carry a class
// prototype plus noise. Class prototypes double as the embedding table, so
// lingual similarity correlates with feature similarity.
struct WorldConfig {
  int num_classes = 8;
  int num_base = 5;
  int feature_dim = 32;
  int images_train = 200;
  int images_test = 100;
  int objects_min = 1;
  int objects_max = 4;
  double proposal_jitter = 0.35;
  int negative_proposals_per_image = 4;
  double feature_noise = 0.13;
  uint64_t seed = 1;

  // Prototype mixing for novel classes. Novel class n blends its parent
  // base class (n mod B), a second parent ((n+1) mod B), a shared
  // novel-cluster direction, and a unique remainder; the blend is scaled to
  // novel_norm. These drive how much weak-detector confusion the transfer
  // has to fix and how well background heads can isolate novel features.
  double novel_parent_overlap = 0.6;
  double novel_second_parent_overlap = 0.35;
  double novel_shared_overlap = 0.0;
  double novel_norm = 1.0;
  double embedding_scale = 1.0;

  // relative draw odds of novel classes vs base classes when sampling
  // objects (1 = uniform over all classes)
  double novel_frequency_boost = 2.0;

  // per-instance appearance spread: each object's feature leans away from
  // its class prototype toward an instance-specific direction by a factor
  // drawn from U(0, instance_pose)
  double instance_pose = 0.4;

  // throws std::invalid_argument listing all violations
  void validate() const;
};

Dataset generate_dataset(const WorldConfig& config);

// Exactly k novel instances per class, deterministic per seed. Returned
// records keep base annotations (logged as unused by fine-tuning) and the
// selected novel annotations only. k = 0 yields an empty view.
std::vector<ImageRecord> sample_kshot(const Dataset& dataset, int k, uint64_t seed);

struct BudgetAllocation {
  int shots_per_class = 0;          // round((1-f) * B)
  int weak_image_count = 0;         // 7 * round(f * B)
  std::vector<ImageRecord> kshot;   // instance-annotation allocation
  std::set<int> weak_image_ids;     // images keeping novel image-level labels
};

// Splits an annotation budget of B instance-units between k-shot instance
// annotations and weakly-labeled images at 7 image labels per instance-unit.
// The weak subset excludes images consumed by the shots.
BudgetAllocation budget_allocate(const Dataset& dataset, int budget,
                                 double weak_fraction, uint64_t seed);

// Training view under a budget: novel entries of image_labels are zeroed on
// every train image outside the weak subset. Base labels are untouched.
std::vector<ImageRecord> apply_weak_budget(const Dataset& dataset,
                                           const std::set<int>& weak_image_ids);

}  // namespace anyshot

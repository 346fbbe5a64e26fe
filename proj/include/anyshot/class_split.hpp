#pragma once

#include <string>
#include <vector>

namespace anyshot {

// Disjoint base/novel class sets. Canonical class index runs base classes
// first (0..B-1), then novel (B..B+N-1).
struct ClassSplit {
  std::vector<std::string> base;
  std::vector<std::string> novel;

  int num_base() const { return static_cast<int>(base.size()); }
  int num_novel() const { return static_cast<int>(novel.size()); }
  int num_classes() const { return num_base() + num_novel(); }

  bool is_base(int class_id) const { return class_id < num_base(); }
  const std::string& name(int class_id) const {
    return class_id < num_base() ? base[class_id] : novel[class_id - num_base()];
  }
  int index_of(const std::string& name) const;

  // throws std::invalid_argument on overlap, duplicates, or empty sets
  void validate() const;

  bool operator==(const ClassSplit&) const = default;
};

}  // namespace anyshot

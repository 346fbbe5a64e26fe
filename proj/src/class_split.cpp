#include "anyshot/class_split.hpp"

#include <set>
#include <stdexcept>

namespace anyshot {

int ClassSplit::index_of(const std::string& name) const {
  for (int i = 0; i < num_base(); ++i)
    if (base[i] == name) return i;
  for (int i = 0; i < num_novel(); ++i)
    if (novel[i] == name) return num_base() + i;
  throw std::invalid_argument("unknown class name: " + name);
}

void ClassSplit::validate() const {
  if (base.empty() || novel.empty())
    throw std::invalid_argument("class split requires non-empty base and novel sets");
  std::set<std::string> seen;
  for (const auto& n : base)
    if (!seen.insert(n).second)
      throw std::invalid_argument("duplicate class name: " + n);
  for (const auto& n : novel)
    if (!seen.insert(n).second)
      throw std::invalid_argument("base/novel sets overlap on class: " + n);
}

}  // namespace anyshot

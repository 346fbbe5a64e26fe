#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <map>
#include <string>

#include "anyshot/class_split.hpp"

namespace anyshot {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Token -> fixed-dimension vector. Multi-word class names embed as the mean
// of their token vectors.
struct EmbeddingTable {
  std::map<std::string, Vec> vectors;

  int dimension() const { return vectors.empty() ? 0 : static_cast<int>(vectors.begin()->second.size()); }
  void insert(const std::string& token, Vec v);
};

// Plain-text format, one entry per line: "<token> <floats...>", no header.
EmbeddingTable load_embeddings(std::istream& in);
EmbeddingTable load_embeddings_file(const std::string& path);
void save_embeddings(const EmbeddingTable&, std::ostream& out);

// Mean of the whitespace-separated tokens' vectors; throws std::out_of_range
// naming the first missing token.
Vec embed_label(const std::string& name, const EmbeddingTable& table);

// entry (n, b) = g_n . g_b over novel rows and base columns; raw dot products
// unless cosine is set.
Mat lingual_matrix(const ClassSplit& split, const EmbeddingTable& table,
                   bool cosine = false);

}  // namespace anyshot

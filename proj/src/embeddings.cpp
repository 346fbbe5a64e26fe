#include "anyshot/embeddings.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace anyshot {

void EmbeddingTable::insert(const std::string& token, Vec v) {
  if (!vectors.empty() && v.size() != dimension())
    throw std::invalid_argument("embedding dimension mismatch for token: " + token);
  if (!v.allFinite())
    throw std::invalid_argument("non-finite embedding for token: " + token);
  vectors[token] = std::move(v);
}

EmbeddingTable load_embeddings(std::istream& in) {
  EmbeddingTable table;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    std::vector<double> values;
    double x;
    while (ls >> x) values.push_back(x);
    if (values.empty())
      throw std::runtime_error("embedding line with no values for token: " + token);
    Vec v = Eigen::Map<Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
    table.insert(token, std::move(v));
  }
  return table;
}

EmbeddingTable load_embeddings_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embedding file: " + path);
  return load_embeddings(in);
}

void save_embeddings(const EmbeddingTable& table, std::ostream& out) {
  out.precision(17);
  for (const auto& [token, v] : table.vectors) {
    out << token;
    for (Eigen::Index i = 0; i < v.size(); ++i) out << ' ' << v[i];
    out << '\n';
  }
}

Vec embed_label(const std::string& name, const EmbeddingTable& table) {
  std::istringstream ss(name);
  std::string token;
  Vec sum;
  int count = 0;
  while (ss >> token) {
    auto it = table.vectors.find(token);
    if (it == table.vectors.end())
      throw std::out_of_range("no embedding for token: " + token);
    if (count == 0)
      sum = it->second;
    else
      sum += it->second;
    ++count;
  }
  if (count == 0) throw std::invalid_argument("empty class name");
  return sum / static_cast<double>(count);
}

Mat lingual_matrix(const ClassSplit& split, const EmbeddingTable& table, bool cosine) {
  const int nb = split.num_base();
  const int nn = split.num_novel();
  std::vector<Vec> g_base(nb), g_novel(nn);
  for (int b = 0; b < nb; ++b) g_base[b] = embed_label(split.base[b], table);
  for (int n = 0; n < nn; ++n) g_novel[n] = embed_label(split.novel[n], table);
  if (cosine) {
    for (auto& g : g_base) g.normalize();
    for (auto& g : g_novel) g.normalize();
  }
  Mat s(nn, nb);
  for (int n = 0; n < nn; ++n)
    for (int b = 0; b < nb; ++b) s(n, b) = g_novel[n].dot(g_base[b]);
  return s;
}

}  // namespace anyshot

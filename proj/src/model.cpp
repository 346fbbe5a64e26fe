#include "anyshot/model.hpp"

#include <fstream>
#include <json.hpp>
#include <stdexcept>

#include "anyshot/dataset.hpp"

namespace anyshot {

using nlohmann::json;

Model init_model(const ClassSplit& split, int feature_dim, int refine_streams,
                 uint64_t seed, double init_sigma) {
  split.validate();
  if (feature_dim < 1) throw std::invalid_argument("feature_dim must be >= 1");
  if (refine_streams < 1) throw std::invalid_argument("need at least one refinement stream");
  const int nc = split.num_classes();
  const int nb = split.num_base();
  const int nn = split.num_novel();

  Model m;
  m.split = split;
  m.feature_dim = feature_dim;
  m.weak.cls_stream = LinearHead::gaussian(nc, feature_dim, init_sigma, seed, 1);
  m.weak.det_stream = LinearHead::gaussian(nc, feature_dim, init_sigma, seed, 2);
  for (int r = 0; r < refine_streams; ++r)
    m.weak.refine.push_back(
        LinearHead::gaussian(nc + 1, feature_dim, init_sigma, seed, 100 + r));
  m.transfer.delta_base_cls = LinearHead::zero(nb + 1, feature_dim);
  m.transfer.base_reg = LinearHead::zero(nb * 4, feature_dim);
  m.transfer.base_seg = LinearHead::zero(nb * kMaskCells, feature_dim);
  m.transfer.delta_novel_cls = LinearHead::zero(nn, feature_dim);
  m.transfer.delta_novel_reg = LinearHead::zero(nn * 4, feature_dim);
  m.transfer.delta_novel_seg = LinearHead::zero(nn * kMaskCells, feature_dim);
  return m;
}

namespace {

void visit_head(const std::string& prefix, LinearHead& h, const BlockVisitor& visit) {
  visit(prefix + ".W", h.W.data(), static_cast<int>(h.W.size()));
  visit(prefix + ".b", h.b.data(), static_cast<int>(h.b.size()));
}

}  // namespace

void for_each_block(Model& m, const BlockVisitor& visit) {
  visit_head("weak.cls_stream", m.weak.cls_stream, visit);
  visit_head("weak.det_stream", m.weak.det_stream, visit);
  for (size_t r = 0; r < m.weak.refine.size(); ++r)
    visit_head("weak.refine" + std::to_string(r), m.weak.refine[r], visit);
  visit_head("transfer.delta_base_cls", m.transfer.delta_base_cls, visit);
  visit_head("transfer.base_reg", m.transfer.base_reg, visit);
  visit_head("transfer.base_seg", m.transfer.base_seg, visit);
  visit_head("transfer.delta_novel_cls", m.transfer.delta_novel_cls, visit);
  visit_head("transfer.delta_novel_reg", m.transfer.delta_novel_reg, visit);
  visit_head("transfer.delta_novel_seg", m.transfer.delta_novel_seg, visit);
}

namespace {

json head_to_json(const LinearHead& h) {
  json w;
  w["shape"] = {h.W.rows(), h.W.cols()};
  std::vector<double> values;
  values.reserve(h.W.size());
  for (Eigen::Index i = 0; i < h.W.rows(); ++i)
    for (Eigen::Index j = 0; j < h.W.cols(); ++j) values.push_back(h.W(i, j));
  w["values"] = values;
  json b;
  b["shape"] = {h.b.size()};
  b["values"] = std::vector<double>(h.b.data(), h.b.data() + h.b.size());
  return json{{"W", w}, {"b", b}};
}

LinearHead head_from_json(const json& j) {
  const auto& w = j.at("W");
  const auto shape = w.at("shape").get<std::vector<Eigen::Index>>();
  const auto values = w.at("values").get<std::vector<double>>();
  if (shape.size() != 2 || static_cast<Eigen::Index>(values.size()) != shape[0] * shape[1])
    throw std::runtime_error("model file: bad weight block shape");
  LinearHead h = LinearHead::zero(static_cast<int>(shape[0]), static_cast<int>(shape[1]));
  for (Eigen::Index i = 0; i < shape[0]; ++i)
    for (Eigen::Index j2 = 0; j2 < shape[1]; ++j2) h.W(i, j2) = values[i * shape[1] + j2];
  const auto bv = j.at("b").at("values").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(bv.size()) != shape[0])
    throw std::runtime_error("model file: bad bias block shape");
  h.b = Eigen::Map<const Vec>(bv.data(), shape[0]);
  return h;
}

}  // namespace

void save_model(const Model& m, const std::string& path) {
  json blocks;
  blocks["weak.cls_stream"] = head_to_json(m.weak.cls_stream);
  blocks["weak.det_stream"] = head_to_json(m.weak.det_stream);
  for (size_t r = 0; r < m.weak.refine.size(); ++r)
    blocks["weak.refine" + std::to_string(r)] = head_to_json(m.weak.refine[r]);
  blocks["transfer.delta_base_cls"] = head_to_json(m.transfer.delta_base_cls);
  blocks["transfer.base_reg"] = head_to_json(m.transfer.base_reg);
  blocks["transfer.base_seg"] = head_to_json(m.transfer.base_seg);
  blocks["transfer.delta_novel_cls"] = head_to_json(m.transfer.delta_novel_cls);
  blocks["transfer.delta_novel_reg"] = head_to_json(m.transfer.delta_novel_reg);
  blocks["transfer.delta_novel_seg"] = head_to_json(m.transfer.delta_novel_seg);

  json doc;
  doc["format_version"] = 1;
  doc["feature_dim"] = m.feature_dim;
  doc["refinement_streams"] = m.weak.num_refine();
  doc["class_split"] = {{"base", m.split.base}, {"novel", m.split.novel}};
  doc["blocks"] = blocks;

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model file: " + path);
  out << doc.dump(1) << '\n';
}

Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file: " + path);
  json doc = json::parse(in);
  if (doc.at("format_version").get<int>() != 1)
    throw std::runtime_error("unsupported model format_version");

  Model m;
  m.split.base = doc.at("class_split").at("base").get<std::vector<std::string>>();
  m.split.novel = doc.at("class_split").at("novel").get<std::vector<std::string>>();
  m.split.validate();
  m.feature_dim = doc.at("feature_dim").get<int>();
  const int refine_streams = doc.at("refinement_streams").get<int>();
  const json& blocks = doc.at("blocks");
  m.weak.cls_stream = head_from_json(blocks.at("weak.cls_stream"));
  m.weak.det_stream = head_from_json(blocks.at("weak.det_stream"));
  for (int r = 0; r < refine_streams; ++r)
    m.weak.refine.push_back(head_from_json(blocks.at("weak.refine" + std::to_string(r))));
  m.transfer.delta_base_cls = head_from_json(blocks.at("transfer.delta_base_cls"));
  m.transfer.base_reg = head_from_json(blocks.at("transfer.base_reg"));
  m.transfer.base_seg = head_from_json(blocks.at("transfer.base_seg"));
  m.transfer.delta_novel_cls = head_from_json(blocks.at("transfer.delta_novel_cls"));
  m.transfer.delta_novel_reg = head_from_json(blocks.at("transfer.delta_novel_reg"));
  m.transfer.delta_novel_seg = head_from_json(blocks.at("transfer.delta_novel_seg"));
  return m;
}

}  // namespace anyshot

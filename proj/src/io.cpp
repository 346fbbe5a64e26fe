#include "anyshot/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <stdexcept>

namespace anyshot {

using nlohmann::json;

namespace {

json box_to_json(const Box& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

Box box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4)
    throw std::runtime_error("box must be a 4-element array");
  return Box{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
             j[3].get<double>()};
}

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

void save_dataset_file(const ClassSplit& split, const EmbeddingTable& embeddings,
                       const std::vector<ImageRecord>& images, const std::string& path) {
  json doc;
  doc["format_version"] = 1;
  doc["class_split"] = {{"base", split.base}, {"novel", split.novel}};
  json table;
  for (const auto& [token, v] : embeddings.vectors)
    table[token] = std::vector<double>(v.data(), v.data() + v.size());
  doc["embeddings"] = table;

  json imgs = json::array();
  for (const ImageRecord& rec : images) {
    json jr;
    jr["image_id"] = rec.image_id;
    jr["image_labels"] = rec.image_labels;
    json props = json::array();
    for (const Proposal& p : rec.proposals) {
      json jp;
      jp["rbox"] = box_to_json(p.rbox);
      jp["z"] = std::vector<double>(p.z.data(), p.z.data() + p.z.size());
      props.push_back(std::move(jp));
    }
    jr["proposals"] = std::move(props);
    json anns = json::array();
    for (const Annotation& a : rec.annotations) {
      json ja;
      ja["class_id"] = a.class_id;
      ja["box"] = box_to_json(a.box);
      ja["mask"] = mask_to_string(a.mask);
      anns.push_back(std::move(ja));
    }
    jr["annotations"] = std::move(anns);
    imgs.push_back(std::move(jr));
  }
  doc["images"] = std::move(imgs);

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path);
  out << doc.dump() << '\n';
}

DatasetFile load_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  json doc = json::parse(in);
  if (doc.at("format_version").get<int>() != 1)
    throw std::runtime_error("unsupported dataset format_version");

  DatasetFile file;
  file.split.base = doc.at("class_split").at("base").get<std::vector<std::string>>();
  file.split.novel = doc.at("class_split").at("novel").get<std::vector<std::string>>();
  file.split.validate();

  if (doc.contains("embedding_ref")) {
    file.embeddings = load_embeddings_file(doc.at("embedding_ref").get<std::string>());
  } else {
    for (const auto& [token, values] : doc.at("embeddings").items()) {
      const auto v = values.get<std::vector<double>>();
      file.embeddings.insert(token,
                             Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
  }

  for (const json& jr : doc.at("images")) {
    ImageRecord rec;
    rec.image_id = jr.at("image_id").get<int>();
    rec.image_labels = jr.at("image_labels").get<std::vector<int>>();
    for (const json& jp : jr.at("proposals")) {
      Proposal p;
      p.rbox = box_from_json(jp.at("rbox"));
      const auto z = jp.at("z").get<std::vector<double>>();
      p.z = Eigen::Map<const Vec>(z.data(), static_cast<Eigen::Index>(z.size()));
      rec.proposals.push_back(std::move(p));
    }
    for (const json& ja : jr.at("annotations")) {
      Annotation a;
      a.class_id = ja.at("class_id").get<int>();
      a.box = box_from_json(ja.at("box"));
      a.mask = mask_from_string(ja.at("mask").get<std::string>());
      rec.annotations.push_back(std::move(a));
    }
    file.images.push_back(std::move(rec));
  }
  return file;
}

void save_dataset_dir(const Dataset& dataset, const std::string& dir) {
  std::filesystem::create_directories(dir);
  save_dataset_file(dataset.split, dataset.embeddings, dataset.train,
                    (std::filesystem::path(dir) / "train.json").string());
  save_dataset_file(dataset.split, dataset.embeddings, dataset.test,
                    (std::filesystem::path(dir) / "test.json").string());
}

Dataset load_dataset_dir(const std::string& dir) {
  DatasetFile train = load_dataset_file((std::filesystem::path(dir) / "train.json").string());
  DatasetFile test = load_dataset_file((std::filesystem::path(dir) / "test.json").string());
  if (!(train.split == test.split))
    throw std::runtime_error("train/test class splits disagree in " + dir);
  Dataset ds;
  ds.split = std::move(train.split);
  ds.embeddings = std::move(train.embeddings);
  ds.train = std::move(train.images);
  ds.test = std::move(test.images);
  return ds;
}

void write_loss_trace_csv(const std::vector<TraceRow>& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write loss trace: " + path);
  out << "iteration,total,rcnn_cls,rcnn_reg,rcnn_mask,weak_mil,weak_refine\n";
  char buf[256];
  for (const TraceRow& row : trace) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  row.iteration, row.loss.total, row.loss.rcnn_cls, row.loss.rcnn_reg,
                  row.loss.rcnn_mask, row.loss.weak_mil, row.loss.weak_refine);
    out << buf;
  }
}

namespace {

void report_rows(const EvalReport& report,
                 const std::function<void(const std::string& cls, const std::string& set,
                                          const std::string& metric, double value)>& emit) {
  for (const ClassEval& ce : report.per_class) {
    const std::string set = ce.is_base ? "base" : "novel";
    if (ce.ap50) emit(ce.name, set, "AP50", *ce.ap50);
    if (ce.map) emit(ce.name, set, "mAP", *ce.map);
    if (ce.mask_ap50) emit(ce.name, set, "maskAP50", *ce.mask_ap50);
    if (ce.mask_map) emit(ce.name, set, "maskmAP", *ce.mask_map);
  }
  auto agg = [&](const std::string& set, const std::optional<double>& ap50,
                 const std::optional<double>& map, const std::optional<double>& m50,
                 const std::optional<double>& mmap) {
    if (ap50) emit("ALL", set, "AP50", *ap50);
    if (map) emit("ALL", set, "mAP", *map);
    if (m50) emit("ALL", set, "maskAP50", *m50);
    if (mmap) emit("ALL", set, "maskmAP", *mmap);
  };
  agg("base", report.base_ap50, report.base_map, report.base_mask_ap50,
      report.base_mask_map);
  agg("novel", report.novel_ap50, report.novel_map, report.novel_mask_ap50,
      report.novel_mask_map);
  agg("all", report.all_ap50, report.all_map, report.all_mask_ap50,
      report.all_mask_map);
}

}  // namespace

void write_eval_report_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report: " + path);
  out << "class,set,metric,value\n";
  report_rows(report, [&](const std::string& cls, const std::string& set,
                          const std::string& metric, double value) {
    out << cls << ',' << set << ',' << metric << ',' << format_value(100.0 * value)
        << '\n';
  });
}

void write_eval_report_json(const EvalReport& report, const std::string& path) {
  json doc;
  json rows = json::array();
  report_rows(report, [&](const std::string& cls, const std::string& set,
                          const std::string& metric, double value) {
    rows.push_back({{"class", cls}, {"set", set}, {"metric", metric},
                    {"value", 100.0 * value}});
  });
  doc["rows"] = std::move(rows);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report: " + path);
  out << doc.dump(1) << '\n';
}

void write_detections_jsonl(const std::vector<Detection>& detections,
                            const ClassSplit& split, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write detections: " + path);
  for (const Detection& d : detections) {
    json j;
    j["image_id"] = d.image_id;
    j["class"] = split.name(d.class_id);
    j["score"] = d.score;
    j["box"] = box_to_json(d.box);
    if (d.mask) {
      std::vector<double> cells;
      cells.reserve(kMaskCells);
      for (int i = 0; i < kMaskSize; ++i)
        for (int jx = 0; jx < kMaskSize; ++jx) cells.push_back((*d.mask)(i, jx));
      j["mask"] = std::move(cells);
    }
    out << j.dump() << '\n';
  }
}

void write_similarity_csv(const Mat& matrix, const ClassSplit& split,
                          const std::string& path) {
  if (matrix.rows() != split.num_novel() || matrix.cols() != split.num_base())
    throw std::invalid_argument("similarity matrix shape does not match split");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write similarity csv: " + path);
  out << "novel";
  for (const std::string& b : split.base) out << ',' << b;
  out << '\n';
  char buf[64];
  for (int n = 0; n < split.num_novel(); ++n) {
    out << split.novel[n];
    for (int b = 0; b < split.num_base(); ++b) {
      std::snprintf(buf, sizeof(buf), "%.9g", matrix(n, b));
      out << ',' << buf;
    }
    out << '\n';
  }
}

namespace {

template <typename T>
void get_if(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  json j = json::parse(in);
  RunConfig c;
  get_if(j, "num_classes", c.world.num_classes);
  get_if(j, "num_base", c.world.num_base);
  get_if(j, "feature_dim", c.world.feature_dim);
  get_if(j, "images_train", c.world.images_train);
  get_if(j, "images_test", c.world.images_test);
  get_if(j, "objects_min", c.world.objects_min);
  get_if(j, "objects_max", c.world.objects_max);
  get_if(j, "proposal_jitter", c.world.proposal_jitter);
  get_if(j, "negative_proposals_per_image", c.world.negative_proposals_per_image);
  get_if(j, "feature_noise", c.world.feature_noise);
  get_if(j, "world_seed", c.world.seed);
  get_if(j, "novel_parent_overlap", c.world.novel_parent_overlap);
  get_if(j, "novel_second_parent_overlap", c.world.novel_second_parent_overlap);
  get_if(j, "novel_shared_overlap", c.world.novel_shared_overlap);
  get_if(j, "novel_norm", c.world.novel_norm);
  get_if(j, "instance_pose", c.world.instance_pose);
  get_if(j, "novel_frequency_boost", c.world.novel_frequency_boost);
  get_if(j, "embedding_scale", c.world.embedding_scale);

  get_if(j, "alpha", c.train.alpha);
  get_if(j, "learning_rate", c.train.learning_rate);
  get_if(j, "finetune_learning_rate", c.train.finetune_learning_rate);
  get_if(j, "momentum", c.train.momentum);
  get_if(j, "base_iterations", c.train.base_iterations);
  get_if(j, "finetune_iterations_per_shot", c.train.finetune_iterations_per_shot);
  get_if(j, "batch_size", c.train.batch_size);
  get_if(j, "seed", c.train.seed);
  get_if(j, "k", c.train.k);
  get_if(j, "fg_iou_threshold", c.train.fg_iou_threshold);
  get_if(j, "detect", c.train.detect);
  get_if(j, "segment", c.train.segment);
  get_if(j, "stop_gradient_weak", c.train.stop_gradient_weak);
  get_if(j, "refine_streams", c.train.refine_streams);
  get_if(j, "init_sigma", c.train.init_sigma);

  get_if(j, "score_threshold", c.score_threshold);
  get_if(j, "nms_threshold", c.nms_threshold);
  get_if(j, "joint_softmax", c.joint_softmax);
  get_if(j, "cosine_lingual", c.cosine_lingual);
  return c;
}

void save_run_config(const RunConfig& c, const std::string& path) {
  json j;
  j["num_classes"] = c.world.num_classes;
  j["num_base"] = c.world.num_base;
  j["feature_dim"] = c.world.feature_dim;
  j["images_train"] = c.world.images_train;
  j["images_test"] = c.world.images_test;
  j["objects_min"] = c.world.objects_min;
  j["objects_max"] = c.world.objects_max;
  j["proposal_jitter"] = c.world.proposal_jitter;
  j["negative_proposals_per_image"] = c.world.negative_proposals_per_image;
  j["feature_noise"] = c.world.feature_noise;
  j["world_seed"] = c.world.seed;
  j["novel_parent_overlap"] = c.world.novel_parent_overlap;
  j["novel_second_parent_overlap"] = c.world.novel_second_parent_overlap;
  j["novel_shared_overlap"] = c.world.novel_shared_overlap;
  j["novel_norm"] = c.world.novel_norm;
  j["instance_pose"] = c.world.instance_pose;
  j["novel_frequency_boost"] = c.world.novel_frequency_boost;
  j["embedding_scale"] = c.world.embedding_scale;

  j["alpha"] = c.train.alpha;
  j["learning_rate"] = c.train.learning_rate;
  j["finetune_learning_rate"] = c.train.finetune_learning_rate;
  j["momentum"] = c.train.momentum;
  j["base_iterations"] = c.train.base_iterations;
  j["finetune_iterations_per_shot"] = c.train.finetune_iterations_per_shot;
  j["batch_size"] = c.train.batch_size;
  j["seed"] = c.train.seed;
  j["k"] = c.train.k;
  j["fg_iou_threshold"] = c.train.fg_iou_threshold;
  j["detect"] = c.train.detect;
  j["segment"] = c.train.segment;
  j["stop_gradient_weak"] = c.train.stop_gradient_weak;
  j["refine_streams"] = c.train.refine_streams;
  j["init_sigma"] = c.train.init_sigma;

  j["score_threshold"] = c.score_threshold;
  j["nms_threshold"] = c.nms_threshold;
  j["joint_softmax"] = c.joint_softmax;
  j["cosine_lingual"] = c.cosine_lingual;

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config file: " + path);
  out << j.dump(1) << '\n';
}

}  // namespace anyshot

#pragma once

#include <string>
#include <vector>

#include "anyshot/eval.hpp"
#include "anyshot/synthworld.hpp"
#include "anyshot/training.hpp"

namespace anyshot {

// Dataset files are self-contained: class split, inline embedding table (or
// a file reference), and one image list. A dataset directory holds
// train.json and test.json.
void save_dataset_file(const ClassSplit& split, const EmbeddingTable& embeddings,
                       const std::vector<ImageRecord>& images, const std::string& path);

struct DatasetFile {
  ClassSplit split;
  EmbeddingTable embeddings;
  std::vector<ImageRecord> images;
};

DatasetFile load_dataset_file(const std::string& path);

void save_dataset_dir(const Dataset& dataset, const std::string& dir);
Dataset load_dataset_dir(const std::string& dir);

void write_loss_trace_csv(const std::vector<TraceRow>& trace, const std::string& path);

// columns: class, set in {base,novel}, metric in {AP50,mAP,maskAP50,maskmAP},
// value x100; aggregate rows use class=ALL (plus set=all rows)
void write_eval_report_csv(const EvalReport& report, const std::string& path);
void write_eval_report_json(const EvalReport& report, const std::string& path);

// one JSON object per line: {image_id, class, score, box, mask?}
void write_detections_jsonl(const std::vector<Detection>& detections,
                            const ClassSplit& split, const std::string& path);

// header row of base class names, one row per novel class
void write_similarity_csv(const Mat& matrix, const ClassSplit& split,
                          const std::string& path);

// Union of world + training configuration with fully spelled JSON keys.
struct RunConfig {
  WorldConfig world;
  TrainConfig train;
  double score_threshold = 0.001;
  double nms_threshold = 0.5;
  bool joint_softmax = false;
  bool cosine_lingual = false;  // cosine-normalize embeddings in S_lin
};

RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& config, const std::string& path);

}  // namespace anyshot

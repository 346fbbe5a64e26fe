#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "anyshot/io.hpp"

using namespace anyshot;

namespace {

std::string tmpdir() {
  const auto dir = std::filesystem::temp_directory_path() / "anyshot_io_test";
  std::filesystem::create_directories(dir);
  return dir.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

WorldConfig io_world() {
  WorldConfig cfg;
  cfg.num_classes = 4;
  cfg.num_base = 2;
  cfg.feature_dim = 10;
  cfg.images_train = 6;
  cfg.images_test = 3;
  cfg.seed = 13;
  return cfg;
}

}  // namespace

TEST_CASE("dataset files round trip exactly") {
  const Dataset ds = generate_dataset(io_world());
  const std::string dir = tmpdir() + "/ds";
  save_dataset_dir(ds, dir);
  const Dataset back = load_dataset_dir(dir);
  CHECK(back.split == ds.split);
  REQUIRE(back.train.size() == ds.train.size());
  for (size_t i = 0; i < ds.train.size(); ++i) {
    CHECK(back.train[i].image_id == ds.train[i].image_id);
    CHECK(back.train[i].image_labels == ds.train[i].image_labels);
    REQUIRE(back.train[i].proposals.size() == ds.train[i].proposals.size());
    for (size_t p = 0; p < ds.train[i].proposals.size(); ++p) {
      CHECK(back.train[i].proposals[p].z == ds.train[i].proposals[p].z);
      CHECK(back.train[i].proposals[p].rbox.x2 == ds.train[i].proposals[p].rbox.x2);
    }
    REQUIRE(back.train[i].annotations.size() == ds.train[i].annotations.size());
    for (size_t a = 0; a < ds.train[i].annotations.size(); ++a) {
      CHECK(back.train[i].annotations[a].class_id == ds.train[i].annotations[a].class_id);
      CHECK(back.train[i].annotations[a].mask == ds.train[i].annotations[a].mask);
    }
  }
  // saving the loaded copy reproduces the bytes
  const std::string dir2 = tmpdir() + "/ds2";
  save_dataset_dir(back, dir2);
  CHECK(slurp(dir + "/train.json") == slurp(dir2 + "/train.json"));
  CHECK(slurp(dir + "/test.json") == slurp(dir2 + "/test.json"));
}

TEST_CASE("mask string round trip") {
  MaskGrid m = MaskGrid::Zero();
  m(0, 0) = 1.0;
  m(13, 13) = 1.0;
  m(7, 3) = 1.0;
  const std::string s = mask_to_string(m);
  CHECK(s.size() == 196);
  CHECK(s[0] == '1');
  CHECK(s[195] == '1');
  CHECK(mask_from_string(s) == m);
  CHECK_THROWS(mask_from_string("101"));
}

TEST_CASE("model file round trip is exact") {
  const Dataset ds = generate_dataset(io_world());
  Model m = init_model(ds.split, 10, 3, 99, 0.3);
  m.transfer.delta_base_cls.W(0, 0) = 0.1234567890123456789;
  const std::string path = tmpdir() + "/model.json";
  save_model(m, path);
  Model back = load_model(path);
  std::vector<double> va, vb;
  for_each_block(m, [&](const std::string&, double* d, int n) {
    va.insert(va.end(), d, d + n);
  });
  for_each_block(back, [&](const std::string&, double* d, int n) {
    vb.insert(vb.end(), d, d + n);
  });
  CHECK(va == vb);
  CHECK(back.split == m.split);
  CHECK(back.weak.num_refine() == 3);

  // byte-identical re-save
  const std::string path2 = tmpdir() + "/model2.json";
  save_model(back, path2);
  CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("loss trace and report files") {
  std::vector<TraceRow> trace(3);
  trace[1].iteration = 1;
  trace[1].loss.total = 1.5;
  trace[1].loss.rcnn_cls = 0.25;
  const std::string path = tmpdir() + "/trace.csv";
  write_loss_trace_csv(trace, path);
  const std::string text = slurp(path);
  CHECK(text.find("iteration,total,rcnn_cls,rcnn_reg,rcnn_mask,weak_mil,weak_refine") == 0);
  CHECK(text.find("1,1.5,0.25") != std::string::npos);

  EvalReport report;
  ClassEval ce;
  ce.name = "bravo";
  ce.is_base = true;
  ce.num_gt = 3;
  ce.ap50 = 0.5;
  ce.map = 0.25;
  report.per_class.push_back(ce);
  report.base_ap50 = 0.5;
  const std::string rpath = tmpdir() + "/report.csv";
  write_eval_report_csv(report, rpath);
  const std::string rtext = slurp(rpath);
  CHECK(rtext.find("class,set,metric,value") == 0);
  CHECK(rtext.find("bravo,base,AP50,50.000000") != std::string::npos);
  CHECK(rtext.find("ALL,base,AP50,50.000000") != std::string::npos);
  write_eval_report_json(report, tmpdir() + "/report.json");
}

TEST_CASE("similarity csv layout") {
  ClassSplit split;
  split.base = {"alpha", "bravo"};
  split.novel = {"charlie"};
  Mat s(1, 2);
  s << 0.5, 0.25;
  const std::string path = tmpdir() + "/sim.csv";
  write_similarity_csv(s, split, path);
  CHECK(slurp(path) == "novel,alpha,bravo\ncharlie,0.5,0.25\n");
}

TEST_CASE("detections jsonl carries class names and optional masks") {
  ClassSplit split;
  split.base = {"alpha"};
  split.novel = {"bravo"};
  Detection d;
  d.image_id = 5;
  d.class_id = 1;
  d.score = 0.75;
  d.box = Box{0.1, 0.2, 0.3, 0.4};
  const std::string path = tmpdir() + "/dets.jsonl";
  write_detections_jsonl({d}, split, path);
  const std::string text = slurp(path);
  CHECK(text.find("\"class\":\"bravo\"") != std::string::npos);
  CHECK(text.find("\"mask\"") == std::string::npos);
}

TEST_CASE("run config round trip and overrides") {
  RunConfig c;
  c.world.num_classes = 6;
  c.train.base_iterations = 777;
  c.score_threshold = 0.125;
  const std::string path = tmpdir() + "/config.json";
  save_run_config(c, path);
  const RunConfig back = load_run_config(path);
  CHECK(back.world.num_classes == 6);
  CHECK(back.train.base_iterations == 777);
  CHECK(back.score_threshold == 0.125);

  // partial configs leave defaults in place
  const std::string partial = tmpdir() + "/partial.json";
  std::ofstream out(partial);
  out << "{\"num_base\": 3}\n";
  out.close();
  const RunConfig merged = load_run_config(partial);
  CHECK(merged.world.num_base == 3);
  CHECK(merged.world.num_classes == 8);  // default
}

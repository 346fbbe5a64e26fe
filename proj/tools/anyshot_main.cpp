#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "anyshot/io.hpp"

using namespace anyshot;
namespace fs = std::filesystem;

namespace {

Mat s_lin_for(const Dataset& ds, const RunConfig& cfg) {
  return lingual_matrix(ds.split, ds.embeddings, cfg.cosine_lingual);
}

PredictOptions predict_options(const RunConfig& c) {
  PredictOptions p;
  p.score_threshold = c.score_threshold;
  p.nms_threshold = c.nms_threshold;
  p.joint_softmax = c.joint_softmax;
  p.segment = c.train.segment;
  return p;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Mat row_softmax(const Mat& m) {
  Mat out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    out.row(i) = softmax(m.row(i).transpose()).transpose();
  return out;
}

int cmd_gen_data(RunConfig cfg, uint64_t seed, const std::string& out_dir) {
  cfg.world.seed = seed;
  const Dataset ds = generate_dataset(cfg.world);
  fs::create_directories(out_dir);
  save_dataset_dir(ds, out_dir);
  save_run_config(cfg, (fs::path(out_dir) / "config.json").string());
  std::cout << "wrote " << out_dir << "/train.json (" << ds.train.size()
            << " images), test.json (" << ds.test.size() << " images)\n";
  return 0;
}

int cmd_base_train(const RunConfig& cfg, const std::string& data_dir,
                   const std::string& out_model) {
  const Dataset ds = load_dataset_dir(data_dir);
  Model model = init_model(ds.split,
                           static_cast<int>(ds.train.at(0).proposals.at(0).z.size()),
                           cfg.train.refine_streams, cfg.train.seed,
                           cfg.train.init_sigma);
  const Mat s_lin = s_lin_for(ds, cfg);
  const auto trace = base_train(model, ds.train, s_lin, cfg.train);
  if (const auto dir = fs::path(out_model).parent_path(); !dir.empty())
    fs::create_directories(dir);
  save_model(model, out_model);
  const std::string stem = out_model.substr(0, out_model.find_last_of('.'));
  write_loss_trace_csv(trace, stem + ".trace.csv");
  save_run_config(cfg, stem + ".config.json");
  std::cout << "trained " << cfg.train.base_iterations << " iterations; final loss "
            << trace.back().loss.total << "\nwrote " << out_model << " and "
            << stem << ".trace.csv\n";
  return 0;
}

int cmd_fine_tune(RunConfig cfg, const std::string& model_path,
                  const std::string& data_dir, int k, uint64_t seed,
                  const std::string& out_model) {
  cfg.train.k = k;
  cfg.train.seed = seed;
  const Dataset ds = load_dataset_dir(data_dir);
  Model model = load_model(model_path);
  const auto kshot = sample_kshot(ds, k, seed);
  const FineTuneInfo info = fine_tune(model, kshot, s_lin_for(ds, cfg), cfg.train);
  if (const auto dir = fs::path(out_model).parent_path(); !dir.empty())
    fs::create_directories(dir);
  save_model(model, out_model);
  std::cout << "fine-tuned " << info.iterations << " iterations on " << k
            << " shots per novel class";
  if (info.base_annotations_ignored > 0)
    std::cout << " (" << info.base_annotations_ignored
              << " base-class shots present but unused: base heads stay frozen)";
  std::cout << "\nwrote " << out_model << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& model_path,
             const std::string& data_dir, const std::string& scope,
             const std::string& tasks, const std::string& out_dir,
             bool dump_detections, int threads) {
  const Dataset ds = load_dataset_dir(data_dir);
  const Model model = load_model(model_path);
  const Mat s_lin = s_lin_for(ds, cfg);
  const PredictMode mode = scope == "base"    ? PredictMode::kBaseOnly
                           : scope == "novel" ? PredictMode::kNovelOnly
                                              : PredictMode::kAll;
  const bool segment = tasks == "det+seg";

  EvalOptions opts;
  opts.scope = mode;
  opts.segment = segment;
  opts.threads = threads;
  opts.predict = predict_options(cfg);
  opts.predict.segment = segment;
  const EvalReport report = evaluate_model(model, s_lin, ds.test, opts);

  fs::create_directories(out_dir);
  save_run_config(cfg, (fs::path(out_dir) / "config.json").string());
  write_eval_report_csv(report, (fs::path(out_dir) / "report.csv").string());
  write_eval_report_json(report, (fs::path(out_dir) / "report.json").string());
  if (dump_detections) {
    PredictOptions popts = opts.predict;
    popts.mode = mode;
    std::vector<Detection> all;
    for (const ImageRecord& rec : ds.test) {
      auto dets = predict_image(rec, model, s_lin, popts);
      all.insert(all.end(), dets.begin(), dets.end());
    }
    write_detections_jsonl(all, ds.split,
                           (fs::path(out_dir) / "detections.jsonl").string());
  }
  auto show = [](const char* name, const std::optional<double>& v) {
    if (v) std::cout << name << " " << 100.0 * *v << "\n";
  };
  show("base AP50", report.base_ap50);
  show("novel AP50", report.novel_ap50);
  show("base maskAP50", report.base_mask_ap50);
  show("novel maskAP50", report.novel_mask_ap50);
  std::cout << "wrote " << out_dir << "/report.csv\n";
  return 0;
}

int cmd_ablate(const RunConfig& cfg, const std::string& data_dir,
               const std::string& variants_csv, int seeds, const std::string& out_dir) {
  const Dataset ds = load_dataset_dir(data_dir);
  const Mat s_lin = s_lin_for(ds, cfg);

  std::vector<Variant> variants;
  std::stringstream ss(variants_csv);
  std::string name;
  while (std::getline(ss, name, ',')) variants.push_back(parse_variant(name));
  if (variants.empty()) throw std::invalid_argument("no variants requested");

  fs::create_directories(out_dir);
  save_run_config(cfg, (fs::path(out_dir) / "config.json").string());
  std::map<Variant, std::vector<double>> novel_ap50, novel_mask_ap50;
  for (int s = 0; s < seeds; ++s) {
    TrainConfig tcfg = cfg.train;
    tcfg.seed = cfg.train.seed + static_cast<uint64_t>(s);
    Model model = init_model(ds.split,
                             static_cast<int>(ds.train.at(0).proposals.at(0).z.size()),
                             tcfg.refine_streams, tcfg.seed, tcfg.init_sigma);
    base_train(model, ds.train, s_lin, tcfg);
    for (Variant v : variants) {
      EvalOptions opts;
      opts.scope = PredictMode::kNovelOnly;
      opts.segment = cfg.train.segment;
      opts.predict = predict_options(cfg);
      opts.predict.variant = v;
      const EvalReport report = evaluate_model(model, s_lin, ds.test, opts);
      if (report.novel_ap50) novel_ap50[v].push_back(*report.novel_ap50);
      if (report.novel_mask_ap50) novel_mask_ap50[v].push_back(*report.novel_mask_ap50);
      if (seeds == 1)
        write_eval_report_csv(
            report,
            (fs::path(out_dir) / ("ablate_" + variant_name(v) + ".csv")).string());
    }
  }

  const std::string summary = (fs::path(out_dir) / "ablation_summary.csv").string();
  std::ofstream out(summary);
  out << "variant,median_novel_AP50,median_novel_maskAP50,seeds\n";
  std::cout << "variant, median novel AP50, median novel maskAP50\n";
  for (Variant v : variants) {
    const double ap = novel_ap50.count(v) ? 100.0 * median(novel_ap50[v]) : -1.0;
    const double mask =
        novel_mask_ap50.count(v) ? 100.0 * median(novel_mask_ap50[v]) : -1.0;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s,%.4f,%.4f,%d", variant_name(v).c_str(), ap,
                  mask, seeds);
    out << buf << "\n";
    std::cout << "  " << buf << "\n";
  }
  std::cout << "wrote " << summary << "\n";
  return 0;
}

int cmd_budget(const RunConfig& cfg, const std::string& data_dir, int budget,
               const std::string& fractions_csv, int seeds, const std::string& out_dir) {
  const Dataset ds = load_dataset_dir(data_dir);
  const Mat s_lin = s_lin_for(ds, cfg);

  std::vector<double> fractions;
  std::stringstream ss(fractions_csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) fractions.push_back(std::stod(tok));
  if (fractions.empty()) throw std::invalid_argument("no weak fractions requested");

  fs::create_directories(out_dir);
  save_run_config(cfg, (fs::path(out_dir) / "config.json").string());
  const std::string table_path = (fs::path(out_dir) / "budget_table.csv").string();
  std::ofstream table(table_path);
  table << "weak_fraction,shots_per_class,weak_images,seed,novel_AP50\n";
  std::cout << "budget " << budget << ", " << seeds << " seed(s)\n";

  for (double f : fractions) {
    std::vector<double> ap50s;
    int shots = 0, weak_images = 0;
    for (int s = 0; s < seeds; ++s) {
      TrainConfig tcfg = cfg.train;
      tcfg.seed = cfg.train.seed + static_cast<uint64_t>(s);
      const BudgetAllocation alloc = budget_allocate(ds, budget, f, tcfg.seed);
      shots = alloc.shots_per_class;
      weak_images = alloc.weak_image_count;
      const auto train_view = apply_weak_budget(ds, alloc.weak_image_ids);
      Model model = init_model(ds.split,
                               static_cast<int>(ds.train.at(0).proposals.at(0).z.size()),
                               tcfg.refine_streams, tcfg.seed, tcfg.init_sigma);
      base_train(model, train_view, s_lin, tcfg);
      if (alloc.shots_per_class > 0) {
        tcfg.k = alloc.shots_per_class;
        fine_tune(model, alloc.kshot, s_lin, tcfg);
      }
      EvalOptions opts;
      opts.scope = PredictMode::kNovelOnly;
      opts.segment = false;
      opts.predict = predict_options(cfg);
      opts.predict.segment = false;
      const EvalReport report = evaluate_model(model, s_lin, ds.test, opts);
      const double ap = report.novel_ap50 ? 100.0 * *report.novel_ap50 : 0.0;
      ap50s.push_back(ap);
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%.3f,%d,%d,%llu,%.4f", f, shots, weak_images,
                    static_cast<unsigned long long>(tcfg.seed), ap);
      table << buf << "\n";
    }
    std::cout << "  " << 100 * f << "% weak / " << shots
              << " shots: median novel AP50 = " << median(ap50s) << "\n";
  }
  std::cout << "wrote " << table_path << "\n";
  return 0;
}

int cmd_export_similarity(const RunConfig& cfg, const std::string& model_path,
                          const std::string& data_dir, const std::string& normalize,
                          const std::string& out_dir) {
  const Dataset ds = load_dataset_dir(data_dir);
  const Model model = load_model(model_path);
  const Mat s_lin = s_lin_for(ds, cfg);

  const Mat lin_out = normalize == "row" ? row_softmax(s_lin) : s_lin;

  Mat mean_s = Mat::Zero(ds.split.num_novel(), ds.split.num_base());
  long count = 0;
  for (const ImageRecord& rec : ds.test) {
    if (rec.proposals.empty()) continue;
    const WeakAggregate agg = weak_aggregate(rec.feature_matrix(), model.weak);
    for (int p = 0; p < rec.num_proposals(); ++p) {
      const Vec v = visual_vector(agg.probs.row(p).transpose(), ds.split.num_base());
      mean_s += combine_similarity(s_lin, v);
      ++count;
    }
  }
  if (count > 0) mean_s /= static_cast<double>(count);

  fs::create_directories(out_dir);
  save_run_config(cfg, (fs::path(out_dir) / "config.json").string());
  write_similarity_csv(lin_out, ds.split, (fs::path(out_dir) / "s_lin.csv").string());
  write_similarity_csv(mean_s, ds.split, (fs::path(out_dir) / "s_mean.csv").string());
  std::cout << "wrote " << out_dir << "/s_lin.csv and s_mean.csv (" << count
            << " proposals pooled)\n";
  return 0;
}

int cmd_grad_check(const RunConfig& cfg, const std::string& data_dir, uint64_t seed,
                   double tolerance, int batch_images) {
  const Dataset ds = load_dataset_dir(data_dir);
  Model model = init_model(ds.split,
                           static_cast<int>(ds.train.at(0).proposals.at(0).z.size()),
                           cfg.train.refine_streams, seed, 0.2);
  const Mat s_lin = s_lin_for(ds, cfg);
  std::vector<ImageRecord> batch;
  for (int i = 0; i < batch_images && i < static_cast<int>(ds.train.size()); ++i)
    batch.push_back(ds.train[i]);

  LossOptions opts;
  opts.alpha = cfg.train.alpha;
  opts.segment = cfg.train.segment;
  opts.detect = cfg.train.detect;
  opts.fg_iou_threshold = cfg.train.fg_iou_threshold;
  const GradCheckReport report = grad_check(model, batch, s_lin, opts, 1e-6);
  std::cout << "max relative error " << report.max_relative_error << " at block "
            << report.worst_block << "[" << report.worst_index << "] (analytic "
            << report.analytic_at_worst << ", numeric " << report.numeric_at_worst
            << ")\n";
  if (report.max_relative_error >= tolerance) {
    std::cout << "FAIL: above tolerance " << tolerance << "\n";
    return 1;
  }
  std::cout << "PASS: below tolerance " << tolerance << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"any-shot detection/segmentation transfer over a synthetic proposal world"};
  app.require_subcommand(1);

  std::string config_path;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  uint64_t gen_seed = 1;
  std::string gen_out;
  gen->add_option("--config", config_path)->check(CLI::ExistingFile);
  gen->add_option("--seed", gen_seed, "world seed");
  gen->add_option("--out", gen_out, "output directory")->required();

  auto* bt = app.add_subcommand("base-train", "train weak detector + base heads");
  std::string bt_data, bt_out;
  bt->add_option("--config", config_path)->check(CLI::ExistingFile);
  bt->add_option("--data", bt_data, "dataset directory")->required();
  bt->add_option("--out", bt_out, "output model file")->required();

  auto* ft = app.add_subcommand("fine-tune", "k-shot adaptation of novel heads");
  std::string ft_model, ft_data, ft_out;
  int ft_k = 1;
  uint64_t ft_seed = 1;
  ft->add_option("--config", config_path)->check(CLI::ExistingFile);
  ft->add_option("--model", ft_model)->required();
  ft->add_option("--data", ft_data)->required();
  ft->add_option("--k", ft_k, "shots per novel class")->required();
  ft->add_option("--seed", ft_seed, "shot-sampling seed");
  ft->add_option("--out", ft_out)->required();

  auto* ev = app.add_subcommand("eval", "evaluate a model on the test split");
  std::string ev_model, ev_data, ev_scope = "all", ev_tasks = "det+seg",
              ev_out = "out/eval";
  bool ev_dump = false;
  ev->add_option("--config", config_path)->check(CLI::ExistingFile);
  ev->add_option("--model", ev_model)->required();
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--scope", ev_scope)->check(CLI::IsMember({"base", "novel", "all"}));
  ev->add_option("--tasks", ev_tasks)->check(CLI::IsMember({"det", "det+seg"}));
  ev->add_option("--out", ev_out, "output directory");
  ev->add_flag("--dump-detections", ev_dump, "also write detections.jsonl");

  auto* ab = app.add_subcommand("ablate", "run the transfer-term ablation ladder");
  std::string ab_data, ab_out = "out/ablation";
  std::string ab_variants = "weak,avg,lin,lin+vis,lin+vis+reg,lin+vis+reg+seg";
  int ab_seeds = 1;
  ab->add_option("--config", config_path)->check(CLI::ExistingFile);
  ab->add_option("--data", ab_data)->required();
  ab->add_option("--variants", ab_variants, "comma-separated variant names");
  ab->add_option("--seeds", ab_seeds, "number of training seeds");
  ab->add_option("--out", ab_out);

  auto* bu = app.add_subcommand("budget", "annotation-budget allocation experiment");
  std::string bu_data, bu_out = "out/budget", bu_fractions = "0,0.5,1";
  int bu_budget = 10, bu_seeds = 1;
  bu->add_option("--config", config_path)->check(CLI::ExistingFile);
  bu->add_option("--data", bu_data)->required();
  bu->add_option("--budget", bu_budget, "budget in instance-annotation units");
  bu->add_option("--weak-fraction", bu_fractions,
                 "comma-separated fractions spent on image-level labels");
  bu->add_option("--seeds", bu_seeds);
  bu->add_option("--out", bu_out);

  auto* ex = app.add_subcommand("export-similarity",
                                "export lingual and mean combined similarity");
  std::string ex_model, ex_data, ex_norm = "none", ex_out = "out/similarity";
  ex->add_option("--config", config_path)->check(CLI::ExistingFile);
  ex->add_option("--model", ex_model)->required();
  ex->add_option("--data", ex_data)->required();
  ex->add_option("--normalize", ex_norm)->check(CLI::IsMember({"none", "row"}));
  ex->add_option("--out", ex_out);

  auto* gc = app.add_subcommand("grad-check", "verify analytic gradients");
  std::string gc_data;
  uint64_t gc_seed = 1;
  double gc_tol = 1e-5;
  int gc_batch = 4;
  gc->add_option("--config", config_path)->check(CLI::ExistingFile);
  gc->add_option("--data", gc_data)->required();
  gc->add_option("--seed", gc_seed);
  gc->add_option("--tolerance", gc_tol);
  gc->add_option("--batch-images", gc_batch);

  int threads = 1;
  app.add_option("--threads", threads, "worker cap");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const RunConfig cfg =
        config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (gen->parsed()) return cmd_gen_data(cfg, gen_seed, gen_out);
    if (bt->parsed()) return cmd_base_train(cfg, bt_data, bt_out);
    if (ft->parsed()) return cmd_fine_tune(cfg, ft_model, ft_data, ft_k, ft_seed, ft_out);
    if (ev->parsed())
      return cmd_eval(cfg, ev_model, ev_data, ev_scope, ev_tasks, ev_out, ev_dump, threads);
    if (ab->parsed()) return cmd_ablate(cfg, ab_data, ab_variants, ab_seeds, ab_out);
    if (bu->parsed())
      return cmd_budget(cfg, bu_data, bu_budget, bu_fractions, bu_seeds, bu_out);
    if (ex->parsed()) return cmd_export_similarity(cfg, ex_model, ex_data, ex_norm, ex_out);
    if (gc->parsed()) return cmd_grad_check(cfg, gc_data, gc_seed, gc_tol, gc_batch);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

#include "evbench/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

namespace evbench {
namespace {

namespace fs = std::filesystem;

fs::path test_root() {
  static const fs::path root = [] {
    const fs::path p = fs::temp_directory_path() / "evbench_exp_test";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

nlohmann::json base_json(const std::string& out_sub) {
  nlohmann::json j;
  j["seed"] = 7;
  j["data_dir"] = (test_root() / "data").string();
  j["out_dir"] = (test_root() / out_sub).string();
  j["synth"] = {{"per_class", 10}, {"width", 48},       {"height", 40},
                {"n_events", 400}, {"duration_us", 20000}, {"jitter", 1.0}};
  j["repr"] = {{"bins", 3}, {"pool", {3, 3}}};
  j["train"] = {{"hidden", {12}}, {"max_epochs", 6}, {"patience", 3}};
  j["noise"] = {{"kinds", {"loss", "polarity"}}, {"levels", {0.1, 0.2}}};
  return j;
}

// synth once, shared by every test that reads data_dir
const DatasetManifest& shared_dataset() {
  static const DatasetManifest manifest = [] {
    const ExperimentConfig cfg = experiment_from_json(base_json("out_synth"));
    return run_synth(cfg);
  }();
  return manifest;
}

TEST(Config, DefaultsFromEmptyJson) {
  const ExperimentConfig cfg = experiment_from_json(nlohmann::json::object());
  EXPECT_EQ(cfg.seed, 0u);
  EXPECT_EQ(cfg.data_dir, "data");
  EXPECT_EQ(cfg.out_dir, "out");
  EXPECT_EQ(cfg.synth.per_class, 200);
  EXPECT_EQ(cfg.synth.geometry.width, 304);
  EXPECT_EQ(cfg.synth.geometry.height, 240);
  EXPECT_EQ(cfg.repr.bins, 9);
  EXPECT_EQ(cfg.repr.kernel, "trilinear");
  EXPECT_EQ(cfg.repr.pool_h, 4);
  EXPECT_EQ(cfg.noise.mode, "clean_train_noisy_test");
  EXPECT_EQ(cfg.noise.kinds.size(), 4u);
  EXPECT_EQ(cfg.noise.levels.size(), 4u);
  EXPECT_EQ(cfg.train.hidden, std::vector<int>{64});
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  nlohmann::json j = nlohmann::json::object();
  j["sed"] = 1;
  EXPECT_THROW(experiment_from_json(j), ConfigError);

  j = base_json("x");
  j["repr"]["bin"] = 3;
  EXPECT_THROW(experiment_from_json(j), ConfigError);

  j = base_json("x");
  j["noise"]["mode"] = "mystery";
  EXPECT_THROW(experiment_from_json(j), ConfigError);

  j = base_json("x");
  j["noise"]["levels"] = {0.1, 1.5};
  EXPECT_THROW(experiment_from_json(j), ConfigError);

  j = base_json("x");
  j["repr"]["pool"] = {3};
  EXPECT_THROW(experiment_from_json(j), ConfigError);

  j = base_json("x");
  j["repr"]["crop"] = {24, 0};
  EXPECT_THROW(experiment_from_json(j), ConfigError);

  j = base_json("x");
  j["train"]["train_kernel"] = true;  // trilinear kernel cannot learn
  EXPECT_THROW(experiment_from_json(j), ConfigError);

  j = base_json("x");
  j["synth"]["per_class"] = 0;
  EXPECT_THROW(experiment_from_json(j), ConfigError);
}

TEST(Config, SeedDerivations) {
  const ExperimentConfig cfg = experiment_from_json(base_json("x"));
  EXPECT_EQ(synth_seed(cfg), derive_seed(7, 101));
  EXPECT_EQ(split_seed(cfg), derive_seed(7, 102));
  EXPECT_EQ(train_seed(cfg), derive_seed(7, 103));
  EXPECT_EQ(noise_base_seed(cfg), derive_seed(7, 104));
  EXPECT_EQ(fold_seed(cfg), derive_seed(7, 105));
  EXPECT_EQ(kernel_init_seed(cfg), derive_seed(7, 106));

  nlohmann::json j = base_json("x");
  j["noise"]["seed"] = 12345;
  j["repr"]["kernel_seed"] = 999;
  const ExperimentConfig explicit_cfg = experiment_from_json(j);
  EXPECT_EQ(noise_base_seed(explicit_cfg), 12345u);
  EXPECT_EQ(kernel_init_seed(explicit_cfg), 999u);
}

TEST(Config, MakeKernelVariants) {
  ExperimentConfig cfg = experiment_from_json(base_json("x"));
  EXPECT_EQ(make_kernel(cfg).kind, KernelKind::trilinear);

  cfg.repr.kernel = "triangular";
  const KernelSpec tri = make_kernel(cfg);
  EXPECT_EQ(tri.kind, KernelKind::mlp);
  EXPECT_NEAR(mlp_kernel_eval(tri, 0.0), 1.0, 1e-12);

  cfg.repr.kernel = "mlp";
  cfg.repr.kernel_seed = 42;
  EXPECT_EQ(make_kernel(cfg).mlp_weights, KernelSpec::mlp_random(42).mlp_weights);

  cfg.repr.kernel = "gaussian";
  EXPECT_THROW(make_kernel(cfg), ConfigError);
}

TEST(Pipeline, SynthWritesSplitDataset) {
  const DatasetManifest& m = shared_dataset();
  EXPECT_EQ(m.classes, (std::vector<std::string>{"car", "pedestrian"}));
  EXPECT_EQ(m.samples.size(), 20u);
  EXPECT_EQ(m.indices_of_split("train").size(), 14u);
  EXPECT_EQ(m.indices_of_split("val").size(), 4u);
  EXPECT_EQ(m.indices_of_split("test").size(), 2u);

  const LoadedDataset ds = load_dataset(test_root() / "data");
  EXPECT_EQ(ds.streams.size(), 20u);
  EXPECT_EQ(ds.manifest.geometry.width, 48);
  for (const EventStream& s : ds.streams) EXPECT_EQ(s.events.size(), 400u);
}

TEST(Pipeline, NoisyStreamDerivesPerSampleSeeds) {
  shared_dataset();
  const LoadedDataset ds = load_dataset(test_root() / "data");
  NoiseSpec cell;
  cell.kind = NoiseKind::loss;
  cell.level = 0.3;
  cell.seed = 77;

  const EventStream a = noisy_stream(ds.streams[3], cell, 3);
  NoiseSpec manual = cell;
  manual.seed = derive_seed(77, 3);
  EXPECT_EQ(a, apply_noise(ds.streams[3], manual).stream);
  EXPECT_NE(a.events.size(), ds.streams[3].events.size());

  NoiseSpec none;
  EXPECT_EQ(noisy_stream(ds.streams[3], none, 3), ds.streams[3]);
}

TEST(Pipeline, TrainEvalRoundTrip) {
  shared_dataset();
  const ExperimentConfig cfg = experiment_from_json(base_json("out_train"));
  const TrainOutput trained = run_train(cfg);
  EXPECT_TRUE(fs::exists(fs::path(cfg.out_dir) / "model.bin"));
  EXPECT_TRUE(fs::exists(fs::path(cfg.out_dir) / "train_log.csv"));
  EXPECT_GE(trained.record.best_val_acc, 0.5);

  const EvalOutput eval = run_eval(cfg, fs::path(cfg.out_dir) / "model.bin");
  EXPECT_TRUE(eval.has_curves);
  EXPECT_GE(eval.report.accuracy, 0.0);
  EXPECT_LE(eval.report.accuracy, 1.0);
  for (const char* name : {"report.json", "report.txt", "roc.csv", "pr.csv"})
    EXPECT_TRUE(fs::exists(fs::path(cfg.out_dir) / name)) << name;

  const Model model = load_model_file(fs::path(cfg.out_dir) / "model.bin");
  EXPECT_EQ(model.theta, trained.record.model.theta);
}

TEST(Pipeline, SweepGridFilesAndDeterminism) {
  shared_dataset();
  const ExperimentConfig cfg = experiment_from_json(base_json("out_sweep1"));
  const SweepResult sweep = run_sweep(cfg);
  ASSERT_EQ(sweep.rows.size(), 5u);
  EXPECT_EQ(sweep.rows[0].spec.kind, NoiseKind::none);
  EXPECT_EQ(sweep_kind_name(sweep.rows[0].spec), "clean");
  EXPECT_EQ(sweep.rows[1].spec.kind, NoiseKind::loss);

  const fs::path out1(cfg.out_dir);
  const std::vector<SweepCsvRow> rows = read_sweep_csv(out1 / "sweep.csv");
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0].kind, "clean");
  EXPECT_EQ(rows[0].level, 0.0);
  EXPECT_EQ(rows[4].kind, "polarity");
  EXPECT_EQ(rows[4].level, 0.2);
  for (const SweepCsvRow& r : rows) EXPECT_EQ(r.accuracy, r.recall_macro);  // balanced test split

  EXPECT_TRUE(fs::exists(out1 / "model.bin"));
  EXPECT_TRUE(fs::exists(out1 / "cell00_clean_0p00_roc.csv"));
  EXPECT_TRUE(fs::exists(out1 / "cell01_loss_0p10_pr.csv"));
  EXPECT_TRUE(fs::exists(out1 / "cell04_polarity_0p20_roc.csv"));

  nlohmann::json j2 = base_json("out_sweep2");
  const ExperimentConfig cfg2 = experiment_from_json(j2);
  run_sweep(cfg2);
  const fs::path out2(cfg2.out_dir);
  for (const char* name : {"sweep.csv", "model.bin", "train_log.csv", "cell03_polarity_0p10_roc.csv"})
    EXPECT_EQ(hash_file(out1 / name), hash_file(out2 / name)) << name;
}

TEST(Pipeline, ReportAggregatesSweepCsv) {
  shared_dataset();
  const ExperimentConfig cfg = experiment_from_json(base_json("out_sweep1"));
  // reuses out_sweep1 from the sweep test when present, else regenerates
  if (!fs::exists(fs::path(cfg.out_dir) / "sweep.csv")) run_sweep(cfg);
  run_report(cfg);

  const fs::path out(cfg.out_dir);
  for (const char* name : {"report_accuracy.csv", "report_f1_macro.csv", "report_auc.csv",
                           "summary.txt", "sweep_accuracy.svg"})
    EXPECT_TRUE(fs::exists(out / name)) << name;

  std::ifstream acc(out / "report_accuracy.csv");
  std::string header, row0;
  ASSERT_TRUE(std::getline(acc, header));
  EXPECT_EQ(header, "level,loss,polarity");
  ASSERT_TRUE(std::getline(acc, row0));
  EXPECT_EQ(row0.rfind("0,", 0), 0u);  // level-0 row carries the clean baseline
  int data_rows = 1;
  std::string line;
  while (std::getline(acc, line))
    if (!line.empty()) ++data_rows;
  EXPECT_EQ(data_rows, 3);  // levels 0, 0.1, 0.2

  std::ifstream svg(out / "sweep_accuracy.svg");
  std::string svg_text((std::istreambuf_iterator<char>(svg)), std::istreambuf_iterator<char>());
  EXPECT_NE(svg_text.find("<svg"), std::string::npos);
  EXPECT_NE(svg_text.find("polyline"), std::string::npos);
  EXPECT_NE(svg_text.find("loss"), std::string::npos);
}

TEST(Pipeline, ReportNeedsCleanRow) {
  const fs::path dir = test_root() / "out_badreport";
  fs::create_directories(dir);
  std::ofstream f(dir / "sweep.csv", std::ios::binary);
  f << kSweepHeader << "\nloss,0.1,5,0.9,0.9,0.9,0.9,0.95,0.94\n";
  f.close();
  ExperimentConfig cfg = experiment_from_json(base_json("out_badreport"));
  EXPECT_THROW(run_report(cfg), FormatError);
}

TEST(Pipeline, NoisyTrainValRetrainsPerCell) {
  shared_dataset();
  nlohmann::json j = base_json("out_noisytrain");
  j["noise"]["mode"] = "noisy_train_val";
  j["noise"]["kinds"] = {"loss"};
  j["noise"]["levels"] = {0.2};
  j["train"]["max_epochs"] = 3;
  const ExperimentConfig cfg = experiment_from_json(j);
  const SweepResult sweep = run_sweep(cfg);
  ASSERT_EQ(sweep.rows.size(), 2u);
  EXPECT_FALSE(fs::exists(fs::path(cfg.out_dir) / "model.bin"));
  EXPECT_TRUE(fs::exists(fs::path(cfg.out_dir) / "sweep.csv"));
}

TEST(Pipeline, TrainableKernelEndToEnd) {
  shared_dataset();
  nlohmann::json j = base_json("out_kernel");
  j["repr"] = {{"bins", 2}, {"kernel", "mlp"}, {"kernel_seed", 11}, {"pool", {2, 2}}};
  j["train"] = {{"hidden", {6}}, {"max_epochs", 2}, {"patience", 2}, {"train_kernel", true}};
  const ExperimentConfig cfg = experiment_from_json(j);
  const TrainOutput trained = run_train(cfg);
  EXPECT_TRUE(trained.record.model.config.train_kernel);
  EXPECT_EQ(trained.kernel.mlp_weights,
            model_kernel(trained.record.model).mlp_weights);

  const Model back = load_model_file(fs::path(cfg.out_dir) / "model.bin");
  EXPECT_TRUE(back.config.train_kernel);
  EXPECT_EQ(back.theta, trained.record.model.theta);

  const EvalOutput eval = run_eval(cfg, fs::path(cfg.out_dir) / "model.bin");
  EXPECT_GE(eval.report.accuracy, 0.0);
}

TEST(Pipeline, CrossValWritesSummary) {
  shared_dataset();
  nlohmann::json j = base_json("out_cv");
  j["train"]["max_epochs"] = 3;
  const ExperimentConfig cfg = experiment_from_json(j);
  const CrossValResult cv = run_crossval(cfg, 2);
  ASSERT_EQ(cv.fold_reports.size(), 2u);

  const fs::path out(cfg.out_dir);
  EXPECT_TRUE(fs::exists(out / "cv_fold0_train.csv"));
  EXPECT_TRUE(fs::exists(out / "cv_fold1_train.csv"));

  std::ifstream f(out / "cv_summary.json");
  nlohmann::json summary;
  f >> summary;
  EXPECT_EQ(summary["k"].get<int>(), 2);
  EXPECT_EQ(summary["folds"].size(), 2u);
  EXPECT_DOUBLE_EQ(summary["mean_accuracy"].get<double>(), cv.mean_accuracy);
  EXPECT_EQ(summary["folds"][0]["fold"].get<int>(), 0);
}

TEST(Pipeline, DatasetGeometryMismatchRejected) {
  const fs::path dir = test_root() / "badgeom";
  fs::create_directories(dir);
  EventStream s;
  s.geometry = {9, 9};
  s.events.push_back({1, 1, 10, 1});
  write_evs1_file(s, dir / "a.evs1");

  DatasetManifest m;
  m.classes = {"car", "pedestrian"};
  m.geometry = {8, 8};
  ManifestSample sample;
  sample.id = "a";
  sample.path = "a.evs1";
  sample.label = 0;
  sample.split = "train";
  m.samples.push_back(sample);
  save_manifest(m, dir / "manifest.json");

  EXPECT_THROW(load_dataset(dir), FormatError);
  EXPECT_THROW(load_dataset(test_root() / "nowhere"), IoError);
}

}  // namespace
}  // namespace evbench

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "evbench/core.hpp"
#include "evbench/est.hpp"
#include "evbench/io.hpp"
#include "evbench/metrics.hpp"
#include "evbench/model.hpp"
#include "evbench/noise.hpp"
#include "evbench/svg.hpp"
#include "evbench/synth.hpp"
#include "evbench/train.hpp"

#include "json.hpp"

namespace evbench {

// ---------------------------------------------------------------------------
// Experiment configuration (JSON). Every section is optional and falls back
// to the defaults below; unknown keys are rejected to catch typos. Relative
// data_dir / out_dir are resolved against the process working directory.
// ---------------------------------------------------------------------------

struct SynthSection {
  int per_class = 200;
  SensorGeometry geometry{304, 240};
  int n_events = 5000;
  int64_t duration_us = 100000;
  double jitter = 1.0;
};

struct NoiseSection {
  std::vector<NoiseKind> kinds = default_sweep_kinds();
  std::vector<double> levels = default_sweep_levels();
  std::string mode = "clean_train_noisy_test";  // or "noisy_train_val"
  ShiftScope scope = ShiftScope::per_event;
  OobPolicy oob = OobPolicy::drop;
  std::optional<uint64_t> seed;  // unset: derived from the experiment seed
};

struct ReprSection {
  int bins = 9;
  std::string kernel = "trilinear";  // trilinear | mlp | triangular
  std::optional<uint64_t> kernel_seed;
  int pool_h = 4;
  int pool_w = 4;
  int crop_h = 0;  // 0: no resample
  int crop_w = 0;
};

struct ExperimentConfig {
  uint64_t seed = 0;
  std::string data_dir = "data";
  std::string out_dir = "out";
  SynthSection synth;
  SplitRatios split;
  NoiseSection noise;
  ReprSection repr;
  TrainConfig train;
};

// Sub-seeds for the independent random streams of one experiment.
inline uint64_t synth_seed(const ExperimentConfig& c) { return derive_seed(c.seed, 101); }
inline uint64_t split_seed(const ExperimentConfig& c) { return derive_seed(c.seed, 102); }
inline uint64_t train_seed(const ExperimentConfig& c) { return derive_seed(c.seed, 103); }
inline uint64_t noise_base_seed(const ExperimentConfig& c) {
  return c.noise.seed ? *c.noise.seed : derive_seed(c.seed, 104);
}
inline uint64_t fold_seed(const ExperimentConfig& c) { return derive_seed(c.seed, 105); }
inline uint64_t kernel_init_seed(const ExperimentConfig& c) {
  return c.repr.kernel_seed ? *c.repr.kernel_seed : derive_seed(c.seed, 106);
}

inline ShiftScope shift_scope_from_string(const std::string& s) {
  if (s == "per_event") return ShiftScope::per_event;
  if (s == "per_stream") return ShiftScope::per_stream;
  throw ConfigError("unknown shift scope: " + s);
}

inline OobPolicy oob_policy_from_string(const std::string& s) {
  if (s == "drop") return OobPolicy::drop;
  if (s == "clamp") return OobPolicy::clamp;
  throw ConfigError("unknown out-of-bounds policy: " + s);
}

inline KernelSpec make_kernel(const ExperimentConfig& cfg) {
  if (cfg.repr.kernel == "trilinear") return KernelSpec::trilinear();
  if (cfg.repr.kernel == "triangular") return KernelSpec::mlp_triangular();
  if (cfg.repr.kernel == "mlp") return KernelSpec::mlp_random(kernel_init_seed(cfg));
  throw ConfigError("unknown kernel: " + cfg.repr.kernel);
}

inline void validate_experiment(const ExperimentConfig& cfg) {
  if (cfg.synth.per_class < 1) throw ConfigError("config: synth.per_class must be >= 1");
  if (!cfg.synth.geometry.valid()) throw ConfigError("config: invalid synth geometry");
  if (cfg.synth.n_events < 1) throw ConfigError("config: synth.n_events must be >= 1");
  if (cfg.synth.duration_us < 1) throw ConfigError("config: synth.duration_us must be >= 1");
  if (cfg.synth.jitter < 0) throw ConfigError("config: synth.jitter must be >= 0");
  if (cfg.repr.bins < 1) throw ConfigError("config: repr.bins must be >= 1");
  if (cfg.repr.pool_h < 1 || cfg.repr.pool_w < 1) throw ConfigError("config: repr.pool must be >= 1");
  if (cfg.repr.crop_h < 0 || cfg.repr.crop_w < 0) throw ConfigError("config: repr.crop must be >= 0");
  if ((cfg.repr.crop_h == 0) != (cfg.repr.crop_w == 0))
    throw ConfigError("config: repr.crop needs both dims or neither");
  if (cfg.repr.kernel != "trilinear" && cfg.repr.kernel != "mlp" && cfg.repr.kernel != "triangular")
    throw ConfigError("config: unknown repr.kernel " + cfg.repr.kernel);
  if (cfg.noise.mode != "clean_train_noisy_test" && cfg.noise.mode != "noisy_train_val")
    throw ConfigError("config: unknown noise.mode " + cfg.noise.mode);
  for (double l : cfg.noise.levels)
    if (!(l >= 0.0 && l <= 1.0)) throw ConfigError("config: noise level outside [0, 1]");
  if (cfg.train.train_kernel && cfg.repr.kernel == "trilinear")
    throw ConfigError("config: train.train_kernel requires an mlp or triangular kernel");
  validate_train_config(cfg.train);
}

namespace detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                       const char* section) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok) throw ConfigError(std::string("config: unknown key \"") + key + "\" in " + section);
  }
}

}  // namespace detail

inline ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  try {
    detail::check_keys(j, {"seed", "data_dir", "out_dir", "synth", "split", "noise", "repr", "train"},
                       "config");
    cfg.seed = j.value("seed", cfg.seed);
    cfg.data_dir = j.value("data_dir", cfg.data_dir);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    if (j.contains("synth")) {
      const auto& s = j.at("synth");
      detail::check_keys(s, {"per_class", "width", "height", "n_events", "duration_us", "jitter"},
                         "synth");
      cfg.synth.per_class = s.value("per_class", cfg.synth.per_class);
      cfg.synth.geometry.width = s.value("width", cfg.synth.geometry.width);
      cfg.synth.geometry.height = s.value("height", cfg.synth.geometry.height);
      cfg.synth.n_events = s.value("n_events", cfg.synth.n_events);
      cfg.synth.duration_us = s.value("duration_us", cfg.synth.duration_us);
      cfg.synth.jitter = s.value("jitter", cfg.synth.jitter);
    }
    if (j.contains("split")) {
      const auto& s = j.at("split");
      detail::check_keys(s, {"train", "val", "test"}, "split");
      cfg.split.train = s.value("train", cfg.split.train);
      cfg.split.val = s.value("val", cfg.split.val);
      cfg.split.test = s.value("test", cfg.split.test);
    }
    if (j.contains("noise")) {
      const auto& s = j.at("noise");
      detail::check_keys(s, {"kinds", "levels", "mode", "scope", "oob", "seed"}, "noise");
      if (s.contains("kinds")) {
        cfg.noise.kinds.clear();
        for (const auto& k : s.at("kinds"))
          cfg.noise.kinds.push_back(noise_kind_from_string(k.get<std::string>()));
      }
      if (s.contains("levels")) cfg.noise.levels = s.at("levels").get<std::vector<double>>();
      cfg.noise.mode = s.value("mode", cfg.noise.mode);
      if (s.contains("scope")) cfg.noise.scope = shift_scope_from_string(s.at("scope"));
      if (s.contains("oob")) cfg.noise.oob = oob_policy_from_string(s.at("oob"));
      if (s.contains("seed")) cfg.noise.seed = s.at("seed").get<uint64_t>();
    }
    if (j.contains("repr")) {
      const auto& s = j.at("repr");
      detail::check_keys(s, {"bins", "kernel", "kernel_seed", "pool", "crop"}, "repr");
      cfg.repr.bins = s.value("bins", cfg.repr.bins);
      cfg.repr.kernel = s.value("kernel", cfg.repr.kernel);
      if (s.contains("kernel_seed")) cfg.repr.kernel_seed = s.at("kernel_seed").get<uint64_t>();
      if (s.contains("pool")) {
        const auto pool = s.at("pool").get<std::vector<int>>();
        if (pool.size() != 2) throw ConfigError("config: repr.pool must be [h, w]");
        cfg.repr.pool_h = pool[0];
        cfg.repr.pool_w = pool[1];
      }
      if (s.contains("crop")) {
        const auto crop = s.at("crop").get<std::vector<int>>();
        if (crop.size() != 2) throw ConfigError("config: repr.crop must be [h, w]");
        cfg.repr.crop_h = crop[0];
        cfg.repr.crop_w = crop[1];
      }
    }
    if (j.contains("train")) {
      const auto& s = j.at("train");
      detail::check_keys(s,
                         {"hidden", "dropout", "slope", "train_kernel", "lr", "lr_gamma",
                          "batch_size", "max_epochs", "patience"},
                         "train");
      if (s.contains("hidden")) cfg.train.hidden = s.at("hidden").get<std::vector<int>>();
      cfg.train.dropout = s.value("dropout", cfg.train.dropout);
      cfg.train.slope = s.value("slope", cfg.train.slope);
      cfg.train.train_kernel = s.value("train_kernel", cfg.train.train_kernel);
      cfg.train.lr = s.value("lr", cfg.train.lr);
      cfg.train.lr_gamma = s.value("lr_gamma", cfg.train.lr_gamma);
      cfg.train.batch_size = s.value("batch_size", cfg.train.batch_size);
      cfg.train.max_epochs = s.value("max_epochs", cfg.train.max_epochs);
      cfg.train.patience = s.value("patience", cfg.train.patience);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (cfg.train.train_kernel) cfg.train.kernel = make_kernel(cfg);
  validate_experiment(cfg);
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config: " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: " + std::string(e.what()));
  }
  return experiment_from_json(j);
}

// ---------------------------------------------------------------------------
// Dataset access and the feature pipeline
// ---------------------------------------------------------------------------

struct LoadedDataset {
  std::filesystem::path dir;
  DatasetManifest manifest;
  std::vector<EventStream> streams;  // aligned with manifest.samples
};

inline LoadedDataset load_dataset(const std::filesystem::path& where) {
  LoadedDataset ds;
  std::filesystem::path manifest_path = where;
  if (std::filesystem::is_directory(where)) manifest_path = where / "manifest.json";
  ds.dir = manifest_path.parent_path();
  ds.manifest = load_manifest(manifest_path);
  ds.streams.reserve(ds.manifest.samples.size());
  for (const ManifestSample& s : ds.manifest.samples) {
    EventStream stream = read_evs1_file(resolve_sample_path(ds.dir, s), s.label);
    if (!(stream.geometry == ds.manifest.geometry))
      throw FormatError("dataset: geometry mismatch for sample " + s.id);
    ds.streams.push_back(std::move(stream));
  }
  return ds;
}

/// EST build, optional spatial resample, average pool, flatten.
inline std::vector<double> features_of(const ExperimentConfig& cfg, const KernelSpec& kernel,
                                       const EventStream& stream) {
  EstTensor tensor = build_est(stream, cfg.repr.bins, kernel);
  if (cfg.repr.crop_h > 0) tensor = crop_resize(tensor, cfg.repr.crop_h, cfg.repr.crop_w);
  return pool_features(tensor, cfg.repr.pool_h, cfg.repr.pool_w);
}

/// Noise applied to the sample at manifest position `index`; seeds are
/// derived per sample so streams stay independent within a sweep cell.
inline EventStream noisy_stream(const EventStream& stream, const NoiseSpec& cell,
                                std::size_t index) {
  if (cell.kind == NoiseKind::none) return stream;
  NoiseSpec per_sample = cell;
  per_sample.seed = derive_seed(cell.seed, index);
  return apply_noise(stream, per_sample).stream;
}

// ---------------------------------------------------------------------------
// Pipeline stages
// ---------------------------------------------------------------------------

inline DatasetManifest run_synth(const ExperimentConfig& cfg) {
  validate_experiment(cfg);
  const std::vector<SynthSpec> templates = {
      default_class_spec(0, cfg.synth.geometry, cfg.synth.n_events, cfg.synth.duration_us,
                         cfg.synth.jitter),
      default_class_spec(1, cfg.synth.geometry, cfg.synth.n_events, cfg.synth.duration_us,
                         cfg.synth.jitter)};
  DatasetManifest manifest =
      generate_dataset(cfg.synth.per_class, templates, cfg.data_dir, synth_seed(cfg));
  manifest = split_dataset(manifest, cfg.split, split_seed(cfg));
  save_manifest(manifest, std::filesystem::path(cfg.data_dir) / "manifest.json");
  return manifest;
}

namespace detail {

inline FitData make_fit_data(const ExperimentConfig& cfg, const KernelSpec& kernel,
                             const LoadedDataset& ds, const NoiseSpec& train_noise) {
  FitData data;
  data.num_classes = static_cast<int>(ds.manifest.classes.size());
  data.labels.resize(ds.streams.size());
  if (cfg.train.train_kernel)
    data.event_sets.resize(ds.streams.size());
  else
    data.features.resize(ds.streams.size());

  for (std::size_t i = 0; i < ds.streams.size(); ++i) {
    data.labels[i] = ds.manifest.samples[i].label;
    const std::string& split = ds.manifest.samples[i].split;
    const bool used = split == "train" || split == "val";
    if (split == "train") data.train_idx.push_back(i);
    if (split == "val") data.val_idx.push_back(i);
    if (!used) continue;  // test features are built per sweep cell
    const EventStream noisy = noisy_stream(ds.streams[i], train_noise, i);
    if (cfg.train.train_kernel) {
      const int h = cfg.repr.crop_h > 0 ? cfg.repr.crop_h : ds.manifest.geometry.height;
      const int w = cfg.repr.crop_w > 0 ? cfg.repr.crop_w : ds.manifest.geometry.width;
      if (cfg.repr.crop_h > 0 && (h != ds.manifest.geometry.height || w != ds.manifest.geometry.width))
        throw ConfigError("config: kernel training does not support repr.crop");
      data.event_sets[i] = pooled_events(noisy, cfg.repr.bins, cfg.repr.pool_h, cfg.repr.pool_w);
    } else {
      data.features[i] = features_of(cfg, kernel, noisy);
    }
  }
  return data;
}

}  // namespace detail

struct TrainOutput {
  TrainRecord record;
  KernelSpec kernel;  // kernel used to build features (post-training when learned)
};

/// Fit on the train/val splits. `train_noise` is NoiseKind::none for the
/// clean regime; sweep cells pass their own spec in noisy_train_val mode.
inline TrainOutput train_model(const ExperimentConfig& cfg, const LoadedDataset& ds,
                               const NoiseSpec& train_noise = {}) {
  validate_experiment(cfg);
  const KernelSpec kernel = make_kernel(cfg);
  FitData data = detail::make_fit_data(cfg, kernel, ds, train_noise);
  if (data.train_idx.empty()) throw ConfigError("train: no samples in the train split");

  TrainConfig tc = cfg.train;
  tc.seed = train_seed(cfg);
  if (tc.train_kernel) tc.kernel = kernel;
  TrainOutput out;
  out.record = fit(tc, data);
  out.kernel = tc.train_kernel ? model_kernel(out.record.model) : kernel;
  return out;
}

inline TrainOutput run_train(const ExperimentConfig& cfg) {
  const LoadedDataset ds = load_dataset(cfg.data_dir);
  TrainOutput out = train_model(cfg, ds);
  std::filesystem::create_directories(cfg.out_dir);
  save_model_file(out.record.model, std::filesystem::path(cfg.out_dir) / "model.bin");
  std::ofstream log(std::filesystem::path(cfg.out_dir) / "train_log.csv", std::ios::binary);
  if (!log) throw IoError("cannot open train_log.csv for writing");
  write_train_csv(out.record, log);
  return out;
}

struct EvalOutput {
  EvalReport report;
  Curve roc;
  Curve pr;
  bool has_curves = false;
};

/// Evaluate a model on one split, optionally through a noise cell.
inline EvalOutput evaluate_split(const ExperimentConfig& cfg, const LoadedDataset& ds,
                                 const Model& model, const KernelSpec& kernel,
                                 const NoiseSpec& noise = {}, const std::string& split = "test") {
  const std::vector<std::size_t> idx = ds.manifest.indices_of_split(split);
  if (idx.empty()) throw ConfigError("eval: no samples in split " + split);
  const int num_classes = static_cast<int>(ds.manifest.classes.size());

  std::vector<int> truth, pred;
  std::vector<double> pos_scores;
  for (std::size_t i : idx) {
    const EventStream noisy = noisy_stream(ds.streams[i], noise, i);
    std::vector<double> x;
    if (model.config.train_kernel) {
      const PooledEvents pe = pooled_events(noisy, cfg.repr.bins, cfg.repr.pool_h, cfg.repr.pool_w);
      x = kernel_features(pe, model_kernel(model));
    } else {
      x = features_of(cfg, kernel, noisy);
    }
    const std::vector<double> probs = predict_proba(model, x);
    truth.push_back(ds.manifest.samples[i].label);
    pred.push_back(argmax_class(probs));
    if (num_classes == 2) pos_scores.push_back(probs[1]);
  }

  EvalOutput out;
  out.report = classification_report(confusion(truth, pred, num_classes));
  if (num_classes == 2) {
    bool has_pos = false, has_neg = false;
    for (int t : truth) (t == 1 ? has_pos : has_neg) = true;
    if (has_pos && has_neg) {
      out.roc = roc_auc(pos_scores, truth);
      out.pr = pr_ap(pos_scores, truth);
      out.report.auc = out.roc.area;
      out.report.ap = out.pr.area;
      out.has_curves = true;
    }
  }
  return out;
}

inline void write_eval_files(const EvalOutput& eval, const std::filesystem::path& out_dir,
                             const std::string& prefix, const std::vector<std::string>& classes) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream f(out_dir / (prefix + "report.json"), std::ios::binary);
    if (!f) throw IoError("cannot open report.json for writing");
    f << report_to_json(eval.report, classes).dump(2) << '\n';
  }
  {
    std::ofstream f(out_dir / (prefix + "report.txt"), std::ios::binary);
    if (!f) throw IoError("cannot open report.txt for writing");
    f << render_report_text(eval.report, classes);
  }
  if (eval.has_curves) {
    std::ofstream roc(out_dir / (prefix + "roc.csv"), std::ios::binary);
    if (!roc) throw IoError("cannot open roc.csv for writing");
    write_curve_csv(eval.roc, roc);
    std::ofstream pr(out_dir / (prefix + "pr.csv"), std::ios::binary);
    if (!pr) throw IoError("cannot open pr.csv for writing");
    write_curve_csv(eval.pr, pr);
  }
}

inline EvalOutput run_eval(const ExperimentConfig& cfg, const std::filesystem::path& model_path,
                           const NoiseSpec& noise = {}) {
  const LoadedDataset ds = load_dataset(cfg.data_dir);
  const Model model = load_model_file(model_path);
  const EvalOutput out = evaluate_split(cfg, ds, model, make_kernel(cfg), noise);
  write_eval_files(out, cfg.out_dir, "", ds.manifest.classes);
  return out;
}

inline CrossValResult run_crossval(const ExperimentConfig& cfg, int k) {
  validate_experiment(cfg);
  const LoadedDataset ds = load_dataset(cfg.data_dir);
  const KernelSpec kernel = make_kernel(cfg);

  FitData data;
  data.num_classes = static_cast<int>(ds.manifest.classes.size());
  data.labels.resize(ds.streams.size());
  if (cfg.train.train_kernel) data.event_sets.resize(ds.streams.size());
  else data.features.resize(ds.streams.size());
  for (std::size_t i = 0; i < ds.streams.size(); ++i) {
    data.labels[i] = ds.manifest.samples[i].label;
    if (cfg.train.train_kernel)
      data.event_sets[i] = pooled_events(ds.streams[i], cfg.repr.bins, cfg.repr.pool_h, cfg.repr.pool_w);
    else
      data.features[i] = features_of(cfg, kernel, ds.streams[i]);
  }

  const std::vector<int> fold_of = stratified_folds(data.labels, data.num_classes, k, fold_seed(cfg));
  TrainConfig tc = cfg.train;
  tc.seed = train_seed(cfg);
  if (tc.train_kernel) tc.kernel = kernel;
  CrossValResult result = cross_validate(tc, data, fold_of, k);

  std::filesystem::create_directories(cfg.out_dir);
  nlohmann::ordered_json summary;
  summary["k"] = k;
  summary["mean_accuracy"] = result.mean_accuracy;
  summary["best_fold"] = result.best_fold;
  summary["folds"] = nlohmann::ordered_json::array();
  for (int f = 0; f < k; ++f) {
    nlohmann::ordered_json jf;
    jf["fold"] = f;
    jf["best_epoch"] = result.fold_records[f].best_epoch;
    jf["val_accuracy"] = result.fold_records[f].best_val_acc;
    jf["test_accuracy"] = result.fold_reports[f].accuracy;
    if (result.fold_reports[f].auc >= 0) jf["auc"] = result.fold_reports[f].auc;
    if (result.fold_reports[f].ap >= 0) jf["ap"] = result.fold_reports[f].ap;
    summary["folds"].push_back(std::move(jf));

    char name[48];
    std::snprintf(name, sizeof name, "cv_fold%d_train.csv", f);
    std::ofstream log(std::filesystem::path(cfg.out_dir) / name, std::ios::binary);
    if (!log) throw IoError("cannot open fold train log for writing");
    write_train_csv(result.fold_records[f], log);
  }
  std::ofstream f(std::filesystem::path(cfg.out_dir) / "cv_summary.json", std::ios::binary);
  if (!f) throw IoError("cannot open cv_summary.json for writing");
  f << summary.dump(2) << '\n';
  return result;
}

// ---------------------------------------------------------------------------
// Noise sweep
// ---------------------------------------------------------------------------

struct SweepRow {
  NoiseSpec spec;
  EvalReport report;
};

struct SweepResult {
  std::vector<SweepRow> rows;
};

inline std::string sweep_kind_name(const NoiseSpec& spec) {
  return spec.kind == NoiseKind::none ? "clean" : to_string(spec.kind);
}

namespace detail {

inline std::string level_tag(double level) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", level);
  std::string s = buf;
  for (char& c : s)
    if (c == '.') c = 'p';
  return s;
}

}  // namespace detail

inline constexpr const char* kSweepHeader =
    "noise_kind,level,seed,accuracy,precision_macro,recall_macro,f1_macro,auc,ap";

/// Train (clean regime) then evaluate the test split across the noise grid,
/// or retrain per cell in noisy_train_val mode. Writes sweep.csv plus
/// per-cell ROC / PR curves; everything is a pure function of the config.
inline SweepResult run_sweep(const ExperimentConfig& cfg) {
  validate_experiment(cfg);
  const LoadedDataset ds = load_dataset(cfg.data_dir);
  const std::vector<NoiseSpec> grid =
      sweep_grid(cfg.noise.kinds, cfg.noise.levels, noise_base_seed(cfg), cfg.noise.scope,
                 cfg.noise.oob);
  const bool retrain_per_cell = cfg.noise.mode == "noisy_train_val";
  std::filesystem::create_directories(cfg.out_dir);

  TrainOutput clean_train;
  if (!retrain_per_cell) {
    clean_train = train_model(cfg, ds);
    save_model_file(clean_train.record.model, std::filesystem::path(cfg.out_dir) / "model.bin");
    std::ofstream log(std::filesystem::path(cfg.out_dir) / "train_log.csv", std::ios::binary);
    if (!log) throw IoError("cannot open train_log.csv for writing");
    write_train_csv(clean_train.record, log);
  }

  SweepResult result;
  std::ostringstream csv;
  csv << kSweepHeader << '\n';
  for (std::size_t ci = 0; ci < grid.size(); ++ci) {
    const NoiseSpec& cell = grid[ci];
    const TrainOutput cell_train = retrain_per_cell ? train_model(cfg, ds, cell) : clean_train;
    const EvalOutput eval =
        evaluate_split(cfg, ds, cell_train.record.model, cell_train.kernel, cell);

    csv << sweep_kind_name(cell) << ',' << format_double(cell.level) << ',' << cell.seed << ','
        << format_double(eval.report.accuracy) << ',' << format_double(eval.report.macro_precision)
        << ',' << format_double(eval.report.macro_recall) << ','
        << format_double(eval.report.macro_f1) << ',' << format_double(eval.report.auc) << ','
        << format_double(eval.report.ap) << '\n';

    if (eval.has_curves) {
      char prefix[64];
      std::snprintf(prefix, sizeof prefix, "cell%02zu_%s_%s_", ci, sweep_kind_name(cell).c_str(),
                    detail::level_tag(cell.level).c_str());
      std::ofstream roc(std::filesystem::path(cfg.out_dir) / (std::string(prefix) + "roc.csv"),
                        std::ios::binary);
      if (!roc) throw IoError("cannot open cell roc csv for writing");
      write_curve_csv(eval.roc, roc);
      std::ofstream pr(std::filesystem::path(cfg.out_dir) / (std::string(prefix) + "pr.csv"),
                       std::ios::binary);
      if (!pr) throw IoError("cannot open cell pr csv for writing");
      write_curve_csv(eval.pr, pr);
    }
    result.rows.push_back({cell, eval.report});
  }

  std::ofstream f(std::filesystem::path(cfg.out_dir) / "sweep.csv", std::ios::binary);
  if (!f) throw IoError("cannot open sweep.csv for writing");
  f << csv.str();
  if (!f) throw IoError("sweep.csv write failed");
  return result;
}

// ---------------------------------------------------------------------------
// Sweep report
// ---------------------------------------------------------------------------

struct SweepCsvRow {
  std::string kind;
  double level = 0.0;
  uint64_t seed = 0;
  double accuracy = 0.0;
  double precision_macro = 0.0;
  double recall_macro = 0.0;
  double f1_macro = 0.0;
  double auc = -1.0;
  double ap = -1.0;
};

inline std::vector<SweepCsvRow> read_sweep_csv(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + path.string());
  std::string line;
  if (!std::getline(f, line) || line != kSweepHeader)
    throw FormatError("sweep.csv: header mismatch");
  std::vector<SweepCsvRow> rows;
  int line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 9) throw FormatError("sweep.csv: malformed line " + std::to_string(line_no));
    SweepCsvRow row;
    try {
      row.kind = fields[0];
      row.level = std::stod(fields[1]);
      row.seed = std::stoull(fields[2]);
      row.accuracy = std::stod(fields[3]);
      row.precision_macro = std::stod(fields[4]);
      row.recall_macro = std::stod(fields[5]);
      row.f1_macro = std::stod(fields[6]);
      row.auc = std::stod(fields[7]);
      row.ap = std::stod(fields[8]);
    } catch (const std::exception&) {
      throw FormatError("sweep.csv: malformed line " + std::to_string(line_no));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError("sweep.csv: no data rows");
  return rows;
}

/// Per-kind accuracy series (level 0 = the clean baseline), a text summary,
/// and an SVG chart, all derived from out_dir/sweep.csv.
inline void run_report(const ExperimentConfig& cfg) {
  const std::filesystem::path out_dir(cfg.out_dir);
  const std::vector<SweepCsvRow> rows = read_sweep_csv(out_dir / "sweep.csv");

  const SweepCsvRow* clean = nullptr;
  std::vector<std::string> kinds;
  for (const SweepCsvRow& r : rows) {
    if (r.kind == "clean") {
      clean = &r;
    } else if (std::find(kinds.begin(), kinds.end(), r.kind) == kinds.end()) {
      kinds.push_back(r.kind);
    }
  }
  if (!clean) throw FormatError("sweep.csv: missing clean baseline row");

  const auto series_of = [&](const std::string& kind, auto metric) {
    Series s;
    s.name = kind;
    s.x.push_back(0.0);
    s.y.push_back(metric(*clean));
    for (const SweepCsvRow& r : rows)
      if (r.kind == kind) {
        s.x.push_back(r.level);
        s.y.push_back(metric(r));
      }
    return s;
  };

  const auto write_series_csv = [&](const std::string& name, auto metric) {
    std::ofstream f(out_dir / name, std::ios::binary);
    if (!f) throw IoError("cannot open " + name + " for writing");
    f << "level";
    for (const std::string& k : kinds) f << ',' << k;
    f << '\n';
    std::vector<Series> all;
    for (const std::string& k : kinds) all.push_back(series_of(k, metric));
    for (const Series& s : all)
      if (s.x.size() != all.front().x.size())
        throw FormatError("sweep.csv: kinds cover different level sets");
    for (std::size_t i = 0; i < all.front().x.size(); ++i) {
      f << format_double(all.front().x[i]);
      for (const Series& s : all) f << ',' << format_double(s.y[i]);
      f << '\n';
    }
    if (!f) throw IoError(name + " write failed");
    return all;
  };

  const std::vector<Series> acc_series =
      write_series_csv("report_accuracy.csv", [](const SweepCsvRow& r) { return r.accuracy; });
  write_series_csv("report_f1_macro.csv", [](const SweepCsvRow& r) { return r.f1_macro; });
  write_series_csv("report_auc.csv", [](const SweepCsvRow& r) { return r.auc; });

  ChartOptions opt;
  opt.title = "accuracy vs noise level";
  opt.x_label = "noise level";
  opt.y_label = "accuracy";
  write_line_chart_file(acc_series, opt, out_dir / "sweep_accuracy.svg");

  std::ofstream f(out_dir / "summary.txt", std::ios::binary);
  if (!f) throw IoError("cannot open summary.txt for writing");
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %6s %9s %9s %9s %9s %9s\n", "kind", "level", "acc",
                "prec_m", "rec_m", "f1_m", "auc");
  f << line;
  const auto emit = [&](const SweepCsvRow& r) {
    std::snprintf(line, sizeof line, "%-10s %6.2f %9.4f %9.4f %9.4f %9.4f %9.4f\n", r.kind.c_str(),
                  r.level, r.accuracy, r.precision_macro, r.recall_macro, r.f1_macro, r.auc);
    f << line;
  };
  emit(*clean);
  for (const std::string& k : kinds)
    for (const SweepCsvRow& r : rows)
      if (r.kind == k) emit(r);
  if (!f) throw IoError("summary.txt write failed");
}

// ---------------------------------------------------------------------------

/// FNV-1a over a file's bytes; the determinism checks compare these.
inline uint64_t hash_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return fnv1a64(bytes);
}

}  // namespace evbench

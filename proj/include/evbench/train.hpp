#pragma once

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "evbench/core.hpp"
#include "evbench/io.hpp"
#include "evbench/metrics.hpp"
#include "evbench/model.hpp"
#include "evbench/rng.hpp"

#include "json.hpp"

namespace evbench {

struct TrainConfig {
  std::vector<int> hidden = {64};
  double dropout = 0.0;
  double slope = 0.1;
  bool train_kernel = false;
  KernelSpec kernel = KernelSpec::trilinear();

  double lr = 1e-2;
  double lr_gamma = 0.34;
  int batch_size = 8;
  int max_epochs = 35;
  int patience = 5;
  uint64_t seed = 0;
  AdamConfig adam;
};

inline void validate_train_config(const TrainConfig& cfg) {
  for (int w : cfg.hidden)
    if (w < 1) throw ConfigError("train: non-positive hidden width");
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) throw ConfigError("train: dropout must be in [0, 1)");
  if (cfg.lr <= 0.0) throw ConfigError("train: lr must be positive");
  if (!(cfg.lr_gamma > 0.0 && cfg.lr_gamma <= 1.0))
    throw ConfigError("train: lr_gamma must be in (0, 1]");
  if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (cfg.max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
  if (cfg.patience < 0) throw ConfigError("train: patience must be >= 0");
  if (cfg.train_kernel && cfg.kernel.kind != KernelKind::mlp)
    throw ConfigError("train: kernel training requires an mlp kernel");
}

/// Learning rate for a given epoch: lr * gamma^epoch, computed by repeated
/// multiplication so tests can reproduce it bit for bit.
inline double lr_for_epoch(double lr, double gamma, int epoch) {
  double v = lr;
  for (int i = 0; i < epoch; ++i) v *= gamma;
  return v;
}

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double lr = 0.0;
};

struct TrainRecord {
  std::vector<EpochStats> epochs;
  int stopped_epoch = -1;  // last epoch that ran (0-based)
  int best_epoch = -1;
  double best_val_loss = std::numeric_limits<double>::infinity();
  double best_val_acc = 0.0;
  Model model;  // snapshot from the best epoch
};

/// Training inputs. `features` feeds the fixed-representation path; when the
/// kernel is trained jointly, `event_sets` is used instead and features are
/// re-derived from the current kernel weights every step.
struct FitData {
  std::vector<std::vector<double>> features;
  std::vector<PooledEvents> event_sets;
  std::vector<int> labels;
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> val_idx;  // empty: validation metrics mirror the train set
  int num_classes = 2;
};

namespace detail {

inline std::vector<double> fit_features(const TrainConfig& cfg, const FitData& data,
                                        const Model& model, std::size_t i) {
  if (cfg.train_kernel) return kernel_features(data.event_sets[i], model_kernel(model));
  return data.features[i];
}

struct EvalAccum {
  double loss = 0.0;
  double acc = 0.0;
};

inline EvalAccum eval_on(const TrainConfig& cfg, const FitData& data, const Model& model,
                         const std::vector<std::size_t>& idx) {
  EvalAccum out;
  for (std::size_t i : idx) {
    const std::vector<double> probs = predict_proba(model, fit_features(cfg, data, model, i));
    out.loss += cross_entropy(probs, data.labels[i]);
    if (argmax_class(probs) == data.labels[i]) out.acc += 1.0;
  }
  out.loss /= static_cast<double>(idx.size());
  out.acc /= static_cast<double>(idx.size());
  return out;
}

}  // namespace detail

/// Mini-batch Adam with a per-epoch geometric learning-rate schedule and
/// early stopping on validation loss. Stops once the count of consecutive
/// epochs without strict improvement reaches max(1, patience). Everything
/// random (init, shuffles, dropout) is derived from cfg.seed, so reruns are
/// bit-identical.
inline TrainRecord fit(const TrainConfig& cfg, const FitData& data) {
  validate_train_config(cfg);
  if (data.train_idx.empty()) throw ConfigError("fit: empty training set");
  if (data.num_classes < 2) throw ConfigError("fit: need at least 2 classes");
  const std::size_t n = cfg.train_kernel ? data.event_sets.size() : data.features.size();
  if (data.labels.size() != n) throw ConfigError("fit: label count mismatch");
  for (std::size_t i : data.train_idx)
    if (i >= n) throw ConfigError("fit: train index out of range");
  for (std::size_t i : data.val_idx)
    if (i >= n) throw ConfigError("fit: val index out of range");
  for (int y : data.labels)
    if (y < 0 || y >= data.num_classes) throw ConfigError("fit: label out of range");

  ModelConfig mc;
  const std::size_t feature_dim = cfg.train_kernel ? data.event_sets[data.train_idx[0]].feature_count()
                                                   : data.features[data.train_idx[0]].size();
  mc.head_layers.push_back(static_cast<int>(feature_dim));
  for (int w : cfg.hidden) mc.head_layers.push_back(w);
  mc.head_layers.push_back(data.num_classes);
  mc.slope = cfg.slope;
  mc.dropout = cfg.dropout;
  mc.train_kernel = cfg.train_kernel;
  mc.kernel = cfg.kernel;

  Model model = init_model(mc, derive_seed(cfg.seed, 0));
  AdamState adam;
  TrainRecord record;
  record.model = model;

  std::vector<std::size_t> order = data.train_idx;
  std::vector<double> grad;
  int non_improving = 0;
  const int stop_after = std::max(1, cfg.patience);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double lr = lr_for_epoch(cfg.lr, cfg.lr_gamma, epoch);
    CounterRng shuffle_rng(derive_seed(cfg.seed, 1 + 2 * static_cast<uint64_t>(epoch)));
    detail::seeded_shuffle(order, shuffle_rng);
    const uint64_t epoch_seed = derive_seed(cfg.seed, 2 + 2 * static_cast<uint64_t>(epoch));

    double loss_sum = 0.0;
    std::size_t batch_count = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_count) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const uint64_t dropout_seed = derive_seed(epoch_seed, batch_count);
      std::vector<int> y;
      y.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) y.push_back(data.labels[order[i]]);

      double loss;
      if (cfg.train_kernel) {
        std::vector<const PooledEvents*> batch;
        batch.reserve(stop - start);
        for (std::size_t i = start; i < stop; ++i) batch.push_back(&data.event_sets[order[i]]);
        loss = loss_and_grad_kernel(model, batch, y, dropout_seed, grad);
      } else {
        std::vector<std::vector<double>> X;
        X.reserve(stop - start);
        for (std::size_t i = start; i < stop; ++i) X.push_back(data.features[order[i]]);
        loss = loss_and_grad(model, X, y, dropout_seed, grad);
      }
      adam_step(model.theta, grad, adam, cfg.adam, lr);
      loss_sum += loss;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    stats.train_loss = loss_sum / static_cast<double>(batch_count);
    const detail::EvalAccum train_eval = detail::eval_on(cfg, data, model, data.train_idx);
    stats.train_acc = train_eval.acc;
    const detail::EvalAccum val_eval =
        data.val_idx.empty() ? train_eval : detail::eval_on(cfg, data, model, data.val_idx);
    stats.val_loss = val_eval.loss;
    stats.val_acc = val_eval.acc;
    record.epochs.push_back(stats);
    record.stopped_epoch = epoch;

    if (stats.val_loss < record.best_val_loss) {
      record.best_val_loss = stats.val_loss;
      record.best_val_acc = stats.val_acc;
      record.best_epoch = epoch;
      record.model = model;
      non_improving = 0;
    } else if (++non_improving >= stop_after) {
      break;
    }
  }
  return record;
}

inline void write_train_csv(const TrainRecord& record, std::ostream& out) {
  out << "epoch,train_loss,train_acc,val_loss,val_acc,lr\n";
  for (const EpochStats& s : record.epochs)
    out << s.epoch << ',' << format_double(s.train_loss) << ',' << format_double(s.train_acc)
        << ',' << format_double(s.val_loss) << ',' << format_double(s.val_acc) << ','
        << format_double(s.lr) << '\n';
  if (!out) throw IoError("write_train_csv: sink write failed");
}

// ---------------------------------------------------------------------------
// Cross-validation: fold f tests on fold f, validates on fold (f+1) mod k,
// trains on the rest. With k = 2 there is no spare fold, so validation
// reuses the test fold.
// ---------------------------------------------------------------------------

struct CrossValResult {
  std::vector<TrainRecord> fold_records;
  std::vector<EvalReport> fold_reports;  // evaluated on each test fold
  int best_fold = -1;                    // by best-epoch validation accuracy
  double mean_accuracy = 0.0;
};

inline CrossValResult cross_validate(const TrainConfig& cfg, const FitData& data,
                                     const std::vector<int>& fold_of, int k) {
  validate_train_config(cfg);
  const std::size_t n = cfg.train_kernel ? data.event_sets.size() : data.features.size();
  if (fold_of.size() != n) throw ConfigError("cross_validate: fold count mismatch");
  if (k < 2) throw ConfigError("cross_validate: k must be >= 2");

  CrossValResult result;
  for (int f = 0; f < k; ++f) {
    const int val_fold = k == 2 ? f : (f + 1) % k;
    FitData fold_data = data;
    fold_data.train_idx.clear();
    fold_data.val_idx.clear();
    std::vector<std::size_t> test_idx;
    for (std::size_t i = 0; i < n; ++i) {
      if (fold_of[i] == f) test_idx.push_back(i);
      if (fold_of[i] == val_fold) fold_data.val_idx.push_back(i);
      if (fold_of[i] != f && fold_of[i] != val_fold) fold_data.train_idx.push_back(i);
    }

    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = derive_seed(cfg.seed, static_cast<uint64_t>(f));
    TrainRecord record = fit(fold_cfg, fold_data);

    std::vector<int> truth, pred;
    std::vector<double> pos_scores;
    for (std::size_t i : test_idx) {
      const std::vector<double> probs =
          predict_proba(record.model, detail::fit_features(cfg, fold_data, record.model, i));
      truth.push_back(data.labels[i]);
      pred.push_back(argmax_class(probs));
      if (data.num_classes == 2) pos_scores.push_back(probs[1]);
    }
    EvalReport report = classification_report(confusion(truth, pred, data.num_classes));
    if (data.num_classes == 2) {
      bool has_pos = false, has_neg = false;
      for (int t : truth) (t == 1 ? has_pos : has_neg) = true;
      if (has_pos && has_neg) {
        report.auc = roc_auc(pos_scores, truth).area;
        report.ap = pr_ap(pos_scores, truth).area;
      }
    }
    result.mean_accuracy += report.accuracy;
    result.fold_reports.push_back(std::move(report));
    result.fold_records.push_back(std::move(record));
  }
  result.mean_accuracy /= static_cast<double>(k);
  for (int f = 0; f < k; ++f)
    if (result.best_fold < 0 ||
        result.fold_records[f].best_val_acc > result.fold_records[result.best_fold].best_val_acc)
      result.best_fold = f;
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints: a short text header (magic, one-line JSON config, counts and
// a header hash) followed by the raw f64 LE parameter blob.
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::ordered_json kernel_to_json(const KernelSpec& k) {
  nlohmann::ordered_json j;
  j["kind"] = k.kind == KernelKind::trilinear ? "trilinear" : "mlp";
  if (k.kind == KernelKind::mlp) {
    j["layers"] = k.mlp_layers;
    j["slope"] = k.slope;
  }
  return j;
}

inline KernelSpec kernel_from_json(const nlohmann::json& j) {
  KernelSpec k;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "trilinear") return KernelSpec::trilinear();
  if (kind != "mlp") throw FormatError("checkpoint: unknown kernel kind");
  k.kind = KernelKind::mlp;
  k.mlp_layers = j.at("layers").get<std::vector<int>>();
  k.slope = j.at("slope").get<double>();
  return k;
}

inline void put_f64_le(std::ostream& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

inline double get_f64_le(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw FormatError("checkpoint: truncated parameter blob");
  uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | b[i];
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace detail

inline void save_model(const Model& model, std::ostream& out) {
  nlohmann::ordered_json cfg;
  cfg["head_layers"] = model.config.head_layers;
  cfg["slope"] = model.config.slope;
  cfg["dropout"] = model.config.dropout;
  cfg["train_kernel"] = model.config.train_kernel;
  cfg["kernel"] = detail::kernel_to_json(model.config.kernel);
  const std::string cfg_line = cfg.dump();

  const std::size_t kernel_n =
      model.config.kernel.kind == KernelKind::mlp && !model.config.train_kernel
          ? model.config.kernel.mlp_weights.size()
          : 0;
  std::string header = "EVBM1\n" + cfg_line + "\ntheta " + std::to_string(model.theta.size()) +
                       "\nkernel " + std::to_string(kernel_n) + "\n";
  char hash_line[32];
  std::snprintf(hash_line, sizeof hash_line, "hash %016llx\n",
                static_cast<unsigned long long>(fnv1a64(header)));
  out << header << hash_line;
  for (double v : model.theta) detail::put_f64_le(out, v);
  if (kernel_n)
    for (double v : model.config.kernel.mlp_weights) detail::put_f64_le(out, v);
  if (!out) throw IoError("save_model: sink write failed");
}

inline Model load_model(std::istream& in) {
  std::string magic, cfg_line, theta_line, kernel_line, hash_line;
  if (!std::getline(in, magic) || magic != "EVBM1") throw FormatError("checkpoint: bad magic");
  if (!std::getline(in, cfg_line) || !std::getline(in, theta_line) ||
      !std::getline(in, kernel_line) || !std::getline(in, hash_line))
    throw FormatError("checkpoint: truncated header");

  const std::string header = magic + "\n" + cfg_line + "\n" + theta_line + "\n" + kernel_line + "\n";
  char expect[32];
  std::snprintf(expect, sizeof expect, "hash %016llx",
                static_cast<unsigned long long>(fnv1a64(header)));
  if (hash_line != expect) throw FormatError("checkpoint: header hash mismatch");

  Model model;
  try {
    const nlohmann::json cfg = nlohmann::json::parse(cfg_line);
    model.config.head_layers = cfg.at("head_layers").get<std::vector<int>>();
    model.config.slope = cfg.at("slope").get<double>();
    model.config.dropout = cfg.at("dropout").get<double>();
    model.config.train_kernel = cfg.at("train_kernel").get<bool>();
    model.config.kernel = detail::kernel_from_json(cfg.at("kernel"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad config: ") + e.what());
  }

  const auto parse_count = [](const std::string& line, const char* key) {
    const std::string prefix = std::string(key) + " ";
    if (line.rfind(prefix, 0) != 0) throw FormatError("checkpoint: malformed header line");
    return static_cast<std::size_t>(std::stoull(line.substr(prefix.size())));
  };
  const std::size_t theta_n = parse_count(theta_line, "theta");
  const std::size_t kernel_n = parse_count(kernel_line, "kernel");

  model.theta.resize(theta_n);
  for (double& v : model.theta) v = detail::get_f64_le(in);
  if (kernel_n) {
    model.config.kernel.mlp_weights.resize(kernel_n);
    for (double& v : model.config.kernel.mlp_weights) v = detail::get_f64_le(in);
  }
  const std::size_t expect_theta =
      head_param_count(model.config.head_layers) +
      (model.config.train_kernel ? mlp_param_count(model.config.kernel.mlp_layers) : 0);
  if (theta_n != expect_theta) throw FormatError("checkpoint: parameter count mismatch");
  if (model.config.train_kernel)
    model.config.kernel.mlp_weights.assign(model.theta.begin() + model.head_count(),
                                           model.theta.end());
  validate_model_config(model.config);
  return model;
}

inline void save_model_file(const Model& model, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  save_model(model, f);
}

inline Model load_model_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + path.string());
  return load_model(f);
}

}  // namespace evbench

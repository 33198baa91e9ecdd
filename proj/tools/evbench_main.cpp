#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "evbench/evbench.hpp"

#include "CLI11.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::optional<std::string> out_override;
  std::optional<uint64_t> seed_override;
};

void add_common(CLI::App* sub, CommonOpts& opts, bool config_required = true) {
  auto* c = sub->add_option("-c,--config", opts.config_path, "experiment config (JSON)");
  if (config_required) c->required();
  sub->add_option("-o,--out", opts.out_override, "override out_dir");
  sub->add_option("-s,--seed", opts.seed_override, "override the experiment seed");
}

evbench::ExperimentConfig load_config(const CommonOpts& opts) {
  evbench::ExperimentConfig cfg = evbench::load_experiment_config(opts.config_path);
  if (opts.seed_override) cfg.seed = *opts.seed_override;
  if (opts.out_override) cfg.out_dir = *opts.out_override;
  evbench::validate_experiment(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"event-stream classification robustness benchmark"};
  app.require_subcommand(1);

  CommonOpts synth_opts, train_opts, crossval_opts, eval_opts, sweep_opts, report_opts;
  int crossval_k = 5;
  std::string eval_model, eval_kind = "none";
  double eval_level = 0.0;
  uint64_t eval_seed = 0;

  struct NoiseOpts {
    std::string in, out, kind = "loss", scope = "per_event", oob = "drop";
    double level = 0.0;
    uint64_t seed = 0;
  } noise_opts;

  struct ReprOpts {
    std::string in, out, kernel = "trilinear";
    int bins = 9;
    uint64_t kernel_seed = 7;
    int crop_h = 0, crop_w = 0;
  } repr_opts;

  auto* synth = app.add_subcommand("synth", "generate a synthetic two-class dataset");
  add_common(synth, synth_opts);

  auto* noise = app.add_subcommand("noise", "apply one noise transform to an event file");
  noise->add_option("-i,--in", noise_opts.in, "input .evs1 file")->required();
  noise->add_option("-o,--out", noise_opts.out, "output .evs1 file")->required();
  noise->add_option("-k,--kind", noise_opts.kind, "shift_x|shift_y|shift_xy|loss|polarity|none");
  noise->add_option("-l,--level", noise_opts.level, "noise level in [0, 1]");
  noise->add_option("-s,--seed", noise_opts.seed, "noise seed");
  noise->add_option("--scope", noise_opts.scope, "shift scope: per_event|per_stream");
  noise->add_option("--oob", noise_opts.oob, "out-of-bounds policy: drop|clamp");

  auto* repr = app.add_subcommand("repr", "voxelize an event file into a tensor dump");
  repr->add_option("-i,--in", repr_opts.in, "input .evs1 file")->required();
  repr->add_option("-o,--out", repr_opts.out, "output tensor file")->required();
  repr->add_option("-b,--bins", repr_opts.bins, "temporal bins");
  repr->add_option("-k,--kernel", repr_opts.kernel, "trilinear|mlp|triangular");
  repr->add_option("--kernel-seed", repr_opts.kernel_seed, "seed for random mlp kernels");
  repr->add_option("--crop-h", repr_opts.crop_h, "resample height (0: off)");
  repr->add_option("--crop-w", repr_opts.crop_w, "resample width (0: off)");

  auto* train = app.add_subcommand("train", "fit the classifier on the train/val splits");
  add_common(train, train_opts);

  auto* crossval = app.add_subcommand("crossval", "stratified k-fold cross-validation");
  add_common(crossval, crossval_opts);
  crossval->add_option("-k,--folds", crossval_k, "fold count");

  auto* eval = app.add_subcommand("eval", "evaluate a saved model on the test split");
  add_common(eval, eval_opts);
  eval->add_option("-m,--model", eval_model, "model checkpoint (default: <out_dir>/model.bin)");
  eval->add_option("--noise-kind", eval_kind, "optional noise on the test set");
  eval->add_option("--noise-level", eval_level, "noise level in [0, 1]");
  eval->add_option("--noise-seed", eval_seed, "noise seed");

  auto* sweep = app.add_subcommand("sweep", "train, then evaluate across the noise grid");
  add_common(sweep, sweep_opts);

  auto* report = app.add_subcommand("report", "summarize sweep.csv into tables and a chart");
  add_common(report, report_opts);

  try {
    app.parse(argc, argv);

    if (*synth) {
      const evbench::ExperimentConfig cfg = load_config(synth_opts);
      const evbench::DatasetManifest manifest = evbench::run_synth(cfg);
      std::printf("wrote %zu samples to %s\n", manifest.samples.size(), cfg.data_dir.c_str());
    } else if (*noise) {
      evbench::NoiseSpec spec;
      spec.kind = evbench::noise_kind_from_string(noise_opts.kind);
      spec.level = noise_opts.level;
      spec.seed = noise_opts.seed;
      spec.shift_scope = evbench::shift_scope_from_string(noise_opts.scope);
      spec.oob_policy = evbench::oob_policy_from_string(noise_opts.oob);
      const evbench::EventStream in = evbench::read_evs1_file(noise_opts.in);
      const evbench::NoiseResult result = evbench::apply_noise(in, spec);
      evbench::write_evs1_file(result.stream, noise_opts.out);
      std::printf("events in=%zu out=%zu dropped=%zu\n", in.events.size(),
                  result.stream.events.size(), result.dropped_count);
    } else if (*repr) {
      evbench::KernelSpec kernel;
      if (repr_opts.kernel == "trilinear") kernel = evbench::KernelSpec::trilinear();
      else if (repr_opts.kernel == "triangular") kernel = evbench::KernelSpec::mlp_triangular();
      else if (repr_opts.kernel == "mlp") kernel = evbench::KernelSpec::mlp_random(repr_opts.kernel_seed);
      else throw evbench::ConfigError("unknown kernel: " + repr_opts.kernel);
      const evbench::EventStream in = evbench::read_evs1_file(repr_opts.in);
      evbench::EstTensor tensor = evbench::build_est(in, repr_opts.bins, kernel);
      if (repr_opts.crop_h > 0 || repr_opts.crop_w > 0) {
        if (repr_opts.crop_h < 1 || repr_opts.crop_w < 1)
          throw evbench::ConfigError("crop needs both dims");
        tensor = evbench::crop_resize(tensor, repr_opts.crop_h, repr_opts.crop_w);
      }
      evbench::write_tensor_file(tensor, repr_opts.out);
      std::printf("tensor 2x%dx%dx%d sum %s\n", tensor.bins, tensor.height, tensor.width,
                  evbench::format_double(tensor.sum()).c_str());
    } else if (*train) {
      const evbench::ExperimentConfig cfg = load_config(train_opts);
      const evbench::TrainOutput out = evbench::run_train(cfg);
      const evbench::EpochStats& last = out.record.epochs.back();
      std::printf("stopped at epoch %d (best %d): val_loss %s val_acc %s\n",
                  out.record.stopped_epoch, out.record.best_epoch,
                  evbench::format_double(out.record.best_val_loss).c_str(),
                  evbench::format_double(out.record.best_val_acc).c_str());
      std::printf("last epoch: train_loss %s train_acc %s\n",
                  evbench::format_double(last.train_loss).c_str(),
                  evbench::format_double(last.train_acc).c_str());
    } else if (*crossval) {
      const evbench::ExperimentConfig cfg = load_config(crossval_opts);
      const evbench::CrossValResult result = evbench::run_crossval(cfg, crossval_k);
      std::printf("k=%d mean test accuracy %s (best fold %d)\n", crossval_k,
                  evbench::format_double(result.mean_accuracy).c_str(), result.best_fold);
    } else if (*eval) {
      const evbench::ExperimentConfig cfg = load_config(eval_opts);
      const std::filesystem::path model_path =
          eval_model.empty() ? std::filesystem::path(cfg.out_dir) / "model.bin"
                             : std::filesystem::path(eval_model);
      evbench::NoiseSpec spec;
      spec.kind = evbench::noise_kind_from_string(eval_kind);
      spec.level = eval_level;
      spec.seed = eval_seed;
      spec.shift_scope = cfg.noise.scope;
      spec.oob_policy = cfg.noise.oob;
      const evbench::EvalOutput out = evbench::run_eval(cfg, model_path, spec);
      std::fputs(evbench::render_report_text(out.report).c_str(), stdout);
    } else if (*sweep) {
      const evbench::ExperimentConfig cfg = load_config(sweep_opts);
      const evbench::SweepResult result = evbench::run_sweep(cfg);
      for (const evbench::SweepRow& row : result.rows)
        std::printf("%-10s %5.2f accuracy %s\n", evbench::sweep_kind_name(row.spec).c_str(),
                    row.spec.level, evbench::format_double(row.report.accuracy).c_str());
    } else if (*report) {
      const evbench::ExperimentConfig cfg = load_config(report_opts);
      evbench::run_report(cfg);
      std::printf("wrote report files to %s\n", cfg.out_dir.c_str());
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const evbench::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const evbench::FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const evbench::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const evbench::NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
  return 0;
}

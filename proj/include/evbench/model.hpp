#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "evbench/core.hpp"
#include "evbench/est.hpp"
#include "evbench/rng.hpp"

namespace evbench {

// ---------------------------------------------------------------------------
// Classifier head: an MLP over pooled tensor features with leaky rectifier
// hidden units, inverted dropout during training, and a softmax output.
// Parameters live in one flat vector (per layer: W row-major, then b); when
// the measurement kernel is trained jointly its weights are appended.
// ---------------------------------------------------------------------------

struct ModelConfig {
  std::vector<int> head_layers;  // [feature_dim, hidden..., num_classes]
  double slope = 0.1;
  double dropout = 0.0;
  bool train_kernel = false;
  KernelSpec kernel;  // consulted only when train_kernel
};

inline std::size_t head_param_count(const std::vector<int>& layers) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l)
    n += static_cast<std::size_t>(layers[l + 1]) * layers[l] + layers[l + 1];
  return n;
}

inline void validate_model_config(const ModelConfig& cfg) {
  if (cfg.head_layers.size() < 2) throw ConfigError("model: need input and output layer widths");
  for (int w : cfg.head_layers)
    if (w < 1) throw ConfigError("model: non-positive layer width");
  if (cfg.head_layers.back() < 2) throw ConfigError("model: need at least 2 classes");
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) throw ConfigError("model: dropout must be in [0, 1)");
  if (cfg.train_kernel) {
    if (cfg.kernel.kind != KernelKind::mlp)
      throw ConfigError("model: kernel training requires an mlp kernel");
    validate_kernel(cfg.kernel);
  }
}

struct Model {
  ModelConfig config;
  std::vector<double> theta;

  std::size_t head_count() const { return head_param_count(config.head_layers); }
  int num_classes() const { return config.head_layers.back(); }
  int feature_dim() const { return config.head_layers.front(); }
};

/// Head weights uniform in +-1/sqrt(fan_in), biases zero; kernel weights
/// (when trained) copied from the config's kernel spec.
inline Model init_model(const ModelConfig& cfg, uint64_t seed) {
  validate_model_config(cfg);
  Model model;
  model.config = cfg;
  const std::size_t head_n = head_param_count(cfg.head_layers);
  const std::size_t kernel_n = cfg.train_kernel ? cfg.kernel.mlp_weights.size() : 0;
  model.theta.assign(head_n + kernel_n, 0.0);

  CounterRng rng(seed);
  std::size_t pos = 0;
  for (std::size_t l = 0; l + 1 < cfg.head_layers.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.head_layers[l]));
    const std::size_t wn = static_cast<std::size_t>(cfg.head_layers[l + 1]) * cfg.head_layers[l];
    for (std::size_t i = 0; i < wn; ++i)
      model.theta[pos++] = (2.0 * rng.next_unit() - 1.0) * bound;
    pos += static_cast<std::size_t>(cfg.head_layers[l + 1]);
  }
  if (cfg.train_kernel)
    std::copy(cfg.kernel.mlp_weights.begin(), cfg.kernel.mlp_weights.end(),
              model.theta.begin() + head_n);
  return model;
}

/// The kernel spec with weights taken from the model's parameter vector.
inline KernelSpec model_kernel(const Model& model) {
  KernelSpec k = model.config.kernel;
  if (model.config.train_kernel)
    k.mlp_weights.assign(model.theta.begin() + model.head_count(), model.theta.end());
  return k;
}

inline std::vector<double> softmax(std::vector<double> logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (double& v : logits) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : logits) v /= sum;
  return logits;
}

inline constexpr double kLogFloor = 1e-300;

inline double cross_entropy(const std::vector<double>& probs, int label) {
  if (label < 0 || label >= static_cast<int>(probs.size()))
    throw ConfigError("cross_entropy: label out of range");
  return -std::log(std::max(probs[label], kLogFloor));
}

namespace detail {

struct HeadTrace {
  std::vector<std::vector<double>> inputs;  // inputs[l] feeds affine layer l
  std::vector<std::vector<double>> pre;     // pre-activation output of layer l
  std::vector<std::vector<double>> mask;    // dropout multiplier per hidden layer
};

inline std::vector<double> head_forward(const ModelConfig& cfg, std::span<const double> theta,
                                        const std::vector<double>& x, CounterRng* drop_rng,
                                        HeadTrace* trace) {
  std::vector<double> in = x;
  std::size_t pos = 0;
  const std::size_t layer_count = cfg.head_layers.size() - 1;
  for (std::size_t l = 0; l < layer_count; ++l) {
    if (trace) trace->inputs.push_back(in);
    const int rows = cfg.head_layers[l + 1];
    const int cols = cfg.head_layers[l];
    std::vector<double> out(static_cast<std::size_t>(rows));
    for (int r = 0; r < rows; ++r) {
      double acc = theta[pos + static_cast<std::size_t>(rows) * cols + r];
      const std::size_t row_off = pos + static_cast<std::size_t>(r) * cols;
      for (int c = 0; c < cols; ++c) acc += theta[row_off + c] * in[c];
      out[r] = acc;
    }
    pos += static_cast<std::size_t>(rows) * cols + rows;
    if (trace) trace->pre.push_back(out);
    if (l + 1 < layer_count) {
      for (double& v : out) v = v > 0 ? v : cfg.slope * v;
      if (drop_rng && cfg.dropout > 0.0) {
        std::vector<double> mask(out.size());
        const double keep_scale = 1.0 / (1.0 - cfg.dropout);
        for (std::size_t i = 0; i < out.size(); ++i) {
          mask[i] = drop_rng->next_unit() >= cfg.dropout ? keep_scale : 0.0;
          out[i] *= mask[i];
        }
        if (trace) trace->mask.push_back(std::move(mask));
      } else if (trace) {
        trace->mask.emplace_back();
      }
    }
    in = std::move(out);
  }
  return in;
}

/// Backprop from d(loss)/d(logits). Accumulates parameter gradients into
/// `grad` (head layout) and returns d(loss)/d(input).
inline std::vector<double> head_backward(const ModelConfig& cfg, std::span<const double> theta,
                                         const HeadTrace& trace, std::vector<double> dlogits,
                                         std::span<double> grad) {
  const std::size_t layer_count = cfg.head_layers.size() - 1;
  std::vector<std::size_t> offsets(layer_count);
  std::size_t pos = 0;
  for (std::size_t l = 0; l < layer_count; ++l) {
    offsets[l] = pos;
    pos += static_cast<std::size_t>(cfg.head_layers[l + 1]) * cfg.head_layers[l] +
           cfg.head_layers[l + 1];
  }

  std::vector<double> delta = std::move(dlogits);
  for (std::size_t l = layer_count; l-- > 0;) {
    const int rows = cfg.head_layers[l + 1];
    const int cols = cfg.head_layers[l];
    const std::vector<double>& in = trace.inputs[l];
    const std::size_t w_off = offsets[l];
    for (int r = 0; r < rows; ++r) {
      const std::size_t row_off = w_off + static_cast<std::size_t>(r) * cols;
      for (int c = 0; c < cols; ++c) grad[row_off + c] += delta[r] * in[c];
      grad[w_off + static_cast<std::size_t>(rows) * cols + r] += delta[r];
    }
    std::vector<double> prev(static_cast<std::size_t>(cols), 0.0);
    for (int c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int r = 0; r < rows; ++r)
        acc += theta[w_off + static_cast<std::size_t>(r) * cols + c] * delta[r];
      prev[c] = acc;
    }
    if (l > 0) {
      const std::vector<double>& pre = trace.pre[l - 1];
      const std::vector<double>& mask = trace.mask[l - 1];
      for (int c = 0; c < cols; ++c) {
        double d = prev[c];
        if (!mask.empty()) d *= mask[c];
        prev[c] = d * (pre[c] > 0 ? 1.0 : cfg.slope);
      }
    }
    delta = std::move(prev);
  }
  return delta;
}

}  // namespace detail

/// Eval-mode class probabilities (dropout off).
inline std::vector<double> predict_proba(const Model& model, const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != model.feature_dim())
    throw ConfigError("predict_proba: feature dim mismatch");
  return softmax(detail::head_forward(model.config, model.theta, x, nullptr, nullptr));
}

inline int argmax_class(const std::vector<double>& probs) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(probs.size()); ++i)
    if (probs[i] > probs[best]) best = i;
  return best;
}

/// Mean cross-entropy of a batch in eval mode.
inline double batch_loss(const Model& model, const std::vector<std::vector<double>>& X,
                         const std::vector<int>& y) {
  if (X.size() != y.size() || X.empty()) throw ConfigError("batch_loss: bad batch");
  double loss = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) loss += cross_entropy(predict_proba(model, X[i]), y[i]);
  return loss / static_cast<double>(X.size());
}

/// Mean cross-entropy over a batch in train mode plus d(loss)/d(theta).
/// Dropout masks are a pure function of dropout_seed and the sample's
/// position in the batch, so a repeated call is bit-identical.
inline double loss_and_grad(const Model& model, const std::vector<std::vector<double>>& X,
                            const std::vector<int>& y, uint64_t dropout_seed,
                            std::vector<double>& grad) {
  if (X.size() != y.size() || X.empty()) throw ConfigError("loss_and_grad: bad batch");
  grad.assign(model.theta.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(X.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    CounterRng drop(derive_seed(dropout_seed, i));
    detail::HeadTrace trace;
    const std::vector<double> logits =
        detail::head_forward(model.config, model.theta, X[i], &drop, &trace);
    const std::vector<double> probs = softmax(logits);
    loss += cross_entropy(probs, y[i]) * inv_n;
    std::vector<double> dlogits = probs;
    dlogits[y[i]] -= 1.0;
    for (double& v : dlogits) v *= inv_n;
    detail::head_backward(model.config, model.theta, trace, std::move(dlogits), grad);
  }
  if (!std::isfinite(loss)) throw NumericError("loss_and_grad: non-finite loss");
  return loss;
}

// ---------------------------------------------------------------------------
// Kernel learning path. Events are pre-binned to pooled feature cells so the
// feature vector (and its gradient w.r.t. kernel weights) can be rebuilt
// cheaply every step without touching the full-resolution tensor.
// ---------------------------------------------------------------------------

struct PooledEvents {
  int bins = 0;
  int grid_h = 0;
  int grid_w = 0;
  struct Item {
    int block;        // 0: p = -1, 1: p = +1
    int cell;         // pooled cell, row-major on the grid
    double tstar;     // normalized bin coordinate
    double inv_area;  // 1 / pixel count of the pooled cell
  };
  std::vector<Item> items;

  std::size_t feature_count() const {
    return static_cast<std::size_t>(2 * bins) * grid_h * grid_w;
  }
};

inline PooledEvents pooled_events(const EventStream& stream, int bins, int grid_h, int grid_w) {
  if (!stream.geometry.valid()) throw ConfigError("pooled_events: invalid geometry");
  if (bins < 1 || grid_h < 1 || grid_w < 1) throw ConfigError("pooled_events: bad dims");
  const int H = stream.geometry.height;
  const int W = stream.geometry.width;
  if (grid_h > H || grid_w > W) throw ConfigError("pooled_events: grid exceeds geometry");

  std::vector<int> row_cell(H), col_cell(W);
  std::vector<int> row_size(grid_h), col_size(grid_w);
  for (int i = 0; i < grid_h; ++i) {
    const int y0 = i * H / grid_h, y1 = (i + 1) * H / grid_h;
    row_size[i] = y1 - y0;
    for (int y = y0; y < y1; ++y) row_cell[y] = i;
  }
  for (int j = 0; j < grid_w; ++j) {
    const int x0 = j * W / grid_w, x1 = (j + 1) * W / grid_w;
    col_size[j] = x1 - x0;
    for (int x = x0; x < x1; ++x) col_cell[x] = j;
  }

  PooledEvents pe;
  pe.bins = bins;
  pe.grid_h = grid_h;
  pe.grid_w = grid_w;
  pe.items.reserve(stream.events.size());
  const std::vector<double> tstar = normalize_time(stream, bins);
  for (std::size_t i = 0; i < stream.events.size(); ++i) {
    const Event& e = stream.events[i];
    const int ci = row_cell[e.y], cj = col_cell[e.x];
    pe.items.push_back({e.p > 0 ? 1 : 0, ci * grid_w + cj, tstar[i],
                        1.0 / (static_cast<double>(row_size[ci]) * col_size[cj])});
  }
  return pe;
}

/// Feature vector identical to pool_features(build_est(stream, bins, kernel))
/// for an mlp kernel, computed from the pre-binned events.
inline std::vector<double> kernel_features(const PooledEvents& pe, const KernelSpec& kernel) {
  validate_kernel(kernel);
  if (kernel.kind != KernelKind::mlp) throw ConfigError("kernel_features: mlp kernel required");
  std::vector<double> f(pe.feature_count(), 0.0);
  const std::size_t cells = static_cast<std::size_t>(pe.grid_h) * pe.grid_w;
  for (const auto& item : pe.items)
    for (int b = 0; b < pe.bins; ++b)
      f[(static_cast<std::size_t>(item.block) * pe.bins + b) * cells + item.cell] +=
          detail::mlp_forward(kernel, item.tstar - b) * item.inv_area;
  return f;
}

/// Train-mode loss and gradient with the kernel weights in the parameter
/// tail: head gradients as usual, then backprop through each event's bin
/// deposits into the kernel MLP.
inline double loss_and_grad_kernel(const Model& model, const std::vector<const PooledEvents*>& batch,
                                   const std::vector<int>& y, uint64_t dropout_seed,
                                   std::vector<double>& grad) {
  if (!model.config.train_kernel) throw ConfigError("loss_and_grad_kernel: kernel not trainable");
  if (batch.size() != y.size() || batch.empty()) throw ConfigError("loss_and_grad_kernel: bad batch");
  grad.assign(model.theta.size(), 0.0);
  const KernelSpec kernel = model_kernel(model);
  const std::size_t head_n = model.head_count();
  std::span<double> kernel_grad(grad.data() + head_n, grad.size() - head_n);

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const PooledEvents& pe = *batch[i];
    if (static_cast<int>(pe.feature_count()) != model.feature_dim())
      throw ConfigError("loss_and_grad_kernel: feature dim mismatch");
    const std::vector<double> x = kernel_features(pe, kernel);

    CounterRng drop(derive_seed(dropout_seed, i));
    detail::HeadTrace trace;
    const std::vector<double> logits =
        detail::head_forward(model.config, model.theta, x, &drop, &trace);
    const std::vector<double> probs = softmax(logits);
    loss += cross_entropy(probs, y[i]) * inv_n;
    std::vector<double> dlogits = probs;
    dlogits[y[i]] -= 1.0;
    for (double& v : dlogits) v *= inv_n;
    const std::vector<double> dx =
        detail::head_backward(model.config, model.theta, trace, std::move(dlogits), grad);

    const std::size_t cells = static_cast<std::size_t>(pe.grid_h) * pe.grid_w;
    for (const auto& item : pe.items)
      for (int b = 0; b < pe.bins; ++b) {
        const double dout =
            dx[(static_cast<std::size_t>(item.block) * pe.bins + b) * cells + item.cell] *
            item.inv_area;
        if (dout != 0.0) detail::mlp_backward(kernel, item.tstar - b, dout, kernel_grad);
      }
  }
  if (!std::isfinite(loss)) throw NumericError("loss_and_grad_kernel: non-finite loss");
  return loss;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  int64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
};

inline void adam_step(std::vector<double>& theta, const std::vector<double>& grad,
                      AdamState& state, const AdamConfig& cfg, double lr) {
  if (theta.size() != grad.size()) throw ConfigError("adam_step: size mismatch");
  if (state.m.empty()) {
    state.m.assign(theta.size(), 0.0);
    state.v.assign(theta.size(), 0.0);
  }
  if (state.m.size() != theta.size()) throw ConfigError("adam_step: state size mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    theta[i] -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
  }
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check
// ---------------------------------------------------------------------------

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
};

/// Central differences against an analytic gradient. Relative error uses
/// max(|a|, |n|, floor) in the denominator.
template <typename LossFn>
GradCheckResult gradient_check(std::vector<double>& theta, const std::vector<double>& analytic,
                               LossFn&& loss_of, double h = 1e-5, double floor_ = 1e-6) {
  GradCheckResult res;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + h;
    const double up = loss_of();
    theta[i] = saved - h;
    const double down = loss_of();
    theta[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), floor_});
    const double rel = std::abs(numeric - analytic[i]) / denom;
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_index = i;
    }
  }
  return res;
}

}  // namespace evbench

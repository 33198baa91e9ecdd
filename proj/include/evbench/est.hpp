#pragma once

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

#include "evbench/core.hpp"
#include "evbench/rng.hpp"

namespace evbench {

// Event Spike Tensor: a dense (2B, H, W) grid. Channels are polarity-major:
// block 0 (channels 0..B-1) collects p = -1 events, block 1 (channels
// B..2B-1) collects p = +1, each block holding B temporal bins.

struct EstTensor {
  int bins = 0;  // B
  int height = 0;
  int width = 0;
  std::vector<double> values;  // (2B, H, W) row-major

  int channels() const { return 2 * bins; }

  double& at(int c, int y, int x) {
    return values[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return values[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  double sum() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }

  double channel_sum(int c) const {
    double s = 0.0;
    const std::size_t base = static_cast<std::size_t>(c) * height * width;
    for (std::size_t i = 0; i < static_cast<std::size_t>(height) * width; ++i) s += values[base + i];
    return s;
  }
};

inline EstTensor make_tensor(int bins, int height, int width) {
  if (bins < 1 || height < 1 || width < 1) throw ConfigError("est: tensor dims must be >= 1");
  EstTensor t;
  t.bins = bins;
  t.height = height;
  t.width = width;
  t.values.assign(static_cast<std::size_t>(2 * bins) * height * width, 0.0);
  return t;
}

// ---------------------------------------------------------------------------
// Measurement kernels
// ---------------------------------------------------------------------------

enum class KernelKind { trilinear, mlp };

inline std::size_t mlp_param_count(const std::vector<int>& layers) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l)
    n += static_cast<std::size_t>(layers[l + 1]) * layers[l] + layers[l + 1];
  return n;
}

/// Temporal measurement kernel. The trilinear kind has no parameters; the
/// mlp kind is a small scalar network over the time offset, with leaky
/// rectifier activations between layers.
struct KernelSpec {
  KernelKind kind = KernelKind::trilinear;
  std::vector<int> mlp_layers = {1, 30, 30, 1};
  std::vector<double> mlp_weights;  // per layer: W (out x in, row-major) then b
  double slope = 0.1;

  static KernelSpec trilinear() { return {}; }

  static KernelSpec mlp_random(uint64_t seed, std::vector<int> layers = {1, 30, 30, 1},
                               double slope = 0.1);
  static KernelSpec mlp_triangular();
};

inline void validate_kernel(const KernelSpec& k) {
  if (k.kind == KernelKind::trilinear) return;
  if (k.mlp_layers.size() < 2 || k.mlp_layers.front() != 1 || k.mlp_layers.back() != 1)
    throw ConfigError("kernel: mlp layer list must start and end with width 1");
  for (int w : k.mlp_layers)
    if (w < 1) throw ConfigError("kernel: non-positive layer width");
  if (k.mlp_weights.size() != mlp_param_count(k.mlp_layers))
    throw ConfigError("kernel: weight count mismatch");
}

inline KernelSpec KernelSpec::mlp_random(uint64_t seed, std::vector<int> layers, double slope) {
  KernelSpec k;
  k.kind = KernelKind::mlp;
  k.mlp_layers = std::move(layers);
  k.slope = slope;
  k.mlp_weights.resize(mlp_param_count(k.mlp_layers));
  CounterRng rng(seed);
  std::size_t pos = 0;
  for (std::size_t l = 0; l + 1 < k.mlp_layers.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(k.mlp_layers[l]));
    const std::size_t wn = static_cast<std::size_t>(k.mlp_layers[l + 1]) * k.mlp_layers[l];
    for (std::size_t i = 0; i < wn; ++i)
      k.mlp_weights[pos++] = (2.0 * rng.next_unit() - 1.0) * bound;
    pos += static_cast<std::size_t>(k.mlp_layers[l + 1]);  // biases start at zero
  }
  return k;
}

/// Weights that make the [1,30,30,1] leaky-rectifier net compute the
/// triangular bump max(0, 1 - |z|) exactly: layer 1 forms (s(z), s(-z)),
/// layer 2 forms (s(u), s(-u)) for u = 1 - |z|, and the output layer
/// resolves the leak algebraically.
inline KernelSpec KernelSpec::mlp_triangular() {
  KernelSpec k;
  k.kind = KernelKind::mlp;
  k.mlp_layers = {1, 30, 30, 1};
  k.slope = 0.1;
  k.mlp_weights.assign(mlp_param_count(k.mlp_layers), 0.0);

  const int h = 30;
  double* w1 = k.mlp_weights.data();          // 30 x 1
  double* b1 = w1 + h;                        // 30
  double* w2 = b1 + h;                        // 30 x 30
  double* b2 = w2 + h * h;                    // 30
  double* w3 = b2 + h;                        // 1 x 30
  // b3 = w3 + h, stays 0

  w1[0] = 1.0;   // a = s(z)
  w1[1] = -1.0;  // b = s(-z); a + b = 0.9 |z|
  // u = 1 - (a + b) / 0.9
  w2[0 * h + 0] = -1.0 / 0.9;
  w2[0 * h + 1] = -1.0 / 0.9;
  b2[0] = 1.0;  // c = s(u)
  w2[1 * h + 0] = 1.0 / 0.9;
  w2[1 * h + 1] = 1.0 / 0.9;
  b2[1] = -1.0;  // d = s(-u); c - d = 1.1 u
  // relu(u) = (c - 0.1 u) / 0.9 = (100 c + 10 d) / 99
  w3[0] = 100.0 / 99.0;
  w3[1] = 10.0 / 99.0;
  return k;
}

namespace detail {

struct MlpTrace {
  std::vector<std::vector<double>> pre;   // per layer, pre-activation
  std::vector<std::vector<double>> act;   // per layer, post-activation (last = output)
};

inline double mlp_forward(const KernelSpec& k, double z, MlpTrace* trace = nullptr) {
  std::vector<double> in{z};
  if (trace) {
    trace->pre.clear();
    trace->act.clear();
    trace->act.push_back(in);
  }
  std::size_t pos = 0;
  const std::size_t layer_count = k.mlp_layers.size() - 1;
  for (std::size_t l = 0; l < layer_count; ++l) {
    const int rows = k.mlp_layers[l + 1];
    const int cols = k.mlp_layers[l];
    std::vector<double> out(static_cast<std::size_t>(rows));
    for (int r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (int c = 0; c < cols; ++c) acc += k.mlp_weights[pos + static_cast<std::size_t>(r) * cols + c] * in[c];
      acc += k.mlp_weights[pos + static_cast<std::size_t>(rows) * cols + r];
      out[r] = acc;
    }
    pos += static_cast<std::size_t>(rows) * cols + rows;
    if (trace) trace->pre.push_back(out);
    if (l + 1 < layer_count)  // leaky rectifier on hidden layers only
      for (double& v : out) v = v > 0 ? v : k.slope * v;
    if (trace) trace->act.push_back(out);
    in = std::move(out);
  }
  return in[0];
}

/// Backprop d(output)/d(weights) scaled by `dout`, accumulated into `grad`
/// (same layout as mlp_weights). Returns nothing; forward values come from
/// a fresh trace to keep the call self-contained.
inline void mlp_backward(const KernelSpec& k, double z, double dout, std::span<double> grad) {
  MlpTrace trace;
  mlp_forward(k, z, &trace);

  const std::size_t layer_count = k.mlp_layers.size() - 1;
  std::vector<std::size_t> offsets(layer_count);
  std::size_t pos = 0;
  for (std::size_t l = 0; l < layer_count; ++l) {
    offsets[l] = pos;
    pos += static_cast<std::size_t>(k.mlp_layers[l + 1]) * k.mlp_layers[l] + k.mlp_layers[l + 1];
  }

  std::vector<double> delta{dout};  // d loss / d pre-activation of current layer
  for (std::size_t l = layer_count; l-- > 0;) {
    const int rows = k.mlp_layers[l + 1];
    const int cols = k.mlp_layers[l];
    const std::vector<double>& in = trace.act[l];
    const std::size_t w_off = offsets[l];
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c)
        grad[w_off + static_cast<std::size_t>(r) * cols + c] += delta[r] * in[c];
      grad[w_off + static_cast<std::size_t>(rows) * cols + r] += delta[r];
    }
    if (l == 0) break;
    std::vector<double> prev(static_cast<std::size_t>(cols), 0.0);
    for (int c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int r = 0; r < rows; ++r)
        acc += k.mlp_weights[w_off + static_cast<std::size_t>(r) * cols + c] * delta[r];
      const double pre = trace.pre[l - 1][c];
      prev[c] = acc * (pre > 0 ? 1.0 : k.slope);
    }
    delta = std::move(prev);
  }
}

/// Round to 32 fractional bits. Both w and 1-w are then exactly
/// representable, so trilinear deposits sum to exactly 1 per event and the
/// tensor total stays integer-exact for well over a million events.
inline double quantize_unit(double f) {
  return std::nearbyint(f * 4294967296.0) * (1.0 / 4294967296.0);
}

}  // namespace detail

inline double mlp_kernel_eval(const KernelSpec& k, double z) {
  validate_kernel(k);
  return detail::mlp_forward(k, z);
}

// ---------------------------------------------------------------------------
// Tensor construction
// ---------------------------------------------------------------------------

/// Per-event normalized bin coordinate t* in [0, B-1]. Zero-duration
/// streams (including single events) map everything to 0.
inline std::vector<double> normalize_time(const EventStream& stream, int bins) {
  if (bins < 1) throw ConfigError("normalize_time: bins must be >= 1");
  std::vector<double> out(stream.events.size(), 0.0);
  if (stream.events.empty()) return out;
  const int64_t t0 = stream.events.front().t;
  const int64_t span = stream.events.back().t - t0;
  if (span == 0 || bins == 1) return out;
  const double scale = static_cast<double>(bins - 1) / static_cast<double>(span);
  for (std::size_t i = 0; i < stream.events.size(); ++i)
    out[i] = static_cast<double>(stream.events[i].t - t0) * scale;
  return out;
}

inline EstTensor build_est(const EventStream& stream, int bins,
                           const KernelSpec& kernel = KernelSpec::trilinear()) {
  if (!stream.geometry.valid()) throw ConfigError("build_est: invalid geometry");
  validate_kernel(kernel);
  EstTensor tensor = make_tensor(bins, stream.geometry.height, stream.geometry.width);
  if (stream.events.empty()) return tensor;

  const std::vector<double> tstar = normalize_time(stream, bins);
  for (std::size_t i = 0; i < stream.events.size(); ++i) {
    const Event& e = stream.events[i];
    const int block = e.p > 0 ? 1 : 0;
    if (kernel.kind == KernelKind::trilinear) {
      int b0 = static_cast<int>(tstar[i]);
      double w1 = detail::quantize_unit(tstar[i] - b0);
      if (w1 == 1.0) {  // fraction rounded up to the next bin
        b0 += 1;
        w1 = 0.0;
      }
      const double w0 = 1.0 - w1;
      if (w0 != 0.0) tensor.at(block * bins + b0, e.y, e.x) += w0;
      if (w1 != 0.0 && b0 + 1 < bins) tensor.at(block * bins + b0 + 1, e.y, e.x) += w1;
    } else {
      for (int b = 0; b < bins; ++b)
        tensor.at(block * bins + b, e.y, e.x) += detail::mlp_forward(kernel, tstar[i] - b);
    }
  }
  return tensor;
}

/// Bilinear resample per channel, then rescale so each channel keeps its
/// total mass. Channels whose resample carries no mass are left as-is.
inline EstTensor crop_resize(const EstTensor& tensor, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ConfigError("crop_resize: output dims must be >= 1");
  EstTensor out = make_tensor(tensor.bins, out_h, out_w);

  const double sy = static_cast<double>(tensor.height) / out_h;
  const double sx = static_cast<double>(tensor.width) / out_w;
  for (int c = 0; c < tensor.channels(); ++c) {
    for (int i = 0; i < out_h; ++i) {
      double fy = (i + 0.5) * sy - 0.5;
      fy = std::clamp(fy, 0.0, static_cast<double>(tensor.height - 1));
      const int y0 = static_cast<int>(fy);
      const int y1 = std::min(y0 + 1, tensor.height - 1);
      const double wy = fy - y0;
      for (int j = 0; j < out_w; ++j) {
        double fx = (j + 0.5) * sx - 0.5;
        fx = std::clamp(fx, 0.0, static_cast<double>(tensor.width - 1));
        const int x0 = static_cast<int>(fx);
        const int x1 = std::min(x0 + 1, tensor.width - 1);
        const double wx = fx - x0;
        out.at(c, i, j) = (1 - wy) * ((1 - wx) * tensor.at(c, y0, x0) + wx * tensor.at(c, y0, x1)) +
                          wy * ((1 - wx) * tensor.at(c, y1, x0) + wx * tensor.at(c, y1, x1));
      }
    }
    const double want = tensor.channel_sum(c);
    const double got = out.channel_sum(c);
    if (got != 0.0) {
      const double scale = want / got;
      const std::size_t base = static_cast<std::size_t>(c) * out_h * out_w;
      for (std::size_t i = 0; i < static_cast<std::size_t>(out_h) * out_w; ++i)
        out.values[base + i] *= scale;
    }
  }
  return out;
}

/// Average-pool each channel onto a gh x gw grid and flatten channel-major.
inline std::vector<double> pool_features(const EstTensor& tensor, int grid_h, int grid_w) {
  if (grid_h < 1 || grid_w < 1) throw ConfigError("pool_features: grid dims must be >= 1");
  if (grid_h > tensor.height || grid_w > tensor.width)
    throw ConfigError("pool_features: grid exceeds tensor dims");

  std::vector<double> out(static_cast<std::size_t>(tensor.channels()) * grid_h * grid_w, 0.0);
  std::size_t k = 0;
  for (int c = 0; c < tensor.channels(); ++c)
    for (int i = 0; i < grid_h; ++i) {
      const int y0 = i * tensor.height / grid_h;
      const int y1 = (i + 1) * tensor.height / grid_h;
      for (int j = 0; j < grid_w; ++j, ++k) {
        const int x0 = j * tensor.width / grid_w;
        const int x1 = (j + 1) * tensor.width / grid_w;
        double s = 0.0;
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x) s += tensor.at(c, y, x);
        out[k] = s / (static_cast<double>(y1 - y0) * (x1 - x0));
      }
    }
  return out;
}

// ---------------------------------------------------------------------------
// Frame reconstruction
// ---------------------------------------------------------------------------

struct FrameVideo {
  int height = 0;
  int width = 0;
  int64_t window_us = 0;
  std::vector<std::vector<double>> frames;  // each H*W row-major

  double& at(std::size_t f, int y, int x) { return frames[f][static_cast<std::size_t>(y) * width + x]; }
  double at(std::size_t f, int y, int x) const {
    return frames[f][static_cast<std::size_t>(y) * width + x];
  }
};

/// Accumulate events into ceil(duration / window) frames (at least one for a
/// non-empty stream). An event landing exactly on the final boundary is
/// counted in the last frame. Signed mode adds polarity instead of 1.
inline FrameVideo reconstruct_frames(const EventStream& stream, int64_t window_us,
                                     bool signed_mode = false) {
  if (window_us < 1) throw ConfigError("reconstruct_frames: window must be >= 1 us");
  FrameVideo video;
  video.height = stream.geometry.height;
  video.width = stream.geometry.width;
  video.window_us = window_us;
  if (stream.events.empty()) return video;

  const int64_t t0 = stream.events.front().t;
  const int64_t span = duration_us(stream);
  const std::size_t count = std::max<int64_t>(1, (span + window_us - 1) / window_us);
  video.frames.assign(count, std::vector<double>(
                                 static_cast<std::size_t>(video.height) * video.width, 0.0));
  for (const Event& e : stream.events) {
    std::size_t f = static_cast<std::size_t>((e.t - t0) / window_us);
    if (f >= count) f = count - 1;
    video.at(f, e.y, e.x) += signed_mode ? static_cast<double>(e.p) : 1.0;
  }
  return video;
}

// ---------------------------------------------------------------------------
// Tensor dump: u64 LE x 4 header {2, B, H, W}, then 2B*H*W f64 LE values in
// channel-major order. Used by golden-file tests and the `repr` command.
// ---------------------------------------------------------------------------

inline void write_tensor(const EstTensor& tensor, std::ostream& sink) {
  const auto put_u64 = [&](uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    sink.write(b, 8);
  };
  put_u64(2);
  put_u64(static_cast<uint64_t>(tensor.bins));
  put_u64(static_cast<uint64_t>(tensor.height));
  put_u64(static_cast<uint64_t>(tensor.width));
  static_assert(sizeof(double) == 8);
  for (double v : tensor.values) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(bits);
  }
  if (!sink) throw IoError("write_tensor: sink write failed");
}

inline EstTensor read_tensor(std::istream& source) {
  const auto get_u64 = [&](uint64_t& v) {
    unsigned char b[8];
    source.read(reinterpret_cast<char*>(b), 8);
    if (!source) throw FormatError("tensor: truncated input");
    v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  };
  uint64_t blocks, bins, height, width;
  get_u64(blocks);
  get_u64(bins);
  get_u64(height);
  get_u64(width);
  if (blocks != 2) throw FormatError("tensor: unsupported block count");
  if (bins < 1 || height < 1 || width < 1 || bins > 1u << 16 || height > 1u << 16 ||
      width > 1u << 16)
    throw FormatError("tensor: implausible shape");
  EstTensor t = make_tensor(static_cast<int>(bins), static_cast<int>(height),
                            static_cast<int>(width));
  for (double& v : t.values) {
    uint64_t bits;
    get_u64(bits);
    std::memcpy(&v, &bits, 8);
  }
  return t;
}

inline void write_tensor_file(const EstTensor& tensor, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  write_tensor(tensor, f);
}

inline EstTensor read_tensor_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + path.string());
  return read_tensor(f);
}

}  // namespace evbench

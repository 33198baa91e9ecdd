#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "evbench/core.hpp"
#include "evbench/io.hpp"
#include "evbench/rng.hpp"

namespace evbench {

// Deterministic two-class stand-in data: a shape sweeps across the sensor
// and sheds events, +1 on its leading edge and -1 on its trailing edge.
// Class 0 defaults to a horizontally moving bar, class 1 to a vertically
// oscillating blob (oscillation comes from reflecting the trajectory at the
// sensor borders), so pooled voxel features separate them linearly.

enum class MotionShape { bar, blob };

struct MotionSpec {
  double vx = 0.0;  // pixels per millisecond
  double vy = 0.0;
  MotionShape shape = MotionShape::bar;
  double extent = 30.0;  // bar length / blob diameter, pixels
  double start_x = -1.0;  // negative = sensor centre
  double start_y = -1.0;
};

struct SynthSpec {
  SensorGeometry geometry{304, 240};
  int class_id = 0;
  int n_events = 5000;
  int64_t duration_us = 100000;
  MotionSpec motion;
  double jitter = 1.0;  // pixel std-dev
  uint64_t seed = 0;
};

namespace detail {

/// Reflect p into [lo, hi] (triangle-wave fold).
inline double reflect(double p, double lo, double hi) {
  if (hi <= lo) return lo;
  const double period = 2.0 * (hi - lo);
  double m = std::fmod(p - lo, period);
  if (m < 0) m += period;
  return lo + (m <= hi - lo ? m : period - m);
}

inline int32_t clamp_pixel(double v, int dim) {
  const auto r = static_cast<int32_t>(std::llround(v));
  return std::clamp(r, int32_t{0}, static_cast<int32_t>(dim - 1));
}

}  // namespace detail

inline void validate_spec(const SynthSpec& spec) {
  if (!spec.geometry.valid()) throw ConfigError("synth: invalid geometry");
  if (spec.n_events < 1) throw ConfigError("synth: n_events must be >= 1");
  if (spec.duration_us < 1) throw ConfigError("synth: duration must be >= 1 us");
  if (spec.motion.extent < 1 ||
      spec.motion.extent >= std::min(spec.geometry.width, spec.geometry.height))
    throw ConfigError("synth: extent must be in [1, min(width, height))");
  if (spec.jitter < 0) throw ConfigError("synth: negative jitter");
  if (spec.class_id != 0 && spec.class_id != 1) throw ConfigError("synth: class_id must be 0 or 1");
}

/// Deterministic per spec.seed. Draw order per event: edge side, lateral
/// offset (bar) or polar offsets (blob), then x and y jitter.
inline EventStream generate(const SynthSpec& spec) {
  validate_spec(spec);
  CounterRng rng(spec.seed);

  EventStream stream;
  stream.geometry = spec.geometry;
  stream.label = spec.class_id;
  stream.events.reserve(static_cast<std::size_t>(spec.n_events));

  std::vector<int64_t> times(static_cast<std::size_t>(spec.n_events));
  for (auto& t : times) t = rng.next_int(0, spec.duration_us);
  std::sort(times.begin(), times.end());

  const double w = spec.geometry.width;
  const double h = spec.geometry.height;
  const double half = spec.motion.extent / 2.0;
  const double margin = half + 1.0;
  const double sx = spec.motion.start_x >= 0 ? spec.motion.start_x : w / 2.0;
  const double sy = spec.motion.start_y >= 0 ? spec.motion.start_y : h / 2.0;

  // Unit motion direction; a static shape faces +x.
  const double speed = std::hypot(spec.motion.vx, spec.motion.vy);
  const double dir_x = speed > 0 ? spec.motion.vx / speed : 1.0;
  const double dir_y = speed > 0 ? spec.motion.vy / speed : 0.0;

  for (const int64_t t : times) {
    const double t_ms = static_cast<double>(t) / 1000.0;
    const double cx = detail::reflect(sx + spec.motion.vx * t_ms, margin, w - 1.0 - margin);
    const double cy = detail::reflect(sy + spec.motion.vy * t_ms, margin, h - 1.0 - margin);

    double ex = cx, ey = cy;
    int8_t polarity = 1;
    if (spec.motion.shape == MotionShape::bar) {
      const bool leading = rng.next_unit() < 0.5;
      const double lateral = (rng.next_unit() - 0.5) * spec.motion.extent;
      const double along = leading ? half : -half;
      ex = cx + along * dir_x - lateral * dir_y;
      ey = cy + along * dir_y + lateral * dir_x;
      polarity = leading ? 1 : -1;
    } else {
      const double angle = rng.next_unit() * 2.0 * 3.141592653589793238462643;
      const double radius = half * std::sqrt(rng.next_unit());
      const double ox = std::cos(angle), oy = std::sin(angle);
      ex = cx + radius * ox;
      ey = cy + radius * oy;
      polarity = (ox * dir_x + oy * dir_y) >= 0 ? 1 : -1;
    }
    if (spec.jitter > 0) {
      ex += rng.next_gaussian(0.0, spec.jitter);
      ey += rng.next_gaussian(0.0, spec.jitter);
    }

    Event e;
    e.x = detail::clamp_pixel(ex, spec.geometry.width);
    e.y = detail::clamp_pixel(ey, spec.geometry.height);
    e.t = t;
    e.p = polarity;
    stream.events.push_back(e);
  }
  return stream;
}

inline SynthSpec default_class_spec(int class_id, SensorGeometry geometry = {304, 240},
                                    int n_events = 5000, int64_t duration_us = 100000,
                                    double jitter = 1.0) {
  SynthSpec spec;
  spec.geometry = geometry;
  spec.class_id = class_id;
  spec.n_events = n_events;
  spec.duration_us = duration_us;
  spec.jitter = jitter;
  if (class_id == 0) {
    spec.motion.shape = MotionShape::bar;
    spec.motion.vx = 0.9;
    spec.motion.vy = 0.0;
    spec.motion.extent = std::min(40.0, std::min(geometry.width, geometry.height) / 3.0);
    spec.motion.start_x = geometry.width * 0.25;
    spec.motion.start_y = geometry.height * 0.5;
  } else {
    spec.motion.shape = MotionShape::blob;
    spec.motion.vx = 0.0;
    spec.motion.vy = 1.2;
    spec.motion.extent = std::min(30.0, std::min(geometry.width, geometry.height) / 3.0);
    spec.motion.start_x = geometry.width * 0.65;
    spec.motion.start_y = geometry.height * 0.3;
  }
  return spec;
}

/// Writes EVS1 files plus manifest.json under out_dir. Sample seeds and
/// start-position variation derive from derive_seed(seed, sample_index), so
/// identical invocations produce byte-identical files.
inline DatasetManifest generate_dataset(int per_class, const std::vector<SynthSpec>& templates,
                                        const std::filesystem::path& out_dir, uint64_t seed,
                                        std::vector<std::string> class_names = {}) {
  if (per_class < 1) throw ConfigError("generate_dataset: per_class must be >= 1");
  if (templates.empty()) throw ConfigError("generate_dataset: no class templates");
  if (class_names.empty()) {
    if (templates.size() == 2)
      class_names = {"car", "pedestrian"};
    else
      for (std::size_t c = 0; c < templates.size(); ++c)
        class_names.push_back("class" + std::to_string(c));
  }
  if (class_names.size() != templates.size())
    throw ConfigError("generate_dataset: class_names/templates size mismatch");

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create directory: " + out_dir.string());

  DatasetManifest manifest;
  manifest.classes = class_names;
  manifest.geometry = templates.front().geometry;

  for (std::size_t c = 0; c < templates.size(); ++c) {
    if (!(templates[c].geometry == manifest.geometry))
      throw ConfigError("generate_dataset: templates disagree on geometry");
    for (int j = 0; j < per_class; ++j) {
      const uint64_t index = static_cast<uint64_t>(c) * static_cast<uint64_t>(per_class) +
                             static_cast<uint64_t>(j);
      CounterRng vary(derive_seed(seed, index));

      SynthSpec spec = templates[c];
      spec.class_id = static_cast<int>(c);
      const double jig = std::min({15.0, spec.geometry.width / 8.0, spec.geometry.height / 8.0});
      const double sx = spec.motion.start_x >= 0 ? spec.motion.start_x : spec.geometry.width / 2.0;
      const double sy = spec.motion.start_y >= 0 ? spec.motion.start_y : spec.geometry.height / 2.0;
      const auto vary_start = [&](double s, int dim) {
        s += static_cast<double>(vary.next_int(-std::llround(jig), std::llround(jig)));
        return std::clamp(s, 0.0, static_cast<double>(dim - 1));
      };
      spec.motion.start_x = vary_start(sx, spec.geometry.width);
      spec.motion.start_y = vary_start(sy, spec.geometry.height);
      spec.seed = vary.next_u64();

      char id[32];
      std::snprintf(id, sizeof(id), "c%zu_s%04d", c, j);
      const std::string filename = std::string(id) + ".evs1";
      write_evs1_file(generate(spec), out_dir / filename);

      ManifestSample sample;
      sample.id = id;
      sample.path = filename;
      sample.label = static_cast<int>(c);
      manifest.samples.push_back(std::move(sample));
    }
  }
  save_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

}  // namespace evbench

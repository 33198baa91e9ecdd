#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "evbench/core.hpp"
#include "evbench/rng.hpp"

namespace evbench {

// Three corruption models over event streams, all pure functions of
// (stream, spec):
//
//   shift     x' = x + dx, y' = y + dy with dx, dy drawn uniformly from the
//             integers {-delta, ..., +delta}, delta = round(level * dim).
//             Offsets are drawn per event or once per stream; out-of-bounds
//             survivors are dropped or clamped.
//   loss      each event keeps only if its uniform draw r > level.
//   polarity  each event flips sign if its uniform draw r <= level.
//
// Draws consume a CounterRng(spec.seed) in event order; for shifts the x
// offset is drawn before the y offset. Level 0 is an exact identity.

enum class NoiseKind { none, shift_x, shift_y, shift_xy, loss, polarity };
enum class ShiftScope { per_event, per_stream };
enum class OobPolicy { drop, clamp };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::none;
  double level = 0.0;  // fraction in [0, 1]
  uint64_t seed = 0;
  ShiftScope shift_scope = ShiftScope::per_event;  // shift kinds only
  OobPolicy oob_policy = OobPolicy::drop;          // shift kinds only
};

inline std::string to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::none: return "none";
    case NoiseKind::shift_x: return "shift_x";
    case NoiseKind::shift_y: return "shift_y";
    case NoiseKind::shift_xy: return "shift_xy";
    case NoiseKind::loss: return "loss";
    case NoiseKind::polarity: return "polarity";
  }
  return "none";
}

inline NoiseKind noise_kind_from_string(const std::string& s) {
  if (s == "none" || s == "clean") return NoiseKind::none;
  if (s == "shift_x") return NoiseKind::shift_x;
  if (s == "shift_y") return NoiseKind::shift_y;
  if (s == "shift_xy") return NoiseKind::shift_xy;
  if (s == "loss") return NoiseKind::loss;
  if (s == "polarity") return NoiseKind::polarity;
  throw ConfigError("unknown noise kind: " + s);
}

inline bool is_shift(NoiseKind k) {
  return k == NoiseKind::shift_x || k == NoiseKind::shift_y || k == NoiseKind::shift_xy;
}

inline void validate_noise_spec(const NoiseSpec& spec) {
  if (!(spec.level >= 0.0 && spec.level <= 1.0))
    throw ConfigError("noise: level must be in [0, 1], got " + format_double(spec.level));
}

struct ShiftedResult {
  EventStream stream;
  std::size_t dropped_count = 0;
};

inline ShiftedResult apply_shift(const EventStream& stream, const NoiseSpec& spec) {
  validate_noise_spec(spec);
  if (!is_shift(spec.kind)) throw ConfigError("apply_shift: spec.kind is not a shift variant");

  const bool x_active = spec.kind != NoiseKind::shift_y;
  const bool y_active = spec.kind != NoiseKind::shift_x;
  const int64_t dx_max = x_active ? std::llround(spec.level * stream.geometry.width) : 0;
  const int64_t dy_max = y_active ? std::llround(spec.level * stream.geometry.height) : 0;

  ShiftedResult result;
  result.stream.geometry = stream.geometry;
  result.stream.label = stream.label;
  if (dx_max == 0 && dy_max == 0) {  // zero offset, exact identity
    result.stream.events = stream.events;
    return result;
  }

  CounterRng rng(spec.seed);
  int64_t dx = 0, dy = 0;
  if (spec.shift_scope == ShiftScope::per_stream) {
    if (dx_max > 0) dx = rng.next_int(-dx_max, dx_max);
    if (dy_max > 0) dy = rng.next_int(-dy_max, dy_max);
  }

  result.stream.events.reserve(stream.events.size());
  for (const Event& e : stream.events) {
    if (spec.shift_scope == ShiftScope::per_event) {
      if (dx_max > 0) dx = rng.next_int(-dx_max, dx_max);
      if (dy_max > 0) dy = rng.next_int(-dy_max, dy_max);
    }
    int64_t nx = e.x + dx;
    int64_t ny = e.y + dy;
    const bool oob = nx < 0 || nx >= stream.geometry.width || ny < 0 || ny >= stream.geometry.height;
    if (oob) {
      if (spec.oob_policy == OobPolicy::drop) {
        ++result.dropped_count;
        continue;
      }
      nx = std::clamp<int64_t>(nx, 0, stream.geometry.width - 1);
      ny = std::clamp<int64_t>(ny, 0, stream.geometry.height - 1);
    }
    Event out = e;
    out.x = static_cast<int32_t>(nx);
    out.y = static_cast<int32_t>(ny);
    result.stream.events.push_back(out);
  }
  return result;
}

/// Event loss: keep each event iff its uniform draw exceeds the loss rate.
/// The output is an order-preserving subsequence of the input.
inline EventStream apply_loss(const EventStream& stream, const NoiseSpec& spec) {
  validate_noise_spec(spec);
  if (spec.kind != NoiseKind::loss) throw ConfigError("apply_loss: spec.kind must be loss");

  EventStream out;
  out.geometry = stream.geometry;
  out.label = stream.label;
  if (spec.level == 0.0) {  // exact identity
    out.events = stream.events;
    return out;
  }
  CounterRng rng(spec.seed);
  out.events.reserve(stream.events.size());
  for (const Event& e : stream.events)
    if (rng.next_unit() > spec.level) out.events.push_back(e);
  return out;
}

/// Polarity reversal: flip each event's sign with probability `level`.
/// Coordinates, timestamps, count and order are untouched.
inline EventStream apply_polarity(const EventStream& stream, const NoiseSpec& spec) {
  validate_noise_spec(spec);
  if (spec.kind != NoiseKind::polarity) throw ConfigError("apply_polarity: spec.kind must be polarity");

  EventStream out = stream;
  if (spec.level == 0.0) return out;  // exact identity
  CounterRng rng(spec.seed);
  for (Event& e : out.events)
    if (rng.next_unit() <= spec.level) e.p = static_cast<int8_t>(-e.p);
  return out;
}

struct NoiseResult {
  EventStream stream;
  std::size_t dropped_count = 0;
};

inline NoiseResult apply_noise(const EventStream& stream, const NoiseSpec& spec) {
  switch (spec.kind) {
    case NoiseKind::none: {
      validate_noise_spec(spec);
      return {stream, 0};
    }
    case NoiseKind::shift_x:
    case NoiseKind::shift_y:
    case NoiseKind::shift_xy: {
      ShiftedResult r = apply_shift(stream, spec);
      return {std::move(r.stream), r.dropped_count};
    }
    case NoiseKind::loss: {
      EventStream out = apply_loss(stream, spec);
      const std::size_t dropped = stream.events.size() - out.events.size();
      return {std::move(out), dropped};
    }
    case NoiseKind::polarity:
      return {apply_polarity(stream, spec), 0};
  }
  throw ConfigError("apply_noise: unknown kind");
}

/// One clean cell followed by the cartesian product kinds x levels, in the
/// given order. Cell seeds are derive_seed(base_seed, cell_index).
inline std::vector<NoiseSpec> sweep_grid(const std::vector<NoiseKind>& kinds,
                                         const std::vector<double>& levels, uint64_t base_seed = 0,
                                         ShiftScope scope = ShiftScope::per_event,
                                         OobPolicy oob = OobPolicy::drop) {
  for (double l : levels)
    if (!(l >= 0.0 && l <= 1.0)) throw ConfigError("sweep_grid: level outside [0, 1]");
  if (levels.empty() && !kinds.empty()) throw ConfigError("sweep_grid: empty level list");

  std::vector<NoiseSpec> grid;
  grid.reserve(1 + kinds.size() * levels.size());
  NoiseSpec clean;
  clean.kind = NoiseKind::none;
  clean.level = 0.0;
  clean.seed = derive_seed(base_seed, 0);
  grid.push_back(clean);

  uint64_t cell = 1;
  for (const NoiseKind kind : kinds)
    for (const double level : levels) {
      NoiseSpec spec;
      spec.kind = kind;
      spec.level = level;
      spec.seed = derive_seed(base_seed, cell++);
      spec.shift_scope = scope;
      spec.oob_policy = oob;
      grid.push_back(spec);
    }
  return grid;
}

inline std::vector<NoiseKind> default_sweep_kinds() {
  return {NoiseKind::shift_x, NoiseKind::shift_y, NoiseKind::loss, NoiseKind::polarity};
}

inline std::vector<double> default_sweep_levels() { return {0.05, 0.10, 0.15, 0.20}; }

}  // namespace evbench

#pragma once

#include <cstdint>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace evbench {

// Error categories, mapped to CLI exit codes (see tools/ and README):
//   ConfigError  -> 2   invalid configuration, arguments, or input validation
//   IoError      -> 3   filesystem / stream failures
//   FormatError  -> 2   malformed input files (bad magic, truncation, ...)
//   NumericError -> 4   numeric failures (divergence, non-finite results)
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SensorGeometry {
  int width = 0;
  int height = 0;

  bool valid() const { return width >= 1 && height >= 1; }
  bool operator==(const SensorGeometry&) const = default;
};

/// One brightness-change event. Polarity is -1 (decrease) or +1 (increase);
/// {0,1}-encoded polarities are mapped to {-1,+1} at I/O boundaries.
struct Event {
  int32_t x = 0;
  int32_t y = 0;
  int64_t t = 0;  // microseconds, >= 0
  int8_t p = 1;

  bool operator==(const Event&) const = default;
};

/// Ordered event sequence plus the geometry it was recorded on.
/// Events are sorted by t (non-decreasing, ties keep input order) and all
/// coordinates lie inside the geometry. Treated as immutable after
/// construction; every transform returns a new stream.
struct EventStream {
  SensorGeometry geometry;
  std::vector<Event> events;
  std::optional<int> label;

  bool operator==(const EventStream&) const = default;
};

struct ValidationResult {
  bool ok = true;
  std::size_t index = 0;  // first offending event
  std::string reason;

  explicit operator bool() const { return ok; }
};

inline ValidationResult validate(const EventStream& s) {
  if (!s.geometry.valid())
    return {false, 0, "invalid geometry"};
  int64_t prev_t = 0;
  for (std::size_t i = 0; i < s.events.size(); ++i) {
    const Event& e = s.events[i];
    if (e.x < 0 || e.x >= s.geometry.width)
      return {false, i, "x out of bounds"};
    if (e.y < 0 || e.y >= s.geometry.height)
      return {false, i, "y out of bounds"};
    if (e.p != -1 && e.p != 1)
      return {false, i, "invalid polarity"};
    if (e.t < 0)
      return {false, i, "negative timestamp"};
    if (i > 0 && e.t < prev_t)
      return {false, i, "timestamp order"};
    prev_t = e.t;
  }
  return {};
}

/// t_last - t_first; 0 for streams with fewer than two events.
inline int64_t duration_us(const EventStream& s) {
  if (s.events.size() < 2) return 0;
  return s.events.back().t - s.events.front().t;
}

/// Fixed-precision double formatting; a single code path keeps emitted
/// files byte-stable across reruns.
inline std::string format_double(double v, int significant = 12) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", significant, v);
  return buf;
}

/// FNV-1a 64-bit; used for config hashes and determinism checks.
inline uint64_t fnv1a64(std::string_view bytes, uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace evbench

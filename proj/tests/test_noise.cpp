#include "evbench/noise.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "evbench/rng.hpp"

namespace evbench {
namespace {

EventStream uniform_stream(uint64_t seed, int n, SensorGeometry geom = {304, 240}) {
  CounterRng rng(seed);
  EventStream s;
  s.geometry = geom;
  std::vector<int64_t> times(static_cast<std::size_t>(n));
  for (auto& t : times) t = rng.next_int(0, 100000);
  std::sort(times.begin(), times.end());
  for (int i = 0; i < n; ++i) {
    Event e;
    e.x = static_cast<int32_t>(rng.next_int(0, geom.width - 1));
    e.y = static_cast<int32_t>(rng.next_int(0, geom.height - 1));
    e.t = times[static_cast<std::size_t>(i)];
    e.p = rng.next_unit() < 0.5 ? -1 : 1;
    s.events.push_back(e);
  }
  return s;
}

NoiseSpec spec_of(NoiseKind kind, double level, uint64_t seed) {
  NoiseSpec s;
  s.kind = kind;
  s.level = level;
  s.seed = seed;
  return s;
}

TEST(Shift, MagnitudeScalesWithGeometry) {
  // level 0.05 on a 304 x 240 sensor: max offset 15 along x, 12 along y.
  const EventStream s = uniform_stream(1, 4000);
  {
    NoiseSpec spec = spec_of(NoiseKind::shift_x, 0.05, 7);
    spec.oob_policy = OobPolicy::clamp;
    const ShiftedResult r = apply_shift(s, spec);
    ASSERT_EQ(r.stream.events.size(), s.events.size());
    int64_t max_dx = 0;
    for (std::size_t i = 0; i < s.events.size(); ++i) {
      max_dx = std::max<int64_t>(max_dx, std::abs(r.stream.events[i].x - s.events[i].x));
      EXPECT_EQ(r.stream.events[i].y, s.events[i].y);
      EXPECT_EQ(r.stream.events[i].t, s.events[i].t);
      EXPECT_EQ(r.stream.events[i].p, s.events[i].p);
    }
    EXPECT_LE(max_dx, 15);
    EXPECT_GT(max_dx, 12);  // the extreme offsets actually occur
  }
  {
    NoiseSpec spec = spec_of(NoiseKind::shift_y, 0.05, 7);
    spec.oob_policy = OobPolicy::clamp;
    const ShiftedResult r = apply_shift(s, spec);
    int64_t max_dy = 0;
    for (std::size_t i = 0; i < s.events.size(); ++i) {
      max_dy = std::max<int64_t>(max_dy, std::abs(r.stream.events[i].y - s.events[i].y));
      EXPECT_EQ(r.stream.events[i].x, s.events[i].x);
    }
    EXPECT_LE(max_dy, 12);
    EXPECT_GT(max_dy, 9);
  }
}

TEST(Shift, DropPolicyCountsAndRemoves) {
  const EventStream s = uniform_stream(2, 5000);
  NoiseSpec spec = spec_of(NoiseKind::shift_xy, 0.2, 3);
  const ShiftedResult r = apply_shift(s, spec);
  EXPECT_EQ(r.stream.events.size() + r.dropped_count, s.events.size());
  EXPECT_GT(r.dropped_count, 0u);
  EXPECT_TRUE(validate(r.stream).ok);
}

TEST(Shift, ClampPolicyKeepsCount) {
  const EventStream s = uniform_stream(2, 5000);
  NoiseSpec spec = spec_of(NoiseKind::shift_xy, 0.2, 3);
  spec.oob_policy = OobPolicy::clamp;
  const ShiftedResult r = apply_shift(s, spec);
  EXPECT_EQ(r.stream.events.size(), s.events.size());
  EXPECT_EQ(r.dropped_count, 0u);
  EXPECT_TRUE(validate(r.stream).ok);
}

TEST(Shift, PerStreamUsesOneOffset) {
  const EventStream s = uniform_stream(4, 3000);
  NoiseSpec spec = spec_of(NoiseKind::shift_xy, 0.1, 9);
  spec.shift_scope = ShiftScope::per_stream;
  spec.oob_policy = OobPolicy::clamp;
  const ShiftedResult r = apply_shift(s, spec);
  std::set<std::pair<int64_t, int64_t>> offsets;
  for (std::size_t i = 0; i < s.events.size(); ++i) {
    const Event& a = s.events[i];
    const Event& b = r.stream.events[i];
    // clamped events can deviate; gather offsets of interior events only
    if (b.x > 0 && b.x < s.geometry.width - 1 && b.y > 0 && b.y < s.geometry.height - 1)
      offsets.insert({b.x - a.x, b.y - a.y});
  }
  EXPECT_EQ(offsets.size(), 1u);
}

TEST(Shift, LevelZeroIsExactIdentity) {
  const EventStream s = uniform_stream(5, 1000);
  for (const NoiseKind kind : {NoiseKind::shift_x, NoiseKind::shift_y, NoiseKind::shift_xy}) {
    const ShiftedResult r = apply_shift(s, spec_of(kind, 0.0, 123));
    EXPECT_EQ(r.stream.events, s.events);
    EXPECT_EQ(r.dropped_count, 0u);
  }
}

TEST(Loss, LevelZeroIsExactIdentity) {
  const EventStream s = uniform_stream(6, 1000);
  EXPECT_EQ(apply_loss(s, spec_of(NoiseKind::loss, 0.0, 55)).events, s.events);
}

TEST(Loss, OutputIsOrderPreservingSubsequence) {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const EventStream s = uniform_stream(seed, 500, {32, 32});
    const EventStream out = apply_loss(s, spec_of(NoiseKind::loss, 0.3, seed + 100));
    std::size_t j = 0;
    for (const Event& e : s.events) {
      if (j < out.events.size() && out.events[j] == e) ++j;
    }
    EXPECT_EQ(j, out.events.size());
  }
}

TEST(Loss, RetentionTracksLevel) {
  const EventStream s = uniform_stream(7, 10000);
  for (const double level : {0.05, 0.1, 0.2}) {
    const EventStream out = apply_loss(s, spec_of(NoiseKind::loss, level, 77));
    const double frac = static_cast<double>(out.events.size()) / 10000.0;
    const double sigma = std::sqrt(level * (1 - level) / 10000.0);
    EXPECT_NEAR(frac, 1.0 - level, 4 * sigma);
  }
}

TEST(Loss, FullLossRemovesEverything) {
  const EventStream s = uniform_stream(8, 100);
  EXPECT_TRUE(apply_loss(s, spec_of(NoiseKind::loss, 1.0, 1)).events.empty());
}

TEST(Polarity, OnlySignsChange) {
  const EventStream s = uniform_stream(9, 2000);
  const EventStream out = apply_polarity(s, spec_of(NoiseKind::polarity, 0.3, 5));
  ASSERT_EQ(out.events.size(), s.events.size());
  int flipped = 0;
  for (std::size_t i = 0; i < s.events.size(); ++i) {
    EXPECT_EQ(out.events[i].x, s.events[i].x);
    EXPECT_EQ(out.events[i].y, s.events[i].y);
    EXPECT_EQ(out.events[i].t, s.events[i].t);
    if (out.events[i].p != s.events[i].p) {
      EXPECT_EQ(out.events[i].p, -s.events[i].p);
      ++flipped;
    }
  }
  EXPECT_GT(flipped, 0);
}

TEST(Polarity, FullReversalTwiceIsIdentity) {
  const EventStream s = uniform_stream(10, 500);
  const EventStream once = apply_polarity(s, spec_of(NoiseKind::polarity, 1.0, 3));
  for (std::size_t i = 0; i < s.events.size(); ++i)
    EXPECT_EQ(once.events[i].p, -s.events[i].p);
  const EventStream twice = apply_polarity(once, spec_of(NoiseKind::polarity, 1.0, 99));
  EXPECT_EQ(twice.events, s.events);
}

TEST(Polarity, FlipCountWithinBinomialWindow) {
  // level 0.5 over 10,000 events: expect 5000 +- 3 sigma = [4850, 5150].
  const EventStream s = uniform_stream(11, 10000);
  const EventStream out = apply_polarity(s, spec_of(NoiseKind::polarity, 0.5, 2024));
  int flipped = 0;
  for (std::size_t i = 0; i < s.events.size(); ++i)
    if (out.events[i].p != s.events[i].p) ++flipped;
  EXPECT_GE(flipped, 4850);
  EXPECT_LE(flipped, 5150);
}

TEST(Noise, DispatchAndValidation) {
  const EventStream s = uniform_stream(12, 100);
  const NoiseResult none = apply_noise(s, spec_of(NoiseKind::none, 0.0, 1));
  EXPECT_EQ(none.stream, s);
  EXPECT_EQ(none.dropped_count, 0u);

  EXPECT_THROW(apply_noise(s, spec_of(NoiseKind::loss, 1.2, 1)), ConfigError);
  EXPECT_THROW(apply_noise(s, spec_of(NoiseKind::loss, -0.1, 1)), ConfigError);
  EXPECT_THROW(apply_loss(s, spec_of(NoiseKind::polarity, 0.1, 1)), ConfigError);
  EXPECT_THROW(apply_polarity(s, spec_of(NoiseKind::loss, 0.1, 1)), ConfigError);
  EXPECT_THROW(apply_shift(s, spec_of(NoiseKind::loss, 0.1, 1)), ConfigError);

  const NoiseResult shifted = apply_noise(s, spec_of(NoiseKind::shift_x, 0.3, 1));
  EXPECT_EQ(shifted.stream.events.size() + shifted.dropped_count, s.events.size());

  const NoiseResult lossy = apply_noise(s, spec_of(NoiseKind::loss, 0.4, 1));
  EXPECT_EQ(lossy.stream.events.size() + lossy.dropped_count, s.events.size());
  EXPECT_GT(lossy.dropped_count, 0u);
}

TEST(Noise, KindNamesRoundTrip) {
  for (const NoiseKind k : {NoiseKind::none, NoiseKind::shift_x, NoiseKind::shift_y,
                            NoiseKind::shift_xy, NoiseKind::loss, NoiseKind::polarity})
    EXPECT_EQ(noise_kind_from_string(to_string(k)), k);
  EXPECT_EQ(noise_kind_from_string("clean"), NoiseKind::none);
  EXPECT_THROW(noise_kind_from_string("blur"), ConfigError);
}

TEST(SweepGrid, CleanCellPlusCartesianProduct) {
  const std::vector<NoiseSpec> grid =
      sweep_grid(default_sweep_kinds(), default_sweep_levels(), 42);
  ASSERT_EQ(grid.size(), 17u);
  EXPECT_EQ(grid[0].kind, NoiseKind::none);
  EXPECT_EQ(grid[0].level, 0.0);
  EXPECT_EQ(grid[1].kind, NoiseKind::shift_x);
  EXPECT_EQ(grid[1].level, 0.05);
  EXPECT_EQ(grid[16].kind, NoiseKind::polarity);
  EXPECT_EQ(grid[16].level, 0.20);

  std::set<uint64_t> seeds;
  for (const NoiseSpec& cell : grid) seeds.insert(cell.seed);
  EXPECT_EQ(seeds.size(), grid.size());

  const std::vector<NoiseSpec> again =
      sweep_grid(default_sweep_kinds(), default_sweep_levels(), 42);
  for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_EQ(grid[i].seed, again[i].seed);
}

TEST(SweepGrid, RejectsBadLevels) {
  EXPECT_THROW(sweep_grid({NoiseKind::loss}, {1.5}, 0), ConfigError);
  EXPECT_THROW(sweep_grid({NoiseKind::loss}, {}, 0), ConfigError);
}

}  // namespace
}  // namespace evbench

#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "evbench/core.hpp"
#include "evbench/rng.hpp"

#include "json.hpp"

namespace evbench {

// ---------------------------------------------------------------------------
// EVS1 binary event format
//
//   magic  "EVS1"            4 bytes
//   width  u16 LE            2 bytes
//   height u16 LE            2 bytes
//   count  u64 LE            8 bytes
//   events count * 13 bytes: x u16 LE | y u16 LE | t i64 LE | p i8
//
// p is -1 or +1; a 0 byte is accepted on read and mapped to -1, everything
// else is rejected. Total file size is 16 + 13 * count bytes.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

inline void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline uint16_t get_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

inline uint64_t get_u64(const unsigned char* p) {
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace detail

inline std::size_t write_evs1(const EventStream& stream, std::ostream& sink) {
  if (auto v = validate(stream); !v)
    throw ConfigError("write_evs1: invalid stream at event " + std::to_string(v.index) +
                      ": " + v.reason);
  if (stream.geometry.width > 0xFFFF || stream.geometry.height > 0xFFFF)
    throw ConfigError("write_evs1: geometry exceeds the 16-bit format limit");

  std::string buf;
  buf.reserve(16 + 13 * stream.events.size());
  buf += "EVS1";
  detail::put_u16(buf, static_cast<uint16_t>(stream.geometry.width));
  detail::put_u16(buf, static_cast<uint16_t>(stream.geometry.height));
  detail::put_u64(buf, stream.events.size());
  for (const Event& e : stream.events) {
    detail::put_u16(buf, static_cast<uint16_t>(e.x));
    detail::put_u16(buf, static_cast<uint16_t>(e.y));
    detail::put_u64(buf, static_cast<uint64_t>(e.t));
    buf.push_back(static_cast<char>(e.p));
  }
  sink.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!sink) throw IoError("write_evs1: sink write failed");
  return buf.size();
}

inline EventStream read_evs1(std::istream& source, std::optional<int> label = std::nullopt) {
  std::string bytes((std::istreambuf_iterator<char>(source)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16) throw FormatError("evs1: truncated header");
  if (std::memcmp(bytes.data(), "EVS1", 4) != 0) throw FormatError("evs1: bad magic");

  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  EventStream stream;
  stream.label = label;
  stream.geometry.width = detail::get_u16(p + 4);
  stream.geometry.height = detail::get_u16(p + 6);
  const uint64_t count = detail::get_u64(p + 8);
  const std::size_t expected = 16 + 13 * count;
  if (bytes.size() != expected)
    throw FormatError("evs1: truncated payload (expected " + std::to_string(expected) +
                      " bytes, got " + std::to_string(bytes.size()) + ")");

  stream.events.resize(count);
  const unsigned char* q = p + 16;
  for (uint64_t i = 0; i < count; ++i, q += 13) {
    Event& e = stream.events[i];
    e.x = detail::get_u16(q);
    e.y = detail::get_u16(q + 2);
    e.t = static_cast<int64_t>(detail::get_u64(q + 4));
    const auto raw = static_cast<int8_t>(q[12]);
    if (raw == 0)
      e.p = -1;  // {0,1} boundary encoding
    else if (raw == -1 || raw == 1)
      e.p = raw;
    else
      throw FormatError("evs1: invalid polarity at event " + std::to_string(i));
  }
  if (auto v = validate(stream); !v)
    throw FormatError("evs1: " + v.reason + " at event " + std::to_string(v.index));
  return stream;
}

inline std::size_t write_evs1_file(const EventStream& stream, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  return write_evs1(stream, f);
}

inline EventStream read_evs1_file(const std::filesystem::path& path,
                                  std::optional<int> label = std::nullopt) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + path.string());
  return read_evs1(f, label);
}

// ---------------------------------------------------------------------------
// EVT-CSV: header line exactly "x,y,t,p", then one event per line. Polarity
// is written as -1/1; 0 is accepted on read and mapped to -1.
// ---------------------------------------------------------------------------

inline std::size_t write_csv(const EventStream& stream, std::ostream& sink) {
  if (auto v = validate(stream); !v)
    throw ConfigError("write_csv: invalid stream at event " + std::to_string(v.index) + ": " +
                      v.reason);
  std::string buf = "x,y,t,p\n";
  char line[80];
  for (const Event& e : stream.events) {
    const int n = std::snprintf(line, sizeof(line), "%d,%d,%lld,%d\n", e.x, e.y,
                                static_cast<long long>(e.t), static_cast<int>(e.p));
    buf.append(line, static_cast<std::size_t>(n));
  }
  sink.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!sink) throw IoError("write_csv: sink write failed");
  return buf.size();
}

namespace detail {

inline int64_t parse_int(std::string_view field, int line_no) {
  int64_t value = 0;
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last)
    throw FormatError("csv: malformed line " + std::to_string(line_no));
  return value;
}

}  // namespace detail

inline EventStream read_csv(std::istream& source, SensorGeometry geometry,
                            std::optional<int> label = std::nullopt) {
  EventStream stream;
  stream.geometry = geometry;
  stream.label = label;

  std::string line;
  int line_no = 0;
  while (std::getline(source, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != "x,y,t,p") throw FormatError("csv: header mismatch, expected \"x,y,t,p\"");
      continue;
    }
    if (line.empty()) continue;

    std::array<std::string_view, 4> fields;
    std::string_view rest = line;
    for (int f = 0; f < 4; ++f) {
      const auto comma = rest.find(',');
      if (f < 3) {
        if (comma == std::string_view::npos)
          throw FormatError("csv: malformed line " + std::to_string(line_no));
        fields[f] = rest.substr(0, comma);
        rest.remove_prefix(comma + 1);
      } else {
        if (comma != std::string_view::npos)
          throw FormatError("csv: malformed line " + std::to_string(line_no));
        fields[f] = rest;
      }
    }

    Event e;
    e.x = static_cast<int32_t>(detail::parse_int(fields[0], line_no));
    e.y = static_cast<int32_t>(detail::parse_int(fields[1], line_no));
    e.t = detail::parse_int(fields[2], line_no);
    const int64_t p = detail::parse_int(fields[3], line_no);
    if (p == 0)
      e.p = -1;
    else if (p == -1 || p == 1)
      e.p = static_cast<int8_t>(p);
    else
      throw FormatError("csv: invalid polarity at line " + std::to_string(line_no));
    stream.events.push_back(e);
  }
  if (line_no == 0) throw FormatError("csv: header mismatch, empty input");
  if (auto v = validate(stream); !v)
    throw FormatError("csv: " + v.reason + " at event " + std::to_string(v.index));
  return stream;
}

inline EventStream read_csv_file(const std::filesystem::path& path, SensorGeometry geometry,
                                 std::optional<int> label = std::nullopt) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + path.string());
  return read_csv(f, geometry, label);
}

inline std::size_t write_csv_file(const EventStream& stream, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  return write_csv(stream, f);
}

// ---------------------------------------------------------------------------
// Dataset manifest (manifest.json)
// ---------------------------------------------------------------------------

struct ManifestSample {
  std::string id;
  std::string path;  // relative to the manifest file's directory unless absolute
  int label = 0;
  std::string split = "train";  // train | val | test
  std::optional<int> fold;

  bool operator==(const ManifestSample&) const = default;
};

struct DatasetManifest {
  std::vector<std::string> classes;
  SensorGeometry geometry;
  std::vector<ManifestSample> samples;

  bool operator==(const DatasetManifest&) const = default;

  std::vector<std::size_t> indices_of_split(std::string_view split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (samples[i].split == split) out.push_back(i);
    return out;
  }

  std::vector<std::size_t> indices_of_class(int label) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (samples[i].label == label) out.push_back(i);
    return out;
  }
};

inline void validate_manifest(const DatasetManifest& m) {
  if (m.classes.empty()) throw ConfigError("manifest: class list is empty");
  if (!m.geometry.valid()) throw ConfigError("manifest: invalid geometry");
  std::set<std::string> ids;
  for (const auto& s : m.samples) {
    if (!ids.insert(s.id).second) throw ConfigError("manifest: duplicate sample id " + s.id);
    if (s.label < 0 || s.label >= static_cast<int>(m.classes.size()))
      throw ConfigError("manifest: label out of range for sample " + s.id);
    if (s.split != "train" && s.split != "val" && s.split != "test")
      throw ConfigError("manifest: unknown split \"" + s.split + "\" for sample " + s.id);
  }
}

inline nlohmann::ordered_json manifest_to_json(const DatasetManifest& m) {
  nlohmann::ordered_json j;
  j["classes"] = m.classes;
  j["geometry"] = {{"width", m.geometry.width}, {"height", m.geometry.height}};
  j["samples"] = nlohmann::ordered_json::array();
  for (const auto& s : m.samples) {
    nlohmann::ordered_json js;
    js["id"] = s.id;
    js["path"] = s.path;
    js["label"] = s.label;
    js["split"] = s.split;
    if (s.fold) js["fold"] = *s.fold;
    j["samples"].push_back(std::move(js));
  }
  return j;
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    m.classes = j.at("classes").get<std::vector<std::string>>();
    m.geometry.width = j.at("geometry").at("width").get<int>();
    m.geometry.height = j.at("geometry").at("height").get<int>();
    for (const auto& js : j.at("samples")) {
      ManifestSample s;
      s.id = js.at("id").get<std::string>();
      s.path = js.at("path").get<std::string>();
      s.label = js.at("label").get<int>();
      s.split = js.value("split", "train");
      if (js.contains("fold")) s.fold = js.at("fold").get<int>();
      m.samples.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  validate_manifest(m);
  return m;
}

inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  validate_manifest(m);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f << manifest_to_json(m).dump(2) << '\n';
  if (!f) throw IoError("manifest write failed: " + path.string());
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest: " + std::string(e.what()));
  }
  return manifest_from_json(j);
}

/// Resolve a sample path against the directory its manifest was loaded from.
inline std::filesystem::path resolve_sample_path(const std::filesystem::path& manifest_dir,
                                                 const ManifestSample& s) {
  std::filesystem::path p(s.path);
  return p.is_absolute() ? p : manifest_dir / p;
}

// ---------------------------------------------------------------------------
// Stratified splitting and k-fold assignment
// ---------------------------------------------------------------------------

struct SplitRatios {
  double train = 0.7;
  double val = 0.15;
  double test = 0.15;
};

namespace detail {

inline void seeded_shuffle(std::vector<std::size_t>& v, CounterRng& rng) {
  for (std::size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[static_cast<std::size_t>(rng.next_int(0, static_cast<int64_t>(i) - 1))]);
}

/// Largest-remainder apportionment of n into three parts; ties go to the
/// earlier split so results are deterministic.
inline std::array<std::size_t, 3> largest_remainder_sizes(std::size_t n, const SplitRatios& r) {
  const std::array<double, 3> target = {n * r.train, n * r.val, n * r.test};
  std::array<std::size_t, 3> size{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    size[i] = static_cast<std::size_t>(target[i]);
    frac[i] = target[i] - static_cast<double>(size[i]);
    assigned += size[i];
  }
  std::array<int, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) size[order[k % 3]] += 1;
  return size;
}

}  // namespace detail

/// Stratified train/val/test assignment. Per class, sample order is shuffled
/// with a generator seeded by derive_seed(seed, class_id), then cut at the
/// largest-remainder sizes. Pure function of (manifest, ratios, seed).
inline DatasetManifest split_dataset(const DatasetManifest& manifest, const SplitRatios& ratios,
                                     uint64_t seed) {
  validate_manifest(manifest);
  const double sum = ratios.train + ratios.val + ratios.test;
  if (std::abs(sum - 1.0) > 1e-9)
    throw ConfigError("split_dataset: ratios must sum to 1, got " + format_double(sum));
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0)
    throw ConfigError("split_dataset: negative ratio");

  DatasetManifest out = manifest;
  static constexpr const char* kNames[3] = {"train", "val", "test"};
  for (int c = 0; c < static_cast<int>(manifest.classes.size()); ++c) {
    std::vector<std::size_t> idx = manifest.indices_of_class(c);
    if (idx.empty())
      throw ConfigError("split_dataset: class " + manifest.classes[c] + " has no samples");
    CounterRng rng(derive_seed(seed, static_cast<uint64_t>(c)));
    detail::seeded_shuffle(idx, rng);
    const auto sizes = detail::largest_remainder_sizes(idx.size(), ratios);
    std::size_t pos = 0;
    for (int part = 0; part < 3; ++part)
      for (std::size_t k = 0; k < sizes[part]; ++k) out.samples[idx[pos++]].split = kNames[part];
  }
  return out;
}

struct FoldAssignment {
  int k = 0;
  std::map<std::string, int> fold_of;  // sample id -> fold in [0, k)
};

/// Stratified fold labels for `labels`, deterministic per seed. Within each
/// class the shuffled order is dealt round-robin, so per-class fold sizes
/// differ by at most one.
inline std::vector<int> stratified_folds(const std::vector<int>& labels, int num_classes, int k,
                                         uint64_t seed) {
  if (k < 2) throw ConfigError("kfold: k must be >= 2");
  std::vector<int> fold(labels.size(), -1);
  for (int c = 0; c < num_classes; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c) idx.push_back(i);
    if (static_cast<int>(idx.size()) < k)
      throw ConfigError("kfold: class " + std::to_string(c) + " has " +
                        std::to_string(idx.size()) + " samples, fewer than k=" + std::to_string(k));
    CounterRng rng(derive_seed(seed, static_cast<uint64_t>(c)));
    detail::seeded_shuffle(idx, rng);
    for (std::size_t i = 0; i < idx.size(); ++i) fold[idx[i]] = static_cast<int>(i) % k;
  }
  return fold;
}

inline FoldAssignment kfold(const DatasetManifest& manifest, int k, uint64_t seed) {
  validate_manifest(manifest);
  std::vector<int> labels(manifest.samples.size());
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) labels[i] = manifest.samples[i].label;
  const std::vector<int> fold =
      stratified_folds(labels, static_cast<int>(manifest.classes.size()), k, seed);
  FoldAssignment fa;
  fa.k = k;
  for (std::size_t i = 0; i < manifest.samples.size(); ++i)
    fa.fold_of[manifest.samples[i].id] = fold[i];
  return fa;
}

inline DatasetManifest apply_folds(const DatasetManifest& manifest, const FoldAssignment& fa) {
  DatasetManifest out = manifest;
  for (auto& s : out.samples) {
    const auto it = fa.fold_of.find(s.id);
    if (it == fa.fold_of.end()) throw ConfigError("apply_folds: no fold for sample " + s.id);
    s.fold = it->second;
  }
  return out;
}

}  // namespace evbench

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "evbench/core.hpp"

#include "json.hpp"

namespace evbench {

// ---------------------------------------------------------------------------
// Confusion matrix and per-class report
// ---------------------------------------------------------------------------

struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<int64_t> counts;  // rows = true class, cols = predicted

  int64_t& at(int truth, int pred) {
    return counts[static_cast<std::size_t>(truth) * num_classes + pred];
  }
  int64_t at(int truth, int pred) const {
    return counts[static_cast<std::size_t>(truth) * num_classes + pred];
  }

  int64_t total() const { return std::accumulate(counts.begin(), counts.end(), int64_t{0}); }
  int64_t trace() const {
    int64_t s = 0;
    for (int i = 0; i < num_classes; ++i) s += at(i, i);
    return s;
  }
  int64_t row_sum(int truth) const {
    int64_t s = 0;
    for (int j = 0; j < num_classes; ++j) s += at(truth, j);
    return s;
  }
  int64_t col_sum(int pred) const {
    int64_t s = 0;
    for (int i = 0; i < num_classes; ++i) s += at(i, pred);
    return s;
  }
};

inline ConfusionMatrix make_confusion(int num_classes) {
  if (num_classes < 2) throw ConfigError("confusion: need at least 2 classes");
  ConfusionMatrix cm;
  cm.num_classes = num_classes;
  cm.counts.assign(static_cast<std::size_t>(num_classes) * num_classes, 0);
  return cm;
}

inline ConfusionMatrix confusion(const std::vector<int>& truth, const std::vector<int>& pred,
                                 int num_classes) {
  if (truth.size() != pred.size()) throw ConfigError("confusion: length mismatch");
  ConfusionMatrix cm = make_confusion(num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= num_classes || pred[i] < 0 || pred[i] >= num_classes)
      throw ConfigError("confusion: label out of range");
    ++cm.at(truth[i], pred[i]);
  }
  return cm;
}

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int64_t support = 0;
  bool zero_division = false;  // some denominator was 0 and the metric was forced to 0
};

struct EvalReport {
  ConfusionMatrix confusion;
  std::vector<ClassMetrics> per_class;
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;  // equals accuracy by construction
  double weighted_f1 = 0.0;
  double auc = -1.0;  // -1 when no scores were supplied
  double ap = -1.0;
};

/// Precision, recall and F1 per class plus macro / support-weighted
/// averages. Zero denominators yield 0 and set the zero_division flag.
/// Weighted recall is computed as trace/total, which is algebraically the
/// same sum and makes the equality with accuracy exact.
inline EvalReport classification_report(const ConfusionMatrix& cm) {
  EvalReport rep;
  rep.confusion = cm;
  rep.per_class.resize(cm.num_classes);
  const int64_t total = cm.total();
  if (total == 0) throw ConfigError("classification_report: empty confusion matrix");

  for (int c = 0; c < cm.num_classes; ++c) {
    ClassMetrics& m = rep.per_class[c];
    const int64_t tp = cm.at(c, c);
    const int64_t pred = cm.col_sum(c);
    const int64_t truth = cm.row_sum(c);
    m.support = truth;
    if (pred == 0) m.zero_division = true;
    else m.precision = static_cast<double>(tp) / pred;
    if (truth == 0) m.zero_division = true;
    else m.recall = static_cast<double>(tp) / truth;
    const double pr = m.precision + m.recall;
    if (pr == 0.0) m.zero_division = true;
    else m.f1 = 2.0 * m.precision * m.recall / pr;
  }

  rep.accuracy = static_cast<double>(cm.trace()) / total;
  for (const ClassMetrics& m : rep.per_class) {
    rep.macro_precision += m.precision;
    rep.macro_recall += m.recall;
    rep.macro_f1 += m.f1;
    rep.weighted_precision += m.precision * m.support;
    rep.weighted_f1 += m.f1 * m.support;
  }
  rep.macro_precision /= cm.num_classes;
  rep.macro_recall /= cm.num_classes;
  rep.macro_f1 /= cm.num_classes;
  rep.weighted_precision /= total;
  rep.weighted_f1 /= total;
  rep.weighted_recall = rep.accuracy;
  return rep;
}

// ---------------------------------------------------------------------------
// Threshold curves
// ---------------------------------------------------------------------------

struct Curve {
  std::string kind;  // "roc" or "pr"
  std::vector<double> x;  // roc: FPR, pr: recall
  std::vector<double> y;  // roc: TPR, pr: precision
  std::vector<double> thresholds;
  double area = 0.0;  // roc: AUC (trapezoid), pr: AP (step)
};

namespace detail {

struct ScoreGroup {
  double threshold;
  int64_t pos;  // positives with exactly this score
  int64_t neg;
};

/// Collapse (score, label) pairs into distinct score groups, descending.
inline std::vector<ScoreGroup> score_groups(const std::vector<double>& scores,
                                            const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw ConfigError("curve: length mismatch");
  if (scores.empty()) throw ConfigError("curve: empty input");
  std::map<double, std::pair<int64_t, int64_t>, std::greater<double>> acc;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ConfigError("curve: labels must be 0 or 1");
    auto& cell = acc[scores[i]];
    if (labels[i] == 1) ++cell.first;
    else ++cell.second;
  }
  std::vector<ScoreGroup> groups;
  groups.reserve(acc.size());
  for (const auto& [thr, pn] : acc) groups.push_back({thr, pn.first, pn.second});
  return groups;
}

}  // namespace detail

/// ROC curve over distinct thresholds (descending) with an implicit (0,0)
/// anchor; area by the trapezoid rule. Tied scores enter as a single sweep
/// point, which makes the area equal the pairwise probability
/// P(s+ > s-) + P(s+ = s-)/2.
inline Curve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  const auto groups = detail::score_groups(scores, labels);
  int64_t total_pos = 0, total_neg = 0;
  for (const auto& g : groups) {
    total_pos += g.pos;
    total_neg += g.neg;
  }
  if (total_pos == 0 || total_neg == 0)
    throw ConfigError("roc_auc: need both classes present");

  Curve curve;
  curve.kind = "roc";
  curve.x.push_back(0.0);
  curve.y.push_back(0.0);
  curve.thresholds.push_back(std::numeric_limits<double>::infinity());

  int64_t tp = 0, fp = 0;
  double area = 0.0;
  for (const auto& g : groups) {
    const double x_prev = static_cast<double>(fp) / total_neg;
    const double y_prev = static_cast<double>(tp) / total_pos;
    tp += g.pos;
    fp += g.neg;
    const double x = static_cast<double>(fp) / total_neg;
    const double y = static_cast<double>(tp) / total_pos;
    area += (x - x_prev) * (y + y_prev) * 0.5;
    curve.x.push_back(x);
    curve.y.push_back(y);
    curve.thresholds.push_back(g.threshold);
  }
  curve.area = area;
  return curve;
}

/// Precision-recall curve over distinct thresholds (descending); average
/// precision as the step integral sum_n (R_n - R_{n-1}) P_n.
inline Curve pr_ap(const std::vector<double>& scores, const std::vector<int>& labels) {
  const auto groups = detail::score_groups(scores, labels);
  int64_t total_pos = 0;
  for (const auto& g : groups) total_pos += g.pos;
  if (total_pos == 0) throw ConfigError("pr_ap: no positive labels");

  Curve curve;
  curve.kind = "pr";
  int64_t tp = 0, fp = 0;
  double ap = 0.0;
  double recall_prev = 0.0;
  for (const auto& g : groups) {
    tp += g.pos;
    fp += g.neg;
    const double recall = static_cast<double>(tp) / total_pos;
    const double precision = static_cast<double>(tp) / (tp + fp);
    ap += (recall - recall_prev) * precision;
    recall_prev = recall;
    curve.x.push_back(recall);
    curve.y.push_back(precision);
    curve.thresholds.push_back(g.threshold);
  }
  curve.area = ap;
  return curve;
}

/// Scores for "class c" from a per-class probability table, with labels
/// binarized one-vs-rest.
inline std::pair<std::vector<double>, std::vector<int>> one_vs_rest(
    const std::vector<std::vector<double>>& probs, const std::vector<int>& truth, int positive) {
  if (probs.size() != truth.size()) throw ConfigError("one_vs_rest: length mismatch");
  std::vector<double> scores(probs.size());
  std::vector<int> labels(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (positive < 0 || positive >= static_cast<int>(probs[i].size()))
      throw ConfigError("one_vs_rest: class index out of range");
    scores[i] = probs[i][positive];
    labels[i] = truth[i] == positive ? 1 : 0;
  }
  return {std::move(scores), std::move(labels)};
}

/// Threshold positive-class probabilities at `threshold` and build the full
/// report including AUC and AP. Positive class is index 1.
inline EvalReport evaluate_binary(const std::vector<double>& pos_scores,
                                  const std::vector<int>& truth, double threshold = 0.5) {
  std::vector<int> pred(pos_scores.size());
  for (std::size_t i = 0; i < pos_scores.size(); ++i) pred[i] = pos_scores[i] >= threshold ? 1 : 0;
  EvalReport rep = classification_report(confusion(truth, pred, 2));
  bool has_pos = false, has_neg = false;
  for (int t : truth) (t == 1 ? has_pos : has_neg) = true;
  if (has_pos && has_neg) {
    rep.auc = roc_auc(pos_scores, truth).area;
    rep.ap = pr_ap(pos_scores, truth).area;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

inline std::string render_report_text(const EvalReport& rep,
                                      const std::vector<std::string>& class_names = {}) {
  std::ostringstream out;
  const auto name_of = [&](int c) {
    if (c < static_cast<int>(class_names.size())) return class_names[c];
    return "class_" + std::to_string(c);
  };
  char line[160];
  std::snprintf(line, sizeof line, "%-14s %9s %9s %9s %9s\n", "", "precision", "recall", "f1",
                "support");
  out << line;
  for (int c = 0; c < rep.confusion.num_classes; ++c) {
    const ClassMetrics& m = rep.per_class[c];
    std::snprintf(line, sizeof line, "%-14s %9.4f %9.4f %9.4f %9lld\n", name_of(c).c_str(),
                  m.precision, m.recall, m.f1, static_cast<long long>(m.support));
    out << line;
  }
  std::snprintf(line, sizeof line, "%-14s %9s %9s %9.4f %9lld\n", "accuracy", "", "", rep.accuracy,
                static_cast<long long>(rep.confusion.total()));
  out << line;
  std::snprintf(line, sizeof line, "%-14s %9.4f %9.4f %9.4f %9lld\n", "macro avg",
                rep.macro_precision, rep.macro_recall, rep.macro_f1,
                static_cast<long long>(rep.confusion.total()));
  out << line;
  std::snprintf(line, sizeof line, "%-14s %9.4f %9.4f %9.4f %9lld\n", "weighted avg",
                rep.weighted_precision, rep.weighted_recall, rep.weighted_f1,
                static_cast<long long>(rep.confusion.total()));
  out << line;
  if (rep.auc >= 0.0) {
    std::snprintf(line, sizeof line, "%-14s %9.4f\n", "auc", rep.auc);
    out << line;
  }
  if (rep.ap >= 0.0) {
    std::snprintf(line, sizeof line, "%-14s %9.4f\n", "ap", rep.ap);
    out << line;
  }
  return out.str();
}

inline void write_curve_csv(const Curve& curve, std::ostream& out) {
  out << "threshold,x,y\n";
  for (std::size_t i = 0; i < curve.x.size(); ++i) {
    const double thr = curve.thresholds[i];
    if (std::isinf(thr)) out << "inf";
    else out << format_double(thr);
    out << ',' << format_double(curve.x[i]) << ',' << format_double(curve.y[i]) << '\n';
  }
  if (!out) throw IoError("write_curve_csv: sink write failed");
}

inline nlohmann::ordered_json report_to_json(const EvalReport& rep,
                                             const std::vector<std::string>& class_names = {}) {
  nlohmann::ordered_json j;
  j["accuracy"] = rep.accuracy;
  nlohmann::ordered_json per;
  for (int c = 0; c < rep.confusion.num_classes; ++c) {
    const ClassMetrics& m = rep.per_class[c];
    const std::string key = c < static_cast<int>(class_names.size())
                                ? class_names[c]
                                : "class_" + std::to_string(c);
    per[key] = {{"precision", m.precision},
                {"recall", m.recall},
                {"f1", m.f1},
                {"support", m.support},
                {"zero_division", m.zero_division}};
  }
  j["per_class"] = per;
  j["macro"] = {{"precision", rep.macro_precision},
                {"recall", rep.macro_recall},
                {"f1", rep.macro_f1}};
  j["weighted"] = {{"precision", rep.weighted_precision},
                   {"recall", rep.weighted_recall},
                   {"f1", rep.weighted_f1}};
  if (rep.auc >= 0.0) j["auc"] = rep.auc;
  if (rep.ap >= 0.0) j["ap"] = rep.ap;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (int i = 0; i < rep.confusion.num_classes; ++i) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (int k = 0; k < rep.confusion.num_classes; ++k) row.push_back(rep.confusion.at(i, k));
    rows.push_back(row);
  }
  j["confusion"] = rows;
  return j;
}

}  // namespace evbench

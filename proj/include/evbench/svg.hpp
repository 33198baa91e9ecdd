#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "evbench/core.hpp"

namespace evbench {

// Minimal SVG line charts for sweep reports. No external renderer, just
// polylines over a fixed viewport with auto-scaled axes.

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct ChartOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 640;
  int height = 420;
};

inline void write_line_chart(const std::vector<Series>& series, const ChartOptions& opt,
                             std::ostream& out) {
  if (series.empty()) throw ConfigError("chart: no series");
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const Series& s : series) {
    if (s.x.size() != s.y.size()) throw ConfigError("chart: series length mismatch");
    for (double v : s.x) {
      xmin = std::min(xmin, v);
      xmax = std::max(xmax, v);
    }
    for (double v : s.y) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  }
  if (!std::isfinite(xmin) || !std::isfinite(ymin)) throw ConfigError("chart: empty series");
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin + 1.0;

  const double ml = 60, mr = 20, mt = 36, mb = 46;
  const double pw = opt.width - ml - mr;
  const double ph = opt.height - mt - mb;
  const auto px = [&](double v) { return ml + (v - xmin) / (xmax - xmin) * pw; };
  const auto py = [&](double v) { return mt + ph - (v - ymin) / (ymax - ymin) * ph; };

  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\""
      << opt.height << "\" viewBox=\"0 0 " << opt.width << " " << opt.height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << opt.width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
      << opt.title << "</text>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
      << mt + ph << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
      << "\" stroke=\"black\"/>\n";

  const int ticks = 5;
  for (int i = 0; i <= ticks; ++i) {
    const double xv = xmin + (xmax - xmin) * i / ticks;
    const double yv = ymin + (ymax - ymin) * i / ticks;
    char buf[48];
    out << "<line x1=\"" << px(xv) << "\" y1=\"" << mt + ph << "\" x2=\"" << px(xv) << "\" y2=\""
        << mt + ph + 4 << "\" stroke=\"black\"/>\n";
    std::snprintf(buf, sizeof buf, "%.3g", xv);
    out << "<text x=\"" << px(xv) << "\" y=\"" << mt + ph + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << buf
        << "</text>\n";
    out << "<line x1=\"" << ml - 4 << "\" y1=\"" << py(yv) << "\" x2=\"" << ml << "\" y2=\""
        << py(yv) << "\" stroke=\"black\"/>\n";
    std::snprintf(buf, sizeof buf, "%.3g", yv);
    out << "<text x=\"" << ml - 8 << "\" y=\"" << py(yv) + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << buf
        << "</text>\n";
  }
  out << "<text x=\"" << ml + pw / 2 << "\" y=\"" << opt.height - 8
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << opt.x_label
      << "</text>\n";
  out << "<text x=\"14\" y=\"" << mt + ph / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 14 "
      << mt + ph / 2 << ")\">" << opt.y_label << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % (sizeof kPalette / sizeof kPalette[0])];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      if (i) out << ' ';
      out << px(series[s].x[i]) << ',' << py(series[s].y[i]);
    }
    out << "\"/>\n";
    for (std::size_t i = 0; i < series[s].x.size(); ++i)
      out << "<circle cx=\"" << px(series[s].x[i]) << "\" cy=\"" << py(series[s].y[i])
          << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    const double ly = mt + 14 + 16 * static_cast<double>(s);
    out << "<rect x=\"" << ml + pw - 130 << "\" y=\"" << ly - 9
        << "\" width=\"10\" height=\"10\" fill=\"" << color << "\"/>\n";
    out << "<text x=\"" << ml + pw - 114 << "\" y=\"" << ly
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << series[s].name << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw IoError("chart: sink write failed");
}

inline void write_line_chart_file(const std::vector<Series>& series, const ChartOptions& opt,
                                  const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  write_line_chart(series, opt, f);
}

}  // namespace evbench

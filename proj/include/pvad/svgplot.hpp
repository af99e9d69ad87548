// Copyright (c) 2026 The pvadbench Authors
// SPDX-License-Identifier: Apache-2.0
//
// Small deterministic SVG plotter: line plots and scatter plots with axes,
// ticks, grid, and a legend. Output bytes depend only on the input spec.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pvad/error.hpp"

namespace pvad::svg {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;  // (x, y)
  bool markers = false;                           // scatter instead of polyline
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  // When fixed, the given range is used; otherwise bounds come from the data.
  bool fix_x = false;
  bool fix_y = false;
  double x_min = 0.0, x_max = 1.0;
  double y_min = 0.0, y_max = 1.0;
};

namespace detail {

constexpr double kWidth = 720.0;
constexpr double kHeight = 480.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 24.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 56.0;
constexpr int kTicks = 5;

inline const char* color(std::size_t i) {
  static const char* palette[] = {"#1f6fb4", "#d0342c", "#2c9a44", "#8a56b0",
                                  "#e08a1e", "#7a5230", "#3aa6a6", "#6b6b6b"};
  return palette[i % (sizeof(palette) / sizeof(palette[0]))];
}

inline std::string fmt(double v, const char* spec = "%.2f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (const char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out.push_back(c);
  }
  return out;
}

struct Range {
  double lo = 0.0, hi = 1.0;
};

inline Range data_range(const PlotSpec& spec, bool x_axis) {
  bool any = false;
  double lo = 0.0, hi = 0.0;
  for (const Series& s : spec.series) {
    for (const auto& [px, py] : s.points) {
      const double v = x_axis ? px : py;
      if (!std::isfinite(v)) throw DataError("svg plot: non-finite coordinate");
      if (!any) {
        lo = hi = v;
        any = true;
      } else {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  if (!any) throw DataError("svg plot: no points to plot");
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  } else {
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
  return {lo, hi};
}

}  // namespace detail

inline std::string render(const PlotSpec& spec) {
  using namespace detail;
  if (spec.series.empty()) throw DataError("svg plot: no series");

  const Range xr = spec.fix_x ? Range{spec.x_min, spec.x_max} : data_range(spec, true);
  const Range yr = spec.fix_y ? Range{spec.y_min, spec.y_max} : data_range(spec, false);
  if (!(xr.hi > xr.lo) || !(yr.hi > yr.lo)) throw DataError("svg plot: empty axis range");

  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  const auto px = [&](double x) { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
  const auto py = [&](double y) { return kTop + ph - (y - yr.lo) / (yr.hi - yr.lo) * ph; };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(kWidth, "%.0f")
      << "\" height=\"" << fmt(kHeight, "%.0f") << "\" viewBox=\"0 0 " << fmt(kWidth, "%.0f")
      << " " << fmt(kHeight, "%.0f") << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  out << "<text x=\"" << fmt(kWidth / 2) << "\" y=\"24\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"16\">"
      << escape(spec.title) << "</text>\n";

  // Grid and ticks.
  for (int t = 0; t <= kTicks; ++t) {
    const double fx = xr.lo + (xr.hi - xr.lo) * t / kTicks;
    const double fy = yr.lo + (yr.hi - yr.lo) * t / kTicks;
    const double gx = px(fx);
    const double gy = py(fy);
    out << "<line x1=\"" << fmt(gx) << "\" y1=\"" << fmt(kTop) << "\" x2=\"" << fmt(gx)
        << "\" y2=\"" << fmt(kTop + ph) << "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
    out << "<line x1=\"" << fmt(kLeft) << "\" y1=\"" << fmt(gy) << "\" x2=\"" << fmt(kLeft + pw)
        << "\" y2=\"" << fmt(gy) << "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
    out << "<text x=\"" << fmt(gx) << "\" y=\"" << fmt(kTop + ph + 18)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << fmt(fx, "%.4g") << "</text>\n";
    out << "<text x=\"" << fmt(kLeft - 8) << "\" y=\"" << fmt(gy + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << fmt(fy, "%.4g") << "</text>\n";
  }
  // Axes frame.
  out << "<rect x=\"" << fmt(kLeft) << "\" y=\"" << fmt(kTop) << "\" width=\"" << fmt(pw)
      << "\" height=\"" << fmt(ph) << "\" fill=\"none\" stroke=\"#404040\" stroke-width=\"1\"/>\n";
  out << "<text x=\"" << fmt(kLeft + pw / 2) << "\" y=\"" << fmt(kHeight - 12)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
      << escape(spec.x_label) << "</text>\n";
  out << "<text x=\"18\" y=\"" << fmt(kTop + ph / 2)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
         "transform=\"rotate(-90 18 "
      << fmt(kTop + ph / 2) << ")\">" << escape(spec.y_label) << "</text>\n";

  // Series.
  for (std::size_t s = 0; s < spec.series.size(); ++s) {
    const Series& ser = spec.series[s];
    if (ser.points.empty()) throw DataError("svg plot: series '" + ser.label + "' has no points");
    if (ser.markers) {
      for (const auto& [x, y] : ser.points)
        out << "<circle cx=\"" << fmt(px(x)) << "\" cy=\"" << fmt(py(y))
            << "\" r=\"3.5\" fill=\"" << color(s) << "\" fill-opacity=\"0.8\"/>\n";
    } else {
      out << "<polyline fill=\"none\" stroke=\"" << color(s)
          << "\" stroke-width=\"2\" points=\"";
      for (std::size_t i = 0; i < ser.points.size(); ++i) {
        if (i) out << " ";
        out << fmt(px(ser.points[i].first)) << "," << fmt(py(ser.points[i].second));
      }
      out << "\"/>\n";
    }
  }

  // Legend, top-right inside the frame.
  const double lx = kLeft + pw - 150.0;
  double ly = kTop + 14.0;
  for (std::size_t s = 0; s < spec.series.size(); ++s) {
    const Series& ser = spec.series[s];
    if (ser.markers) {
      out << "<circle cx=\"" << fmt(lx + 12) << "\" cy=\"" << fmt(ly - 4) << "\" r=\"3.5\" fill=\""
          << color(s) << "\"/>\n";
    } else {
      out << "<line x1=\"" << fmt(lx) << "\" y1=\"" << fmt(ly - 4) << "\" x2=\"" << fmt(lx + 24)
          << "\" y2=\"" << fmt(ly - 4) << "\" stroke=\"" << color(s)
          << "\" stroke-width=\"2\"/>\n";
    }
    out << "<text x=\"" << fmt(lx + 30) << "\" y=\"" << fmt(ly)
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << escape(ser.label) << "</text>\n";
    ly += 17.0;
  }
  out << "</svg>\n";
  return out.str();
}

inline void write_svg(const PlotSpec& spec, const std::string& path) {
  const std::string body = render(spec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("write_svg: cannot open '" + path + "' for writing");
  out << body;
  if (!out) throw DataError("write_svg: write failed for '" + path + "'");
}

}  // namespace pvad::svg

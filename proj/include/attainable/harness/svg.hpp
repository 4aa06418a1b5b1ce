#pragma once

// Minimal self-contained SVG line plots. Rendering is a pure function of its input.

#include "../errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

namespace attainable::harness {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  bool dashed = false;
};

struct ReferenceLine {
  double y;
  std::string label;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  std::vector<ReferenceLine> references;
  bool log_x = false;
  bool log_y = false;
  int width = 640;
  int height = 420;
};

namespace detail {

inline std::string fmt(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string tick_label(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

inline std::string escape_xml(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace detail

inline std::string render_line_plot(const PlotSpec& spec) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
  auto tx = [&](double v) { return spec.log_x ? std::log10(v) : v; };
  auto ty = [&](double v) { return spec.log_y ? std::log10(v) : v; };
  auto usable = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!spec.log_x || x > 0) && (!spec.log_y || y > 0);
  };

  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo, y_lo = x_lo, y_hi = -x_lo;
  for (const auto& s : spec.series) {
    if (s.x.size() != s.y.size()) throw DimensionError("render_line_plot: series '" + s.name + "' is ragged");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!usable(s.x[i], s.y[i])) continue;
      x_lo = std::min(x_lo, tx(s.x[i]));
      x_hi = std::max(x_hi, tx(s.x[i]));
      y_lo = std::min(y_lo, ty(s.y[i]));
      y_hi = std::max(y_hi, ty(s.y[i]));
    }
  }
  for (const auto& r : spec.references) {
    if (spec.log_y && r.y <= 0) continue;
    y_lo = std::min(y_lo, ty(r.y));
    y_hi = std::max(y_hi, ty(r.y));
  }
  if (!std::isfinite(x_lo)) x_lo = 0, x_hi = 1;
  if (!std::isfinite(y_lo)) y_lo = 0, y_hi = 1;
  if (x_hi == x_lo) x_lo -= 0.5, x_hi += 0.5;
  if (y_hi == y_lo) y_lo -= 0.5, y_hi += 0.5;
  const double pad = 0.06 * (y_hi - y_lo);
  y_lo -= pad;
  y_hi += pad;

  const double left = 70, right = 160, top = 40, bottom = 55;
  const double pw = spec.width - left - right, ph = spec.height - top - bottom;
  auto px = [&](double v) { return left + (tx(v) - x_lo) / (x_hi - x_lo) * pw; };
  auto py = [&](double v) { return top + ph - (ty(v) - y_lo) / (y_hi - y_lo) * ph; };
  auto py_raw = [&](double t) { return top + ph - (t - y_lo) / (y_hi - y_lo) * ph; };
  auto px_raw = [&](double t) { return left + (t - x_lo) / (x_hi - x_lo) * pw; };

  using detail::fmt;
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(spec.width) + "\" height=\"" +
         std::to_string(spec.height) + "\" viewBox=\"0 0 " + std::to_string(spec.width) + " " +
         std::to_string(spec.height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + fmt(left + pw / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" +
         detail::escape_xml(spec.title) + "</text>\n";
  svg += "<rect x=\"" + fmt(left) + "\" y=\"" + fmt(top) + "\" width=\"" + fmt(pw) + "\" height=\"" + fmt(ph) +
         "\" fill=\"none\" stroke=\"black\"/>\n";

  for (int i = 0; i <= 4; ++i) {
    const double t = x_lo + (x_hi - x_lo) * i / 4.0;
    const double v = spec.log_x ? std::pow(10.0, t) : t;
    svg += "<text x=\"" + fmt(px_raw(t)) + "\" y=\"" + fmt(top + ph + 18) + "\" text-anchor=\"middle\">" +
           detail::tick_label(v) + "</text>\n";
    const double u = y_lo + (y_hi - y_lo) * i / 4.0;
    const double w = spec.log_y ? std::pow(10.0, u) : u;
    svg += "<text x=\"" + fmt(left - 6) + "\" y=\"" + fmt(py_raw(u) + 4) + "\" text-anchor=\"end\">" +
           detail::tick_label(w) + "</text>\n";
    svg += "<line x1=\"" + fmt(left) + "\" x2=\"" + fmt(left + pw) + "\" y1=\"" + fmt(py_raw(u)) + "\" y2=\"" +
           fmt(py_raw(u)) + "\" stroke=\"#dddddd\"/>\n";
  }
  svg += "<text x=\"" + fmt(left + pw / 2) + "\" y=\"" + fmt(spec.height - 12) + "\" text-anchor=\"middle\">" +
         detail::escape_xml(spec.x_label) + "</text>\n";
  svg += "<text transform=\"translate(18," + fmt(top + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
         detail::escape_xml(spec.y_label) + "</text>\n";

  double legend_y = top + 10;
  for (const auto& r : spec.references) {
    if (spec.log_y && r.y <= 0) continue;
    svg += "<line x1=\"" + fmt(left) + "\" x2=\"" + fmt(left + pw) + "\" y1=\"" + fmt(py(r.y)) + "\" y2=\"" +
           fmt(py(r.y)) + "\" stroke=\"black\" stroke-dasharray=\"6,4\"/>\n";
    svg += "<text x=\"" + fmt(left + pw + 8) + "\" y=\"" + fmt(legend_y + 4) + "\">- - " + detail::escape_xml(r.label) +
           "</text>\n";
    legend_y += 18;
  }
  for (std::size_t k = 0; k < spec.series.size(); ++k) {
    const auto& s = spec.series[k];
    const std::string colour = palette[k % (sizeof palette / sizeof *palette)];
    std::string points;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!usable(s.x[i], s.y[i])) continue;
      points += (points.empty() ? "" : " ") + fmt(px(s.x[i])) + "," + fmt(py(s.y[i]));
    }
    svg += "<polyline fill=\"none\" stroke=\"" + colour + "\" stroke-width=\"1.8\"" +
           (s.dashed ? std::string(" stroke-dasharray=\"3,3\"") : std::string()) + " points=\"" + points + "\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!usable(s.x[i], s.y[i])) continue;
      svg += "<circle cx=\"" + fmt(px(s.x[i])) + "\" cy=\"" + fmt(py(s.y[i])) + "\" r=\"2.5\" fill=\"" + colour +
             "\"/>\n";
    }
    svg += "<line x1=\"" + fmt(left + pw + 8) + "\" x2=\"" + fmt(left + pw + 26) + "\" y1=\"" + fmt(legend_y) +
           "\" y2=\"" + fmt(legend_y) + "\" stroke=\"" + colour + "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + fmt(left + pw + 30) + "\" y=\"" + fmt(legend_y + 4) + "\">" + detail::escape_xml(s.name) +
           "</text>\n";
    legend_y += 18;
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace attainable::harness

#pragma once

// Static SVG line plots. Output depends only on the data (fixed palette,
// fixed number formatting), so plots are byte-reproducible.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "seatsim/errors.hpp"

namespace seatsim {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotPanel {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<PlotSeries> series;
};

namespace detail {

inline std::string fmt(double v, int decimals = 2) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

/// Round step (1, 2 or 5 times a power of ten) giving about `target` ticks.
inline double nice_step(double span, int target = 5) {
  const double raw = span / target;
  const double p = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0})
    if (m * p >= raw) return m * p;
  return 10.0 * p;
}

}  // namespace detail

/// Panels stacked vertically, one line per series, shared legend per panel.
inline std::string render_svg(const std::vector<PlotPanel>& panels) {
  using detail::fmt;
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  const double W = 640, H = 300, ml = 70, mr = 150, mt = 30, mb = 45;
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(W, 0) + "\" height=\"" +
                  fmt(H * panels.size(), 0) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const auto& panel = panels[p];
    const double oy = H * p;
    double x0 = INFINITY, x1 = -INFINITY, y0 = 0.0, y1 = -INFINITY;
    for (const auto& sr : panel.series) {
      for (double v : sr.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
      for (double v : sr.y)
        if (std::isfinite(v)) y0 = std::min(y0, v), y1 = std::max(y1, v);
    }
    if (!(x1 > x0)) x0 = 0.0, x1 = 1.0;
    if (!(y1 > y0)) y1 = y0 + 1.0;
    const double ystep = detail::nice_step(y1 - y0);
    y1 = std::ceil(y1 / ystep) * ystep;
    const double pw = W - ml - mr, ph = H - mt - mb;
    auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return oy + mt + (1.0 - (y - y0) / (y1 - y0)) * ph; };

    s += "<text x=\"" + fmt(ml, 0) + "\" y=\"" + fmt(oy + 18, 0) + "\" font-weight=\"bold\">" +
         detail::xml_escape(panel.title) + "</text>\n";
    s += "<rect x=\"" + fmt(ml) + "\" y=\"" + fmt(oy + mt) + "\" width=\"" + fmt(pw) + "\" height=\"" + fmt(ph) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
    const double xstep = detail::nice_step(x1 - x0, 6);
    for (double t = std::ceil(x0 / xstep) * xstep; t <= x1 + 1e-9; t += xstep) {
      s += "<line x1=\"" + fmt(px(t)) + "\" y1=\"" + fmt(oy + mt) + "\" x2=\"" + fmt(px(t)) + "\" y2=\"" +
           fmt(oy + mt + ph) + "\" stroke=\"#ddd\"/>\n";
      s += "<text x=\"" + fmt(px(t)) + "\" y=\"" + fmt(oy + mt + ph + 15) + "\" text-anchor=\"middle\">" +
           fmt(t, xstep < 1 ? 1 : 0) + "</text>\n";
    }
    for (double t = y0; t <= y1 + 1e-9; t += ystep) {
      s += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(py(t)) + "\" x2=\"" + fmt(ml + pw) + "\" y2=\"" + fmt(py(t)) +
           "\" stroke=\"#ddd\"/>\n";
      s += "<text x=\"" + fmt(ml - 6) + "\" y=\"" + fmt(py(t) + 4) + "\" text-anchor=\"end\">" +
           fmt(t, ystep < 1 ? (ystep < 0.1 ? 2 : 1) : 0) + "</text>\n";
    }
    s += "<text x=\"" + fmt(ml + pw / 2) + "\" y=\"" + fmt(oy + H - 8) + "\" text-anchor=\"middle\">" +
         detail::xml_escape(panel.x_label) + "</text>\n";
    s += "<text transform=\"translate(16 " + fmt(oy + mt + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
         detail::xml_escape(panel.y_label) + "</text>\n";
    for (std::size_t k = 0; k < panel.series.size(); ++k) {
      const auto& sr = panel.series[k];
      const char* color = palette[k % std::size(palette)];
      s += "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" + std::string(color) + "\" points=\"";
      for (std::size_t i = 0; i < sr.x.size() && i < sr.y.size(); ++i)
        if (std::isfinite(sr.y[i])) s += fmt(px(sr.x[i])) + "," + fmt(py(sr.y[i])) + " ";
      s += "\"/>\n";
      const double ly = oy + mt + 12 + 16 * k;
      s += "<line x1=\"" + fmt(ml + pw + 10) + "\" y1=\"" + fmt(ly - 4) + "\" x2=\"" + fmt(ml + pw + 30) + "\" y2=\"" +
           fmt(ly - 4) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
      s += "<text x=\"" + fmt(ml + pw + 35) + "\" y=\"" + fmt(ly) + "\">" + detail::xml_escape(sr.label) + "</text>\n";
    }
  }
  s += "</svg>\n";
  return s;
}

inline void write_svg(const std::string& path, const std::vector<PlotPanel>& panels) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("output", "cannot write " + path);
  f << render_svg(panels);
}

}  // namespace seatsim

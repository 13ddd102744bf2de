#pragma once

// Minimal standalone SVG line charts and gnuplot data/script pairs.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace lumpflow::plot {

struct Series {
  std::string label;
  std::vector<double> x, y;
};

struct Chart {
  std::string title, xlabel, ylabel;
  bool logx = false, logy = false;
  std::vector<Series> series;
};

namespace detail {
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}
inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}
}  // namespace detail

inline void write_svg(std::ostream& os, const Chart& c, int width = 640, int height = 420) {
  const double ml = 70, mr = 150, mt = 40, mb = 55;
  auto tx = [&](double v) { return c.logx ? std::log10(v) : v; };
  auto ty = [&](double v) { return c.logy ? std::log10(v) : v; };
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : c.series)
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if ((c.logx && !(s.x[i] > 0)) || (c.logy && !(s.y[i] > 0))) continue;
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, tx(s.x[i]));
      x1 = std::max(x1, tx(s.x[i]));
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pw = width - ml - mr, ph = height - mt - mb;
  auto px = [&](double v) { return ml + (tx(v) - x0) / (x1 - x0) * pw; };
  auto py = [&](double v) { return mt + ph - (ty(v) - y0) / (y1 - y0) * ph; };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << detail::escape(c.title)
     << "</text>\n";
  os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double fx = x0 + (x1 - x0) * k / 4.0, fy = y0 + (y1 - y0) * k / 4.0;
    const double vx = c.logx ? std::pow(10.0, fx) : fx, vy = c.logy ? std::pow(10.0, fy) : fy;
    const double sx = ml + pw * k / 4.0, sy = mt + ph - ph * k / 4.0;
    os << "<text x=\"" << sx << "\" y=\"" << mt + ph + 16 << "\" text-anchor=\"middle\">" << detail::fmt(vx) << "</text>\n";
    os << "<text x=\"" << ml - 6 << "\" y=\"" << sy + 4 << "\" text-anchor=\"end\">" << detail::fmt(vy) << "</text>\n";
  }
  os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 12 << "\" text-anchor=\"middle\">"
     << detail::escape(c.xlabel) << "</text>\n";
  os << "<text transform=\"translate(16," << mt + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << detail::escape(c.ylabel) << "</text>\n";
  for (std::size_t k = 0; k < c.series.size(); ++k) {
    const auto& s = c.series[k];
    const char* col = colors[k % 6];
    os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if ((c.logx && !(s.x[i] > 0)) || (c.logy && !(s.y[i] > 0))) continue;
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      os << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    }
    os << "\"/>\n";
    const double ly = mt + 14 + 18 * double(k);
    os << "<line x1=\"" << ml + pw + 10 << "\" y1=\"" << ly - 4 << "\" x2=\"" << ml + pw + 30 << "\" y2=\"" << ly - 4
       << "\" stroke=\"" << col << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << ml + pw + 34 << "\" y=\"" << ly << "\">" << detail::escape(s.label) << "</text>\n";
  }
  os << "</svg>\n";
}

/// Whitespace-separated blocks (one per series, blank-line separated) for gnuplot's `index`.
inline void write_gnuplot_data(std::ostream& os, const Chart& c) {
  os.precision(17);
  for (const auto& s : c.series) {
    os << "# " << s.label << '\n';
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) os << s.x[i] << ' ' << s.y[i] << '\n';
    os << "\n\n";
  }
}

inline void write_gnuplot_script(std::ostream& os, const Chart& c, const std::string& data_file,
                                 const std::string& png_file) {
  os << "set terminal pngcairo size 800,520\n";
  os << "set output '" << png_file << "'\n";
  os << "set title '" << c.title << "'\nset xlabel '" << c.xlabel << "'\nset ylabel '" << c.ylabel << "'\n";
  if (c.logx) os << "set logscale x\n";
  if (c.logy) os << "set logscale y\n";
  os << "plot ";
  for (std::size_t k = 0; k < c.series.size(); ++k) {
    if (k) os << ", \\\n     ";
    os << "'" << data_file << "' index " << k << " with linespoints title '" << c.series[k].label << "'";
  }
  os << '\n';
}

}  // namespace lumpflow::plot

#pragma once

// Results CSV rows and small hand-written SVG plots.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "swarmlearn/errors.hpp"
#include "swarmlearn/objectives.hpp"

namespace swarmlearn {

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw config_error("cannot write " + path.string());
  os << text;
}

inline constexpr const char* results_header = "method,evals,mean_best_f,std_best_f,n,k,seed_group\n";

struct ResultRow {
  std::string method;
  std::size_t evals = 0;
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
  std::size_t k = 0;
  std::string seed_group;
};

inline std::string to_csv(const std::vector<ResultRow>& rows) {
  std::string out = results_header;
  for (const ResultRow& r : rows) {
    out += r.method + "," + std::to_string(r.evals) + "," + detail::format_real(r.mean) + "," +
           detail::format_real(r.std) + "," + std::to_string(r.n) + "," + std::to_string(r.k) + "," + r.seed_group +
           "\n";
  }
  return out;
}

namespace svg {

struct Series {
  std::string label;
  std::vector<double> x, y;
};

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
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

inline const char* color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
  return palette[i % 7];
}

constexpr double width = 640, height = 420, left = 70, right = 150, top = 30, bottom = 50;

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return left + (x - x0) / (x1 - x0) * (width - left - right); }
  double py(double y) const { return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom); }
};

inline std::string header(const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" + num(height) +
         "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
         "<text x=\"" + num(width / 2) + "\" y=\"18\" text-anchor=\"middle\">" + escape(title) + "</text>\n";
}

inline std::string axes(const Frame& f, const std::string& xlabel, const std::string& ylabel, bool log_y) {
  std::string out = "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(width - left - right) +
                    "\" height=\"" + num(height - top - bottom) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0, yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    char xb[32], yb[32];
    std::snprintf(xb, sizeof xb, "%.3g", xv);
    std::snprintf(yb, sizeof yb, "%.3g", log_y ? std::pow(10.0, yv) : yv);
    out += "<text x=\"" + num(f.px(xv)) + "\" y=\"" + num(height - bottom + 16) + "\" text-anchor=\"middle\">" +
           xb + "</text>\n";
    out += "<text x=\"" + num(left - 6) + "\" y=\"" + num(f.py(yv) + 4) + "\" text-anchor=\"end\">" + yb +
           "</text>\n";
  }
  out += "<text x=\"" + num((left + width - right) / 2) + "\" y=\"" + num(height - 12) +
         "\" text-anchor=\"middle\">" + escape(xlabel) + "</text>\n";
  out += "<text x=\"16\" y=\"" + num((top + height - bottom) / 2) + "\" transform=\"rotate(-90 16 " +
         num((top + height - bottom) / 2) + ")\" text-anchor=\"middle\">" + escape(ylabel) + "</text>\n";
  return out;
}

inline std::string legend(const std::vector<Series>& series) {
  std::string out;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double y = top + 14 + 18.0 * static_cast<double>(i);
    out += "<line x1=\"" + num(width - right + 10) + "\" y1=\"" + num(y) + "\" x2=\"" + num(width - right + 30) +
           "\" y2=\"" + num(y) + "\" stroke=\"" + color(i) + "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + num(width - right + 36) + "\" y=\"" + num(y + 4) + "\">" + escape(series[i].label) +
           "</text>\n";
  }
  return out;
}

}  // namespace detail

/// Line plot; with log_y the y values are plotted as log10 (non-positive
/// values are floored at the smallest positive one).
inline std::string line_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                             std::vector<Series> series, bool log_y) {
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY, min_pos = INFINITY;
  for (const Series& s : series)
    for (double y : s.y)
      if (y > 0.0) min_pos = std::min(min_pos, y);
  if (!std::isfinite(min_pos)) min_pos = 1e-12;
  for (Series& s : series) {
    for (double& y : s.y) {
      if (log_y) y = std::log10(std::max(y, min_pos));
      if (std::isfinite(y)) y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
    for (double x : s.x) x0 = std::min(x0, x), x1 = std::max(x1, x);
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1;
  if (!std::isfinite(y0)) y0 = 0, y1 = 1;
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  const detail::Frame f{x0, x1, y0, y1};
  std::string out = detail::header(title) + detail::axes(f, xlabel, log_y ? ylabel + " (log scale)" : ylabel, log_y);
  for (std::size_t i = 0; i < series.size(); ++i) {
    std::string pts;
    for (std::size_t j = 0; j < series[i].x.size() && j < series[i].y.size(); ++j) {
      if (!std::isfinite(series[i].y[j])) continue;
      pts += detail::num(f.px(series[i].x[j])) + "," + detail::num(f.py(series[i].y[j])) + " ";
    }
    out += "<polyline fill=\"none\" stroke=\"" + std::string(detail::color(i)) + "\" stroke-width=\"1.5\" points=\"" +
           pts + "\"/>\n";
  }
  return out + detail::legend(series) + "</svg>\n";
}

/// 2D sample paths in the given box, one marker per sample.
inline std::string path_plot(const std::string& title, const std::vector<Series>& series, double lo, double hi) {
  const detail::Frame f{lo, hi, lo, hi};
  std::string out = detail::header(title) + detail::axes(f, "x1", "x2", false);
  for (std::size_t i = 0; i < series.size(); ++i) {
    std::string pts;
    for (std::size_t j = 0; j < series[i].x.size(); ++j) {
      const double x = std::clamp(series[i].x[j], lo, hi), y = std::clamp(series[i].y[j], lo, hi);
      pts += detail::num(f.px(x)) + "," + detail::num(f.py(y)) + " ";
      out += "<circle cx=\"" + detail::num(f.px(x)) + "\" cy=\"" + detail::num(f.py(y)) + "\" r=\"2\" fill=\"" +
             detail::color(i) + "\"/>\n";
    }
    out += "<polyline fill=\"none\" stroke=\"" + std::string(detail::color(i)) +
           "\" stroke-opacity=\"0.4\" points=\"" + pts + "\"/>\n";
  }
  return out + detail::legend(series) + "</svg>\n";
}

}  // namespace svg
}  // namespace swarmlearn

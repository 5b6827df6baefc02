#include "dtp/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dtp {

namespace {

constexpr double kWidth = 720.0, kHeight = 440.0;
constexpr double kLeft = 70.0, kRight = 24.0, kTop = 40.0, kBottom = 52.0;

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                         "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&')
      out += "&amp;";
    else if (c == '<')
      out += "&lt;";
    else if (c == '>')
      out += "&gt;";
    else
      out += c;
  }
  return out;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct Bounds {
  double x_lo = 0.0, x_hi = 1.0, y_lo = 0.0, y_hi = 1.0;
};

Bounds data_bounds(const std::vector<PlotSeries>& series) {
  Bounds b;
  bool any = false;
  for (const PlotSeries& s : series) {
    if (s.x.size() != s.y.size())
      throw std::invalid_argument("plot series has mismatched x/y lengths: " + s.label);
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (!any) {
        b = {s.x[i], s.x[i], s.y[i], s.y[i]};
        any = true;
      } else {
        b.x_lo = std::min(b.x_lo, s.x[i]);
        b.x_hi = std::max(b.x_hi, s.x[i]);
        b.y_lo = std::min(b.y_lo, s.y[i]);
        b.y_hi = std::max(b.y_hi, s.y[i]);
      }
    }
  }
  if (!any) throw std::invalid_argument("plot has no finite data points");
  // degenerate spans get a symmetric pad so the point is visible mid-axis
  if (b.x_hi == b.x_lo) {
    b.x_lo -= 0.5;
    b.x_hi += 0.5;
  }
  if (b.y_hi == b.y_lo) {
    const double pad = b.y_lo == 0.0 ? 0.5 : std::fabs(b.y_lo) * 0.1;
    b.y_lo -= pad;
    b.y_hi += pad;
  }
  return b;
}

struct Mapper {
  Bounds b;
  double sx(double x) const { return kLeft + (x - b.x_lo) / (b.x_hi - b.x_lo) * (kWidth - kLeft - kRight); }
  double sy(double y) const { return kHeight - kBottom - (y - b.y_lo) / (b.y_hi - b.y_lo) * (kHeight - kTop - kBottom); }
};

std::vector<double> ticks(double lo, double hi, int want) {
  const double span = hi - lo;
  const double raw = span / want;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0})
    if (mag * m >= raw) {
      step = mag * m;
      break;
    }
  std::vector<double> out;
  for (double v = std::ceil(lo / step) * step; v <= hi + step * 1e-9; v += step)
    out.push_back(std::fabs(v) < step * 1e-9 ? 0.0 : v);
  return out;
}

void frame(std::ostringstream& svg, const std::string& title, const std::string& x_label,
           const std::string& y_label, const Mapper& m) {
  svg << "<rect x='0' y='0' width='" << kWidth << "' height='" << kHeight
      << "' fill='#ffffff'/>\n";
  svg << "<text x='" << kWidth / 2 << "' y='22' text-anchor='middle' font-size='15' "
         "font-family='sans-serif' font-weight='bold'>"
      << esc(title) << "</text>\n";
  for (double v : ticks(m.b.x_lo, m.b.x_hi, 6)) {
    const double x = m.sx(v);
    svg << "<line x1='" << x << "' y1='" << kTop << "' x2='" << x << "' y2='"
        << kHeight - kBottom << "' stroke='#e0e0e0'/>\n";
    svg << "<text x='" << x << "' y='" << kHeight - kBottom + 18
        << "' text-anchor='middle' font-size='11' font-family='sans-serif'>" << num(v)
        << "</text>\n";
  }
  for (double v : ticks(m.b.y_lo, m.b.y_hi, 6)) {
    const double y = m.sy(v);
    svg << "<line x1='" << kLeft << "' y1='" << y << "' x2='" << kWidth - kRight << "' y2='" << y
        << "' stroke='#e0e0e0'/>\n";
    svg << "<text x='" << kLeft - 8 << "' y='" << y + 4
        << "' text-anchor='end' font-size='11' font-family='sans-serif'>" << num(v)
        << "</text>\n";
  }
  svg << "<rect x='" << kLeft << "' y='" << kTop << "' width='" << kWidth - kLeft - kRight
      << "' height='" << kHeight - kTop - kBottom << "' fill='none' stroke='#404040'/>\n";
  svg << "<text x='" << (kLeft + kWidth - kRight) / 2 << "' y='" << kHeight - 14
      << "' text-anchor='middle' font-size='12' font-family='sans-serif'>" << esc(x_label)
      << "</text>\n";
  svg << "<text x='16' y='" << (kTop + kHeight - kBottom) / 2
      << "' text-anchor='middle' font-size='12' font-family='sans-serif' transform='rotate(-90 16 "
      << (kTop + kHeight - kBottom) / 2 << ")'>" << esc(y_label) << "</text>\n";
}

void legend(std::ostringstream& svg, const std::vector<PlotSeries>& series) {
  if (series.size() < 2) return;
  double y = kTop + 14;
  for (size_t i = 0; i < series.size(); ++i) {
    const char* color = kColors[i % (sizeof kColors / sizeof kColors[0])];
    svg << "<rect x='" << kWidth - kRight - 150 << "' y='" << y - 9
        << "' width='12' height='12' fill='" << color << "'/>\n";
    svg << "<text x='" << kWidth - kRight - 133 << "' y='" << y + 1
        << "' font-size='11' font-family='sans-serif'>" << esc(series[i].label) << "</text>\n";
    y += 17;
  }
}

void write_svg(const std::string& path, const std::ostringstream& svg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write plot file: " + path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kWidth << "' height='" << kHeight
      << "' viewBox='0 0 " << kWidth << " " << kHeight << "'>\n"
      << svg.str() << "</svg>\n";
}

}  // namespace

void write_line_svg(const std::string& path, const std::string& title, const std::string& x_label,
                    const std::string& y_label, const std::vector<PlotSeries>& series) {
  if (series.empty()) throw std::invalid_argument("line plot needs at least one series");
  const Mapper m{data_bounds(series)};
  std::ostringstream svg;
  frame(svg, title, x_label, y_label, m);
  for (size_t i = 0; i < series.size(); ++i) {
    const PlotSeries& s = series[i];
    const char* color = kColors[i % (sizeof kColors / sizeof kColors[0])];
    std::string pts;
    auto flush = [&] {
      // a single stranded point still needs ink: render it as a dot
      if (!pts.empty() && pts.find(' ') == std::string::npos) {
        const size_t comma = pts.find(',');
        svg << "<circle cx='" << pts.substr(0, comma) << "' cy='" << pts.substr(comma + 1)
            << "' r='2.5' fill='" << color << "'/>\n";
      } else if (!pts.empty()) {
        svg << "<polyline points='" << pts << "' fill='none' stroke='" << color
            << "' stroke-width='1.6'/>\n";
      }
      pts.clear();
    };
    for (size_t j = 0; j < s.x.size(); ++j) {
      if (!std::isfinite(s.x[j]) || !std::isfinite(s.y[j])) {
        flush();
        continue;
      }
      if (!pts.empty()) pts += ' ';
      pts += num(m.sx(s.x[j])) + "," + num(m.sy(s.y[j]));
    }
    flush();
  }
  legend(svg, series);
  write_svg(path, svg);
}

void write_scatter_svg(const std::string& path, const std::string& title,
                       const std::string& x_label, const std::string& y_label,
                       const std::vector<PlotSeries>& series) {
  if (series.empty()) throw std::invalid_argument("scatter plot needs at least one series");
  const Mapper m{data_bounds(series)};
  std::ostringstream svg;
  frame(svg, title, x_label, y_label, m);
  for (size_t i = 0; i < series.size(); ++i) {
    const PlotSeries& s = series[i];
    const char* color = kColors[i % (sizeof kColors / sizeof kColors[0])];
    for (size_t j = 0; j < s.x.size(); ++j) {
      if (!std::isfinite(s.x[j]) || !std::isfinite(s.y[j])) continue;
      svg << "<circle cx='" << num(m.sx(s.x[j])) << "' cy='" << num(m.sy(s.y[j]))
          << "' r='3' fill='" << color << "' fill-opacity='0.65'/>\n";
    }
  }
  legend(svg, series);
  write_svg(path, svg);
}

}  // namespace dtp

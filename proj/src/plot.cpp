#include "lrd/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace lrd::plot {
namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 150, kTop = 40, kBottom = 50;
const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

struct Axis {
  double lo = 0, hi = 1;
  bool log = false;
  double map(double v, double a, double b) const {
    double t = log ? (std::log10(v) - std::log10(lo)) / (std::log10(hi) - std::log10(lo)) : (v - lo) / (hi - lo);
    return a + t * (b - a);
  }
};

Axis make_axis(std::vector<double> vals, bool log) {
  Axis ax;
  ax.log = log;
  std::erase_if(vals, [&](double v) { return !std::isfinite(v) || (log && v <= 0); });
  if (vals.empty()) return ax;
  ax.lo = *std::min_element(vals.begin(), vals.end());
  ax.hi = *std::max_element(vals.begin(), vals.end());
  if (ax.hi == ax.lo) {
    const double pad = ax.lo == 0 ? 1.0 : std::abs(ax.lo) * 0.1;
    ax.lo -= log ? ax.lo / 2 : pad;
    ax.hi += pad;
  } else if (!log) {
    const double pad = 0.05 * (ax.hi - ax.lo);
    ax.lo -= pad;
    ax.hi += pad;
  }
  return ax;
}

void header(std::ostringstream& os, const std::string& title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << esc(title)
     << "</text>\n";
}

void frame(std::ostringstream& os, const Axis& xa, const Axis& ya, const std::string& xl, const std::string& yl) {
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  os << "<rect x=\"" << x0 << "\" y=\"" << y1 << "\" width=\"" << x1 - x0 << "\" height=\"" << y0 - y1
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double t = i / 4.0;
    const double xv = xa.log ? std::pow(10, std::log10(xa.lo) + t * (std::log10(xa.hi) - std::log10(xa.lo)))
                             : xa.lo + t * (xa.hi - xa.lo);
    const double yv = ya.log ? std::pow(10, std::log10(ya.lo) + t * (std::log10(ya.hi) - std::log10(ya.lo)))
                             : ya.lo + t * (ya.hi - ya.lo);
    const double px = x0 + t * (x1 - x0), py = y0 + t * (y1 - y0);
    os << "<text x=\"" << px << "\" y=\"" << y0 + 15 << "\" text-anchor=\"middle\">" << num(xv) << "</text>\n";
    os << "<text x=\"" << x0 - 5 << "\" y=\"" << py + 4 << "\" text-anchor=\"end\">" << num(yv) << "</text>\n";
  }
  os << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">" << esc(xl)
     << "</text>\n";
  os << "<text transform=\"translate(16," << (y0 + y1) / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << esc(yl)
     << "</text>\n";
}

}  // namespace

std::string render(const LineChart& chart) {
  std::vector<double> xs, ys;
  for (const auto& s : chart.series) {
    xs.insert(xs.end(), s.x.begin(), s.x.end());
    ys.insert(ys.end(), s.y.begin(), s.y.end());
  }
  const Axis xa = make_axis(xs, chart.log_x), ya = make_axis(ys, chart.log_y);
  std::ostringstream os;
  header(os, chart.title);
  frame(os, xa, ya, chart.x_label, chart.y_label);
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  for (std::size_t i = 0; i < chart.series.size(); ++i) {
    const auto& s = chart.series[i];
    const char* color = kPalette[i % std::size(kPalette)];
    std::string pts;
    for (std::size_t j = 0; j < std::min(s.x.size(), s.y.size()); ++j) {
      if (!std::isfinite(s.x[j]) || !std::isfinite(s.y[j])) continue;
      if ((chart.log_x && s.x[j] <= 0) || (chart.log_y && s.y[j] <= 0)) continue;
      pts += num(xa.map(s.x[j], x0, x1)) + "," + num(ya.map(s.y[j], y0, y1)) + " ";
    }
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << pts << "\"/>\n";
    if (s.x.size() <= 30) {
      for (std::size_t j = 0; j < std::min(s.x.size(), s.y.size()); ++j) {
        if (!std::isfinite(s.y[j]) || (chart.log_x && s.x[j] <= 0) || (chart.log_y && s.y[j] <= 0)) continue;
        os << "<circle cx=\"" << num(xa.map(s.x[j], x0, x1)) << "\" cy=\"" << num(ya.map(s.y[j], y0, y1))
           << "\" r=\"3\" fill=\"" << color << "\"/>\n";
      }
    }
    const double ly = y1 + 15 + 16 * static_cast<double>(i);
    os << "<line x1=\"" << x1 + 10 << "\" y1=\"" << ly << "\" x2=\"" << x1 + 30 << "\" y2=\"" << ly << "\" stroke=\""
       << color << "\" stroke-width=\"2\"/>\n<text x=\"" << x1 + 35 << "\" y=\"" << ly + 4 << "\">" << esc(s.name)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string render(const BarChart& chart) {
  std::vector<double> ys = chart.values;
  ys.insert(ys.end(), chart.lo.begin(), chart.lo.end());
  ys.insert(ys.end(), chart.hi.begin(), chart.hi.end());
  ys.push_back(0.0);
  const Axis ya = make_axis(ys, false);
  std::ostringstream os;
  header(os, chart.title);
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  os << "<rect x=\"" << x0 << "\" y=\"" << y1 << "\" width=\"" << x1 - x0 << "\" height=\"" << y0 - y1
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = ya.lo + i / 4.0 * (ya.hi - ya.lo);
    os << "<text x=\"" << x0 - 5 << "\" y=\"" << ya.map(v, y0, y1) + 4 << "\" text-anchor=\"end\">" << num(v)
       << "</text>\n";
  }
  os << "<text transform=\"translate(16," << (y0 + y1) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << esc(chart.y_label) << "</text>\n";
  const double zero = ya.map(0.0, y0, y1);
  os << "<line x1=\"" << x0 << "\" y1=\"" << zero << "\" x2=\"" << x1 << "\" y2=\"" << zero
     << "\" stroke=\"gray\"/>\n";
  const std::size_t n = chart.values.size();
  const double slot = n ? (x1 - x0) / static_cast<double>(n) : 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double cx = x0 + slot * (static_cast<double>(i) + 0.5);
    const double vy = ya.map(chart.values[i], y0, y1);
    os << "<rect x=\"" << num(cx - slot * 0.3) << "\" y=\"" << num(std::min(vy, zero)) << "\" width=\""
       << num(slot * 0.6) << "\" height=\"" << num(std::abs(zero - vy)) << "\" fill=\""
       << kPalette[i % std::size(kPalette)] << "\"/>\n";
    if (i < chart.lo.size() && i < chart.hi.size()) {
      os << "<line x1=\"" << num(cx) << "\" y1=\"" << num(ya.map(chart.lo[i], y0, y1)) << "\" x2=\"" << num(cx)
         << "\" y2=\"" << num(ya.map(chart.hi[i], y0, y1)) << "\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
    }
    if (i < chart.labels.size()) {
      os << "<text transform=\"translate(" << num(cx) << "," << y0 + 12 << ") rotate(20)\">" << esc(chart.labels[i])
         << "</text>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

std::string render(const Heatmap& chart) {
  double vmax = 0;
  for (const auto& row : chart.values)
    for (double v : row)
      if (std::isfinite(v)) vmax = std::max(vmax, std::abs(v));
  if (vmax == 0) vmax = 1;
  std::ostringstream os;
  header(os, chart.title);
  const double x0 = kLeft + 40, x1 = kWidth - kRight + 60, y1 = kTop + 10;
  const double row_h = 40;
  for (std::size_t r = 0; r < chart.values.size(); ++r) {
    const auto& row = chart.values[r];
    const double cw = row.empty() ? 0 : (x1 - x0) / static_cast<double>(row.size());
    const double y = y1 + row_h * static_cast<double>(r) * 1.4;
    if (r < chart.row_labels.size())
      os << "<text x=\"" << x0 - 5 << "\" y=\"" << y + row_h / 2 + 4 << "\" text-anchor=\"end\">"
         << esc(chart.row_labels[r]) << "</text>\n";
    for (std::size_t k = 0; k < row.size(); ++k) {
      // Diverging blue (negative) to red (positive).
      const double t = std::isfinite(row[k]) ? std::clamp(row[k] / vmax, -1.0, 1.0) : 0.0;
      const int other = static_cast<int>(255 * (1 - std::abs(t)));
      char color[16];
      if (t < 0)
        std::snprintf(color, sizeof color, "#%02x%02xff", other, other);
      else
        std::snprintf(color, sizeof color, "#ff%02x%02x", other, other);
      const double x = x0 + cw * static_cast<double>(k);
      os << "<rect x=\"" << num(x) << "\" y=\"" << y << "\" width=\"" << num(cw) << "\" height=\"" << row_h
         << "\" fill=\"" << color << "\"/>\n";
      if (r < chart.mask.size() && k < chart.mask[r].size() && chart.mask[r][k])
        os << "<circle cx=\"" << num(x + cw / 2) << "\" cy=\"" << y + row_h / 2 << "\" r=\"2\" fill=\"black\"/>\n";
    }
  }
  os << "<text x=\"" << x0 << "\" y=\"" << kHeight - 12 << "\">gridpoint (scale +-" << num(vmax)
     << ", dots: significant)</text>\n</svg>\n";
  return os.str();
}

}  // namespace lrd::plot

#pragma once
// Static SVG charts for the report command.

#include <string>
#include <vector>

namespace lrd::plot {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<Series> series;
};

/// Bars with optional error whiskers (lo/hi empty or one per bar).
struct BarChart {
  std::string title;
  std::string y_label;
  std::vector<std::string> labels;
  std::vector<double> values;
  std::vector<double> lo;
  std::vector<double> hi;
};

/// Rows of values over the ring; cells with mask[r][k] get a dot.
struct Heatmap {
  std::string title;
  std::vector<std::string> row_labels;
  std::vector<std::vector<double>> values;
  std::vector<std::vector<bool>> mask;
};

std::string render(const LineChart& chart);
std::string render(const BarChart& chart);
std::string render(const Heatmap& chart);

}  // namespace lrd::plot

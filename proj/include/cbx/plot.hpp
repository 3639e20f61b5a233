#pragma once

#include <string>
#include <utility>
#include <vector>

namespace cbx {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

// Minimal standalone SVG charts for curve and histogram outputs.
std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series, double y_min = 0.0, double y_max = 1.0);

struct BarGroup {
  std::string name;            // x-axis category
  std::vector<double> values;  // one bar per series
};

std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& series_names,
                          const std::vector<BarGroup>& groups);

}  // namespace cbx

#include "cbx/plot.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>

namespace cbx {

namespace {

constexpr double kW = 640, kH = 400, kLeft = 60, kRight = 160, kTop = 40, kBottom = 50;
const char* const kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
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

std::string header(const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kW) + "\" height=\"" + num(kH) +
         "\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
         "<text x=\"" + num(kW / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) +
         "</text>\n";
}

}  // namespace

std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series, double y_min, double y_max) {
  double x_min = std::numeric_limits<double>::infinity(), x_max = -x_min;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      x_min = std::min(x_min, x);
      x_max = std::max(x_max, x);
    }
  }
  if (!(x_max > x_min)) {
    x_min = 0;
    x_max = 1;
  }
  if (!(y_max > y_min)) y_max = y_min + 1;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x_min) / (x_max - x_min) * pw; };
  auto py = [&](double y) { return kTop + ph - (y - y_min) / (y_max - y_min) * ph; };

  std::string svg = header(title);
  svg += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop + ph) + "\" x2=\"" + num(kLeft + pw) + "\" y2=\"" +
         num(kTop + ph) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(kLeft) + "\" y2=\"" + num(kTop + ph) +
         "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double y = y_min + (y_max - y_min) * t / 4.0;
    svg += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(py(y) + 4) + "\" text-anchor=\"end\">" + num(y) +
           "</text>\n";
    const double x = x_min + (x_max - x_min) * t / 4.0;
    svg += "<text x=\"" + num(px(x)) + "\" y=\"" + num(kTop + ph + 16) + "\" text-anchor=\"middle\">" + num(x) +
           "</text>\n";
  }
  svg += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"" + num(kH - 10) + "\" text-anchor=\"middle\">" +
         escape(x_label) + "</text>\n";
  svg += "<text x=\"15\" y=\"" + num(kTop + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 15 " +
         num(kTop + ph / 2) + ")\">" + escape(y_label) + "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % 10];
    std::string pts;
    for (const auto& [x, y] : series[i].points) pts += num(px(x)) + "," + num(py(y)) + " ";
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" + pts +
           "\"/>\n";
    const double ly = kTop + 14.0 * static_cast<double>(i);
    svg += "<rect x=\"" + num(kW - kRight + 10) + "\" y=\"" + num(ly) + "\" width=\"10\" height=\"10\" fill=\"" +
           color + "\"/>\n<text x=\"" + num(kW - kRight + 24) + "\" y=\"" + num(ly + 9) + "\">" +
           escape(series[i].name) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& series_names,
                          const std::vector<BarGroup>& groups) {
  double vmax = 0.0;
  for (const auto& g : groups) {
    for (double v : g.values) vmax = std::max(vmax, v);
  }
  if (vmax <= 0) vmax = 1;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  const double gw = groups.empty() ? pw : pw / static_cast<double>(groups.size());
  const double bw = series_names.empty() ? gw : gw * 0.8 / static_cast<double>(series_names.size());

  std::string svg = header(title);
  svg += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop + ph) + "\" x2=\"" + num(kLeft + pw) + "\" y2=\"" +
         num(kTop + ph) + "\" stroke=\"black\"/>\n";
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double gx = kLeft + gw * static_cast<double>(g) + gw * 0.1;
    for (std::size_t s = 0; s < groups[g].values.size() && s < series_names.size(); ++s) {
      const double h = groups[g].values[s] / vmax * ph;
      svg += "<rect x=\"" + num(gx + bw * static_cast<double>(s)) + "\" y=\"" + num(kTop + ph - h) + "\" width=\"" +
             num(bw * 0.9) + "\" height=\"" + num(h) + "\" fill=\"" + kPalette[s % 10] + "\"/>\n";
    }
    svg += "<text x=\"" + num(kLeft + gw * (static_cast<double>(g) + 0.5)) + "\" y=\"" + num(kTop + ph + 16) +
           "\" text-anchor=\"middle\">" + escape(groups[g].name) + "</text>\n";
  }
  svg += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(kTop + 4) + "\" text-anchor=\"end\">" + num(vmax) +
         "</text>\n";
  for (std::size_t s = 0; s < series_names.size(); ++s) {
    const double ly = kTop + 14.0 * static_cast<double>(s);
    svg += "<rect x=\"" + num(kW - kRight + 10) + "\" y=\"" + num(ly) + "\" width=\"10\" height=\"10\" fill=\"" +
           kPalette[s % 10] + "\"/>\n<text x=\"" + num(kW - kRight + 24) + "\" y=\"" + num(ly + 9) + "\">" +
           escape(series_names[s]) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace cbx

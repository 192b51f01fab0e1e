#pragma once

#include <string>
#include <vector>

namespace byteprobe {

// Formats a double the same way everywhere so reports are byte-stable.
std::string fmt_double(double v);

void write_text_file(const std::string& path, const std::string& content);

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

struct SvgSeries {
  std::string label;
  std::string color;
  std::vector<double> values;
};

// Grouped bar chart; one bar group per x position holding each series.
std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& x_labels,
                          const std::vector<SvgSeries>& series);

struct SvgPoint {
  double x = 0.0, y = 0.0;
  std::string color;
  std::string label;  // hover text
};

std::string svg_scatter(const std::string& title, const std::vector<SvgPoint>& points);

// Signed bars along a byte axis (attribution by offset).
struct SvgSpanBar {
  double x0 = 0.0, x1 = 0.0, value = 0.0;
  std::string label;
};
std::string svg_span_bars(const std::string& title, double x_max,
                          const std::vector<SvgSpanBar>& bars);

}  // namespace byteprobe

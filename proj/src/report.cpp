#include "byteprobe/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "byteprobe/errors.hpp"

namespace byteprobe {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw InputError("cannot open " + path + " for writing");
  f << content;
  if (!f) throw InputError("write failed for " + path);
}

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string xml_escape(const std::string& s) {
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

}  // namespace

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream os;
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << csv_escape(header[i]);
  os << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << csv_escape(row[i]);
    os << "\n";
  }
  write_text_file(path, os.str());
}

namespace {
constexpr double kWidth = 900.0;
constexpr double kHeight = 420.0;
constexpr double kMarginLeft = 60.0;
constexpr double kMarginBottom = 50.0;
constexpr double kMarginTop = 40.0;

std::string svg_open(const std::string& title) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
     << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" "
     << "font-family=\"sans-serif\" font-size=\"15\">" << xml_escape(title) << "</text>\n";
  return os.str();
}
}  // namespace

std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& x_labels,
                          const std::vector<SvgSeries>& series) {
  std::ostringstream os;
  os << svg_open(title);
  const std::size_t n = x_labels.size();
  double max_v = 1.0;
  for (const auto& s : series) {
    for (double v : s.values) max_v = std::max(max_v, v);
  }
  const double plot_w = kWidth - kMarginLeft - 20.0;
  const double plot_h = kHeight - kMarginTop - kMarginBottom;
  const double group_w = n ? plot_w / static_cast<double>(n) : plot_w;
  const double bar_w = series.empty() ? group_w : group_w / static_cast<double>(series.size());

  for (std::size_t si = 0; si < series.size(); ++si) {
    const SvgSeries& s = series[si];
    os << "<g fill=\"" << s.color << "\">\n";
    for (std::size_t i = 0; i < s.values.size() && i < n; ++i) {
      const double h = plot_h * s.values[i] / max_v;
      const double x = kMarginLeft + group_w * static_cast<double>(i) +
                       bar_w * static_cast<double>(si);
      const double y = kMarginTop + plot_h - h;
      os << "<rect x=\"" << fmt_double(x) << "\" y=\"" << fmt_double(y) << "\" width=\""
         << fmt_double(std::max(0.5, bar_w - 0.5)) << "\" height=\"" << fmt_double(h)
         << "\"><title>" << xml_escape(x_labels[i]) << " " << xml_escape(s.label) << "="
         << fmt_double(s.values[i]) << "</title></rect>\n";
    }
    os << "</g>\n";
    os << "<rect x=\"" << kMarginLeft + 120.0 * static_cast<double>(si) << "\" y=\""
       << kHeight - 18.0 << "\" width=\"10\" height=\"10\" fill=\"" << s.color << "\"/>"
       << "<text x=\"" << kMarginLeft + 120.0 * static_cast<double>(si) + 14.0 << "\" y=\""
       << kHeight - 9.0 << "\" font-family=\"sans-serif\" font-size=\"11\">"
       << xml_escape(s.label) << "</text>\n";
  }
  // Sparse x labels to keep wide charts readable.
  const std::size_t step = std::max<std::size_t>(1, n / 16);
  for (std::size_t i = 0; i < n; i += step) {
    os << "<text x=\"" << fmt_double(kMarginLeft + group_w * (static_cast<double>(i) + 0.5))
       << "\" y=\"" << kHeight - kMarginBottom + 14.0
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"9\">"
       << xml_escape(x_labels[i]) << "</text>\n";
  }
  os << "<text x=\"12\" y=\"" << kMarginTop << "\" font-family=\"sans-serif\" font-size=\"10\">"
     << fmt_double(max_v) << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

std::string svg_scatter(const std::string& title, const std::vector<SvgPoint>& points) {
  std::ostringstream os;
  os << svg_open(title);
  double min_x = 0.0, max_x = 1.0, min_y = 0.0, max_y = 1.0;
  if (!points.empty()) {
    min_x = max_x = points[0].x;
    min_y = max_y = points[0].y;
    for (const auto& p : points) {
      min_x = std::min(min_x, p.x);
      max_x = std::max(max_x, p.x);
      min_y = std::min(min_y, p.y);
      max_y = std::max(max_y, p.y);
    }
  }
  const double span_x = max_x - min_x > 0 ? max_x - min_x : 1.0;
  const double span_y = max_y - min_y > 0 ? max_y - min_y : 1.0;
  const double plot_w = kWidth - kMarginLeft - 20.0;
  const double plot_h = kHeight - kMarginTop - kMarginBottom;
  for (const auto& p : points) {
    const double x = kMarginLeft + plot_w * (p.x - min_x) / span_x;
    const double y = kMarginTop + plot_h * (1.0 - (p.y - min_y) / span_y);
    os << "<circle cx=\"" << fmt_double(x) << "\" cy=\"" << fmt_double(y)
       << "\" r=\"3\" fill=\"" << p.color << "\" fill-opacity=\"0.8\"><title>"
       << xml_escape(p.label) << "</title></circle>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string svg_span_bars(const std::string& title, double x_max,
                          const std::vector<SvgSpanBar>& bars) {
  std::ostringstream os;
  os << svg_open(title);
  double max_abs = 1e-12;
  for (const auto& b : bars) max_abs = std::max(max_abs, std::abs(b.value));
  const double plot_w = kWidth - kMarginLeft - 20.0;
  const double plot_h = kHeight - kMarginTop - kMarginBottom;
  const double mid_y = kMarginTop + plot_h / 2.0;
  os << "<line x1=\"" << kMarginLeft << "\" y1=\"" << mid_y << "\" x2=\"" << kWidth - 20.0
     << "\" y2=\"" << mid_y << "\" stroke=\"#888\" stroke-width=\"1\"/>\n";
  const double scale_x = x_max > 0 ? plot_w / x_max : plot_w;
  for (const auto& b : bars) {
    const double h = (plot_h / 2.0) * std::abs(b.value) / max_abs;
    const double x = kMarginLeft + b.x0 * scale_x;
    const double w = std::max(0.6, (b.x1 - b.x0) * scale_x);
    const double y = b.value >= 0 ? mid_y - h : mid_y;
    const char* color = b.value >= 0 ? "#c0392b" : "#2980b9";
    os << "<rect x=\"" << fmt_double(x) << "\" y=\"" << fmt_double(y) << "\" width=\""
       << fmt_double(w) << "\" height=\"" << fmt_double(std::max(h, 0.3)) << "\" fill=\"" << color
       << "\"><title>" << xml_escape(b.label) << "</title></rect>\n";
  }
  os << "<text x=\"12\" y=\"" << kMarginTop << "\" font-family=\"sans-serif\" font-size=\"10\">+"
     << fmt_double(max_abs) << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace byteprobe

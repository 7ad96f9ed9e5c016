#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "dmd/tensor.hpp"

namespace dmd {

// Append-friendly CSV writer: writes the header only when creating the
// file, so resumed runs keep extending their logs.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& header) : path_(path) {
    const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    out_.open(path, std::ios::app);
    if (!out_) throw TensorError("cannot open " + path);
    if (fresh) out_ << header << '\n';
  }

  void row(const std::string& line) {
    out_ << line << '\n';
    out_.flush();
  }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ofstream out_;
};

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

// Minimal self-contained SVG line chart; one polyline per series.
inline void svg_line_chart(const std::string& path, const std::string& title,
                           const std::vector<Series>& series) {
  const double w = 720, h = 420, ml = 70, mr = 20, mt = 40, mb = 50;
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool first = true;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      if (first) {
        xmin = xmax = x;
        ymin = ymax = y;
        first = false;
      } else {
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      }
    }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
  auto py = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  std::ofstream out(path);
  if (!out) throw TensorError("cannot open " + path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n"
      << "<rect width='100%' height='100%' fill='white'/>\n"
      << "<text x='" << w / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
      << "</text>\n"
      << "<line x1='" << ml << "' y1='" << h - mb << "' x2='" << w - mr << "' y2='" << h - mb
      << "' stroke='black'/>\n"
      << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << h - mb
      << "' stroke='black'/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 4.0;
    const double yv = ymin + (ymax - ymin) * i / 4.0;
    out << "<text x='" << px(xv) << "' y='" << h - mb + 18
        << "' text-anchor='middle' font-size='11'>" << std::setprecision(4) << xv << "</text>\n"
        << "<text x='" << ml - 8 << "' y='" << py(yv) + 4
        << "' text-anchor='end' font-size='11'>" << std::setprecision(4) << yv << "</text>\n";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    out << "<polyline fill='none' stroke='" << colors[s % 6] << "' stroke-width='1.5' points='";
    for (const auto& [x, y] : series[s].points)
      if (std::isfinite(x) && std::isfinite(y)) out << px(x) << ',' << py(y) << ' ';
    out << "'/>\n"
        << "<text x='" << w - mr - 6 << "' y='" << mt + 16 * (s + 1)
        << "' text-anchor='end' font-size='12' fill='" << colors[s % 6] << "'>" << series[s].name
        << "</text>\n";
  }
  out << "</svg>\n";
}

// Rebuilds a chart from a CSV already on disk: x = first column, one
// series per selected value column.
inline void chart_from_csv(const std::string& csv_path, const std::string& svg_path,
                           const std::string& title, const std::vector<std::size_t>& cols) {
  std::ifstream in(csv_path);
  if (!in) throw TensorError("cannot open " + csv_path);
  std::string line;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (header.empty()) header = fields;
    else rows.push_back(fields);
  }
  std::vector<Series> series;
  for (std::size_t c : cols) {
    Series s;
    s.name = c < header.size() ? header[c] : "col" + std::to_string(c);
    for (const auto& r : rows) {
      if (c >= r.size()) continue;
      try {
        s.points.emplace_back(std::stod(r[0]), std::stod(r[c]));
      } catch (...) {
        // non-numeric cell (e.g. a label column); skip the point
      }
    }
    series.push_back(std::move(s));
  }
  svg_line_chart(svg_path, title, series);
}

}  // namespace dmd

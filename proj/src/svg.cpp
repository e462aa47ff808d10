#include "rosetta/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace rosetta::svg {

namespace {

constexpr double kWidth = 960.0;
constexpr double kHeight = 540.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 30.0;
constexpr double kTop = 50.0;
constexpr double kBottom = 60.0;

const char* kPalette[] = {"#4878d0", "#ee854a", "#6acc64",
                          "#d65f5f", "#956cb4", "#8c613c"};
constexpr int kPaletteSize = 6;

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6g", v);
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

}  // namespace

std::vector<double> nice_ticks(double lo, double hi, int target) {
  if (!(lo < hi)) throw InputError("tick range must satisfy lo < hi");
  if (target < 2) throw InputError("tick count target must be at least 2");
  const double raw = (hi - lo) / (target - 1);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = 10.0 * mag;
  for (double m : {1.0, 2.0, 5.0}) {
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  }
  std::vector<double> ticks;
  double t = std::floor(lo / step) * step;
  // guard against accumulated rounding leaving the last tick just short
  for (; t <= hi + step * 1e-9; t += step) {
    if (t >= lo - step * 1e-9) ticks.push_back(t == 0.0 ? 0.0 : t);
  }
  return ticks;
}

void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<double>& x,
                      const std::vector<Series>& series) {
  if (x.empty()) throw InputError("line chart needs at least one x value");
  if (series.empty()) throw InputError("line chart needs at least one series");
  for (const auto& s : series) {
    if (s.y.size() != x.size())
      throw InputError("series '" + s.name + "' has " +
                       std::to_string(s.y.size()) + " points but the x grid has " +
                       std::to_string(x.size()));
    for (double v : s.y)
      if (!std::isfinite(v))
        throw InputError("series '" + s.name + "' contains a non-finite value");
  }
  for (double v : x)
    if (!std::isfinite(v)) throw InputError("x grid contains a non-finite value");

  double x_lo = *std::min_element(x.begin(), x.end());
  double x_hi = *std::max_element(x.begin(), x.end());
  double y_lo = std::numeric_limits<double>::infinity();
  double y_hi = -y_lo;
  for (const auto& s : series) {
    for (double v : s.y) {
      y_lo = std::min(y_lo, v);
      y_hi = std::max(y_hi, v);
    }
  }
  // widen degenerate ranges so single points and flat lines still plot
  if (x_hi - x_lo < 1e-12) {
    x_lo -= 0.5;
    x_hi += 0.5;
  }
  if (y_hi - y_lo < 1e-12) {
    const double pad = std::max(1.0, std::abs(y_lo) * 0.1);
    y_lo -= pad;
    y_hi += pad;
  } else {
    const double pad = (y_hi - y_lo) * 0.05;
    y_lo -= pad;
    y_hi += pad;
  }

  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](double v) { return kLeft + (v - x_lo) / (x_hi - x_lo) * plot_w; };
  auto py = [&](double v) {
    return kTop + plot_h - (v - y_lo) / (y_hi - y_lo) * plot_h;
  };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(kWidth) +
         "\" height=\"" + fmt(kHeight) + "\" viewBox=\"0 0 " + fmt(kWidth) +
         " " + fmt(kHeight) + "\">\n";
  out += "<rect width=\"" + fmt(kWidth) + "\" height=\"" + fmt(kHeight) +
         "\" fill=\"white\"/>\n";
  out += "<text x=\"" + fmt(kWidth / 2) +
         "\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"18\">" +
         escape(title) + "</text>\n";

  for (double t : nice_ticks(x_lo, x_hi)) {
    const double gx = px(t);
    out += "<line x1=\"" + fmt(gx) + "\" y1=\"" + fmt(kTop) + "\" x2=\"" +
           fmt(gx) + "\" y2=\"" + fmt(kTop + plot_h) +
           "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    out += "<text x=\"" + fmt(gx) + "\" y=\"" + fmt(kTop + plot_h + 20) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"12\">" +
           fmt(t) + "</text>\n";
  }
  for (double t : nice_ticks(y_lo, y_hi)) {
    const double gy = py(t);
    out += "<line x1=\"" + fmt(kLeft) + "\" y1=\"" + fmt(gy) + "\" x2=\"" +
           fmt(kLeft + plot_w) + "\" y2=\"" + fmt(gy) +
           "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    out += "<text x=\"" + fmt(kLeft - 8) + "\" y=\"" + fmt(gy + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"12\">" +
           fmt(t) + "</text>\n";
  }

  // axes drawn over the grid
  out += "<line x1=\"" + fmt(kLeft) + "\" y1=\"" + fmt(kTop) + "\" x2=\"" +
         fmt(kLeft) + "\" y2=\"" + fmt(kTop + plot_h) +
         "\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
  out += "<line x1=\"" + fmt(kLeft) + "\" y1=\"" + fmt(kTop + plot_h) +
         "\" x2=\"" + fmt(kLeft + plot_w) + "\" y2=\"" + fmt(kTop + plot_h) +
         "\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
  out += "<text x=\"" + fmt(kLeft + plot_w / 2) + "\" y=\"" +
         fmt(kHeight - 14) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"14\">" +
         escape(x_label) + "</text>\n";
  out += "<text x=\"20\" y=\"" + fmt(kTop + plot_h / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"14\" transform=\"rotate(-90 20 " +
         fmt(kTop + plot_h / 2) + ")\">" +
         escape(y_label) + "</text>\n";

  for (size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % kPaletteSize];
    std::string points;
    for (size_t i = 0; i < x.size(); ++i) {
      if (i) points += " ";
      points += fmt(px(x[i])) + "," + fmt(py(series[s].y[i]));
    }
    out += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"2\" points=\"" + points + "\"/>\n";
    for (size_t i = 0; i < x.size(); ++i) {
      out += "<circle cx=\"" + fmt(px(x[i])) + "\" cy=\"" +
             fmt(py(series[s].y[i])) + "\" r=\"3\" fill=\"" + color + "\"/>\n";
    }
    // legend swatch and label, one row per series at the top right
    const double ly = kTop + 10 + 18 * static_cast<double>(s);
    out += "<rect x=\"" + fmt(kLeft + plot_w - 150) + "\" y=\"" + fmt(ly - 9) +
           "\" width=\"12\" height=\"12\" fill=\"" + color + "\"/>\n";
    out += "<text x=\"" + fmt(kLeft + plot_w - 132) + "\" y=\"" + fmt(ly + 2) +
           "\" font-family=\"sans-serif\" font-size=\"12\">" +
           escape(series[s].name) + "</text>\n";
  }
  out += "</svg>\n";

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing " + path);
}

}  // namespace rosetta::svg

#include "omega/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "omega/tensor.hpp"

namespace omega {

namespace {

constexpr int kW = 640, kH = 480, kPad = 60;

struct Box {
  double x0, x1, y0, y1;
};

Box bounds(const SvgSeries& s, double extra_lo = 0.0, double extra_hi = 0.0) {
  Box b{s.x.front(), s.x.front(), s.y.front(), s.y.front()};
  for (double v : s.x) {
    b.x0 = std::min(b.x0, v);
    b.x1 = std::max(b.x1, v);
  }
  for (double v : s.y) {
    b.y0 = std::min(b.y0, v);
    b.y1 = std::max(b.y1, v);
  }
  b.y0 = std::min(b.y0, extra_lo);
  b.y1 = std::max(b.y1, extra_hi);
  if (b.x1 - b.x0 < 1e-12) b.x1 = b.x0 + 1.0;
  if (b.y1 - b.y0 < 1e-12) b.y1 = b.y0 + 1.0;
  return b;
}

double sx(const Box& b, double x) { return kPad + (x - b.x0) / (b.x1 - b.x0) * (kW - 2 * kPad); }
double sy(const Box& b, double y) { return kH - kPad - (y - b.y0) / (b.y1 - b.y0) * (kH - 2 * kPad); }

void header(std::ofstream& out, const Box& b, const std::string& title,
            const std::string& x_label, const std::string& y_label) {
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='" << kH << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<line x1='" << kPad << "' y1='" << kH - kPad << "' x2='" << kW - kPad << "' y2='"
      << kH - kPad << "' stroke='black'/>\n";
  out << "<line x1='" << kPad << "' y1='" << kPad << "' x2='" << kPad << "' y2='" << kH - kPad
      << "' stroke='black'/>\n";
  out << "<text x='" << kW / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
      << "</text>\n";
  out << "<text x='" << kW / 2 << "' y='" << kH - 16 << "' text-anchor='middle' font-size='12'>"
      << x_label << "</text>\n";
  out << "<text x='16' y='" << kH / 2 << "' text-anchor='middle' font-size='12' transform='rotate(-90 16 "
      << kH / 2 << ")'>" << y_label << "</text>\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g", b.x0);
  out << "<text x='" << kPad << "' y='" << kH - kPad + 16 << "' font-size='10'>" << buf << "</text>\n";
  std::snprintf(buf, sizeof(buf), "%.3g", b.x1);
  out << "<text x='" << kW - kPad << "' y='" << kH - kPad + 16 << "' text-anchor='end' font-size='10'>"
      << buf << "</text>\n";
  std::snprintf(buf, sizeof(buf), "%.3g", b.y0);
  out << "<text x='" << kPad - 4 << "' y='" << kH - kPad << "' text-anchor='end' font-size='10'>"
      << buf << "</text>\n";
  std::snprintf(buf, sizeof(buf), "%.3g", b.y1);
  out << "<text x='" << kPad - 4 << "' y='" << kPad + 4 << "' text-anchor='end' font-size='10'>"
      << buf << "</text>\n";
}

}  // namespace

void write_svg_line(const std::string& path, const SvgSeries& series, const std::string& title,
                    const std::string& x_label, const std::string& y_label) {
  check(!series.x.empty() && series.x.size() == series.y.size(), "svg: bad series");
  std::ofstream out(path);
  check(out.good(), "svg: cannot open " + path);
  const Box b = bounds(series);
  header(out, b, title, x_label, y_label);
  out << "<polyline fill='none' stroke='steelblue' stroke-width='2' points='";
  for (std::size_t i = 0; i < series.x.size(); ++i)
    out << sx(b, series.x[i]) << "," << sy(b, series.y[i]) << " ";
  out << "'/>\n</svg>\n";
}

void write_svg_scatter(const std::string& path, const SvgSeries& points, double hline_low,
                       double hline_mid, double hline_high, const std::string& title,
                       const std::string& x_label, const std::string& y_label) {
  check(!points.x.empty() && points.x.size() == points.y.size(), "svg: bad series");
  std::ofstream out(path);
  check(out.good(), "svg: cannot open " + path);
  const Box b = bounds(points, std::min(hline_low, hline_mid), std::max(hline_high, hline_mid));
  header(out, b, title, x_label, y_label);
  for (double y : {hline_low, hline_mid, hline_high})
    out << "<line x1='" << kPad << "' y1='" << sy(b, y) << "' x2='" << kW - kPad << "' y2='"
        << sy(b, y) << "' stroke='firebrick' stroke-dasharray='6,4'/>\n";
  for (std::size_t i = 0; i < points.x.size(); ++i)
    out << "<circle cx='" << sx(b, points.x[i]) << "' cy='" << sy(b, points.y[i])
        << "' r='3' fill='steelblue' fill-opacity='0.6'/>\n";
  out << "</svg>\n";
}

}  // namespace omega

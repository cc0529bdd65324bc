#pragma once

#include <string>
#include <vector>

namespace omega {

// Minimal static SVG plots.
struct SvgSeries {
  std::vector<double> x, y;
};

void write_svg_line(const std::string& path, const SvgSeries& series,
                    const std::string& title, const std::string& x_label,
                    const std::string& y_label);

void write_svg_scatter(const std::string& path, const SvgSeries& points,
                       double hline_low, double hline_mid, double hline_high,
                       const std::string& title, const std::string& x_label,
                       const std::string& y_label);

}  // namespace omega

#pragma once

#include <string>
#include <vector>

namespace act {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

// Static SVG line chart; one panel per series, stacked vertically so the
// curves keep their own y scale. Non-finite points are skipped.
void write_line_plot(const std::string& path, const std::string& title, const std::string& x_label,
                     const std::vector<Series>& panels);

// Static SVG scatter plot of 2-D points, with optional marker centers.
void write_scatter_plot(const std::string& path, const std::string& title, const std::vector<double>& xs,
                        const std::vector<double>& ys, const std::vector<double>& cx = {},
                        const std::vector<double>& cy = {});

}  // namespace act

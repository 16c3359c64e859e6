#include "act/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace act {

namespace {

constexpr double kWidth = 640, kPanel = 180, kLeft = 70, kRight = 20, kTop = 40, kGap = 40;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

std::pair<double, double> finite_range(const std::vector<double>& v) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double x : v)
    if (std::isfinite(x)) lo = std::min(lo, x), hi = std::max(hi, x);
  if (!std::isfinite(lo)) return {0.0, 1.0};
  if (hi == lo) return {lo - 0.5, hi + 0.5};
  return {lo, hi};
}

std::ofstream open_svg(const std::string& path, double height) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write plot '" + path + "'");
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return out;
}

}  // namespace

void write_line_plot(const std::string& path, const std::string& title, const std::string& x_label,
                     const std::vector<Series>& panels) {
  const double height = kTop + panels.size() * (kPanel + kGap) + 10;
  auto out = open_svg(path, height);
  out << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
      << "</text>\n";
  const double pw = kWidth - kLeft - kRight;
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const auto& s = panels[p];
    const double top = kTop + p * (kPanel + kGap);
    auto [x0, x1] = finite_range(s.x);
    auto [y0, y1] = finite_range(s.y);
    auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return top + kPanel - (y - y0) / (y1 - y0) * kPanel; };
    out << "<rect x=\"" << kLeft << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << kPanel
        << "\" fill=\"none\" stroke=\"#888\"/>\n";
    out << "<text x=\"" << kLeft + 4 << "\" y=\"" << top + 14 << "\">" << escape(s.name) << "</text>\n";
    out << "<text x=\"" << kLeft - 4 << "\" y=\"" << top + 10 << "\" text-anchor=\"end\">" << num(y1) << "</text>\n";
    out << "<text x=\"" << kLeft - 4 << "\" y=\"" << top + kPanel << "\" text-anchor=\"end\">" << num(y0)
        << "</text>\n";
    out << "<text x=\"" << kLeft << "\" y=\"" << top + kPanel + 14 << "\">" << num(x0) << "</text>\n";
    out << "<text x=\"" << kLeft + pw << "\" y=\"" << top + kPanel + 14 << "\" text-anchor=\"end\">" << num(x1)
        << "</text>\n";
    out << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << top + kPanel + 14 << "\" text-anchor=\"middle\">"
        << escape(x_label) << "</text>\n";
    out << "<polyline fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"1.2\" points=\"";
    const auto n = std::min(s.x.size(), s.y.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) out << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    }
    out << "\"/>\n";
  }
  out << "</svg>\n";
}

void write_scatter_plot(const std::string& path, const std::string& title, const std::vector<double>& xs,
                        const std::vector<double>& ys, const std::vector<double>& cx, const std::vector<double>& cy) {
  const double side = kWidth - kLeft - kRight;
  auto out = open_svg(path, kTop + side + 30);
  out << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
      << "</text>\n";
  std::vector<double> all(xs);
  all.insert(all.end(), ys.begin(), ys.end());
  all.insert(all.end(), cx.begin(), cx.end());
  all.insert(all.end(), cy.begin(), cy.end());
  auto [lo, hi] = finite_range(all);
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  auto px = [&](double x) { return kLeft + (x - lo) / (hi - lo) * side; };
  auto py = [&](double y) { return kTop + side - (y - lo) / (hi - lo) * side; };
  out << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << side << "\" height=\"" << side
      << "\" fill=\"none\" stroke=\"#888\"/>\n";
  out << "<text x=\"" << kLeft << "\" y=\"" << kTop + side + 14 << "\">" << num(lo) << "</text>\n";
  out << "<text x=\"" << kLeft + side << "\" y=\"" << kTop + side + 14 << "\" text-anchor=\"end\">" << num(hi)
      << "</text>\n";
  const auto n = std::min(xs.size(), ys.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) continue;
    out << "<circle cx=\"" << px(xs[i]) << "\" cy=\"" << py(ys[i]) << "\" r=\"1.5\" fill=\"#1f5fa8\" fill-opacity=\"0.5\"/>\n";
  }
  for (std::size_t i = 0; i < std::min(cx.size(), cy.size()); ++i) {
    out << "<circle cx=\"" << px(cx[i]) << "\" cy=\"" << py(cy[i]) << "\" r=\"5\" fill=\"none\" stroke=\"#c0392b\"/>\n";
  }
  out << "</svg>\n";
}

}  // namespace act

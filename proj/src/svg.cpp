#include "remeanflow/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "remeanflow/util.hpp"

namespace rmf {

namespace {

constexpr double kW = 640.0, kH = 480.0, kMargin = 50.0;

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (!(hi > lo)) {
      lo -= 1.0;
      hi += 1.0;
    }
    double m = 0.05 * (hi - lo);
    lo -= m;
    hi += m;
  }
};

double sx(double v, const Range& r) {
  return kMargin + (v - r.lo) / (r.hi - r.lo) * (kW - 2 * kMargin);
}

double sy(double v, const Range& r) {
  return kH - kMargin - (v - r.lo) / (r.hi - r.lo) * (kH - 2 * kMargin);
}

std::ofstream open_svg(const std::string& path, const std::string& title) {
  std::ofstream out(path);
  if (!out) fail("svg: cannot open '" + path + "'");
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW
      << "\" height=\"" << kH << "\" viewBox=\"0 0 " << kW << " " << kH
      << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kW / 2
      << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title
      << "</text>\n";
  return out;
}

void axes(std::ofstream& out, const Range& xr, const Range& yr,
          const std::string& x_label, const std::string& y_label) {
  out << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\""
      << kW - 2 * kMargin << "\" height=\"" << kH - 2 * kMargin
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  out << "<text x=\"" << kMargin << "\" y=\"" << kH - kMargin + 18
      << "\" font-size=\"11\">" << xr.lo << "</text>\n"
      << "<text x=\"" << kW - kMargin << "\" y=\"" << kH - kMargin + 18
      << "\" text-anchor=\"end\" font-size=\"11\">" << xr.hi << "</text>\n"
      << "<text x=\"" << kMargin - 4 << "\" y=\"" << kH - kMargin
      << "\" text-anchor=\"end\" font-size=\"11\">" << yr.lo << "</text>\n"
      << "<text x=\"" << kMargin - 4 << "\" y=\"" << kMargin + 4
      << "\" text-anchor=\"end\" font-size=\"11\">" << yr.hi << "</text>\n";
  out << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 8
      << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label
      << "</text>\n"
      << "<text x=\"14\" y=\"" << kH / 2
      << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 "
         "14 "
      << kH / 2 << ")\">" << y_label << "</text>\n";
}

}  // namespace

void write_scatter_svg(const std::string& path,
                       const std::vector<ScatterSeries>& series,
                       const std::string& title) {
  Range xr, yr;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.points->rows(); ++i) {
      xr.add(s.points->at(i, 0));
      yr.add(s.points->at(i, 1));
    }
  xr.pad();
  yr.pad();
  auto out = open_svg(path, title);
  axes(out, xr, yr, "x0", "x1");
  double ly = kMargin + 14;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.points->rows(); ++i)
      out << "<circle cx=\"" << sx(s.points->at(i, 0), xr) << "\" cy=\""
          << sy(s.points->at(i, 1), yr)
          << "\" r=\"1.5\" fill=\"" << s.color << "\" fill-opacity=\"0.5\"/>\n";
    out << "<text x=\"" << kW - kMargin - 4 << "\" y=\"" << ly
        << "\" text-anchor=\"end\" font-size=\"12\" fill=\"" << s.color
        << "\">" << s.label << "</text>\n";
    ly += 16;
  }
  out << "</svg>\n";
}

void write_heatmap_svg(const std::string& path, const LossHeatmap& hm,
                       const std::string& title) {
  auto out = open_svg(path, title);
  double max_mean = 0.0;
  for (std::size_t c = 0; c < hm.mean.size(); ++c)
    if (hm.count[c] > 0) max_mean = std::max(max_mean, hm.mean[c]);
  if (max_mean <= 0.0) max_mean = 1.0;
  double cw = (kW - 2 * kMargin) / static_cast<double>(hm.grid_n);
  double ch = (kH - 2 * kMargin) / static_cast<double>(hm.grid_n);
  for (std::size_t ti = 0; ti < hm.grid_n; ++ti)
    for (std::size_t ri = 0; ri < hm.grid_n; ++ri) {
      std::size_t c = hm.cell(ti, ri);
      if (hm.count[c] == 0) continue;
      double frac = std::min(1.0, hm.mean[c] / max_mean);
      int red = static_cast<int>(255 * frac);
      int blue = 255 - red;
      // x axis: t, y axis: r (origin bottom-left)
      double x = kMargin + cw * static_cast<double>(ti);
      double y = kH - kMargin - ch * static_cast<double>(ri + 1);
      out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cw
          << "\" height=\"" << ch << "\" fill=\"rgb(" << red << ",60,"
          << blue << ")\"/>\n";
    }
  Range unit;
  unit.lo = 0.0;
  unit.hi = 1.0;
  axes(out, unit, unit, "t", "r");
  out << "</svg>\n";
}

void write_curve_svg(const std::string& path,
                     const std::vector<CurveSeries>& series,
                     const std::string& title, const std::string& x_label,
                     const std::string& y_label) {
  Range xr, yr;
  for (const auto& s : series) {
    for (double v : s.x) xr.add(v);
    for (double v : s.y) yr.add(v);
  }
  xr.pad();
  yr.pad();
  auto out = open_svg(path, title);
  axes(out, xr, yr, x_label, y_label);
  double ly = kMargin + 14;
  for (const auto& s : series) {
    out << "<polyline fill=\"none\" stroke=\"" << s.color
        << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      out << sx(s.x[i], xr) << "," << sy(s.y[i], yr) << " ";
    out << "\"/>\n";
    out << "<text x=\"" << kW - kMargin - 4 << "\" y=\"" << ly
        << "\" text-anchor=\"end\" font-size=\"12\" fill=\"" << s.color
        << "\">" << s.label << "</text>\n";
    ly += 16;
  }
  out << "</svg>\n";
}

}  // namespace rmf

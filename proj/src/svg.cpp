#include "gprinv/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "gprinv/error.hpp"

namespace gprinv::svg {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;
constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

void widen(double& lo, double& hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) {
    lo = 0.0;
    hi = 1.0;
  } else if (hi <= lo) {
    const double pad = std::max(std::abs(lo) * 0.05, 1e-12);
    lo -= pad;
    hi += pad;
  }
}

std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string axes(const Frame& f, const PlotLabels& labels) {
  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      kWidth, kHeight);
  const double bx = kLeft, by = kHeight - kBottom, ex = kWidth - kRight, ey = kTop;
  s += fmt::format("<path d=\"M{} {} L{} {} M{} {} L{} {}\" stroke=\"black\" fill=\"none\"/>\n", bx, by, ex, by, bx, by,
                   bx, ey);
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{:.4g}</text>\n", f.px(xv), by + 16, xv);
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:.4g}</text>\n", bx - 6, f.py(yv) + 4, yv);
  }
  s += fmt::format("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n", kWidth / 2,
                   escape(labels.title));
  s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", (bx + ex) / 2, kHeight - 10,
                   escape(labels.x));
  s += fmt::format("<text x=\"16\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0})\">{1}</text>\n",
                   (by + ey) / 2, escape(labels.y));
  return s;
}

}  // namespace

std::string line_plot(const std::vector<Series>& series, const PlotLabels& labels) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  widen(x0, x1);
  widen(y0, y1);
  const Frame f{x0, x1, y0, y1};
  std::string out = axes(f, labels);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kColors[k % std::size(kColors)];
    std::string pts;
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      pts += fmt::format("{:.2f},{:.2f} ", f.px(s.x[i]), f.py(s.y[i]));
    }
    out += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1\" points=\"{}\"/>\n", color, pts);
    if (!s.label.empty()) {
      const double ly = kTop + 14.0 * static_cast<double>(k);
      out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"3\" fill=\"{}\"/>\n", kWidth - kRight - 150,
                         ly - 4, color);
      out += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", kWidth - kRight - 135, ly, escape(s.label));
    }
  }
  out += "</svg>\n";
  return out;
}

std::string histogram(const std::vector<double>& edges, const std::vector<std::size_t>& counts,
                      const PlotLabels& labels, double marker) {
  if (edges.size() != counts.size() + 1 || counts.empty()) throw InputError("histogram: edges must bracket counts");
  double x0 = edges.front(), x1 = edges.back();
  double y1 = static_cast<double>(*std::max_element(counts.begin(), counts.end()));
  double y0 = 0.0;
  widen(x0, x1);
  widen(y0, y1);
  const Frame f{x0, x1, y0, y1};
  std::string out = axes(f, labels);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    double a = f.px(edges[i]), b = f.px(edges[i + 1]);
    if (b - a < 1.0) {
      a -= 0.5;
      b = a + 1.0;
    }
    const double top = f.py(static_cast<double>(counts[i]));
    out += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"#1f77b4\"/>\n", a, top,
                       b - a, f.py(0.0) - top);
  }
  if (std::isfinite(marker)) {
    const double m = f.px(marker);
    out += fmt::format("<line x1=\"{0:.2f}\" x2=\"{0:.2f}\" y1=\"{1}\" y2=\"{2}\" stroke=\"#d62728\"/>\n", m, kTop,
                       kHeight - kBottom);
  }
  out += "</svg>\n";
  return out;
}

void write(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw InputError(fmt::format("cannot write '{}'", path.string()));
  out << content;
}

}  // namespace gprinv::svg

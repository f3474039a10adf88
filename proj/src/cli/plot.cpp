#include "lgn/plot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

namespace lgn::plot {

namespace {

constexpr double kPanelWidth = 320.0;
constexpr double kPanelHeight = 240.0;
constexpr double kMarginLeft = 52.0;
constexpr double kMarginRight = 12.0;
constexpr double kMarginTop = 26.0;
constexpr double kMarginBottom = 38.0;
constexpr double kTitleHeight = 28.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
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

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!(lo <= hi)) {
      lo = 0.0;
      hi = 1.0;
    }
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double pad = 0.04 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
};

// Roughly five round tick values covering [lo, hi].
std::vector<double> ticks(double lo, double hi) {
  const double raw = (hi - lo) / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> out;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step) {
    out.push_back(std::abs(t) < 1e-9 * step ? 0.0 : t);
  }
  return out;
}

std::string tick_label(double v) { return fmt::format("{:g}", std::round(v * 1e6) / 1e6); }

std::string header(double width, double height) {
  return fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" "
      "viewBox=\"0 0 {0} {1}\" font-family=\"sans-serif\" font-size=\"11\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      num(width), num(height));
}

void draw_panel(std::string& svg, const Panel& panel, double ox, double oy) {
  const double pw = kPanelWidth - kMarginLeft - kMarginRight;
  const double ph = kPanelHeight - kMarginTop - kMarginBottom;
  const double px = ox + kMarginLeft;
  const double py = oy + kMarginTop;

  Range xr, yr;
  for (const auto& s : panel.series) {
    for (double v : s.x) xr.add(v);
    for (double v : s.y) yr.add(v);
  }
  for (const auto& h : panel.hlines) yr.add(h.y);
  xr.finish();
  if (panel.ylim) {
    yr.lo = panel.ylim->first;
    yr.hi = panel.ylim->second;
  } else {
    yr.finish();
  }
  auto sx = [&](double v) { return px + (v - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto sy = [&](double v) { return py + ph - (v - yr.lo) / (yr.hi - yr.lo) * ph; };

  svg += fmt::format("<g>\n<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n",
                     num(px + pw / 2), num(oy + 16), escape(panel.title));
  svg += fmt::format(
      "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888888\"/>\n",
      num(px), num(py), num(pw), num(ph));
  for (double t : ticks(xr.lo, xr.hi)) {
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", num(sx(t)),
                       num(py + ph + 13), tick_label(t));
  }
  for (double t : ticks(yr.lo, yr.hi)) {
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n", num(px - 4),
                       num(sy(t) + 4), tick_label(t));
  }
  svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                     num(px + pw / 2), num(py + ph + 30), escape(panel.xlabel));
  svg += fmt::format(
      "<text x=\"{0}\" y=\"{1}\" text-anchor=\"middle\" transform=\"rotate(-90 {0} {1})\">{2}</text>\n",
      num(ox + 12), num(py + ph / 2), escape(panel.ylabel));

  svg += fmt::format("<clipPath id=\"c{0}_{1}\"><rect x=\"{2}\" y=\"{3}\" width=\"{4}\" height=\"{5}\"/></clipPath>\n",
                     static_cast<long>(ox), static_cast<long>(oy), num(px), num(py), num(pw),
                     num(ph));
  svg += fmt::format("<g clip-path=\"url(#c{}_{})\">\n", static_cast<long>(ox),
                     static_cast<long>(oy));
  for (std::size_t i = 0; i < panel.series.size(); ++i) {
    const Series& s = panel.series[i];
    const std::string color = s.color.empty() ? kPalette[i % std::size(kPalette)] : s.color;
    const std::size_t m = std::min(s.x.size(), s.y.size());
    if (s.style == Style::Points) {
      svg += fmt::format("<g fill=\"{}\" fill-opacity=\"0.35\">\n", color);
      for (std::size_t k = 0; k < m; ++k) {
        if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
        svg += fmt::format("<circle cx=\"{}\" cy=\"{}\" r=\"1.2\"/>\n", num(sx(s.x[k])),
                           num(sy(s.y[k])));
      }
      svg += "</g>\n";
    } else {
      svg += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"",
                         color);
      for (std::size_t k = 0; k < m; ++k) {
        if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
        svg += fmt::format("{}{},{}", k ? " " : "", num(sx(s.x[k])), num(sy(s.y[k])));
      }
      svg += "\"/>\n";
    }
  }
  for (const auto& h : panel.hlines) {
    svg += fmt::format("<line x1=\"{0}\" x2=\"{1}\" y1=\"{2}\" y2=\"{2}\" stroke=\"{3}\"{4}/>\n",
                       num(px), num(px + pw), num(sy(h.y)), h.color,
                       h.dashed ? " stroke-dasharray=\"4 3\"" : "");
  }
  svg += "</g>\n";

  if (panel.legend) {
    for (std::size_t i = 0; i < panel.series.size(); ++i) {
      const Series& s = panel.series[i];
      const std::string color = s.color.empty() ? kPalette[i % std::size(kPalette)] : s.color;
      const double ly = py + 10 + 12 * static_cast<double>(i);
      svg += fmt::format(
          "<line x1=\"{0}\" x2=\"{1}\" y1=\"{2}\" y2=\"{2}\" stroke=\"{3}\" stroke-width=\"2\"/>"
          "<text x=\"{4}\" y=\"{5}\" font-size=\"9\">{6}</text>\n",
          num(px + pw - 60), num(px + pw - 48), num(ly), color, num(px + pw - 45), num(ly + 3),
          escape(s.label));
    }
  }
  svg += "</g>\n";
}

double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

std::string num(double value) {
  if (!std::isfinite(value)) return "0";
  const std::string s = fmt::format("{:.2f}", value);
  return s == "-0.00" ? "0.00" : s;
}

std::string render_panels(const std::vector<Panel>& panels, std::size_t columns,
                          const std::string& title) {
  if (columns == 0) throw std::invalid_argument("render_panels: columns must be positive");
  const std::size_t cols = std::max<std::size_t>(1, std::min(columns, panels.size()));
  const std::size_t rows = (panels.size() + cols - 1) / cols;
  const double top = title.empty() ? 0.0 : kTitleHeight;
  const double width = kPanelWidth * static_cast<double>(cols);
  const double height = top + kPanelHeight * static_cast<double>(std::max<std::size_t>(rows, 1));
  std::string svg = header(width, height);
  if (!title.empty()) {
    svg += fmt::format("<text x=\"{}\" y=\"19\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                       num(width / 2), escape(title));
  }
  for (std::size_t i = 0; i < panels.size(); ++i) {
    draw_panel(svg, panels[i], kPanelWidth * static_cast<double>(i % cols),
               top + kPanelHeight * static_cast<double>(i / cols));
  }
  svg += "</svg>\n";
  return svg;
}

std::string render_bars(const std::vector<Bar>& bars, const std::string& title,
                        const std::string& xlabel) {
  constexpr double kRow = 18.0;
  constexpr double kLabel = 150.0;
  constexpr double kPlot = 360.0;
  const double width = kLabel + kPlot + 30.0;
  const double height = kTitleHeight + kRow * static_cast<double>(bars.size()) + 40.0;
  double vmax = 0.0;
  for (const auto& b : bars) vmax = std::max(vmax, b.value);
  if (vmax <= 0.0) vmax = 1.0;

  std::string svg = header(width, height);
  svg += fmt::format("<text x=\"{}\" y=\"19\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                     num(width / 2), escape(title));
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double y = kTitleHeight + kRow * static_cast<double>(i);
    const double w = std::max(0.0, bars[i].value) / vmax * kPlot;
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n", num(kLabel - 6),
                       num(y + 12), escape(bars[i].label));
    svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>\n",
                       num(kLabel), num(y + 2), num(w), num(kRow - 4), kPalette[0]);
  }
  const double axis_y = kTitleHeight + kRow * static_cast<double>(bars.size()) + 4;
  svg += fmt::format("<line x1=\"{0}\" x2=\"{1}\" y1=\"{2}\" y2=\"{2}\" stroke=\"#888888\"/>\n",
                     num(kLabel), num(kLabel + kPlot), num(axis_y));
  for (double t : ticks(0.0, vmax)) {
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                       num(kLabel + t / vmax * kPlot), num(axis_y + 13), tick_label(t));
  }
  svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                     num(kLabel + kPlot / 2), num(axis_y + 30), escape(xlabel));
  svg += "</svg>\n";
  return svg;
}

BoxStats box_stats(std::span<const double> values, const std::string& label) {
  BoxStats b;
  b.label = label;
  b.count = values.size();
  if (values.empty()) return b;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  b.q1 = quantile_sorted(sorted, 0.25);
  b.median = quantile_sorted(sorted, 0.5);
  b.q3 = quantile_sorted(sorted, 0.75);
  const double reach = 1.5 * (b.q3 - b.q1);
  b.lower_whisker = *std::lower_bound(sorted.begin(), sorted.end(), b.q1 - reach);
  b.upper_whisker = *(std::upper_bound(sorted.begin(), sorted.end(), b.q3 + reach) - 1);
  return b;
}

std::string render_boxes(const std::vector<BoxStats>& boxes, const std::string& title,
                         const std::string& ylabel, const std::vector<HLine>& hlines) {
  constexpr double kSlot = 34.0;
  constexpr double kPlotHeight = 240.0;
  const double width = kMarginLeft + kSlot * static_cast<double>(std::max<std::size_t>(boxes.size(), 4)) + 20.0;
  const double height = kTitleHeight + kPlotHeight + 60.0;
  Range yr;
  for (const auto& b : boxes) {
    if (b.count == 0) continue;
    yr.add(b.lower_whisker);
    yr.add(b.upper_whisker);
  }
  for (const auto& h : hlines) yr.add(h.y);
  yr.finish();
  const double py = kTitleHeight;
  auto sy = [&](double v) { return py + kPlotHeight - (v - yr.lo) / (yr.hi - yr.lo) * kPlotHeight; };

  std::string svg = header(width, height);
  svg += fmt::format("<text x=\"{}\" y=\"19\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                     num(width / 2), escape(title));
  const double plot_w = width - kMarginLeft - 10.0;
  svg += fmt::format(
      "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888888\"/>\n",
      num(kMarginLeft), num(py), num(plot_w), num(kPlotHeight));
  for (double t : ticks(yr.lo, yr.hi)) {
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
                       num(kMarginLeft - 4), num(sy(t) + 4), tick_label(t));
  }
  svg += fmt::format(
      "<text x=\"{0}\" y=\"{1}\" text-anchor=\"middle\" transform=\"rotate(-90 {0} {1})\">{2}</text>\n",
      num(12.0), num(py + kPlotHeight / 2), escape(ylabel));
  for (const auto& h : hlines) {
    svg += fmt::format("<line x1=\"{0}\" x2=\"{1}\" y1=\"{2}\" y2=\"{2}\" stroke=\"{3}\"{4}/>\n",
                       num(kMarginLeft), num(kMarginLeft + plot_w), num(sy(h.y)), h.color,
                       h.dashed ? " stroke-dasharray=\"4 3\"" : "");
  }
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const BoxStats& b = boxes[i];
    const double cx = kMarginLeft + kSlot * (static_cast<double>(i) + 0.5);
    svg += fmt::format(
        "<text x=\"{0}\" y=\"{1}\" text-anchor=\"end\" transform=\"rotate(-60 {0} {1})\">{2}</text>\n",
        num(cx + 3), num(py + kPlotHeight + 12), escape(b.label));
    if (b.count == 0) continue;
    svg += fmt::format("<line x1=\"{0}\" x2=\"{0}\" y1=\"{1}\" y2=\"{2}\" stroke=\"black\"/>\n",
                       num(cx), num(sy(b.lower_whisker)), num(sy(b.upper_whisker)));
    svg += fmt::format(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\" stroke=\"black\"/>\n",
        num(cx - kSlot * 0.3), num(sy(b.q3)), num(kSlot * 0.6),
        num(std::max(0.5, sy(b.q1) - sy(b.q3))), kPalette[0]);
    svg += fmt::format(
        "<line x1=\"{0}\" x2=\"{1}\" y1=\"{2}\" y2=\"{2}\" stroke=\"white\" stroke-width=\"2\"/>\n",
        num(cx - kSlot * 0.3), num(cx + kSlot * 0.3), num(sy(b.median)));
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace lgn::plot

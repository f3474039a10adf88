#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lgn/linalg.hpp"

// Minimal SVG output for the report figures. No external plotting backend;
// every figure written by the CLI also gets a CSV with the plotted numbers.
namespace lgn::plot {

enum class Style { Points, Line };

struct Series {
  std::string label;
  Vector x;
  Vector y;
  Style style = Style::Points;
  std::string color;  // empty picks from the palette
};

struct HLine {
  double y = 0.0;
  std::string color = "#444444";
  bool dashed = true;
};

struct Panel {
  std::string title;
  std::string xlabel;
  std::string ylabel;
  std::vector<Series> series;
  std::vector<HLine> hlines;
  std::optional<std::pair<double, double>> ylim;
  bool legend = false;
};

/// Lays panels out row by row, `columns` per row.
std::string render_panels(const std::vector<Panel>& panels, std::size_t columns,
                          const std::string& title = {});

struct Bar {
  std::string label;
  double value = 0.0;
};

/// Horizontal bars, drawn in the given order from the top.
std::string render_bars(const std::vector<Bar>& bars, const std::string& title,
                        const std::string& xlabel);

struct BoxStats {
  std::string label;
  std::size_t count = 0;
  double lower_whisker = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double upper_whisker = 0.0;
};

/// Quartiles by linear interpolation; whiskers at the most extreme points
/// within 1.5 IQR of the box. Empty input gives a zero box with count 0.
BoxStats box_stats(std::span<const double> values, const std::string& label);

std::string render_boxes(const std::vector<BoxStats>& boxes, const std::string& title,
                         const std::string& ylabel, const std::vector<HLine>& hlines = {});

/// Fixed-precision number formatting used in all figure output.
std::string num(double value);

}  // namespace lgn::plot

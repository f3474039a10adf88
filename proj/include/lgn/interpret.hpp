#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "lgn/linalg.hpp"
#include "lgn/model.hpp"

namespace lgn {

// ---- variable selection ------------------------------------------------------

struct AttentionStats {
  double mean = 0.0;
  double sd = 0.0;
};

/// Sample mean and (n - 1) standard deviation of one attention column.
AttentionStats selection_stats(std::span<const double> attention_col);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double value) const { return value >= lo && value <= hi; }
};

/// [q(alpha/2) s, -q(alpha/2) s], q the standard normal quantile.
Interval selection_interval(double alpha, double sd_control);

enum class Verdict { Keep, Droppable };
const char* to_string(Verdict v);

/// Default decision margin: a feature is droppable when at most
/// margin * alpha of its attentions fall outside the interval.
inline constexpr double kDefaultDecisionMargin = 2.0;

struct CoverageResult {
  double coverage = 0.0;
  Verdict verdict = Verdict::Droppable;
};

CoverageResult coverage_and_verdict(std::span<const double> attention_col,
                                    const Interval& interval, double alpha,
                                    double margin = kDefaultDecisionMargin);

struct FeatureSelection {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double coverage = 0.0;
  Verdict verdict = Verdict::Droppable;
  bool is_control = false;
};

struct SelectionReport {
  std::vector<FeatureSelection> features;
  std::size_t control = 0;
  double alpha = 0.0;
  double margin = kDefaultDecisionMargin;
  Interval interval;

  const FeatureSelection& at(const std::string& name) const;
  void write_csv(std::ostream& out) const;
};

/// Tests H0: beta_j(x) = 0 for every column of the attention matrix, using
/// the fluctuation of the control column to size the interval.
SelectionReport select_variables(const Matrix& attentions, std::span<const std::string> names,
                                 std::size_t control, double alpha,
                                 double margin = kDefaultDecisionMargin);

// ---- variable importance -----------------------------------------------------

struct ImportanceReport {
  std::vector<std::string> names;
  /// Mean absolute attention per feature.
  Vector importance;
  /// Feature indices by decreasing importance.
  std::vector<std::size_t> order;
  /// Names of columns that were not standardized (importance not comparable).
  std::vector<std::string> unstandardized;

  void write_csv(std::ostream& out) const;
};

ImportanceReport variable_importance(const Matrix& attentions,
                                     std::span<const std::string> names,
                                     std::span<const bool> standardized = {});

// ---- smoothing ---------------------------------------------------------------

struct SmootherOptions {
  std::size_t interior_knots = 20;
  double lambda = 1.0;
  std::size_t grid_points = 200;
};

struct SmoothCurve {
  Vector x;
  Vector y;
};

/// Penalized cubic B-spline least squares on one abscissa, reusable across
/// responses. Interior knots sit at empirical quantiles of the standardized
/// abscissa; the penalty acts on second divided differences of the
/// coefficients taken at their Greville abscissae, so constants and straight
/// lines are fitted without bias.
class SplineSmoother {
 public:
  SplineSmoother(std::span<const double> x, const SmootherOptions& options = {});

  /// Fitted curve evaluated on an evenly spaced grid over [min x, max x].
  SmoothCurve fit(std::span<const double> y) const;
  /// Coefficients of the fitted spline.
  Vector coefficients(std::span<const double> y) const;
  /// Evaluates a spline with the given coefficients at a raw abscissa.
  double evaluate(std::span<const double> coef, double x) const;

  const Vector& grid() const { return grid_; }
  std::size_t basis_size() const { return knots_.size() - 4; }

 private:
  /// Span index and the four non-zero cubic basis values at standardized u.
  std::size_t basis(double u, double values[4]) const;

  Vector x_;
  double centre_ = 0.0;
  double scale_ = 1.0;
  Vector knots_;
  Matrix factor_;  // Cholesky factor of B'B + lambda D'D
  Vector grid_;
};

SmoothCurve smooth_curve(std::span<const double> x, std::span<const double> y,
                         std::size_t interior_knots = 20);

// ---- interactions ------------------------------------------------------------

/// Smoothed d beta_j / d x_k against x_j for every k.
struct InteractionProfile {
  std::size_t focal = 0;
  std::vector<std::string> names;
  Vector grid;
  /// grid.size() x q; column k is the curve for d beta_focal / d x_k.
  Matrix curves;

  void write_csv(std::ostream& out) const;
};

InteractionProfile interaction_profiles(const Params& params, const ModelSpec& spec,
                                        const Matrix& x, std::size_t focal,
                                        std::span<const std::string> names = {},
                                        const SmootherOptions& options = {});

}  // namespace lgn

#include "lgn/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

namespace lgn {

// ---- variable selection ------------------------------------------------------

AttentionStats selection_stats(std::span<const double> attention_col) {
  if (attention_col.size() < 2) throw std::invalid_argument("selection_stats: need n >= 2");
  return {mean(attention_col), sample_sd(attention_col)};
}

Interval selection_interval(double alpha, double sd_control) {
  if (!(alpha > 0.0 && alpha < 0.5)) {
    throw std::domain_error("selection_interval: alpha must lie in (0, 1/2)");
  }
  if (!(sd_control >= 0.0)) throw std::domain_error("selection_interval: negative sd");
  const double half = -std_normal_quantile(alpha / 2.0) * sd_control;
  return {-half, half};
}

const char* to_string(Verdict v) { return v == Verdict::Keep ? "keep" : "droppable"; }

CoverageResult coverage_and_verdict(std::span<const double> attention_col,
                                    const Interval& interval, double alpha, double margin) {
  if (attention_col.empty()) throw std::invalid_argument("coverage_and_verdict: empty column");
  if (interval.lo > interval.hi) throw std::invalid_argument("coverage_and_verdict: bad interval");
  std::size_t inside = 0;
  for (double b : attention_col) inside += interval.contains(b) ? 1 : 0;
  CoverageResult out;
  out.coverage = static_cast<double>(inside) / static_cast<double>(attention_col.size());
  // Counted directly: 1 - coverage can land one ulp past margin * alpha.
  const double outside = static_cast<double>(attention_col.size() - inside) /
                         static_cast<double>(attention_col.size());
  out.verdict = outside <= margin * alpha ? Verdict::Droppable : Verdict::Keep;
  return out;
}

const FeatureSelection& SelectionReport::at(const std::string& name) const {
  for (const auto& f : features)
    if (f.name == name) return f;
  throw std::out_of_range("selection report has no feature '" + name + "'");
}

void SelectionReport::write_csv(std::ostream& out) const {
  out << "feature,mean,sd,coverage,verdict,control,alpha,margin,lower,upper\n";
  for (const auto& f : features) {
    out << fmt::format("{},{:.10f},{:.10f},{:.6f},{},{},{},{},{:.10f},{:.10f}\n", f.name, f.mean,
                       f.sd, f.coverage, to_string(f.verdict), f.is_control ? 1 : 0, alpha,
                       margin, interval.lo, interval.hi);
  }
}

SelectionReport select_variables(const Matrix& attentions, std::span<const std::string> names,
                                 std::size_t control, double alpha, double margin) {
  if (names.size() != attentions.cols()) {
    throw std::invalid_argument("select_variables: one name per attention column required");
  }
  if (control >= attentions.cols()) throw std::out_of_range("select_variables: bad control index");
  SelectionReport report;
  report.control = control;
  report.alpha = alpha;
  report.margin = margin;
  const AttentionStats control_stats = selection_stats(attentions.column(control));
  report.interval = selection_interval(alpha, control_stats.sd);
  for (std::size_t j = 0; j < attentions.cols(); ++j) {
    const Vector col = attentions.column(j);
    const AttentionStats stats = selection_stats(col);
    const CoverageResult cov = coverage_and_verdict(col, report.interval, alpha, margin);
    report.features.push_back(
        {names[j], stats.mean, stats.sd, cov.coverage, cov.verdict, j == control});
  }
  return report;
}

// ---- variable importance -----------------------------------------------------

void ImportanceReport::write_csv(std::ostream& out) const {
  out << "rank,feature,importance\n";
  for (std::size_t r = 0; r < order.size(); ++r) {
    out << fmt::format("{},{},{:.10f}\n", r + 1, names[order[r]], importance[order[r]]);
  }
}

ImportanceReport variable_importance(const Matrix& attentions,
                                     std::span<const std::string> names,
                                     std::span<const bool> standardized) {
  if (names.size() != attentions.cols()) {
    throw std::invalid_argument("variable_importance: one name per attention column required");
  }
  if (attentions.rows() == 0) throw std::invalid_argument("variable_importance: no instances");
  ImportanceReport report;
  report.names.assign(names.begin(), names.end());
  report.importance.assign(attentions.cols(), 0.0);
  for (std::size_t i = 0; i < attentions.rows(); ++i) {
    auto row = attentions.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) report.importance[j] += std::abs(row[j]);
  }
  for (double& vi : report.importance) vi /= static_cast<double>(attentions.rows());
  report.order.resize(attentions.cols());
  std::iota(report.order.begin(), report.order.end(), std::size_t{0});
  std::stable_sort(report.order.begin(), report.order.end(), [&](std::size_t a, std::size_t b) {
    return report.importance[a] > report.importance[b];
  });
  for (std::size_t j = 0; j < standardized.size() && j < names.size(); ++j)
    if (!standardized[j]) report.unstandardized.push_back(names[j]);
  return report;
}

// ---- smoothing ---------------------------------------------------------------

namespace {
constexpr std::size_t kDegree = 3;
}

SplineSmoother::SplineSmoother(std::span<const double> x, const SmootherOptions& options)
    : x_(x.begin(), x.end()) {
  if (x_.size() < 10) throw std::invalid_argument("smooth_curve: need at least 10 points");
  const auto [lo_it, hi_it] = std::minmax_element(x_.begin(), x_.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!(hi > lo)) throw std::invalid_argument("smooth_curve: abscissa values are all equal");
  if (options.grid_points < 2) throw std::invalid_argument("smooth_curve: grid needs 2 points");

  centre_ = mean(x_);
  scale_ = sample_sd(x_);
  Vector u(x_.size());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = (x_[i] - centre_) / scale_;
  Vector sorted = u;
  std::sort(sorted.begin(), sorted.end());
  const double u_lo = sorted.front();
  const double u_hi = sorted.back();

  knots_.assign(kDegree + 1, u_lo);
  const std::size_t k = options.interior_knots;
  for (std::size_t i = 1; i <= k; ++i) {
    const double pos = static_cast<double>(i) / static_cast<double>(k + 1) *
                       static_cast<double>(sorted.size() - 1);
    const auto idx = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(idx);
    const double knot =
        idx + 1 < sorted.size() ? sorted[idx] + frac * (sorted[idx + 1] - sorted[idx]) : sorted[idx];
    if (knot > knots_.back() && knot < u_hi) knots_.push_back(knot);
  }
  for (std::size_t i = 0; i <= kDegree; ++i) knots_.push_back(u_hi);

  const std::size_t nb = basis_size();
  Matrix normal(nb, nb);
  double b[4];
  for (double ui : u) {
    const std::size_t span = basis(ui, b);
    const std::size_t first = span - kDegree;
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 4; ++c) normal(first + r, first + c) += b[r] * b[c];
  }

  // Second divided differences of the coefficients at Greville abscissae.
  Vector greville(nb);
  for (std::size_t i = 0; i < nb; ++i)
    greville[i] = (knots_[i + 1] + knots_[i + 2] + knots_[i + 3]) / 3.0;
  for (std::size_t i = 0; i + 2 < nb; ++i) {
    const double h0 = greville[i + 1] - greville[i];
    const double h1 = greville[i + 2] - greville[i + 1];
    const double d[3] = {1.0 / h0, -1.0 / h0 - 1.0 / h1, 1.0 / h1};
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 3; ++c) normal(i + r, i + c) += options.lambda * d[r] * d[c];
  }
  try {
    factor_ = cholesky(normal);
  } catch (const FactorizationError&) {
    throw std::invalid_argument("smooth_curve: abscissa has too few distinct values");
  }

  grid_.resize(options.grid_points);
  for (std::size_t g = 0; g < grid_.size(); ++g) {
    grid_[g] = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(grid_.size() - 1);
  }
  grid_.back() = hi;
}

std::size_t SplineSmoother::basis(double u, double values[4]) const {
  const std::size_t nb = basis_size();
  u = std::clamp(u, knots_.front(), knots_.back());
  std::size_t span;
  if (u >= knots_[nb]) {
    span = nb - 1;
  } else {
    const auto it = std::upper_bound(knots_.begin() + kDegree, knots_.begin() + nb + 1, u);
    span = static_cast<std::size_t>(it - knots_.begin()) - 1;
  }
  double left[kDegree + 1], right[kDegree + 1];
  values[0] = 1.0;
  for (std::size_t j = 1; j <= kDegree; ++j) {
    left[j] = u - knots_[span + 1 - j];
    right[j] = knots_[span + j] - u;
    double saved = 0.0;
    for (std::size_t r = 0; r < j; ++r) {
      const double temp = values[r] / (right[r + 1] + left[j - r]);
      values[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    values[j] = saved;
  }
  return span;
}

Vector SplineSmoother::coefficients(std::span<const double> y) const {
  if (y.size() != x_.size()) throw std::invalid_argument("smooth_curve: x and y lengths differ");
  Vector rhs(basis_size(), 0.0);
  double b[4];
  for (std::size_t i = 0; i < x_.size(); ++i) {
    const std::size_t first = basis((x_[i] - centre_) / scale_, b) - kDegree;
    for (std::size_t r = 0; r < 4; ++r) rhs[first + r] += b[r] * y[i];
  }
  return cholesky_solve(factor_, rhs);
}

double SplineSmoother::evaluate(std::span<const double> coef, double x) const {
  double b[4];
  const std::size_t first = basis((x - centre_) / scale_, b) - kDegree;
  double s = 0.0;
  for (std::size_t r = 0; r < 4; ++r) s += b[r] * coef[first + r];
  return s;
}

SmoothCurve SplineSmoother::fit(std::span<const double> y) const {
  const Vector coef = coefficients(y);
  SmoothCurve curve{grid_, Vector(grid_.size())};
  for (std::size_t g = 0; g < grid_.size(); ++g) curve.y[g] = evaluate(coef, grid_[g]);
  return curve;
}

SmoothCurve smooth_curve(std::span<const double> x, std::span<const double> y,
                         std::size_t interior_knots) {
  SmootherOptions options;
  options.interior_knots = interior_knots;
  return SplineSmoother(x, options).fit(y);
}

// ---- interactions ------------------------------------------------------------

void InteractionProfile::write_csv(std::ostream& out) const {
  out << "x_" << names[focal];
  for (const auto& n : names) out << ",d_" << names[focal] << "_d_" << n;
  out << '\n';
  for (std::size_t g = 0; g < grid.size(); ++g) {
    out << fmt::format("{:.10f}", grid[g]);
    for (std::size_t k = 0; k < curves.cols(); ++k) out << fmt::format(",{:.10f}", curves(g, k));
    out << '\n';
  }
}

InteractionProfile interaction_profiles(const Params& params, const ModelSpec& spec,
                                        const Matrix& x, std::size_t focal,
                                        std::span<const std::string> names,
                                        const SmootherOptions& options) {
  if (focal >= spec.q) throw std::out_of_range("interaction_profiles: focal index out of range");
  InteractionProfile profile;
  profile.focal = focal;
  if (names.empty()) {
    for (std::size_t k = 0; k < spec.q; ++k) profile.names.push_back(fmt::format("x{}", k + 1));
  } else {
    if (names.size() != spec.q) throw std::invalid_argument("interaction_profiles: name count");
    profile.names.assign(names.begin(), names.end());
  }

  const Matrix grads = attention_gradients(params, spec, x, focal);
  const SplineSmoother smoother(x.column(focal), options);
  profile.grid = smoother.grid();
  profile.curves = Matrix(profile.grid.size(), spec.q);
  for (std::size_t k = 0; k < spec.q; ++k) {
    const SmoothCurve curve = smoother.fit(grads.column(k));
    profile.curves.set_column(k, curve.y);
  }
  return profile;
}

}  // namespace lgn

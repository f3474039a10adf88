#include "lgn/edf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace lgn {

const char* to_string(Family family) {
  return family == Family::Gaussian ? "gaussian" : "poisson";
}

const char* to_string(Link link) { return link == Link::Identity ? "identity" : "log"; }

Family parse_family(const std::string& text) {
  if (text == "gaussian") return Family::Gaussian;
  if (text == "poisson") return Family::Poisson;
  throw std::invalid_argument("unknown family '" + text + "' (gaussian|poisson)");
}

Link parse_link(const std::string& text) {
  if (text == "identity") return Link::Identity;
  if (text == "log") return Link::Log;
  throw std::invalid_argument("unknown link '" + text + "' (identity|log)");
}

Link canonical_link(Family family) {
  return family == Family::Gaussian ? Link::Identity : Link::Log;
}

double link_forward(Link link, double mu) {
  if (link == Link::Identity) return mu;
  if (!(mu > 0.0)) throw std::domain_error("log link: mean must be positive");
  return std::log(mu);
}

double link_inverse(Link link, double eta) {
  if (link == Link::Identity) return eta;
  return std::exp(std::clamp(eta, -kEtaClamp, kEtaClamp));
}

double link_inverse_derivative(Link link, double eta) {
  if (link == Link::Identity) return 1.0;
  if (eta < -kEtaClamp || eta > kEtaClamp) return 0.0;
  return std::exp(eta);
}

namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(fmt::format("{}: length mismatch ({} vs {})", what, a, b));
  if (a == 0) throw std::invalid_argument(fmt::format("{}: empty input", what));
}

double poisson_unit_deviance(double y, double mu) {
  if (y == 0.0) return 2.0 * mu;
  return 2.0 * (mu - y - y * std::log(mu / y));
}

}  // namespace

double mse_loss(std::span<const double> y, std::span<const double> mu) {
  check_lengths(y.size(), mu.size(), "mse_loss");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - mu[i]) * (y[i] - mu[i]);
  return s / static_cast<double>(y.size());
}

double poisson_deviance(std::span<const double> y, std::span<const double> mu,
                        std::span<const double> v) {
  check_lengths(y.size(), mu.size(), "poisson_deviance");
  check_lengths(y.size(), v.size(), "poisson_deviance");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(mu[i] > 0.0)) throw std::domain_error("poisson_deviance: mean must be positive");
    if (!(v[i] > 0.0)) throw std::domain_error("poisson_deviance: exposure must be positive");
    if (y[i] < 0.0) throw std::domain_error("poisson_deviance: negative response");
    s += poisson_unit_deviance(y[i], mu[i]);
  }
  return s / static_cast<double>(y.size());
}

double deviance(Family family, std::span<const double> y, std::span<const double> mu,
                std::span<const double> v) {
  return family == Family::Gaussian ? mse_loss(y, mu) : poisson_deviance(y, mu, v);
}

double fit_null(Family family, std::span<const double> y, std::span<const double> v) {
  check_lengths(y.size(), v.size(), "fit_null");
  if (family == Family::Gaussian) return mean(y);
  double sy = 0.0, sv = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sy += y[i];
    sv += v[i];
  }
  if (!(sv > 0.0)) throw std::domain_error("fit_null: total exposure must be positive");
  return sy / sv;
}

double fit_null(Family family, const Dataset& data) { return fit_null(family, data.y, data.v); }

Vector null_predict(Family family, double level, std::span<const double> v) {
  Vector mu(v.size(), level);
  if (family == Family::Poisson)
    for (std::size_t i = 0; i < v.size(); ++i) mu[i] = level * v[i];
  return mu;
}

// ---- GLM -------------------------------------------------------------------

RankDeficientError::RankDeficientError(std::size_t column, const std::string& name)
    : std::runtime_error(fmt::format(
          "GLM design is rank deficient: column {} ('{}') is collinear with the intercept "
          "and the columns before it",
          column, name)),
      column_(column) {}

Vector GlmFit::linear_predictor(const Matrix& x) const {
  Vector eta(x.rows(), intercept);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto row = x.row(i);
    for (std::size_t j = 0; j < coef.size(); ++j) eta[i] += coef[j] * row[j];
  }
  return eta;
}

Vector GlmFit::predict(const Matrix& x, std::span<const double> v) const {
  Vector mu = linear_predictor(x);
  for (std::size_t i = 0; i < mu.size(); ++i) {
    mu[i] = link_inverse(link, mu[i]);
    if (family == Family::Poisson) mu[i] *= v[i];
  }
  return mu;
}

namespace {

struct Working {
  Vector mu;
  Vector mu_eta;  // d mu / d eta (exposure included)
};

Working working_values(Family family, Link link, std::span<const double> eta,
                       std::span<const double> v) {
  Working w{Vector(eta.size()), Vector(eta.size())};
  for (std::size_t i = 0; i < eta.size(); ++i) {
    const double scale = family == Family::Poisson ? v[i] : 1.0;
    w.mu[i] = scale * link_inverse(link, eta[i]);
    w.mu_eta[i] = scale * link_inverse_derivative(link, eta[i]);
  }
  return w;
}

double safe_deviance(Family family, std::span<const double> y, std::span<const double> mu,
                     std::span<const double> v) {
  if (family == Family::Poisson &&
      std::any_of(mu.begin(), mu.end(), [](double m) { return !(m > 0.0); })) {
    return std::numeric_limits<double>::infinity();
  }
  return deviance(family, y, mu, v);
}

}  // namespace

GlmFit fit_glm(const Matrix& x, std::span<const double> y, std::span<const double> v,
               Family family, Link link, const GlmOptions& options,
               std::span<const std::string> names) {
  const std::size_t n = x.rows();
  const std::size_t q = x.cols();
  check_lengths(n, y.size(), "fit_glm");
  check_lengths(n, v.size(), "fit_glm");
  auto column_name = [&](std::size_t j) {
    return j < names.size() ? names[j] : fmt::format("x{}", j + 1);
  };

  // Centre and scale internally for conditioning; map back at the end.
  Vector centre(q), scale(q);
  for (std::size_t j = 0; j < q; ++j) {
    const Vector col = x.column(j);
    centre[j] = mean(col);
    double ss = 0.0;
    for (double c : col) ss += (c - centre[j]) * (c - centre[j]);
    scale[j] = std::sqrt(ss / static_cast<double>(n));
    if (!(scale[j] > 0.0)) throw RankDeficientError(j, column_name(j));
  }
  Matrix design(n, q + 1);
  for (std::size_t i = 0; i < n; ++i) {
    design(i, 0) = 1.0;
    for (std::size_t j = 0; j < q; ++j) design(i, j + 1) = (x(i, j) - centre[j]) / scale[j];
  }

  auto eta_of = [&](const Vector& beta) {
    Vector eta(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = design.row(i);
      double s = 0.0;
      for (std::size_t j = 0; j <= q; ++j) s += row[j] * beta[j];
      eta[i] = s;
    }
    return eta;
  };

  const std::size_t p = q + 1;
  Vector beta(p, 0.0);
  {
    double level = fit_null(family, y, v);
    if (link == Link::Log) level = std::max(level, 1e-10);
    beta[0] = link_forward(link, level);
  }
  Vector eta = eta_of(beta);
  Working work = working_values(family, link, eta, v);
  double dev = safe_deviance(family, y, work.mu, v);
  if (!std::isfinite(dev)) throw std::domain_error("fit_glm: initial deviance is not finite");

  GlmFit fit;
  fit.family = family;
  fit.link = link;
  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    fit.iterations = iter;
    Matrix xtwx(p, p);
    Vector xtwz(p, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double variance = family == Family::Gaussian ? 1.0 : work.mu[i];
      const double w = work.mu_eta[i] * work.mu_eta[i] / variance;
      if (!(w > 0.0) || !std::isfinite(w)) continue;
      const double z = eta[i] + (y[i] - work.mu[i]) / work.mu_eta[i];
      auto row = design.row(i);
      for (std::size_t a = 0; a < p; ++a) {
        const double wa = w * row[a];
        xtwz[a] += wa * z;
        for (std::size_t b = 0; b <= a; ++b) xtwx(a, b) += wa * row[b];
      }
    }
    for (std::size_t a = 0; a < p; ++a)
      for (std::size_t b = 0; b < a; ++b) xtwx(b, a) = xtwx(a, b);

    Matrix lower;
    try {
      lower = cholesky(xtwx, 1e-10);
    } catch (const FactorizationError& e) {
      if (e.pivot() == 0) throw std::domain_error("fit_glm: all working weights vanished");
      throw RankDeficientError(e.pivot() - 1, column_name(e.pivot() - 1));
    }
    const Vector proposal = cholesky_solve(lower, xtwz);

    // Step halving on deviance increase or invalid means.
    Vector next = proposal;
    Vector next_eta = eta_of(next);
    Working next_work = working_values(family, link, next_eta, v);
    double next_dev = safe_deviance(family, y, next_work.mu, v);
    for (int half = 0; half < 30 && !(next_dev <= dev * (1.0 + 1e-12) + 1e-300); ++half) {
      for (std::size_t j = 0; j < p; ++j) next[j] = 0.5 * (next[j] + beta[j]);
      next_eta = eta_of(next);
      next_work = working_values(family, link, next_eta, v);
      next_dev = safe_deviance(family, y, next_work.mu, v);
    }
    if (!std::isfinite(next_dev)) throw std::domain_error("fit_glm: step halving failed");

    const double change = std::abs(next_dev - dev) / (std::abs(next_dev) + 0.1);
    beta = std::move(next);
    eta = std::move(next_eta);
    work = std::move(next_work);
    dev = next_dev;
    if (change < options.tolerance) {
      fit.converged = true;
      break;
    }
  }

  fit.coef.resize(q);
  fit.intercept = beta[0];
  for (std::size_t j = 0; j < q; ++j) {
    fit.coef[j] = beta[j + 1] / scale[j];
    fit.intercept -= fit.coef[j] * centre[j];
  }
  fit.deviance = dev;
  return fit;
}

GlmFit fit_glm(const Dataset& data, Family family, Link link, const GlmOptions& options) {
  const auto names = data.feature_names();
  return fit_glm(data.x, data.y, data.v, family, link, options, names);
}

Vector glm_deviance_gradient(const GlmFit& fit, const Matrix& x, std::span<const double> y,
                             std::span<const double> v) {
  const std::size_t n = x.rows();
  const Vector eta = fit.linear_predictor(x);
  const Working work = working_values(fit.family, fit.link, eta, v);
  Vector grad(fit.coef.size() + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double dmu = fit.family == Family::Gaussian ? -2.0 * (y[i] - work.mu[i])
                                                      : 2.0 * (1.0 - y[i] / work.mu[i]);
    const double d_eta = dmu * work.mu_eta[i] / static_cast<double>(n);
    grad[0] += d_eta;
    auto row = x.row(i);
    for (std::size_t j = 0; j < fit.coef.size(); ++j) grad[j + 1] += d_eta * row[j];
  }
  return grad;
}

}  // namespace lgn

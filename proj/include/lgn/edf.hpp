#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lgn/data.hpp"
#include "lgn/linalg.hpp"

namespace lgn {

/// Exponential dispersion family members supported for fitting.
///
/// Gaussian: cumulant kappa(theta) = theta^2 / 2, canonical link identity,
///           unit deviance (y - mu)^2.
/// Poisson:  cumulant kappa(theta) = exp(theta), canonical link log,
///           unit deviance 2 (mu - y - y log(mu / y)).
enum class Family { Gaussian, Poisson };

enum class Link { Identity, Log };

const char* to_string(Family family);
const char* to_string(Link link);
Family parse_family(const std::string& text);
Link parse_link(const std::string& text);

Link canonical_link(Family family);

/// Linear-predictor bound applied before exp() under the log link.
inline constexpr double kEtaClamp = 30.0;

/// g(mu).
double link_forward(Link link, double mu);
/// g^{-1}(eta). Under the log link eta is clamped to [-30, 30] first.
double link_inverse(Link link, double eta);
/// d g^{-1}(eta) / d eta, zero where the clamp is active.
double link_inverse_derivative(Link link, double eta);

/// (1/n) sum (y - mu)^2.
double mse_loss(std::span<const double> y, std::span<const double> mu);

/// (2/n) sum (mu - y - y log(mu / y)), with y log y := 0 at y = 0.
/// `mu` already includes the exposure; `v` is checked for positivity and
/// alignment.
double poisson_deviance(std::span<const double> y, std::span<const double> mu,
                        std::span<const double> v);

/// Average deviance for the family (MSE for Gaussian).
double deviance(Family family, std::span<const double> y, std::span<const double> mu,
                std::span<const double> v);

/// Loss-minimizing constant: the mean of y for Gaussian, sum(y)/sum(v) for
/// Poisson.
double fit_null(Family family, std::span<const double> y, std::span<const double> v);
double fit_null(Family family, const Dataset& data);

/// Expected responses of the null model (times exposure for Poisson).
Vector null_predict(Family family, double level, std::span<const double> v);

/// Design is rank deficient.
class RankDeficientError : public std::runtime_error {
 public:
  RankDeficientError(std::size_t column, const std::string& name);
  std::size_t column() const { return column_; }

 private:
  std::size_t column_;
};

struct GlmOptions {
  int max_iterations = 100;
  double tolerance = 1e-10;
};

struct GlmFit {
  Family family = Family::Gaussian;
  Link link = Link::Identity;
  double intercept = 0.0;
  Vector coef;
  int iterations = 0;
  /// Average deviance on the fitting data.
  double deviance = 0.0;
  bool converged = false;

  /// Link-scale predictor without the exposure offset.
  Vector linear_predictor(const Matrix& x) const;
  /// Expected responses, v * g^{-1}(eta).
  Vector predict(const Matrix& x, std::span<const double> v) const;
};

/// Maximum likelihood GLM fit by IRLS with step halving. For Poisson under
/// the log link the exposure enters as the offset log(v). `names` (optional)
/// is used in the rank-deficiency message.
GlmFit fit_glm(const Matrix& x, std::span<const double> y, std::span<const double> v,
               Family family, Link link, const GlmOptions& options = {},
               std::span<const std::string> names = {});
GlmFit fit_glm(const Dataset& data, Family family, Link link, const GlmOptions& options = {});

/// Gradient of the average deviance w.r.t. (intercept, coef...).
Vector glm_deviance_gradient(const GlmFit& fit, const Matrix& x, std::span<const double> y,
                             std::span<const double> v);

}  // namespace lgn

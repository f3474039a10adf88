#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lgn {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, Vector data);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  Vector column(std::size_t c) const;
  void set_column(std::size_t c, std::span<const double> values);

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  Matrix transpose() const;

  /// Rows selected by index, in the given order.
  Matrix select_rows(std::span<const std::size_t> indices) const;
  /// Columns selected by index, in the given order.
  Matrix select_cols(std::span<const std::size_t> indices) const;
  /// Appends a column on the right.
  Matrix with_column(std::span<const double> values) const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);

/// Largest absolute entry.
double max_abs(const Matrix& m);

// ---- factorization ------------------------------------------------------

/// Raised when a Cholesky factorization meets a non-positive pivot.
class FactorizationError : public std::runtime_error {
 public:
  FactorizationError(std::size_t pivot, double value);
  std::size_t pivot() const { return pivot_; }

 private:
  std::size_t pivot_;
};

/// Lower-triangular L with L * L^T == sigma.
///
/// A pivot fails when it is not larger than `rel_tol` times the original
/// diagonal entry; the default only rejects exact breakdowns.
Matrix cholesky(const Matrix& sigma, double rel_tol = 0.0);

/// Solves (L L^T) x = b given the Cholesky factor.
Vector cholesky_solve(const Matrix& lower, std::span<const double> b);

/// Solves A X = B column by column for SPD A.
Matrix spd_solve(const Matrix& a, const Matrix& b);

// ---- normal distribution -------------------------------------------------

double std_normal_cdf(double x);
double std_normal_pdf(double x);

/// Inverse of the standard normal CDF. Throws std::domain_error unless
/// 0 < p < 1.
double std_normal_quantile(double p);

// ---- random numbers ------------------------------------------------------

/// xoshiro256** seeded through splitmix64. Normals come from Box-Muller
/// and are produced in pairs; the second value of each pair is cached.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Independent generator for a named purpose, derived from a root seed.
  static Rng substream(std::uint64_t seed, std::string_view name);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 bits of precision.
  double uniform();
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// n draws from N(mean, sigma), one per row.
Matrix sample_mvn(std::size_t n, std::span<const double> mean, const Matrix& sigma,
                  Rng& rng);

// ---- small helpers -------------------------------------------------------

double mean(std::span<const double> x);
/// Sample standard deviation (n - 1 denominator).
double sample_sd(std::span<const double> x);
double correlation(std::span<const double> x, std::span<const double> y);

}  // namespace lgn

#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lgn/linalg.hpp"

namespace lgn {

/// Malformed input data: bad CSV, schema mismatch, unknown level.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ColumnKind { Continuous, Binary, Categorical, Response, Exposure, Ignore };

struct SchemaColumn {
  std::string name;
  ColumnKind kind = ColumnKind::Continuous;
  /// Pinned level order for categorical columns; empty means first appearance.
  std::vector<std::string> levels;
};

/// Declarative column description. Text form, one column per line:
///
///     # comment
///     Density: continuous
///     VehGas: binary
///     Region: categorical R11,R21,R22
///     ClaimNb: response
///     Exposure: exposure
///     IDpol: ignore
struct Schema {
  std::vector<SchemaColumn> columns;

  static Schema parse(std::istream& in);
  static Schema load(const std::filesystem::path& path);
  void write(std::ostream& out) const;

  const SchemaColumn* find(const std::string& name) const;
  /// Throws DataError unless there is exactly one response, at most one
  /// exposure, and categorical level lists are duplicate-free.
  void validate() const;
};

const char* to_string(ColumnKind kind);
ColumnKind parse_column_kind(const std::string& text);

enum class FeatureKind { Continuous, Binary, Categorical, OneHot, Control };

const char* to_string(FeatureKind kind);
FeatureKind parse_feature_kind(const std::string& text);

/// Metadata for one column of the feature matrix.
struct FeatureInfo {
  std::string name;
  FeatureKind kind = FeatureKind::Continuous;
  /// Categorical: the level list (column holds level codes 0..L-1).
  /// OneHot: the originating column in `group` and its level in `level`.
  std::vector<std::string> levels;
  std::string group;
  std::string level;
  /// Set once the column has been centred and scaled.
  bool standardized = false;
  double mean = 0.0;
  double sd = 1.0;

  bool operator==(const FeatureInfo&) const = default;
};

struct Dataset {
  Vector y;
  /// Exposures, all ones when the source has none.
  Vector v;
  Matrix x;
  std::vector<FeatureInfo> features;

  std::size_t n() const { return y.size(); }
  std::size_t q() const { return features.size(); }

  /// Index of the feature with this name; throws DataError if missing.
  std::size_t feature_index(const std::string& name) const;
  std::vector<std::string> feature_names() const;

  Dataset subset(std::span<const std::size_t> rows) const;
  /// Copy keeping only the listed feature columns, in order.
  Dataset select_features(std::span<const std::size_t> columns) const;

  /// Throws DataError if lengths disagree.
  void check_shape() const;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Comma-separated, header mandatory, no quoting beyond stripping a pair of
/// surrounding double quotes from a field.
CsvTable read_csv_table(std::istream& in);

/// Reads a CSV file according to `schema`. Categorical columns are stored as
/// level codes (FeatureKind::Categorical); call one_hot or encode_categoricals
/// to expand them. With `transform_mode`, categorical levels must already be
/// pinned in the schema.
Dataset load_csv(const std::filesystem::path& path, const Schema& schema,
                 bool transform_mode = false);
Dataset load_csv(std::istream& in, const Schema& schema, bool transform_mode = false);

/// Writes features then the response (and exposure, when not all ones).
void write_csv(std::ostream& out, const Dataset& data, const std::string& response_name = "y");

// ---- standardization -------------------------------------------------------

struct StandardizeParams {
  std::vector<std::string> names;
  Vector means;
  Vector sds;
};

/// Centres and scales continuous and binary columns to zero mean and unit
/// sample variance; one-hot and categorical columns are left alone.
std::pair<Dataset, StandardizeParams> standardize(const Dataset& data);

/// Applies moments learned elsewhere (e.g. on the learning set).
Dataset apply_standardize(const StandardizeParams& params, const Dataset& data);

/// Undoes apply_standardize.
Dataset unstandardize(const StandardizeParams& params, const Dataset& data);

/// Moments recorded on the feature metadata of an already standardized set.
StandardizeParams standardize_params_of(const Dataset& data);

// ---- categorical -----------------------------------------------------------

/// Replaces the categorical column with one indicator column per level (no
/// reference level dropped).
Dataset one_hot(const Dataset& data, const std::string& column);

/// One-hot encodes every categorical column.
Dataset encode_categoricals(const Dataset& data);

/// Recovers the level of a one-hot group in each row.
std::vector<std::string> decode_one_hot(const Dataset& data, const std::string& group);

// ---- control features ------------------------------------------------------

enum class ControlDistribution { Uniform, Normal };

/// Appends an i.i.d. column, standardized to empirical zero mean and unit
/// sample variance, tagged FeatureKind::Control. The distribution name
/// ("normal" or "uniform") is kept in FeatureInfo::level.
Dataset add_control(const Dataset& data, ControlDistribution dist, Rng& rng,
                    const std::string& name);

// ---- applying a fitted layout ----------------------------------------------

/// Builds the feature matrix described by `layout` from a freshly loaded
/// (un-encoded, unstandardized) dataset: continuous and binary columns are
/// standardized with the stored moments, one-hot columns are rebuilt from the
/// matching categorical column, and control columns are drawn anew from
/// `rng`. Unknown categorical levels raise DataError.
Dataset align_features(const Dataset& raw, std::span<const FeatureInfo> layout, Rng& rng);

// ---- synthetic experiment --------------------------------------------------

inline constexpr std::size_t kSynthDim = 8;

/// mu(x) = x1/2 - x2^2/4 + |x3| sin(2 x3)/2 + x4 x5/2 + x5^2 x6/8.
double true_mu(std::span<const double> x);

/// Feature covariance: identity with corr(x2, x8) = 0.5.
Matrix synth_covariance();

/// Independent learning and test sets with x ~ N(0, Sigma), Y ~ N(mu(x), 1).
std::pair<Dataset, Dataset> synth_generate(std::size_t n_learn, std::size_t n_test, Rng& rng);

}  // namespace lgn

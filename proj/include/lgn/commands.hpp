#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lgn/edf.hpp"
#include "lgn/interpret.hpp"
#include "lgn/model.hpp"

// Subcommands of the localglmnet executable. Each one reads files, writes
// into an output directory and reports progress on `log`.
namespace lgn::cli {

/// Bad command line or configuration file.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file could not be read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum ExitCode : int {
  kExitOk = 0,
  kExitOther = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumeric = 4,
  kExitIo = 5,
};

/// Maps an exception to its exit code and a one-line category label.
std::pair<ExitCode, const char*> classify(const std::exception_ptr& error);

// ---- model spec files --------------------------------------------------------

/// Architecture file, `key = value` lines:
///
///     hidden_dims = 20,15,10
///     activations = tanh,tanh,tanh,linear   # optional
///     family = gaussian
///     link = identity                       # optional, canonical by default
///
/// The input dimension comes from the data.
struct SpecFile {
  std::vector<std::size_t> hidden_dims{20, 15, 10};
  std::vector<Activation> activations;
  Family family = Family::Gaussian;
  std::optional<Link> link;

  static SpecFile parse(const std::map<std::string, std::string>& kv);
  static SpecFile load(const std::filesystem::path& path);
  ModelSpec to_spec(std::size_t q) const;
};

// ---- synth -------------------------------------------------------------------

struct SynthOptions {
  std::filesystem::path out_dir;
  std::size_t n_learn = 100000;
  std::size_t n_test = 100000;
  std::uint64_t seed = 1;
};

/// Writes learn.csv, test.csv, schema.txt and manifest.txt.
void run_synth(const SynthOptions& options, std::ostream& log);

// ---- fit / drop-refit ----------------------------------------------------------

enum class Truth { None, Synthetic };

struct FitOptions {
  std::filesystem::path learn;
  std::filesystem::path test;  // optional
  std::filesystem::path schema;
  std::filesystem::path spec;          // optional
  std::filesystem::path train_config;  // optional
  std::filesystem::path out_dir;
  /// Overrides the seed of the training configuration.
  std::optional<std::uint64_t> seed;
  Truth truth = Truth::None;
  /// none, normal or uniform.
  std::string control = "normal";
  /// Features (or categorical columns) removed before fitting.
  std::vector<std::string> drop;
};

struct LossRow {
  std::string model;
  std::optional<double> in_sample;
  std::optional<double> out_of_sample;
};

struct FitSummary {
  std::vector<LossRow> losses;
  std::vector<std::string> features;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
};

/// Fits the null model, a GLM baseline and LocalGLMnet. Writes
/// loss_table.csv, model.json, history.csv, glm.csv and summary.txt.
FitSummary run_fit(const FitOptions& options, std::ostream& log);

// ---- report / interactions -----------------------------------------------------

struct ReportOptions {
  std::filesystem::path model;
  std::filesystem::path data;
  std::filesystem::path schema;
  std::filesystem::path out_dir;
  double alpha = 0.001;
  double margin = kDefaultDecisionMargin;
  /// Instances shown in the scatter plots.
  std::size_t sample = 5000;
  std::uint64_t seed = 1;
  /// Feature whose attentions size the selection interval; defaults to the
  /// model's control column.
  std::string control;
  /// Focal features for interaction profiles; empty means every feature
  /// that is not part of a one-hot group.
  std::vector<std::string> interactions;
  SmootherOptions smoother;
};

/// Selection table, importance, attention and contribution plots, per-level
/// boxplots for one-hot groups and interaction profiles.
SelectionReport run_report(const ReportOptions& options, std::ostream& log);

/// Interaction profiles only (uses the model, data, schema, seed, out_dir,
/// interactions and smoother fields).
void run_interactions(const ReportOptions& options, std::ostream& log);

}  // namespace lgn::cli

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lgn/data.hpp"
#include "lgn/linalg.hpp"
#include "lgn/model.hpp"

namespace lgn {

/// `key = value` lines, '#' starts a comment. Throws std::invalid_argument on
/// malformed lines or repeated keys.
std::map<std::string, std::string> parse_key_values(std::istream& in);
std::map<std::string, std::string> load_key_values(const std::filesystem::path& path);

struct TrainConfig {
  // Nadam
  double learning_rate = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-7;

  std::size_t batch_size = 5000;
  std::size_t max_epochs = 100;
  double val_fraction = 0.2;
  std::uint64_t seed = 1;
  bool shuffle = true;
  /// Stop after this many epochs without improvement; 0 scans every epoch.
  std::size_t patience = 0;

  void validate() const;

  /// Unknown keys are rejected. Recognized keys: learning_rate, beta1,
  /// beta2, eps, batch_size, max_epochs, val_fraction, seed, shuffle,
  /// patience.
  /// Keys absent from `kv` keep the value from `defaults`.
  static TrainConfig from_key_values(const std::map<std::string, std::string>& kv,
                                     TrainConfig defaults);
  static TrainConfig load(const std::filesystem::path& path, TrainConfig defaults);
  static TrainConfig load(const std::filesystem::path& path);
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;

  /// epoch,train_loss,val_loss
  void write_csv(std::ostream& out) const;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Random partition with |validation| = round(n * val_fraction). Both parts
/// come back in ascending index order.
Split split_learn(std::size_t n, double val_fraction, Rng& rng);

struct NadamState {
  Vector m;
  Vector v;
  std::size_t t = 0;
};

/// One Nadam update (Nesterov lookahead on the bias-corrected first moment):
///
///     m = b1 m + (1 - b1) g,  v = b2 v + (1 - b2) g^2
///     m_hat = b1 m / (1 - b1^(t+1)) + (1 - b1) g / (1 - b1^t)
///     theta -= lr m_hat / (sqrt(v / (1 - b2^t)) + eps)
///
/// `state.t` is incremented before use, so the first call runs with t = 1.
void nadam_step(std::span<double> params, std::span<const double> grads, NadamState& state,
                const TrainConfig& config);

struct FitResult {
  /// Snapshot at the epoch with the smallest validation loss.
  Params params;
  TrainHistory history;
  Split split;
  std::size_t clamp_warnings = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Minibatch Nadam on a random training/validation split of `data` with
/// early stopping on the validation deviance. Randomness comes from named
/// substreams of config.seed ("split", "init", "shuffle").
FitResult fit(const Dataset& data, const ModelSpec& spec, const TrainConfig& config,
              const EpochCallback& on_epoch = {});

}  // namespace lgn

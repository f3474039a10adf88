#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lgn/data.hpp"
#include "lgn/edf.hpp"
#include "lgn/linalg.hpp"

namespace lgn {

/// Non-finite values appeared during evaluation or training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Activation { Tanh, Linear };

const char* to_string(Activation a);
Activation parse_activation(const std::string& text);

/// Architecture of a LocalGLMnet: an attention tower R^q -> R^q (dense
/// layers q -> hidden_dims... -> q) whose output beta(x) is dotted with the
/// raw input and offset by a bias beta0 on the link scale:
///
///     g(mu(x)) = beta0 + <beta(x), x>
struct ModelSpec {
  std::size_t q = 0;
  std::vector<std::size_t> hidden_dims;
  /// One per layer (hidden_dims.size() + 1).
  std::vector<Activation> activations;
  Family family = Family::Gaussian;
  Link link = Link::Identity;

  /// tanh on hidden layers, linear on the output layer.
  static ModelSpec make(std::size_t q, std::vector<std::size_t> hidden_dims,
                        Family family = Family::Gaussian);
  static ModelSpec make(std::size_t q, std::vector<std::size_t> hidden_dims, Family family,
                        Link link);

  std::size_t depth() const { return hidden_dims.size() + 1; }
  /// q, hidden_dims..., q.
  std::vector<std::size_t> layer_dims() const;
  void validate() const;

  bool operator==(const ModelSpec&) const = default;
};

/// Dense layer; weights are (inputs x outputs).
struct Layer {
  Matrix weights;
  Vector bias;
  bool operator==(const Layer&) const = default;
};

struct Params {
  std::vector<Layer> layers;
  double beta0 = 0.0;

  std::size_t size() const;
  /// Same shapes, all zeros.
  Params zeros_like() const;
  /// Layer weights and biases in order, then beta0.
  Vector to_vector() const;
  void assign(std::span<const double> flat);
  bool operator==(const Params&) const = default;
};

/// Glorot-uniform weights, zero biases, beta0 = `beta0` (the caller passes
/// the null model on the link scale).
Params init_params(const ModelSpec& spec, Rng& rng, double beta0 = 0.0);

/// Zero tower with the given output bias.
Params zero_params(const ModelSpec& spec, double beta0 = 0.0);

/// Per-layer values for one batch.
struct ForwardTrace {
  /// Pre-activations and activations per layer (n x q_m).
  std::vector<Matrix> pre;
  std::vector<Matrix> post;
  /// Link-scale predictor and expected response (times exposure for Poisson).
  Vector eta;
  Vector mu;
  /// Instances whose eta hit the log-link clamp.
  std::size_t clamped = 0;

  const Matrix& attention() const { return post.back(); }
};

ForwardTrace forward(const Params& params, const ModelSpec& spec, const Matrix& x,
                     std::span<const double> v);

/// beta(x_i) for every row (n x q).
Matrix attention(const Params& params, const ModelSpec& spec, const Matrix& x);

/// beta_j(x_i) * x_ij (n x q).
Matrix contributions(const Params& params, const ModelSpec& spec, const Matrix& x);

/// Expected responses. `clamped`, when given, receives the number of rows
/// whose predictor hit the log-link clamp.
Vector predict(const Params& params, const ModelSpec& spec, const Matrix& x,
               std::span<const double> v, std::size_t* clamped = nullptr);

/// Average deviance of the model on a dataset.
double evaluate_loss(const Params& params, const ModelSpec& spec, const Dataset& data);

struct LossAndGrads {
  double loss = 0.0;
  Params grads;
};

/// Batch-average deviance and its gradient w.r.t. every weight, bias and
/// beta0.
LossAndGrads loss_and_param_grads(const Params& params, const ModelSpec& spec,
                                  const Matrix& x, std::span<const double> y,
                                  std::span<const double> v);

/// q x q matrix with entry (j, k) = d beta_j(x) / d x_k.
Matrix input_jacobian(const Params& params, const ModelSpec& spec, std::span<const double> x);

/// Row i holds the gradient of beta_j at x_i (n x q); one shared forward
/// pass and one reverse pass for output j.
Matrix attention_gradients(const Params& params, const ModelSpec& spec, const Matrix& x,
                           std::size_t j);

// ---- model files -----------------------------------------------------------

/// Everything needed to apply a fitted model to raw data.
struct ModelFile {
  ModelSpec spec;
  Params params;
  /// Feature metadata (names, kinds, standardization moments) in column
  /// order; may be empty.
  std::vector<FeatureInfo> features;
};

inline constexpr int kModelFormatVersion = 1;

/// JSON document; doubles round-trip exactly.
void save_model(std::ostream& out, const ModelFile& model);
void save_model(const std::filesystem::path& path, const ModelFile& model);
ModelFile load_model(std::istream& in);
ModelFile load_model(const std::filesystem::path& path);

}  // namespace lgn

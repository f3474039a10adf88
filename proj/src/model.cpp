#include "lgn/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

namespace lgn {

const char* to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "linear"; }

Activation parse_activation(const std::string& text) {
  if (text == "tanh") return Activation::Tanh;
  if (text == "linear") return Activation::Linear;
  throw std::invalid_argument("unknown activation '" + text + "' (tanh|linear)");
}

ModelSpec ModelSpec::make(std::size_t q, std::vector<std::size_t> hidden_dims, Family family) {
  return make(q, std::move(hidden_dims), family, canonical_link(family));
}

ModelSpec ModelSpec::make(std::size_t q, std::vector<std::size_t> hidden_dims, Family family,
                          Link link) {
  ModelSpec spec;
  spec.q = q;
  spec.hidden_dims = std::move(hidden_dims);
  spec.activations.assign(spec.hidden_dims.size(), Activation::Tanh);
  spec.activations.push_back(Activation::Linear);
  spec.family = family;
  spec.link = link;
  return spec;
}

std::vector<std::size_t> ModelSpec::layer_dims() const {
  std::vector<std::size_t> dims{q};
  dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
  dims.push_back(q);
  return dims;
}

void ModelSpec::validate() const {
  if (q == 0) throw std::invalid_argument("model spec: q must be positive");
  if (activations.size() != depth()) {
    throw std::invalid_argument(fmt::format(
        "model spec: {} activations given for {} layers", activations.size(), depth()));
  }
  for (std::size_t d : hidden_dims)
    if (d == 0) throw std::invalid_argument("model spec: hidden layer width must be positive");
}

// ---- params ----------------------------------------------------------------

std::size_t Params::size() const {
  std::size_t n = 1;
  for (const auto& l : layers) n += l.weights.data().size() + l.bias.size();
  return n;
}

Params Params::zeros_like() const {
  Params z;
  for (const auto& l : layers)
    z.layers.push_back({Matrix(l.weights.rows(), l.weights.cols()), Vector(l.bias.size(), 0.0)});
  return z;
}

Vector Params::to_vector() const {
  Vector flat;
  flat.reserve(size());
  for (const auto& l : layers) {
    flat.insert(flat.end(), l.weights.data().begin(), l.weights.data().end());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  }
  flat.push_back(beta0);
  return flat;
}

void Params::assign(std::span<const double> flat) {
  if (flat.size() != size()) throw std::invalid_argument("Params::assign: size mismatch");
  std::size_t at = 0;
  for (auto& l : layers) {
    auto w = l.weights.data();
    std::copy_n(flat.begin() + at, w.size(), w.begin());
    at += w.size();
    std::copy_n(flat.begin() + at, l.bias.size(), l.bias.begin());
    at += l.bias.size();
  }
  beta0 = flat[at];
}

Params zero_params(const ModelSpec& spec, double beta0) {
  spec.validate();
  const auto dims = spec.layer_dims();
  Params p;
  for (std::size_t m = 0; m + 1 < dims.size(); ++m)
    p.layers.push_back({Matrix(dims[m], dims[m + 1]), Vector(dims[m + 1], 0.0)});
  p.beta0 = beta0;
  return p;
}

Params init_params(const ModelSpec& spec, Rng& rng, double beta0) {
  Params p = zero_params(spec, beta0);
  for (auto& layer : p.layers) {
    const double fan = static_cast<double>(layer.weights.rows() + layer.weights.cols());
    const double limit = std::sqrt(6.0 / fan);
    for (double& w : layer.weights.data()) w = limit * (2.0 * rng.uniform() - 1.0);
  }
  return p;
}

// ---- forward ---------------------------------------------------------------

namespace {

void check_input(const Params& params, const ModelSpec& spec, const Matrix& x) {
  if (x.cols() != spec.q) {
    throw std::invalid_argument(
        fmt::format("model expects {} feature columns, got {}", spec.q, x.cols()));
  }
  if (params.layers.size() != spec.depth()) {
    throw std::invalid_argument("params do not match the model spec depth");
  }
}

/// out = in * W + b, then the activation.
void dense_forward(const Matrix& in, const Layer& layer, Activation act, Matrix& pre,
                   Matrix& post, std::size_t layer_index) {
  const std::size_t n = in.rows();
  const std::size_t k_in = layer.weights.rows();
  const std::size_t k_out = layer.weights.cols();
  pre = Matrix(n, k_out);
  const double* w = layer.weights.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* z = pre.row(i).data();
    std::copy(layer.bias.begin(), layer.bias.end(), z);
    const double* a = in.row(i).data();
    for (std::size_t k = 0; k < k_in; ++k) {
      const double ak = a[k];
      const double* wk = w + k * k_out;
      for (std::size_t j = 0; j < k_out; ++j) z[j] += ak * wk[j];
    }
  }
  if (act == Activation::Linear) {
    post = pre;
  } else {
    post = Matrix(n, k_out);
    auto src = pre.data();
    auto dst = post.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::tanh(src[i]);
  }
  for (double value : post.data()) {
    if (!std::isfinite(value)) {
      throw NumericError(fmt::format("non-finite activation in layer {}", layer_index + 1));
    }
  }
}

void tower_forward(const Params& params, const ModelSpec& spec, const Matrix& x,
                   ForwardTrace& trace) {
  const std::size_t depth = spec.depth();
  trace.pre.resize(depth);
  trace.post.resize(depth);
  for (std::size_t m = 0; m < depth; ++m) {
    const Matrix& in = m == 0 ? x : trace.post[m - 1];
    dense_forward(in, params.layers[m], spec.activations[m], trace.pre[m], trace.post[m], m);
  }
}

/// Back-propagates d(loss)/d(post of last layer) through the tower. Fills
/// `grads` when given; returns d(loss)/d(input) when `want_input`.
Matrix tower_backward(const Params& params, const ModelSpec& spec, const Matrix& x,
                      const ForwardTrace& trace, Matrix delta, Params* grads, bool want_input) {
  const std::size_t n = x.rows();
  for (std::size_t m = spec.depth(); m-- > 0;) {
    const Layer& layer = params.layers[m];
    const std::size_t k_in = layer.weights.rows();
    const std::size_t k_out = layer.weights.cols();
    if (spec.activations[m] == Activation::Tanh) {
      auto d = delta.data();
      auto a = trace.post[m].data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= 1.0 - a[i] * a[i];
    }
    const Matrix& in = m == 0 ? x : trace.post[m - 1];
    if (grads) {
      Layer& g = grads->layers[m];
      double* gw = g.weights.data().data();
      for (std::size_t i = 0; i < n; ++i) {
        const double* dz = delta.row(i).data();
        const double* a = in.row(i).data();
        for (std::size_t k = 0; k < k_in; ++k) {
          const double ak = a[k];
          double* gwk = gw + k * k_out;
          for (std::size_t j = 0; j < k_out; ++j) gwk[j] += ak * dz[j];
        }
        for (std::size_t j = 0; j < k_out; ++j) g.bias[j] += dz[j];
      }
    }
    if (m == 0 && !want_input) return {};
    Matrix prev(n, k_in);
    const double* w = layer.weights.data().data();
    for (std::size_t i = 0; i < n; ++i) {
      const double* dz = delta.row(i).data();
      double* dp = prev.row(i).data();
      for (std::size_t k = 0; k < k_in; ++k) {
        const double* wk = w + k * k_out;
        double s = 0.0;
        for (std::size_t j = 0; j < k_out; ++j) s += wk[j] * dz[j];
        dp[k] = s;
      }
    }
    delta = std::move(prev);
  }
  return delta;
}

}  // namespace

ForwardTrace forward(const Params& params, const ModelSpec& spec, const Matrix& x,
                     std::span<const double> v) {
  check_input(params, spec, x);
  const std::size_t n = x.rows();
  if (v.size() != n) throw std::invalid_argument("forward: exposure length mismatch");
  ForwardTrace trace;
  tower_forward(params, spec, x, trace);
  const Matrix& beta = trace.attention();
  trace.eta.resize(n);
  trace.mu.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* b = beta.row(i).data();
    const double* xi = x.row(i).data();
    double eta = params.beta0;
    for (std::size_t j = 0; j < spec.q; ++j) eta += b[j] * xi[j];
    trace.eta[i] = eta;
    if (spec.link == Link::Log && std::abs(eta) > kEtaClamp) ++trace.clamped;
    double mu = link_inverse(spec.link, eta);
    if (spec.family == Family::Poisson) mu *= v[i];
    if (!std::isfinite(mu)) throw NumericError(fmt::format("non-finite mean at row {}", i));
    trace.mu[i] = mu;
  }
  return trace;
}

namespace {

constexpr std::size_t kBlockRows = 8192;

/// Runs `body(first_row, block)` over consecutive row blocks of x.
template <typename Body>
void for_row_blocks(const Matrix& x, Body&& body) {
  for (std::size_t first = 0; first < x.rows(); first += kBlockRows) {
    const std::size_t count = std::min(kBlockRows, x.rows() - first);
    if (first == 0 && count == x.rows()) {
      body(first, x);
      return;
    }
    std::vector<std::size_t> rows(count);
    for (std::size_t i = 0; i < count; ++i) rows[i] = first + i;
    body(first, x.select_rows(rows));
  }
}

void copy_rows(const Matrix& block, std::size_t first, Matrix& out) {
  auto src = block.data();
  std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(first * out.cols()));
}

}  // namespace

Matrix attention(const Params& params, const ModelSpec& spec, const Matrix& x) {
  check_input(params, spec, x);
  Matrix out(x.rows(), spec.q);
  for_row_blocks(x, [&](std::size_t first, const Matrix& block) {
    ForwardTrace trace;
    tower_forward(params, spec, block, trace);
    copy_rows(trace.post.back(), first, out);
  });
  return out;
}

Matrix contributions(const Params& params, const ModelSpec& spec, const Matrix& x) {
  Matrix c = attention(params, spec, x);
  auto cd = c.data();
  auto xd = x.data();
  for (std::size_t i = 0; i < cd.size(); ++i) cd[i] *= xd[i];
  return c;
}

Vector predict(const Params& params, const ModelSpec& spec, const Matrix& x,
               std::span<const double> v, std::size_t* clamped) {
  check_input(params, spec, x);
  if (v.size() != x.rows()) throw std::invalid_argument("predict: exposure length mismatch");
  Vector mu(x.rows());
  std::size_t hits = 0;
  for_row_blocks(x, [&](std::size_t first, const Matrix& block) {
    const ForwardTrace trace = forward(params, spec, block, v.subspan(first, block.rows()));
    std::copy(trace.mu.begin(), trace.mu.end(), mu.begin() + static_cast<std::ptrdiff_t>(first));
    hits += trace.clamped;
  });
  if (clamped) *clamped = hits;
  return mu;
}

double evaluate_loss(const Params& params, const ModelSpec& spec, const Dataset& data) {
  const Vector mu = predict(params, spec, data.x, data.v);
  return deviance(spec.family, data.y, mu, data.v);
}

LossAndGrads loss_and_param_grads(const Params& params, const ModelSpec& spec,
                                  const Matrix& x, std::span<const double> y,
                                  std::span<const double> v) {
  const std::size_t n = x.rows();
  if (n == 0) throw std::invalid_argument("loss_and_param_grads: empty batch");
  if (y.size() != n) throw std::invalid_argument("loss_and_param_grads: response length mismatch");
  const ForwardTrace trace = forward(params, spec, x, v);

  LossAndGrads out;
  out.loss = deviance(spec.family, y, trace.mu, v);
  out.grads = params.zeros_like();

  // d loss / d eta per instance.
  const double inv_n = 1.0 / static_cast<double>(n);
  Vector d_eta(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double scale = spec.family == Family::Poisson ? v[i] : 1.0;
    const double mu_eta = scale * link_inverse_derivative(spec.link, trace.eta[i]);
    if (spec.family == Family::Gaussian) {
      d_eta[i] = 2.0 * (trace.mu[i] - y[i]) * inv_n * mu_eta;
    } else if (spec.link == Link::Log) {
      // mu_eta == mu away from the clamp.
      d_eta[i] = mu_eta == 0.0 ? 0.0 : 2.0 * (trace.mu[i] - y[i]) * inv_n;
    } else {
      d_eta[i] = 2.0 * (1.0 - y[i] / trace.mu[i]) * inv_n * mu_eta;
    }
  }

  Matrix delta(n, spec.q);
  for (std::size_t i = 0; i < n; ++i) {
    out.grads.beta0 += d_eta[i];
    const double* xi = x.row(i).data();
    double* di = delta.row(i).data();
    for (std::size_t j = 0; j < spec.q; ++j) di[j] = d_eta[i] * xi[j];
  }
  tower_backward(params, spec, x, trace, std::move(delta), &out.grads, false);
  return out;
}

Matrix attention_gradients(const Params& params, const ModelSpec& spec, const Matrix& x,
                           std::size_t j) {
  check_input(params, spec, x);
  if (j >= spec.q) throw std::out_of_range("attention_gradients: output index out of range");
  Matrix out(x.rows(), spec.q);
  for_row_blocks(x, [&](std::size_t first, const Matrix& block) {
    ForwardTrace trace;
    tower_forward(params, spec, block, trace);
    Matrix seed(block.rows(), spec.q);
    for (std::size_t i = 0; i < block.rows(); ++i) seed(i, j) = 1.0;
    copy_rows(tower_backward(params, spec, block, trace, std::move(seed), nullptr, true), first,
              out);
  });
  return out;
}

Matrix input_jacobian(const Params& params, const ModelSpec& spec, std::span<const double> x) {
  if (x.size() != spec.q) throw std::invalid_argument("input_jacobian: wrong feature count");
  const Matrix row(1, spec.q, Vector(x.begin(), x.end()));
  check_input(params, spec, row);
  ForwardTrace trace;
  tower_forward(params, spec, row, trace);
  Matrix jac(spec.q, spec.q);
  for (std::size_t j = 0; j < spec.q; ++j) {
    Matrix seed(1, spec.q);
    seed(0, j) = 1.0;
    const Matrix grad = tower_backward(params, spec, row, trace, std::move(seed), nullptr, true);
    for (std::size_t k = 0; k < spec.q; ++k) jac(j, k) = grad(0, k);
  }
  return jac;
}

// ---- model files -----------------------------------------------------------

using nlohmann::json;

void save_model(std::ostream& out, const ModelFile& model) {
  model.spec.validate();
  json doc;
  doc["format"] = "localglmnet-model";
  doc["version"] = kModelFormatVersion;
  json spec;
  spec["q"] = model.spec.q;
  spec["hidden_dims"] = model.spec.hidden_dims;
  std::vector<std::string> acts;
  for (auto a : model.spec.activations) acts.emplace_back(to_string(a));
  spec["activations"] = acts;
  spec["family"] = to_string(model.spec.family);
  spec["link"] = to_string(model.spec.link);
  doc["spec"] = spec;

  json params;
  params["beta0"] = model.params.beta0;
  json layers = json::array();
  for (const auto& l : model.params.layers) {
    json layer;
    layer["inputs"] = l.weights.rows();
    layer["outputs"] = l.weights.cols();
    layer["weights"] = std::vector<double>(l.weights.data().begin(), l.weights.data().end());
    layer["bias"] = l.bias;
    layers.push_back(layer);
  }
  params["layers"] = layers;
  doc["params"] = params;

  json features = json::array();
  for (const auto& f : model.features) {
    json jf;
    jf["name"] = f.name;
    jf["kind"] = to_string(f.kind);
    if (!f.levels.empty()) jf["levels"] = f.levels;
    if (!f.group.empty()) jf["group"] = f.group;
    if (!f.level.empty()) jf["level"] = f.level;
    jf["standardized"] = f.standardized;
    jf["mean"] = f.mean;
    jf["sd"] = f.sd;
    features.push_back(jf);
  }
  doc["features"] = features;
  out << doc.dump(1) << '\n';
}

void save_model(const std::filesystem::path& path, const ModelFile& model) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model file " + path.string());
  save_model(out, model);
}

ModelFile load_model(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(std::string("model file: ") + e.what());
  }
  try {
    if (doc.at("format") != "localglmnet-model") throw DataError("model file: unknown format");
    if (doc.at("version").get<int>() != kModelFormatVersion) {
      throw DataError("model file: unsupported version");
    }
    ModelFile model;
    const json& spec = doc.at("spec");
    model.spec.q = spec.at("q").get<std::size_t>();
    model.spec.hidden_dims = spec.at("hidden_dims").get<std::vector<std::size_t>>();
    for (const auto& a : spec.at("activations")) {
      model.spec.activations.push_back(parse_activation(a.get<std::string>()));
    }
    model.spec.family = parse_family(spec.at("family").get<std::string>());
    model.spec.link = parse_link(spec.at("link").get<std::string>());
    model.spec.validate();

    const json& params = doc.at("params");
    model.params.beta0 = params.at("beta0").get<double>();
    const auto dims = model.spec.layer_dims();
    const json& layers = params.at("layers");
    if (layers.size() != model.spec.depth()) throw DataError("model file: layer count mismatch");
    for (std::size_t m = 0; m < layers.size(); ++m) {
      const json& jl = layers[m];
      const auto rows = jl.at("inputs").get<std::size_t>();
      const auto cols = jl.at("outputs").get<std::size_t>();
      if (rows != dims[m] || cols != dims[m + 1]) {
        throw DataError(fmt::format("model file: layer {} has shape {}x{}, expected {}x{}", m + 1,
                                    rows, cols, dims[m], dims[m + 1]));
      }
      Layer layer{Matrix(rows, cols, jl.at("weights").get<Vector>()), jl.at("bias").get<Vector>()};
      if (layer.bias.size() != cols) throw DataError("model file: bias length mismatch");
      model.params.layers.push_back(std::move(layer));
    }

    for (const auto& jf : doc.value("features", json::array())) {
      FeatureInfo f;
      f.name = jf.at("name").get<std::string>();
      f.kind = parse_feature_kind(jf.at("kind").get<std::string>());
      f.levels = jf.value("levels", std::vector<std::string>{});
      f.group = jf.value("group", std::string{});
      f.level = jf.value("level", std::string{});
      f.standardized = jf.at("standardized").get<bool>();
      f.mean = jf.at("mean").get<double>();
      f.sd = jf.at("sd").get<double>();
      model.features.push_back(std::move(f));
    }
    if (!model.features.empty() && model.features.size() != model.spec.q) {
      throw DataError("model file: feature list does not match q");
    }
    return model;
  } catch (const json::exception& e) {
    throw DataError(std::string("model file: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("model file: ") + e.what());
  }
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file " + path.string());
  return load_model(in);
}

}  // namespace lgn

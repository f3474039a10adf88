#include "lgn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include <fmt/format.h>

namespace lgn {

// ---- key-value files -------------------------------------------------------

std::map<std::string, std::string> parse_key_values(std::istream& in) {
  auto trim = [](std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return std::string{};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
  };
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(fmt::format("config line {}: expected 'key = value'", line_no));
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw std::invalid_argument(fmt::format("config line {}: empty key", line_no));
    if (!out.emplace(key, value).second) {
      throw std::invalid_argument(fmt::format("config line {}: repeated key '{}'", line_no, key));
    }
  }
  return out;
}

std::map<std::string, std::string> load_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file " + path.string());
  return parse_key_values(in);
}

// ---- config ----------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("train config: beta1 in [0,1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("train config: beta2 in [0,1)");
  if (!(eps > 0.0)) throw std::invalid_argument("train config: eps must be > 0");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (max_epochs < 1) throw std::invalid_argument("train config: max_epochs must be >= 1");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw std::invalid_argument("train config: val_fraction must lie in (0,1)");
  }
}

namespace {

double to_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size() || value.empty()) {
    throw std::invalid_argument("train config: " + key + " is not a number: '" + value + "'");
  }
  return out;
}

std::uint64_t to_unsigned(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  unsigned long long out = 0;
  try {
    if (!value.empty() && value[0] != '-') out = std::stoull(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size() || value.empty()) {
    throw std::invalid_argument("train config: " + key + " is not a non-negative integer: '" +
                                value + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw std::invalid_argument("train config: " + key + " must be true or false");
}

}  // namespace

TrainConfig TrainConfig::from_key_values(const std::map<std::string, std::string>& kv,
                                         TrainConfig config) {
  for (const auto& [key, value] : kv) {
    if (key == "learning_rate") config.learning_rate = to_double(key, value);
    else if (key == "beta1") config.beta1 = to_double(key, value);
    else if (key == "beta2") config.beta2 = to_double(key, value);
    else if (key == "eps") config.eps = to_double(key, value);
    else if (key == "batch_size") config.batch_size = to_unsigned(key, value);
    else if (key == "max_epochs") config.max_epochs = to_unsigned(key, value);
    else if (key == "val_fraction") config.val_fraction = to_double(key, value);
    else if (key == "seed") config.seed = to_unsigned(key, value);
    else if (key == "shuffle") config.shuffle = to_bool(key, value);
    else if (key == "patience") config.patience = to_unsigned(key, value);
    else throw std::invalid_argument("train config: unknown key '" + key + "'");
  }
  config.validate();
  return config;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path, TrainConfig defaults) {
  return from_key_values(load_key_values(path), defaults);
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  return load(path, TrainConfig{});
}

void TrainHistory::write_csv(std::ostream& out) const {
  out << "epoch,train_loss,val_loss\n";
  for (const auto& e : epochs) out << fmt::format("{},{:.10f},{:.10f}\n", e.epoch, e.train_loss, e.val_loss);
}

// ---- split -----------------------------------------------------------------

Split split_learn(std::size_t n, double val_fraction, Rng& rng) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw std::invalid_argument("split_learn: val_fraction must lie in (0,1)");
  }
  const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * val_fraction));
  if (n < 2 || n_val == 0 || n_val >= n) {
    throw std::invalid_argument(
        fmt::format("split_learn: {} instances cannot be split with fraction {}", n, val_fraction));
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  Split split;
  split.validation.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  split.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(split.validation.begin(), split.validation.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

// ---- Nadam -----------------------------------------------------------------

void nadam_step(std::span<double> params, std::span<const double> grads, NadamState& state,
                const TrainConfig& config) {
  if (params.size() != grads.size()) throw std::invalid_argument("nadam_step: size mismatch");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("nadam_step: state size mismatch");
  for (double g : grads)
    if (!std::isfinite(g)) throw NumericError("nadam_step: non-finite gradient");

  ++state.t;
  const double t = static_cast<double>(state.t);
  const double b1 = config.beta1;
  const double b2 = config.beta2;
  const double b1t = std::pow(b1, t);
  const double m_scale = b1 / (1.0 - b1t * b1);
  const double g_scale = (1.0 - b1) / (1.0 - b1t);
  const double v_corr = 1.0 - std::pow(b2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
    const double m_hat = m_scale * state.m[i] + g_scale * g;
    const double v_hat = state.v[i] / v_corr;
    params[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.eps);
  }
}

// ---- fit -------------------------------------------------------------------

FitResult fit(const Dataset& data, const ModelSpec& spec, const TrainConfig& config,
              const EpochCallback& on_epoch) {
  config.validate();
  spec.validate();
  data.check_shape();
  if (data.q() != spec.q) {
    throw std::invalid_argument(
        fmt::format("fit: dataset has {} features but the model expects {}", data.q(), spec.q));
  }

  Rng split_rng = Rng::substream(config.seed, "split");
  Rng init_rng = Rng::substream(config.seed, "init");
  Rng shuffle_rng = Rng::substream(config.seed, "shuffle");

  FitResult result;
  result.split = split_learn(data.n(), config.val_fraction, split_rng);
  const Dataset train = data.subset(result.split.train);
  const Dataset val = data.subset(result.split.validation);

  double level = fit_null(spec.family, train);
  if (spec.link == Link::Log) level = std::max(level, 1e-10);
  Params params = init_params(spec, init_rng, link_forward(spec.link, level));
  Vector flat = params.to_vector();
  NadamState state;

  std::vector<std::size_t> order(train.n());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainHistory& history = result.history;
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    if (config.shuffle) shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const std::span<const std::size_t> rows(order.data() + begin, end - begin);
      const Dataset batch = train.subset(rows);
      LossAndGrads lg;
      try {
        lg = loss_and_param_grads(params, spec, batch.x, batch.y, batch.v);
        const Vector g = lg.grads.to_vector();
        nadam_step(flat, g, state, config);
      } catch (const NumericError& e) {
        throw NumericError(fmt::format("epoch {}, batch starting at {}: {}", epoch, begin, e.what()));
      }
      params.assign(flat);
      loss_sum += lg.loss * static_cast<double>(rows.size());
    }

    std::size_t clamped = 0;
    const Vector val_mu = predict(params, spec, val.x, val.v, &clamped);
    result.clamp_warnings += clamped;
    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(order.size());
    record.val_loss = deviance(spec.family, val.y, val_mu, val.v);
    record.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.epochs.push_back(record);
    if (on_epoch) on_epoch(record);

    if (record.val_loss < best) {
      best = record.val_loss;
      history.best_epoch = epoch;
      history.best_val_loss = best;
      result.params = params;
      since_best = 0;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      break;
    }
  }
  if (history.best_epoch == 0) throw NumericError("fit: validation loss never finite");
  return result;
}

}  // namespace lgn

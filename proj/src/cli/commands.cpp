#include "lgn/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "lgn/data.hpp"
#include "lgn/linalg.hpp"
#include "lgn/plot.hpp"
#include "lgn/train.hpp"

namespace lgn::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  return s.substr(first, s.find_last_not_of(" \t") - first + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  body(out);
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, [&](std::ostream& out) { out << text; });
}

void require_file(const fs::path& path, const char* what) {
  if (path.empty()) throw ConfigError(fmt::format("{} file is required", what));
  if (!fs::is_regular_file(path)) throw IoError(fmt::format("cannot read {} file {}", what, path.string()));
}

std::string file_stem(const std::string& name) {
  std::string out;
  for (char c : name) {
    const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
    out += keep ? c : '_';
  }
  return out;
}

std::string fmt_loss(const std::optional<double>& value) {
  return value ? fmt::format("{:.6f}", *value) : std::string("NA");
}

Dataset load_data(const fs::path& path, const Schema& schema) {
  require_file(path, "data");
  return load_csv(path, schema);
}

struct LoadedModel {
  ModelFile file;
  Dataset data;
};

LoadedModel load_model_and_data(const ReportOptions& options) {
  require_file(options.model, "model");
  require_file(options.schema, "schema");
  LoadedModel out{load_model(options.model), {}};
  if (out.file.features.empty()) {
    throw DataError(options.model.string() + ": model file has no feature metadata");
  }
  if (out.file.features.size() != out.file.spec.q) {
    throw DataError(options.model.string() + ": feature list does not match the model input size");
  }
  const Schema schema = Schema::load(options.schema);
  const Dataset raw = load_data(options.data, schema);
  // Same stream as `fit`, so with the same seed the learning set gets back
  // the control column it was trained with.
  Rng rng = Rng::substream(options.seed, "control");
  out.data = align_features(raw, out.file.features, rng);
  return out;
}

// Features that get a scatter panel or an interaction profile of their own.
std::vector<std::size_t> scalar_features(const Dataset& data) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < data.q(); ++j)
    if (data.features[j].kind != FeatureKind::OneHot) out.push_back(j);
  return out;
}

std::vector<std::size_t> focal_indices(const Dataset& data, const std::vector<std::string>& names) {
  if (names.empty()) return scalar_features(data);
  std::vector<std::size_t> out;
  for (const auto& name : names) {
    const auto it = std::find_if(data.features.begin(), data.features.end(),
                                 [&](const FeatureInfo& f) { return f.name == name; });
    if (it == data.features.end()) throw ConfigError("unknown feature '" + name + "'");
    out.push_back(static_cast<std::size_t>(it - data.features.begin()));
  }
  return out;
}

void write_interactions(const LoadedModel& m, const ReportOptions& options, std::ostream& log) {
  const std::vector<std::string> names = m.data.feature_names();
  for (std::size_t focal : focal_indices(m.data, options.interactions)) {
    const InteractionProfile prof = interaction_profiles(m.file.params, m.file.spec, m.data.x,
                                                         focal, names, options.smoother);
    const std::string stem = "interactions_" + file_stem(names[focal]);
    write_file(options.out_dir / (stem + ".csv"), [&](std::ostream& out) { prof.write_csv(out); });

    plot::Panel panel;
    panel.title = "interactions of " + names[focal];
    panel.xlabel = names[focal];
    panel.ylabel = "d beta_" + names[focal] + " / d x_k";
    panel.legend = names.size() <= 10;
    panel.hlines.push_back({0.0, "#444444", false});
    for (std::size_t k = 0; k < names.size(); ++k) {
      panel.series.push_back({names[k], prof.grid, prof.curves.column(k), plot::Style::Line, {}});
    }
    write_text(options.out_dir / (stem + ".svg"), plot::render_panels({panel}, 1));
    log << fmt::format("wrote {}.csv/.svg\n", stem);
  }
}

std::vector<std::size_t> subsample_rows(std::size_t n, const ReportOptions& options,
                                        std::ostream& log) {
  if (options.sample == 0) throw ConfigError("--sample must be positive");
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  if (options.sample >= n) {
    if (options.sample > n) {
      log << fmt::format("warning: sample size {} exceeds the {} available instances; using all\n",
                         options.sample, n);
    }
    return rows;
  }
  Rng rng = Rng::substream(options.seed, "subsample");
  rng.shuffle(rows);
  rows.resize(options.sample);
  std::sort(rows.begin(), rows.end());
  return rows;
}

}  // namespace

std::pair<ExitCode, const char*> classify(const std::exception_ptr& error) {
  try {
    std::rethrow_exception(error);
  } catch (const ConfigError&) {
    return {kExitConfig, "configuration error"};
  } catch (const IoError&) {
    return {kExitIo, "i/o error"};
  } catch (const DataError&) {
    return {kExitData, "data error"};
  } catch (const NumericError&) {
    return {kExitNumeric, "numeric error"};
  } catch (const RankDeficientError&) {
    return {kExitNumeric, "numeric error"};
  } catch (const FactorizationError&) {
    return {kExitNumeric, "numeric error"};
  } catch (const std::domain_error&) {
    return {kExitNumeric, "numeric error"};
  } catch (const std::invalid_argument&) {
    return {kExitConfig, "configuration error"};
  } catch (...) {
    return {kExitOther, "error"};
  }
}

// ---- spec files ----------------------------------------------------------------

SpecFile SpecFile::parse(const std::map<std::string, std::string>& kv) {
  SpecFile spec;
  for (const auto& [key, value] : kv) {
    if (key == "hidden_dims") {
      spec.hidden_dims.clear();
      for (const auto& item : split_list(value)) {
        std::size_t pos = 0;
        long long dim = 0;
        try {
          dim = std::stoll(item, &pos);
        } catch (const std::exception&) {
          pos = 0;
        }
        if (pos != item.size() || dim <= 0) {
          throw ConfigError("hidden_dims: '" + item + "' is not a positive integer");
        }
        spec.hidden_dims.push_back(static_cast<std::size_t>(dim));
      }
    } else if (key == "activations") {
      spec.activations.clear();
      for (const auto& item : split_list(value)) spec.activations.push_back(parse_activation(item));
    } else if (key == "family") {
      spec.family = parse_family(value);
    } else if (key == "link") {
      spec.link = parse_link(value);
    } else {
      throw ConfigError("unknown model spec key '" + key + "'");
    }
  }
  if (spec.hidden_dims.empty()) throw ConfigError("hidden_dims must list at least one layer");
  return spec;
}

SpecFile SpecFile::load(const fs::path& path) {
  require_file(path, "model spec");
  try {
    return parse(load_key_values(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

ModelSpec SpecFile::to_spec(std::size_t q) const {
  ModelSpec spec = link ? ModelSpec::make(q, hidden_dims, family, *link)
                        : ModelSpec::make(q, hidden_dims, family);
  if (!activations.empty()) spec.activations = activations;
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("model spec: ") + e.what());
  }
  return spec;
}

// ---- synth -----------------------------------------------------------------------

void run_synth(const SynthOptions& options, std::ostream& log) {
  if (options.n_learn < 2 || options.n_test < 2) throw ConfigError("sample sizes must be at least 2");
  make_dir(options.out_dir);
  Rng rng = Rng::substream(options.seed, "datagen");
  const auto [learn, test] = synth_generate(options.n_learn, options.n_test, rng);

  write_file(options.out_dir / "learn.csv", [&](std::ostream& out) { write_csv(out, learn); });
  write_file(options.out_dir / "test.csv", [&](std::ostream& out) { write_csv(out, test); });
  write_file(options.out_dir / "schema.txt", [&](std::ostream& out) {
    for (const auto& name : learn.feature_names()) out << name << ": continuous\n";
    out << "y: response\n";
  });

  std::string manifest = fmt::format("seed = {}\nsubstream = datagen\n", options.seed);
  for (const auto* part : {&learn, &test}) {
    const std::string tag = part == &learn ? "learn" : "test";
    Vector mu(part->n());
    for (std::size_t r = 0; r < part->n(); ++r) mu[r] = true_mu(part->x.row(r));
    manifest += fmt::format("{0}.n = {1}\n{0}.mean_y = {2:.6f}\n{0}.sd_y = {3:.6f}\n", tag,
                            part->n(), mean(part->y), sample_sd(part->y));
    manifest += fmt::format("{}.corr_x2_x8 = {:.6f}\n", tag,
                            correlation(part->x.column(1), part->x.column(7)));
    manifest += fmt::format("{}.true_mse = {:.6f}\n", tag, mse_loss(part->y, mu));
  }
  write_text(options.out_dir / "manifest.txt", manifest);
  log << fmt::format("wrote {} learning and {} test instances to {}\n", learn.n(), test.n(),
                     options.out_dir.string());
}

// ---- fit ---------------------------------------------------------------------------

FitSummary run_fit(const FitOptions& options, std::ostream& log) {
  TrainConfig config;
  if (!options.train_config.empty()) {
    require_file(options.train_config, "training config");
    try {
      config = TrainConfig::load(options.train_config);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(options.train_config.string() + ": " + e.what());
    }
  }
  if (options.seed) config.seed = *options.seed;
  try {
    config.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const SpecFile spec_file = options.spec.empty() ? SpecFile{} : SpecFile::load(options.spec);
  const Family family = spec_file.family;

  std::optional<ControlDistribution> control;
  std::string control_name;
  if (options.control == "normal") {
    control = ControlDistribution::Normal;
    control_name = "RandN";
  } else if (options.control == "uniform") {
    control = ControlDistribution::Uniform;
    control_name = "RandU";
  } else if (options.control != "none") {
    throw ConfigError("--control must be none, normal or uniform");
  }
  if (options.truth == Truth::Synthetic && family != Family::Gaussian) {
    throw ConfigError("--truth synthetic requires the gaussian family");
  }

  require_file(options.schema, "schema");
  const Schema schema = Schema::load(options.schema);
  const Dataset raw_learn = load_data(options.learn, schema);
  std::optional<Dataset> raw_test;
  if (options.test.empty()) {
    log << "warning: no test file given; out-of-sample losses are reported as NA\n";
  } else {
    raw_test = load_data(options.test, schema);
  }
  make_dir(options.out_dir);

  auto true_means = [&](const Dataset& raw) {
    std::vector<std::size_t> cols;
    for (std::size_t j = 1; j <= kSynthDim; ++j) cols.push_back(raw.feature_index(fmt::format("x{}", j)));
    const Matrix xs = raw.x.select_cols(cols);
    Vector mu(raw.n());
    for (std::size_t r = 0; r < raw.n(); ++r) mu[r] = true_mu(xs.row(r));
    return mu;
  };

  // Learning-set encoding defines the layout applied to the test set.
  Dataset learn = standardize(encode_categoricals(raw_learn)).first;
  Rng control_rng = Rng::substream(config.seed, "control");
  if (control) {
    for (const auto& f : learn.features) {
      if (f.name == control_name) throw DataError("feature name '" + control_name + "' is reserved for the control column");
    }
    learn = add_control(learn, *control, control_rng, control_name);
  }
  if (!options.drop.empty()) {
    std::set<std::string> drop(options.drop.begin(), options.drop.end());
    std::set<std::string> used;
    std::vector<std::size_t> keep;
    for (std::size_t j = 0; j < learn.q(); ++j) {
      const FeatureInfo& f = learn.features[j];
      const bool by_name = drop.count(f.name) > 0;
      const bool by_group = !f.group.empty() && drop.count(f.group) > 0;
      if (by_name) used.insert(f.name);
      if (by_group) used.insert(f.group);
      if (!by_name && !by_group) keep.push_back(j);
    }
    for (const auto& name : drop)
      if (!used.count(name)) throw ConfigError("cannot drop unknown feature '" + name + "'");
    if (keep.empty()) throw ConfigError("every feature was dropped");
    learn = learn.select_features(keep);
    log << fmt::format("dropped {}; {} features remain\n", fmt::join(options.drop, ", "), keep.size());
  }
  std::optional<Dataset> test;
  if (raw_test) test = align_features(*raw_test, learn.features, control_rng);

  FitSummary summary;
  summary.features = learn.feature_names();

  if (options.truth == Truth::Synthetic) {
    LossRow row{"true", {}, {}};
    row.in_sample = deviance(family, raw_learn.y, true_means(raw_learn), raw_learn.v);
    if (raw_test) row.out_of_sample = deviance(family, raw_test->y, true_means(*raw_test), raw_test->v);
    summary.losses.push_back(row);
  }

  {
    const double level = fit_null(family, learn);
    LossRow row{"null", {}, {}};
    row.in_sample = deviance(family, learn.y, null_predict(family, level, learn.v), learn.v);
    if (test) row.out_of_sample = deviance(family, test->y, null_predict(family, level, test->v), test->v);
    summary.losses.push_back(row);
  }

  const ModelSpec spec = spec_file.to_spec(learn.q());
  {
    // One-hot groups lose their first level to keep the design full rank.
    std::set<std::string> seen;
    std::vector<std::size_t> cols;
    for (std::size_t j = 0; j < learn.q(); ++j) {
      const FeatureInfo& f = learn.features[j];
      if (f.kind == FeatureKind::OneHot && seen.insert(f.group).second) continue;
      cols.push_back(j);
    }
    const Dataset design = learn.select_features(cols);
    const std::vector<std::string> names = design.feature_names();
    LossRow row{"glm", {}, {}};
    try {
      const GlmFit glm = fit_glm(design.x, design.y, design.v, family, spec.link, {}, names);
      if (!glm.converged) log << "warning: GLM baseline did not converge\n";
      row.in_sample = deviance(family, design.y, glm.predict(design.x, design.v), design.v);
      if (test) {
        const Matrix tx = test->x.select_cols(cols);
        row.out_of_sample = deviance(family, test->y, glm.predict(tx, test->v), test->v);
      }
      write_file(options.out_dir / "glm.csv", [&](std::ostream& out) {
        out << "term,coefficient\n";
        out << fmt::format("intercept,{:.10g}\n", glm.intercept);
        for (std::size_t k = 0; k < names.size(); ++k) out << fmt::format("{},{:.10g}\n", names[k], glm.coef[k]);
      });
    } catch (const RankDeficientError& e) {
      log << "warning: GLM baseline skipped: " << e.what() << '\n';
    }
    summary.losses.push_back(row);
  }

  log << fmt::format("fitting LocalGLMnet q={} hidden=({}) on {} instances\n", spec.q,
                     fmt::join(spec.hidden_dims, ","), learn.n());
  const std::size_t every = std::max<std::size_t>(1, config.max_epochs / 10);
  const FitResult result = fit(learn, spec, config, [&](const EpochRecord& e) {
    if (e.epoch % every == 0 || e.epoch == 1) {
      log << fmt::format("epoch {:4d}  train {:.6f}  val {:.6f}  ({:.2f}s)\n", e.epoch,
                         e.train_loss, e.val_loss, e.seconds);
    }
  });
  if (result.clamp_warnings > 0) {
    log << fmt::format("warning: linear predictor clamped to +-{} in {} evaluations\n", kEtaClamp,
                       result.clamp_warnings);
  }
  {
    LossRow row{"localglmnet", {}, {}};
    row.in_sample = evaluate_loss(result.params, spec, learn);
    if (test) row.out_of_sample = evaluate_loss(result.params, spec, *test);
    summary.losses.push_back(row);
  }
  summary.best_epoch = result.history.best_epoch;
  summary.best_val_loss = result.history.best_val_loss;

  save_model(options.out_dir / "model.json", ModelFile{spec, result.params, learn.features});
  write_file(options.out_dir / "history.csv", [&](std::ostream& out) { result.history.write_csv(out); });
  write_file(options.out_dir / "loss_table.csv", [&](std::ostream& out) {
    out << "model,in_sample,out_of_sample\n";
    for (const auto& row : summary.losses) {
      out << row.model << ',' << fmt_loss(row.in_sample) << ',' << fmt_loss(row.out_of_sample) << '\n';
    }
  });
  write_file(options.out_dir / "summary.txt", [&](std::ostream& out) {
    out << fmt::format("seed = {}\nfamily = {}\nlink = {}\n", config.seed, to_string(spec.family),
                       to_string(spec.link));
    out << fmt::format("features = {}\n", fmt::join(summary.features, ","));
    out << fmt::format("n_learn = {}\nn_test = {}\n", learn.n(), test ? test->n() : 0);
    out << fmt::format("epochs = {}\nbest_epoch = {}\nbest_val_loss = {:.10f}\n",
                       result.history.epochs.size(), summary.best_epoch, summary.best_val_loss);
    out << fmt::format("clamp_warnings = {}\n", result.clamp_warnings);
  });

  log << "model           in-sample  out-of-sample\n";
  for (const auto& row : summary.losses) {
    log << fmt::format("{:<14} {:>10} {:>14}\n", row.model, fmt_loss(row.in_sample),
                       fmt_loss(row.out_of_sample));
  }
  return summary;
}

// ---- report ------------------------------------------------------------------------

SelectionReport run_report(const ReportOptions& options, std::ostream& log) {
  if (!(options.alpha > 0.0 && options.alpha < 0.5)) throw ConfigError("--alpha must lie in (0, 0.5)");
  if (!(options.margin >= 0.0)) throw ConfigError("--margin must be non-negative");
  const LoadedModel m = load_model_and_data(options);
  make_dir(options.out_dir);
  const Dataset& data = m.data;
  const std::vector<std::string> names = data.feature_names();
  const Matrix attn = attention(m.file.params, m.file.spec, data.x);

  std::size_t control = 0;
  if (options.control.empty()) {
    std::vector<std::size_t> found;
    for (std::size_t j = 0; j < data.q(); ++j)
      if (data.features[j].kind == FeatureKind::Control) found.push_back(j);
    if (found.size() != 1) {
      throw ConfigError("the model has no single control feature; name one with --control");
    }
    control = found.front();
  } else {
    control = focal_indices(data, {options.control}).front();
  }

  const SelectionReport selection = select_variables(attn, names, control, options.alpha, options.margin);
  write_file(options.out_dir / "selection.csv", [&](std::ostream& out) { selection.write_csv(out); });

  // std::vector<bool> has no contiguous storage to view as a span.
  const auto standardized = std::make_unique<bool[]>(data.q());
  for (std::size_t j = 0; j < data.q(); ++j) standardized[j] = data.features[j].standardized;
  const ImportanceReport importance =
      variable_importance(attn, names, std::span<const bool>(standardized.get(), data.q()));
  write_file(options.out_dir / "importance.csv", [&](std::ostream& out) { importance.write_csv(out); });
  {
    std::vector<plot::Bar> bars;
    for (std::size_t j : importance.order) bars.push_back({names[j], importance.importance[j]});
    write_text(options.out_dir / "importance.svg",
               plot::render_bars(bars, "variable importance", "mean |beta_j(x)|"));
  }
  for (const auto& name : importance.unstandardized) {
    log << "warning: feature '" << name << "' is not standardized; its importance is not comparable\n";
  }

  const std::vector<std::size_t> rows = subsample_rows(data.n(), options, log);
  const std::vector<std::size_t> scalars = scalar_features(data);
  const std::vector<plot::HLine> bands = {{selection.interval.lo, "#d62728", true},
                                          {selection.interval.hi, "#d62728", true},
                                          {0.0, "#444444", false}};
  {
    std::vector<plot::Panel> attn_panels, contrib_panels;
    std::string attn_csv = "feature,x,attention\n";
    std::string contrib_csv = "feature,x,contribution\n";
    for (std::size_t j : scalars) {
      plot::Series a{names[j], {}, {}, plot::Style::Points, {}};
      plot::Series c{names[j], {}, {}, plot::Style::Points, {}};
      for (std::size_t r : rows) {
        const double x = data.x(r, j);
        const double b = attn(r, j);
        a.x.push_back(x);
        a.y.push_back(b);
        c.x.push_back(x);
        c.y.push_back(b * x);
        attn_csv += fmt::format("{},{:.10g},{:.10g}\n", names[j], x, b);
        contrib_csv += fmt::format("{},{:.10g},{:.10g}\n", names[j], x, b * x);
      }
      attn_panels.push_back({names[j], names[j], "beta_j(x)", {std::move(a)}, bands, {}, false});
      contrib_panels.push_back({names[j], names[j], "beta_j(x) x_j", {std::move(c)},
                                {{0.0, "#444444", false}}, {}, false});
    }
    write_text(options.out_dir / "attentions.csv", attn_csv);
    write_text(options.out_dir / "contributions.csv", contrib_csv);
    write_text(options.out_dir / "attentions.svg",
               plot::render_panels(attn_panels, 4, fmt::format("attentions (alpha = {:g})", options.alpha)));
    write_text(options.out_dir / "contributions.svg", plot::render_panels(contrib_panels, 4, "contributions"));
  }

  // One-hot groups: attentions of the instances where each level is active.
  std::vector<std::string> groups;
  for (const auto& f : data.features)
    if (f.kind == FeatureKind::OneHot && std::find(groups.begin(), groups.end(), f.group) == groups.end())
      groups.push_back(f.group);
  for (const auto& group : groups) {
    std::vector<plot::BoxStats> boxes;
    for (std::size_t j = 0; j < data.q(); ++j) {
      if (data.features[j].kind != FeatureKind::OneHot || data.features[j].group != group) continue;
      Vector values;
      for (std::size_t r = 0; r < data.n(); ++r)
        if (data.x(r, j) != 0.0) values.push_back(attn(r, j));
      boxes.push_back(plot::box_stats(values, data.features[j].level));
    }
    const std::string stem = "boxplot_" + file_stem(group);
    write_file(options.out_dir / (stem + ".csv"), [&](std::ostream& out) {
      out << "level,count,lower_whisker,q1,median,q3,upper_whisker\n";
      for (const auto& b : boxes) {
        out << fmt::format("{},{},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g}\n", b.label, b.count,
                           b.lower_whisker, b.q1, b.median, b.q3, b.upper_whisker);
      }
    });
    write_text(options.out_dir / (stem + ".svg"),
               plot::render_boxes(boxes, "attentions of " + group, "beta_j(x)", bands));
  }

  write_interactions(m, options, log);

  log << fmt::format("selection interval [{:.4f}, {:.4f}] from control '{}' (sd {:.4f})\n",
                     selection.interval.lo, selection.interval.hi, names[control],
                     selection.features[control].sd);
  for (const auto& f : selection.features) {
    log << fmt::format("{:<20} coverage {:.4f}  {}{}\n", f.name, f.coverage, to_string(f.verdict),
                       f.is_control ? "  (control)" : "");
  }
  return selection;
}

void run_interactions(const ReportOptions& options, std::ostream& log) {
  const LoadedModel m = load_model_and_data(options);
  make_dir(options.out_dir);
  write_interactions(m, options, log);
}

}  // namespace lgn::cli

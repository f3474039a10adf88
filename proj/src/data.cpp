#include "lgn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

namespace lgn {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string unquote(std::string s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
  return s;
}

std::optional<double> parse_double(const std::string& s) {
  double value = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  if (begin != end && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || begin == end) return std::nullopt;
  return value;
}

}  // namespace

// ---- schema ----------------------------------------------------------------

const char* to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::Continuous: return "continuous";
    case ColumnKind::Binary: return "binary";
    case ColumnKind::Categorical: return "categorical";
    case ColumnKind::Response: return "response";
    case ColumnKind::Exposure: return "exposure";
    case ColumnKind::Ignore: return "ignore";
  }
  return "?";
}

ColumnKind parse_column_kind(const std::string& text) {
  static const std::map<std::string, ColumnKind> kinds = {
      {"continuous", ColumnKind::Continuous}, {"binary", ColumnKind::Binary},
      {"categorical", ColumnKind::Categorical}, {"response", ColumnKind::Response},
      {"exposure", ColumnKind::Exposure},     {"ignore", ColumnKind::Ignore}};
  auto it = kinds.find(text);
  if (it == kinds.end()) throw DataError("schema: unknown column kind '" + text + "'");
  return it->second;
}

const char* to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::Continuous: return "continuous";
    case FeatureKind::Binary: return "binary";
    case FeatureKind::Categorical: return "categorical";
    case FeatureKind::OneHot: return "onehot";
    case FeatureKind::Control: return "control";
  }
  return "?";
}

FeatureKind parse_feature_kind(const std::string& text) {
  static const std::map<std::string, FeatureKind> kinds = {
      {"continuous", FeatureKind::Continuous}, {"binary", FeatureKind::Binary},
      {"categorical", FeatureKind::Categorical}, {"onehot", FeatureKind::OneHot},
      {"control", FeatureKind::Control}};
  auto it = kinds.find(text);
  if (it == kinds.end()) throw DataError("unknown feature kind '" + text + "'");
  return it->second;
}

Schema Schema::parse(std::istream& in) {
  Schema schema;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto colon = line.rfind(':');
    if (colon == std::string::npos) {
      throw DataError(fmt::format("schema line {}: expected 'name: kind'", line_no));
    }
    SchemaColumn col;
    col.name = trim(std::string_view(line).substr(0, colon));
    std::string rest = trim(std::string_view(line).substr(colon + 1));
    const auto space = rest.find_first_of(" \t");
    const std::string kind = space == std::string::npos ? rest : rest.substr(0, space);
    col.kind = parse_column_kind(kind);
    if (space != std::string::npos) {
      if (col.kind != ColumnKind::Categorical) {
        throw DataError(fmt::format("schema line {}: only categorical columns take levels",
                                    line_no));
      }
      col.levels = split(trim(std::string_view(rest).substr(space)), ',');
    }
    if (col.name.empty()) throw DataError(fmt::format("schema line {}: empty name", line_no));
    schema.columns.push_back(std::move(col));
  }
  schema.validate();
  return schema;
}

Schema Schema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open schema file " + path.string());
  return parse(in);
}

void Schema::write(std::ostream& out) const {
  for (const auto& col : columns) {
    out << col.name << ": " << to_string(col.kind);
    if (!col.levels.empty()) {
      out << ' ';
      for (std::size_t i = 0; i < col.levels.size(); ++i) out << (i ? "," : "") << col.levels[i];
    }
    out << '\n';
  }
}

const SchemaColumn* Schema::find(const std::string& name) const {
  for (const auto& col : columns)
    if (col.name == name) return &col;
  return nullptr;
}

void Schema::validate() const {
  std::size_t responses = 0, exposures = 0;
  std::set<std::string> names;
  for (const auto& col : columns) {
    if (!names.insert(col.name).second) throw DataError("schema: duplicate column " + col.name);
    if (col.kind == ColumnKind::Response) ++responses;
    if (col.kind == ColumnKind::Exposure) ++exposures;
    std::set<std::string> levels(col.levels.begin(), col.levels.end());
    if (levels.size() != col.levels.size()) {
      throw DataError("schema: duplicate level in column " + col.name);
    }
    if (levels.count("")) throw DataError("schema: empty level in column " + col.name);
  }
  if (responses != 1) throw DataError("schema: exactly one response column is required");
  if (exposures > 1) throw DataError("schema: at most one exposure column is allowed");
}

// ---- dataset ---------------------------------------------------------------

std::size_t Dataset::feature_index(const std::string& name) const {
  for (std::size_t j = 0; j < features.size(); ++j)
    if (features[j].name == name) return j;
  throw DataError("no feature named '" + name + "'");
}

std::vector<std::string> Dataset::feature_names() const {
  std::vector<std::string> names;
  for (const auto& f : features) names.push_back(f.name);
  return names;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.features = features;
  out.x = x.select_rows(rows);
  out.y.reserve(rows.size());
  out.v.reserve(rows.size());
  for (std::size_t r : rows) {
    out.y.push_back(y[r]);
    out.v.push_back(v[r]);
  }
  return out;
}

Dataset Dataset::select_features(std::span<const std::size_t> columns) const {
  Dataset out;
  out.y = y;
  out.v = v;
  out.x = x.select_cols(columns);
  for (std::size_t c : columns) out.features.push_back(features.at(c));
  return out;
}

void Dataset::check_shape() const {
  if (v.size() != y.size() || x.rows() != y.size() || x.cols() != features.size()) {
    throw DataError(fmt::format("dataset shape mismatch: y={}, v={}, x={}x{}, features={}",
                                y.size(), v.size(), x.rows(), x.cols(), features.size()));
  }
}

// ---- CSV -------------------------------------------------------------------

CsvTable read_csv_table(std::istream& in) {
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw DataError("csv: missing header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  for (auto& h : split(line, ',')) table.header.push_back(unquote(h));
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split(line, ',');
    if (fields.size() != table.header.size()) {
      throw DataError(fmt::format("csv line {}: expected {} fields, found {}", line_no,
                                  table.header.size(), fields.size()));
    }
    for (auto& f : fields) f = unquote(std::move(f));
    table.rows.push_back(std::move(fields));
  }
  return table;
}

Dataset load_csv(const std::filesystem::path& path, const Schema& schema, bool transform_mode) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file " + path.string());
  try {
    return load_csv(in, schema, transform_mode);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

Dataset load_csv(std::istream& in, const Schema& schema, bool transform_mode) {
  schema.validate();
  const CsvTable table = read_csv_table(in);
  std::map<std::string, std::size_t> position;
  for (std::size_t c = 0; c < table.header.size(); ++c) position[table.header[c]] = c;

  struct Source {
    const SchemaColumn* column;
    std::size_t csv_index;
  };
  std::vector<Source> sources;
  std::optional<std::size_t> response_at, exposure_at;
  for (const auto& col : schema.columns) {
    auto it = position.find(col.name);
    if (it == position.end()) {
      if (col.kind == ColumnKind::Ignore) continue;
      throw DataError("csv: column '" + col.name + "' from the schema is missing");
    }
    switch (col.kind) {
      case ColumnKind::Response: response_at = it->second; break;
      case ColumnKind::Exposure: exposure_at = it->second; break;
      case ColumnKind::Ignore: break;
      default: sources.push_back({&col, it->second});
    }
  }
  for (const auto& h : table.header) {
    if (!schema.find(h)) {
      throw DataError("csv: column '" + h + "' is not in the schema (declare it 'ignore')");
    }
  }

  const std::size_t n = table.rows.size();
  Dataset data;
  data.y.resize(n);
  data.v.assign(n, 1.0);
  data.x = Matrix(n, sources.size());
  for (const auto& src : sources) {
    FeatureInfo info;
    info.name = src.column->name;
    switch (src.column->kind) {
      case ColumnKind::Binary: info.kind = FeatureKind::Binary; break;
      case ColumnKind::Categorical:
        info.kind = FeatureKind::Categorical;
        info.levels = src.column->levels;
        if (transform_mode && info.levels.empty()) {
          throw DataError("categorical column '" + info.name +
                          "' needs pinned levels in transform mode");
        }
        break;
      default: info.kind = FeatureKind::Continuous;
    }
    data.features.push_back(std::move(info));
  }

  auto number = [&](std::size_t row, std::size_t col) {
    const std::string& cell = table.rows[row][col];
    auto value = parse_double(cell);
    if (!value || !std::isfinite(*value)) {
      throw DataError(fmt::format("csv line {}, column '{}': cannot parse '{}' as a number",
                                  row + 2, table.header[col], cell));
    }
    return *value;
  };

  for (std::size_t r = 0; r < n; ++r) {
    data.y[r] = number(r, *response_at);
    if (exposure_at) {
      data.v[r] = number(r, *exposure_at);
      if (!(data.v[r] > 0.0)) {
        throw DataError(fmt::format("csv line {}: exposure must be positive", r + 2));
      }
    }
    for (std::size_t j = 0; j < sources.size(); ++j) {
      FeatureInfo& info = data.features[j];
      if (info.kind != FeatureKind::Categorical) {
        data.x(r, j) = number(r, sources[j].csv_index);
        if (info.kind == FeatureKind::Binary && data.x(r, j) != 0.0 && data.x(r, j) != 1.0) {
          throw DataError(fmt::format("csv line {}, column '{}': binary value must be 0 or 1",
                                      r + 2, info.name));
        }
        continue;
      }
      const std::string& cell = table.rows[r][sources[j].csv_index];
      if (cell.empty()) {
        throw DataError(fmt::format("csv line {}, column '{}': missing value", r + 2, info.name));
      }
      auto it = std::find(info.levels.begin(), info.levels.end(), cell);
      if (it == info.levels.end()) {
        if (transform_mode || !sources[j].column->levels.empty()) {
          throw DataError(fmt::format("csv line {}, column '{}': unknown level '{}'", r + 2,
                                      info.name, cell));
        }
        info.levels.push_back(cell);
        it = info.levels.end() - 1;
      }
      data.x(r, j) = static_cast<double>(it - info.levels.begin());
    }
  }
  return data;
}

void write_csv(std::ostream& out, const Dataset& data, const std::string& response_name) {
  data.check_shape();
  const bool with_exposure = std::any_of(data.v.begin(), data.v.end(),
                                         [](double v) { return v != 1.0; });
  for (const auto& f : data.features) out << f.name << ',';
  out << response_name;
  if (with_exposure) out << ",exposure";
  out << '\n';
  for (std::size_t r = 0; r < data.n(); ++r) {
    for (std::size_t j = 0; j < data.q(); ++j) out << fmt::format("{:.17g},", data.x(r, j));
    out << fmt::format("{:.17g}", data.y[r]);
    if (with_exposure) out << fmt::format(",{:.17g}", data.v[r]);
    out << '\n';
  }
}

// ---- standardization -------------------------------------------------------

namespace {
bool standardizable(FeatureKind kind) {
  return kind == FeatureKind::Continuous || kind == FeatureKind::Binary;
}
}  // namespace

std::pair<Dataset, StandardizeParams> standardize(const Dataset& data) {
  data.check_shape();
  StandardizeParams params;
  for (std::size_t j = 0; j < data.q(); ++j) {
    const FeatureInfo& f = data.features[j];
    if (!standardizable(f.kind)) continue;
    const Vector col = data.x.column(j);
    const double m = mean(col);
    const double sd = sample_sd(col);
    if (!(sd > 0.0)) {
      throw DataError("column '" + f.name + "' is constant; declare it 'ignore' in the schema");
    }
    params.names.push_back(f.name);
    params.means.push_back(m);
    params.sds.push_back(sd);
  }
  return {apply_standardize(params, data), params};
}

Dataset apply_standardize(const StandardizeParams& params, const Dataset& data) {
  Dataset out = data;
  for (std::size_t i = 0; i < params.names.size(); ++i) {
    const std::size_t j = out.feature_index(params.names[i]);
    const double m = params.means[i];
    const double sd = params.sds[i];
    for (std::size_t r = 0; r < out.n(); ++r) out.x(r, j) = (out.x(r, j) - m) / sd;
    out.features[j].standardized = true;
    out.features[j].mean = m;
    out.features[j].sd = sd;
  }
  return out;
}

Dataset unstandardize(const StandardizeParams& params, const Dataset& data) {
  Dataset out = data;
  for (std::size_t i = 0; i < params.names.size(); ++i) {
    const std::size_t j = out.feature_index(params.names[i]);
    for (std::size_t r = 0; r < out.n(); ++r)
      out.x(r, j) = out.x(r, j) * params.sds[i] + params.means[i];
    out.features[j].standardized = false;
    out.features[j].mean = 0.0;
    out.features[j].sd = 1.0;
  }
  return out;
}

StandardizeParams standardize_params_of(const Dataset& data) {
  StandardizeParams params;
  for (const auto& f : data.features) {
    if (!f.standardized || f.kind == FeatureKind::Control) continue;
    params.names.push_back(f.name);
    params.means.push_back(f.mean);
    params.sds.push_back(f.sd);
  }
  return params;
}

// ---- categorical -----------------------------------------------------------

Dataset one_hot(const Dataset& data, const std::string& column) {
  data.check_shape();
  const std::size_t src = data.feature_index(column);
  const FeatureInfo& info = data.features[src];
  if (info.kind != FeatureKind::Categorical) {
    throw DataError("one_hot: column '" + column + "' is not categorical");
  }
  const std::size_t levels = info.levels.size();
  if (levels == 0) throw DataError("one_hot: column '" + column + "' has no levels");

  Dataset out;
  out.y = data.y;
  out.v = data.v;
  for (std::size_t j = 0; j < data.q(); ++j) {
    if (j != src) {
      out.features.push_back(data.features[j]);
      continue;
    }
    for (const auto& level : info.levels) {
      FeatureInfo f;
      f.name = column + "=" + level;
      f.kind = FeatureKind::OneHot;
      f.group = column;
      f.level = level;
      out.features.push_back(std::move(f));
    }
  }
  out.x = Matrix(data.n(), out.features.size());
  for (std::size_t r = 0; r < data.n(); ++r) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < data.q(); ++j) {
      if (j != src) {
        out.x(r, c++) = data.x(r, j);
        continue;
      }
      const double code = data.x(r, j);
      if (code < 0 || code >= static_cast<double>(levels) || code != std::floor(code)) {
        throw DataError(fmt::format("one_hot: row {} has an unseen level code {}", r, code));
      }
      out.x(r, c + static_cast<std::size_t>(code)) = 1.0;
      c += levels;
    }
  }
  return out;
}

Dataset encode_categoricals(const Dataset& data) {
  Dataset out = data;
  for (;;) {
    auto it = std::find_if(out.features.begin(), out.features.end(),
                           [](const FeatureInfo& f) { return f.kind == FeatureKind::Categorical; });
    if (it == out.features.end()) return out;
    out = one_hot(out, it->name);
  }
}

std::vector<std::string> decode_one_hot(const Dataset& data, const std::string& group) {
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < data.q(); ++j)
    if (data.features[j].kind == FeatureKind::OneHot && data.features[j].group == group)
      cols.push_back(j);
  if (cols.empty()) throw DataError("no one-hot group named '" + group + "'");
  std::vector<std::string> out(data.n());
  for (std::size_t r = 0; r < data.n(); ++r) {
    for (std::size_t c : cols) {
      if (data.x(r, c) == 1.0) {
        out[r] = data.features[c].level;
        break;
      }
    }
    if (out[r].empty()) throw DataError(fmt::format("instance {} has no active level in {}", r + 1, group));
  }
  return out;
}

// ---- control features ------------------------------------------------------

Dataset add_control(const Dataset& data, ControlDistribution dist, Rng& rng,
                    const std::string& name) {
  Vector col(data.n());
  for (auto& value : col) value = dist == ControlDistribution::Normal ? rng.normal() : rng.uniform();
  const double m = mean(col);
  const double sd = sample_sd(col);
  for (auto& value : col) value = (value - m) / sd;

  Dataset out = data;
  out.x = data.x.with_column(col);
  FeatureInfo f;
  f.name = name;
  f.kind = FeatureKind::Control;
  f.level = dist == ControlDistribution::Normal ? "normal" : "uniform";
  f.standardized = true;
  out.features.push_back(std::move(f));
  return out;
}

// ---- applying a fitted layout ----------------------------------------------

Dataset align_features(const Dataset& raw, std::span<const FeatureInfo> layout, Rng& rng) {
  raw.check_shape();
  Dataset out;
  out.y = raw.y;
  out.v = raw.v;
  out.x = Matrix(raw.n(), layout.size());
  out.features.assign(layout.begin(), layout.end());
  for (std::size_t c = 0; c < layout.size(); ++c) {
    const FeatureInfo& f = layout[c];
    switch (f.kind) {
      case FeatureKind::Continuous:
      case FeatureKind::Binary: {
        const std::size_t src = raw.feature_index(f.name);
        const double m = f.standardized ? f.mean : 0.0;
        const double sd = f.standardized ? f.sd : 1.0;
        for (std::size_t r = 0; r < raw.n(); ++r) out.x(r, c) = (raw.x(r, src) - m) / sd;
        break;
      }
      case FeatureKind::Categorical: {
        const std::size_t src = raw.feature_index(f.name);
        const FeatureInfo& rf = raw.features[src];
        for (std::size_t r = 0; r < raw.n(); ++r) {
          const std::string& level = rf.levels.at(static_cast<std::size_t>(raw.x(r, src)));
          auto it = std::find(f.levels.begin(), f.levels.end(), level);
          if (it == f.levels.end()) {
            throw DataError(fmt::format("instance {}: unseen level '{}' in column '{}'", r + 1, level, f.name));
          }
          out.x(r, c) = static_cast<double>(it - f.levels.begin());
        }
        break;
      }
      case FeatureKind::OneHot: {
        const std::size_t src = raw.feature_index(f.group);
        const FeatureInfo& rf = raw.features[src];
        if (rf.kind == FeatureKind::Categorical) {
          for (std::size_t r = 0; r < raw.n(); ++r) {
            const std::string& level = rf.levels.at(static_cast<std::size_t>(raw.x(r, src)));
            out.x(r, c) = level == f.level ? 1.0 : 0.0;
          }
        } else {
          throw DataError("column '" + f.group + "' must be categorical for one-hot encoding");
        }
        break;
      }
      case FeatureKind::Control: {
        Vector col(raw.n());
        const bool uniform = f.level == "uniform";
        for (auto& value : col) value = uniform ? rng.uniform() : rng.normal();
        if (col.size() >= 2) {
          const double m = mean(col);
          const double sd = sample_sd(col);
          for (auto& value : col) value = (value - m) / sd;
        }
        out.x.set_column(c, col);
        break;
      }
    }
  }
  // Every one-hot group must have exactly one active level per row.
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t c = 0; c < layout.size(); ++c)
    if (layout[c].kind == FeatureKind::OneHot) groups[layout[c].group].push_back(c);
  for (const auto& [group, cols] : groups) {
    for (std::size_t r = 0; r < out.n(); ++r) {
      double s = 0.0;
      for (std::size_t c : cols) s += out.x(r, c);
      if (s != 1.0) {
        throw DataError(fmt::format("instance {}: level of '{}' is not among the fitted levels", r + 1, group));
      }
    }
  }
  return out;
}

// ---- synthetic experiment --------------------------------------------------

double true_mu(std::span<const double> x) {
  if (x.size() != kSynthDim) throw std::invalid_argument("true_mu: expects 8 features");
  return 0.5 * x[0] - 0.25 * x[1] * x[1] + 0.5 * std::abs(x[2]) * std::sin(2.0 * x[2]) +
         0.5 * x[3] * x[4] + 0.125 * x[4] * x[4] * x[5];
}

Matrix synth_covariance() {
  Matrix sigma = Matrix::identity(kSynthDim);
  sigma(1, 7) = 0.5;
  sigma(7, 1) = 0.5;
  return sigma;
}

namespace {
Dataset synth_one(std::size_t n, Rng& rng) {
  const Vector zero(kSynthDim, 0.0);
  Dataset data;
  data.x = sample_mvn(n, zero, synth_covariance(), rng);
  for (std::size_t j = 0; j < kSynthDim; ++j) {
    FeatureInfo f;
    f.name = "x" + std::to_string(j + 1);
    data.features.push_back(std::move(f));
  }
  data.y.resize(n);
  data.v.assign(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) data.y[i] = true_mu(data.x.row(i)) + rng.normal();
  return data;
}
}  // namespace

std::pair<Dataset, Dataset> synth_generate(std::size_t n_learn, std::size_t n_test, Rng& rng) {
  if (n_learn == 0 || n_test == 0) throw std::invalid_argument("synth_generate: n must be positive");
  Dataset learn = synth_one(n_learn, rng);
  Dataset test = synth_one(n_test, rng);
  return {std::move(learn), std::move(test)};
}

}  // namespace lgn

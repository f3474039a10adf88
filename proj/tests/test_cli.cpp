#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lgn/commands.hpp"
#include "lgn/data.hpp"
#include "lgn/plot.hpp"

#include <fmt/format.h>

namespace lgn::cli {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void spit(const fs::path& path, const std::string& text) { std::ofstream(path) << text; }

std::size_t count_lines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir = fs::temp_directory_path() / (std::string("lgn_cli_") + info->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  /// Small synthetic run with a short training schedule.
  FitSummary small_fit(const fs::path& out, Truth truth = Truth::Synthetic,
                       std::vector<std::string> drop = {}, std::string control = "normal") {
    if (!fs::exists(dir / "data" / "learn.csv")) {
      std::ostringstream log;
      run_synth({dir / "data", 600, 300, 3}, log);
      spit(dir / "train.conf", "batch_size = 100\nmax_epochs = 3\n");
      spit(dir / "spec.conf", "hidden_dims = 6,4\n");
    }
    FitOptions o;
    o.learn = dir / "data" / "learn.csv";
    o.test = dir / "data" / "test.csv";
    o.schema = dir / "data" / "schema.txt";
    o.spec = dir / "spec.conf";
    o.train_config = dir / "train.conf";
    o.out_dir = out;
    o.truth = truth;
    o.drop = std::move(drop);
    o.control = std::move(control);
    std::ostringstream log;
    return run_fit(o, log);
  }

  fs::path dir;
};

TEST(BoxStats, QuartilesAndWhiskers) {
  const Vector v{1, 2, 3, 4, 5, 6, 7, 8, 9, 100};
  const plot::BoxStats b = plot::box_stats(v, "L");
  EXPECT_EQ(b.count, 10u);
  EXPECT_DOUBLE_EQ(b.q1, 3.25);
  EXPECT_DOUBLE_EQ(b.median, 5.5);
  EXPECT_DOUBLE_EQ(b.q3, 7.75);
  EXPECT_DOUBLE_EQ(b.lower_whisker, 1.0);
  EXPECT_DOUBLE_EQ(b.upper_whisker, 9.0);
  EXPECT_EQ(plot::box_stats(Vector{}, "none").count, 0u);
}

TEST(PlotNum, FixedPrecisionWithoutNegativeZero) {
  EXPECT_EQ(plot::num(1.005), "1.00");
  EXPECT_EQ(plot::num(-0.001), "0.00");
  EXPECT_EQ(plot::num(-2.5), "-2.50");
}

TEST(PlotSvg, WellFormedAndDeterministic) {
  plot::Panel p;
  p.title = "t";
  p.series.push_back({"s", {0.0, 1.0, 2.0}, {1.0, -1.0, 0.5}, plot::Style::Points, ""});
  p.hlines.push_back({});
  const std::string a = plot::render_panels({p, p}, 2, "two <panels> & more");
  EXPECT_EQ(a, plot::render_panels({p, p}, 2, "two <panels> & more"));
  EXPECT_EQ(a.rfind("<svg", 0), 0u);
  EXPECT_NE(a.find("</svg>"), std::string::npos);
  EXPECT_NE(a.find("&lt;panels&gt; &amp;"), std::string::npos);
  EXPECT_EQ(a.find("<panels>"), std::string::npos);
  EXPECT_EQ(a.find("nan"), std::string::npos);
  const std::string bars = plot::render_bars({{"a", 1.0}, {"b", 0.0}}, "imp", "value");
  EXPECT_NE(bars.find("</svg>"), std::string::npos);
  const std::string boxes = plot::render_boxes({plot::box_stats(Vector{1, 2, 3}, "A")}, "b", "y");
  EXPECT_NE(boxes.find("</svg>"), std::string::npos);
}

TEST(Classify, ExitCodes) {
  auto code = [](auto error) { return classify(std::make_exception_ptr(error)).first; };
  EXPECT_EQ(code(ConfigError("x")), kExitConfig);
  EXPECT_EQ(code(std::invalid_argument("x")), kExitConfig);
  EXPECT_EQ(code(DataError("x")), kExitData);
  EXPECT_EQ(code(NumericError("x")), kExitNumeric);
  EXPECT_EQ(code(std::domain_error("x")), kExitNumeric);
  EXPECT_EQ(code(IoError("x")), kExitIo);
  EXPECT_EQ(code(std::runtime_error("x")), kExitOther);
}

TEST(SpecFileParse, KeysAndDefaults) {
  const SpecFile s = SpecFile::parse({{"hidden_dims", "5, 3"}, {"family", "poisson"}});
  EXPECT_EQ(s.hidden_dims, (std::vector<std::size_t>{5, 3}));
  const ModelSpec spec = s.to_spec(4);
  EXPECT_EQ(spec.q, 4u);
  EXPECT_EQ(spec.link, Link::Log);
  EXPECT_EQ(spec.activations.back(), Activation::Linear);
  EXPECT_THROW(SpecFile::parse({{"hidden", "5"}}), ConfigError);
  EXPECT_THROW(SpecFile::parse({{"hidden_dims", "5,x"}}), ConfigError);
  EXPECT_THROW(SpecFile::parse({{"hidden_dims", "0"}}), ConfigError);
  EXPECT_THROW(SpecFile::parse({{"hidden_dims", "4"}, {"activations", "tanh"}}).to_spec(3),
               ConfigError);
}

TEST_F(TempDir, SynthWritesReproducibleFiles) {
  std::ostringstream log;
  run_synth({dir / "a", 10, 10, 5}, log);
  run_synth({dir / "b", 10, 10, 5}, log);
  const std::string learn = slurp(dir / "a" / "learn.csv");
  EXPECT_EQ(learn, slurp(dir / "b" / "learn.csv"));
  EXPECT_EQ(slurp(dir / "a" / "manifest.txt"), slurp(dir / "b" / "manifest.txt"));
  EXPECT_EQ(count_lines(learn), 11u);
  const std::string header = learn.substr(0, learn.find('\n'));
  EXPECT_EQ(header, "x1,x2,x3,x4,x5,x6,x7,x8,y");
  const Schema schema = Schema::load(dir / "a" / "schema.txt");
  EXPECT_EQ(load_csv(dir / "a" / "test.csv", schema).q(), 8u);
  EXPECT_THROW(run_synth({dir / "c", 1, 10, 5}, log), ConfigError);
}

TEST_F(TempDir, FitWritesLossTableAndModel) {
  const FitSummary s = small_fit(dir / "fit");
  ASSERT_EQ(s.losses.size(), 4u);
  EXPECT_EQ(s.losses[0].model, "true");
  EXPECT_EQ(s.losses[3].model, "localglmnet");
  EXPECT_EQ(s.features.back(), "RandN");
  const std::string table = slurp(dir / "fit" / "loss_table.csv");
  EXPECT_EQ(table.rfind("model,in_sample,out_of_sample\n", 0), 0u);
  EXPECT_EQ(count_lines(table), 5u);
  EXPECT_EQ(table.find("NA"), std::string::npos);
  const ModelFile m = load_model(dir / "fit" / "model.json");
  EXPECT_EQ(m.spec.q, 9u);
  EXPECT_EQ(m.features.back().kind, FeatureKind::Control);
  EXPECT_TRUE(fs::exists(dir / "fit" / "history.csv"));
  EXPECT_TRUE(fs::exists(dir / "fit" / "glm.csv"));
  // Rerun is byte-identical.
  small_fit(dir / "fit2");
  EXPECT_EQ(table, slurp(dir / "fit2" / "loss_table.csv"));
  EXPECT_EQ(slurp(dir / "fit" / "model.json"), slurp(dir / "fit2" / "model.json"));
}

TEST_F(TempDir, FitWithoutTestReportsNa) {
  small_fit(dir / "warmup");
  FitOptions o;
  o.learn = dir / "data" / "learn.csv";
  o.schema = dir / "data" / "schema.txt";
  o.spec = dir / "spec.conf";
  o.train_config = dir / "train.conf";
  o.out_dir = dir / "fit";
  std::ostringstream log;
  const FitSummary s = run_fit(o, log);
  EXPECT_NE(log.str().find("warning: no test file"), std::string::npos);
  for (const auto& row : s.losses) {
    EXPECT_TRUE(row.in_sample.has_value());
    EXPECT_FALSE(row.out_of_sample.has_value());
  }
  EXPECT_NE(slurp(dir / "fit" / "loss_table.csv").find(",NA\n"), std::string::npos);
}

TEST_F(TempDir, FitConfigErrors) {
  small_fit(dir / "warmup");
  EXPECT_THROW(small_fit(dir / "x", Truth::Synthetic, {"x99"}), ConfigError);
  EXPECT_THROW(small_fit(dir / "x", Truth::Synthetic, {}, "cauchy"), ConfigError);
  FitOptions o;
  o.learn = dir / "missing.csv";
  o.schema = dir / "data" / "schema.txt";
  o.out_dir = dir / "x";
  std::ostringstream log;
  EXPECT_THROW(run_fit(o, log), IoError);
}

TEST_F(TempDir, DropRefitRemovesFeatures) {
  const FitSummary s = small_fit(dir / "drop", Truth::Synthetic, {"x7", "x8"}, "none");
  EXPECT_EQ(s.features, (std::vector<std::string>{"x1", "x2", "x3", "x4", "x5", "x6"}));
  EXPECT_EQ(load_model(dir / "drop" / "model.json").spec.q, 6u);
}

TEST_F(TempDir, ReportWritesSelectionAndFigures) {
  small_fit(dir / "fit");
  ReportOptions r;
  r.model = dir / "fit" / "model.json";
  r.data = dir / "data" / "test.csv";
  r.schema = dir / "data" / "schema.txt";
  r.out_dir = dir / "report";
  r.seed = 1;
  r.sample = 100000;
  r.interactions = {"x1"};
  std::ostringstream log;
  const SelectionReport sel = run_report(r, log);
  EXPECT_NE(log.str().find("warning: sample size"), std::string::npos);
  EXPECT_EQ(sel.features[sel.control].name, "RandN");
  EXPECT_TRUE(sel.features[sel.control].is_control);
  for (const char* f : {"selection.csv", "importance.csv", "importance.svg", "attentions.csv",
                        "attentions.svg", "contributions.csv", "contributions.svg",
                        "interactions_x1.csv", "interactions_x1.svg"}) {
    EXPECT_TRUE(fs::exists(dir / "report" / f)) << f;
  }
  EXPECT_EQ(count_lines(slurp(dir / "report" / "selection.csv")), 10u);
  // Every test row appears in the attention table for all nine features.
  EXPECT_EQ(count_lines(slurp(dir / "report" / "attentions.csv")), 1u + 9u * 300u);
  EXPECT_EQ(count_lines(slurp(dir / "report" / "interactions_x1.csv")), 201u);

  r.out_dir = dir / "report2";
  run_report(r, log);
  EXPECT_EQ(slurp(dir / "report" / "selection.csv"), slurp(dir / "report2" / "selection.csv"));
  EXPECT_EQ(slurp(dir / "report" / "attentions.csv"), slurp(dir / "report2" / "attentions.csv"));

  r.control = "nope";
  EXPECT_THROW(run_report(r, log), ConfigError);
  r.control.clear();
  r.alpha = 0.7;
  EXPECT_THROW(run_report(r, log), ConfigError);
}

TEST_F(TempDir, ReportNeedsControl) {
  small_fit(dir / "fit", Truth::Synthetic, {}, "none");
  ReportOptions r;
  r.model = dir / "fit" / "model.json";
  r.data = dir / "data" / "test.csv";
  r.schema = dir / "data" / "schema.txt";
  r.out_dir = dir / "report";
  std::ostringstream log;
  EXPECT_THROW(run_report(r, log), ConfigError);
  r.control = "x7";
  r.interactions = {"x2"};
  EXPECT_EQ(run_report(r, log).features[6].name, "x7");
}

TEST_F(TempDir, ZeroTowerIsAllDroppable) {
  small_fit(dir / "fit");
  ModelFile m = load_model(dir / "fit" / "model.json");
  m.params = zero_params(m.spec, 0.1);
  save_model(dir / "zero.json", m);
  ReportOptions r;
  r.model = dir / "zero.json";
  r.data = dir / "data" / "test.csv";
  r.schema = dir / "data" / "schema.txt";
  r.out_dir = dir / "report";
  r.interactions = {"x1"};
  std::ostringstream log;
  const SelectionReport sel = run_report(r, log);
  for (const auto& f : sel.features) EXPECT_EQ(f.verdict, Verdict::Droppable) << f.name;
}

TEST_F(TempDir, PoissonWithCategoricalGroup) {
  std::string csv = "area,dens,gas,n,expo\n";
  Rng rng(4);
  const char* levels[] = {"A", "B", "C", "D"};
  for (int i = 0; i < 800; ++i) {
    const std::size_t a = rng.below(4);
    const double dens = rng.normal();
    const int gas = static_cast<int>(rng.below(2));
    const double expo = 0.2 + 0.8 * rng.uniform();
    const double lambda = expo * std::exp(-2.0 + 0.3 * static_cast<double>(a) + 0.2 * dens);
    double u = rng.uniform(), p = std::exp(-lambda), cdf = p;
    int k = 0;
    while (u > cdf) p *= lambda / ++k, cdf += p;
    csv += fmt::format("{},{:.6f},{},{},{:.4f}\n", levels[a], dens, gas, k, expo);
  }
  spit(dir / "claims.csv", csv);
  spit(dir / "schema.txt",
       "area: categorical A,B,C,D\ndens: continuous\ngas: binary\nn: response\nexpo: exposure\n");
  spit(dir / "spec.conf", "hidden_dims = 5\nfamily = poisson\n");
  spit(dir / "train.conf", "batch_size = 200\nmax_epochs = 2\n");
  FitOptions o;
  o.learn = dir / "claims.csv";
  o.test = dir / "claims.csv";
  o.schema = dir / "schema.txt";
  o.spec = dir / "spec.conf";
  o.train_config = dir / "train.conf";
  o.out_dir = dir / "fit";
  std::ostringstream log;
  const FitSummary s = run_fit(o, log);
  ASSERT_EQ(s.losses.size(), 3u);  // no truth row
  EXPECT_EQ(s.losses[0].model, "null");
  EXPECT_LT(*s.losses[1].in_sample, *s.losses[0].in_sample);  // GLM beats null in-sample
  const std::string glm = slurp(dir / "fit" / "glm.csv");
  EXPECT_EQ(glm.find("area=A"), std::string::npos);  // reference level
  EXPECT_NE(glm.find("area=B"), std::string::npos);

  ReportOptions r;
  r.model = dir / "fit" / "model.json";
  r.data = dir / "claims.csv";
  r.schema = dir / "schema.txt";
  r.out_dir = dir / "report";
  r.interactions = {"dens"};
  run_report(r, log);
  const std::string box = slurp(dir / "report" / "boxplot_area.csv");
  EXPECT_EQ(box.rfind("level,count,lower_whisker,q1,median,q3,upper_whisker\n", 0), 0u);
  EXPECT_EQ(count_lines(box), 5u);

  o.out_dir = dir / "refit";
  o.drop = {"area"};
  o.control = "none";
  EXPECT_EQ(run_fit(o, log).features, (std::vector<std::string>{"dens", "gas"}));
}

}  // namespace
}  // namespace lgn::cli

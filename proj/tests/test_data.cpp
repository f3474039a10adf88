#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "lgn/data.hpp"

namespace lgn {
namespace {

FeatureInfo feature(const std::string& name, FeatureKind kind = FeatureKind::Continuous) {
  FeatureInfo f;
  f.name = name;
  f.kind = kind;
  return f;
}

Schema schema_of(const std::string& text) {
  std::istringstream in(text);
  return Schema::parse(in);
}

Dataset csv(const std::string& text, const Schema& schema, bool transform = false) {
  std::istringstream in(text);
  return load_csv(in, schema, transform);
}

TEST(Schema, ParsesKindsLevelsAndComments) {
  const Schema s = schema_of(
      "# policy data\n"
      "Density: continuous\n"
      "VehGas: binary\n"
      "Region: categorical R11, R21,R22\n"
      "ClaimNb: response  # counts\n"
      "Exposure: exposure\n"
      "IDpol: ignore\n");
  ASSERT_EQ(s.columns.size(), 6u);
  EXPECT_EQ(s.find("Region")->kind, ColumnKind::Categorical);
  EXPECT_EQ(s.find("Region")->levels, (std::vector<std::string>{"R11", "R21", "R22"}));
  EXPECT_EQ(s.find("IDpol")->kind, ColumnKind::Ignore);
  EXPECT_EQ(s.find("nope"), nullptr);
  std::ostringstream out;
  s.write(out);
  std::istringstream again(out.str());
  EXPECT_EQ(Schema::parse(again).columns.size(), 6u);
}

TEST(Schema, EnforcesInvariants) {
  EXPECT_THROW(schema_of("a: continuous\n"), DataError);
  EXPECT_THROW(schema_of("a: response\nb: response\n"), DataError);
  EXPECT_THROW(schema_of("a: response\nv: exposure\nw: exposure\n"), DataError);
  EXPECT_THROW(schema_of("a: response\nc: categorical A,A\n"), DataError);
  EXPECT_THROW(schema_of("a: response\nc: categorical A,,B\n"), DataError);
  EXPECT_THROW(schema_of("a: response\nb: fancy\n"), DataError);
  EXPECT_THROW(schema_of("a: response\nb continuous\n"), DataError);
  EXPECT_THROW(schema_of("a: response\nb: binary x,y\n"), DataError);
  EXPECT_THROW(schema_of("a: response\na: continuous\n"), DataError);
}

TEST(LoadCsv, SmallContinuousFile) {
  const Schema s = schema_of("x: continuous\ny: response\n");
  const Dataset d = csv("x,y\n1,2\n3,4\n5.5,6\n", s);
  EXPECT_EQ(d.n(), 3u);
  EXPECT_EQ(d.q(), 1u);
  EXPECT_EQ(d.x(2, 0), 5.5);
  EXPECT_EQ(d.y, (Vector{2.0, 4.0, 6.0}));
  EXPECT_EQ(d.v, (Vector{1.0, 1.0, 1.0}));
}

TEST(LoadCsv, CategoricalLevelsInFirstAppearanceOrder) {
  const Schema s = schema_of("c: categorical\ny: response\n");
  const Dataset d = csv("c,y\nB,1\nA,2\nB,3\n", s);
  EXPECT_EQ(d.features[0].levels, (std::vector<std::string>{"B", "A"}));
  const Dataset e = encode_categoricals(d);
  ASSERT_EQ(e.q(), 2u);
  EXPECT_EQ(e.features[0].name, "c=B");
  EXPECT_EQ(e.features[1].name, "c=A");
  EXPECT_EQ(e.x(1, 0), 0.0);
  EXPECT_EQ(e.x(1, 1), 1.0);
}

TEST(LoadCsv, PinnedLevelsAndTransformMode) {
  const Schema s = schema_of("c: categorical A,B\ny: response\n");
  const Dataset d = csv("c,y\nB,1\nA,2\n", s, true);
  EXPECT_EQ(d.features[0].levels, (std::vector<std::string>{"A", "B"}));
  EXPECT_EQ(d.x(0, 0), 1.0);
  try {
    csv("c,y\nB,1\nZ,2\n", s, true);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("'Z'"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
  }
  const Schema unpinned = schema_of("c: categorical\ny: response\n");
  EXPECT_THROW(csv("c,y\nB,1\n", unpinned, true), DataError);
}

TEST(LoadCsv, ReadsExposureAndIgnoresColumns) {
  const Schema s = schema_of("id: ignore\nx: continuous\nn: response\nv: exposure\n");
  const Dataset d = csv("id,x,n,v\n7,0.5,1,0.25\n8,1.5,0,1\n", s);
  EXPECT_EQ(d.q(), 1u);
  EXPECT_EQ(d.v, (Vector{0.25, 1.0}));
  EXPECT_THROW(csv("id,x,n,v\n7,0.5,1,0\n", s), DataError);
}

TEST(LoadCsv, AddressedErrors) {
  const Schema s = schema_of("x: continuous\ny: response\n");
  try {
    csv("x,y\n1,2\n1,abc\n", s);
    FAIL();
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'y'"), std::string::npos) << msg;
  }
  EXPECT_THROW(csv("x\n1\n", s), DataError);          // missing column
  EXPECT_THROW(csv("x,y,z\n1,2,3\n", s), DataError);  // undeclared column
  EXPECT_THROW(csv("x,y\n1\n", s), DataError);        // short row
  EXPECT_THROW(csv("x,y\n,2\n", s), DataError);       // missing value
  EXPECT_THROW(csv("", s), DataError);
  const Schema b = schema_of("x: binary\ny: response\n");
  EXPECT_THROW(csv("x,y\n2,1\n", b), DataError);
}

TEST(WriteCsv, RoundTripsExactly) {
  const Schema s = schema_of("a: continuous\nb: continuous\ny: response\n");
  const Dataset d = csv("a,b,y\n0.1,-3e-7,1.0000000000000002\n2,3,4\n", s);
  std::ostringstream out;
  write_csv(out, d);
  const Dataset back = csv(out.str(), s);
  EXPECT_EQ(back.x, d.x);
  EXPECT_EQ(back.y, d.y);
}

Dataset two_column(const Vector& a, const Vector& b) {
  Dataset d;
  d.x = Matrix(a.size(), 2);
  for (std::size_t i = 0; i < a.size(); ++i) {
    d.x(i, 0) = a[i];
    d.x(i, 1) = b[i];
  }
  d.y.assign(a.size(), 0.0);
  d.v.assign(a.size(), 1.0);
  d.features = {feature("a"), feature("b", FeatureKind::Binary)};
  return d;
}

TEST(Standardize, SimpleColumn) {
  const auto [z, params] = standardize(two_column({0.0, 2.0}, {0.0, 1.0}));
  EXPECT_NEAR(z.x(0, 0), -1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(z.x(1, 0), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_EQ(params.means[0], 1.0);
  EXPECT_TRUE(z.features[0].standardized);
  EXPECT_TRUE(z.features[1].standardized);
}

TEST(Standardize, MomentsOnLearningSet) {
  Rng rng(1);
  Vector a(1000), b(1000);
  for (std::size_t i = 0; i < 1000; ++i) {
    a[i] = 5.0 + 3.0 * rng.normal();
    b[i] = static_cast<double>(rng.below(2));
  }
  const auto [z, params] = standardize(two_column(a, b));
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_LT(std::abs(mean(z.x.column(j))), 1e-10);
    EXPECT_LT(std::abs(sample_sd(z.x.column(j)) - 1.0), 1e-10);
  }
  // Already standardized data is left unchanged.
  const auto [again, p2] = standardize(z);
  for (std::size_t k = 0; k < z.x.data().size(); ++k)
    EXPECT_NEAR(again.x.data()[k], z.x.data()[k], 1e-12);
  // Round trip.
  const Dataset raw = unstandardize(params, z);
  for (std::size_t i = 0; i < 1000; ++i) EXPECT_NEAR(raw.x(i, 0), a[i], 1e-10);
}

TEST(Standardize, ApplyUsesLearnedMoments) {
  const auto [z, params] = standardize(two_column({0.0, 2.0, 4.0}, {0.0, 1.0, 1.0}));
  const Dataset t = apply_standardize(params, two_column({2.0}, {1.0}));
  EXPECT_NEAR(t.x(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(t.x(0, 1), (1.0 - params.means[1]) / params.sds[1], 1e-15);
  EXPECT_THROW(apply_standardize(StandardizeParams{{"zzz"}, {0.0}, {1.0}}, t), DataError);
}

TEST(Standardize, ConstantColumnSuggestsIgnore) {
  try {
    standardize(two_column({3.0, 3.0, 3.0}, {0.0, 1.0, 0.0}));
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("ignore"), std::string::npos);
  }
}

TEST(OneHot, NoReferenceLevelDropped) {
  const Schema s = schema_of("c: categorical A,B\ny: response\n");
  const Dataset d = one_hot(csv("c,y\nA,1\nB,2\nA,3\n", s), "c");
  ASSERT_EQ(d.q(), 2u);
  EXPECT_EQ(d.x.row(0)[0], 1.0);
  EXPECT_EQ(d.x.row(0)[1], 0.0);
  for (std::size_t i = 0; i < d.n(); ++i) EXPECT_EQ(d.x(i, 0) + d.x(i, 1), 1.0);
  EXPECT_EQ(d.features[1].group, "c");
  EXPECT_EQ(d.features[1].level, "B");
  EXPECT_FALSE(d.features[1].standardized);
  EXPECT_EQ(decode_one_hot(d, "c"), (std::vector<std::string>{"A", "B", "A"}));
}

TEST(OneHot, StandardizeLeavesIndicatorsAlone) {
  const Schema s = schema_of("x: continuous\nc: categorical\ny: response\n");
  const Dataset d = encode_categoricals(csv("x,c,y\n1,P,0\n2,Q,0\n4,P,0\n", s));
  const Dataset z = standardize(d).first;
  EXPECT_EQ(z.x.column(1), d.x.column(1));
  EXPECT_EQ(z.x.column(2), d.x.column(2));
}

TEST(AddControl, NormalControlProperties) {
  Rng data_rng(2);
  Dataset d;
  const std::size_t n = 100000;
  d.x = Matrix(n, 2);
  for (auto& e : d.x.data()) e = data_rng.normal();
  d.y.assign(n, 0.0);
  d.v.assign(n, 1.0);
  d.features = {feature("a"), feature("b")};
  Rng rng(3);
  const Dataset c = add_control(d, ControlDistribution::Normal, rng, "RandN");
  ASSERT_EQ(c.q(), 3u);
  EXPECT_EQ(c.features[2].kind, FeatureKind::Control);
  const Vector col = c.x.column(2);
  EXPECT_LT(std::abs(mean(col)), 0.02);
  EXPECT_NEAR(sample_sd(col), 1.0, 1e-10);
  for (std::size_t j = 0; j < 2; ++j) EXPECT_LT(std::abs(correlation(col, c.x.column(j))), 0.02);
  Rng u_rng(4);
  const Vector u = add_control(d, ControlDistribution::Uniform, u_rng, "RandU").x.column(2);
  const auto [lo, hi] = std::minmax_element(u.begin(), u.end());
  // The empirical sd rescales the support by about 1 +- 0.003.
  EXPECT_NEAR(*lo, -std::sqrt(3.0), 0.03);
  EXPECT_NEAR(*hi, std::sqrt(3.0), 0.03);
}

TEST(AlignFeatures, RebuildsFittedLayout) {
  const Schema s = schema_of("x: continuous\nc: categorical\ny: response\n");
  const Dataset learn = csv("x,c,y\n1,P,0\n2,Q,1\n4,P,0\n", s);
  Rng rng(5);
  const Dataset fitted =
      add_control(standardize(encode_categoricals(learn)).first, ControlDistribution::Normal, rng,
                  "RandN");
  // Test data sees the levels in a different order.
  const Dataset test = csv("x,c,y\n2,Q,1\n3,P,0\n", s);
  Rng rng2(6);
  const Dataset aligned = align_features(test, fitted.features, rng2);
  EXPECT_EQ(aligned.feature_names(), fitted.feature_names());
  EXPECT_NEAR(aligned.x(0, 0), (2.0 - 7.0 / 3.0) / fitted.features[0].sd, 1e-15);
  EXPECT_EQ(aligned.x(0, 1), 0.0);  // c=P
  EXPECT_EQ(aligned.x(0, 2), 1.0);  // c=Q
  EXPECT_EQ(aligned.x(1, 1), 1.0);
  const Dataset unseen = csv("x,c,y\n2,R,1\n", s);
  Rng rng3(7);
  EXPECT_THROW(align_features(unseen, fitted.features, rng3), DataError);
}

TEST(AlignFeatures, SameStreamReproducesControl) {
  Dataset d;
  d.x = Matrix(50, 1);
  Rng data_rng(8);
  for (auto& e : d.x.data()) e = data_rng.normal();
  d.y.assign(50, 0.0);
  d.v.assign(50, 1.0);
  d.features = {feature("a")};
  Rng a = Rng::substream(1, "control");
  const Dataset fitted = add_control(d, ControlDistribution::Uniform, a, "RandU");
  Rng b = Rng::substream(1, "control");
  const Dataset aligned = align_features(d, fitted.features, b);
  EXPECT_EQ(aligned.x.column(1), fitted.x.column(1));
}

TEST(TrueMu, Values) {
  const double zero[8] = {};
  EXPECT_EQ(true_mu(zero), 0.0);
  const double e1[8] = {1, 0, 0, 0, 0, 0, 0, 0};
  EXPECT_DOUBLE_EQ(true_mu(e1), 0.5);
  const double e2[8] = {0, 2, 0, 0, 0, 0, 0, 0};
  EXPECT_DOUBLE_EQ(true_mu(e2), -1.0);
  const double mixed[8] = {0, 0, 0, 2, 3, 4, 0, 0};
  EXPECT_DOUBLE_EQ(true_mu(mixed), 0.5 * 6.0 + 9.0 * 4.0 / 8.0);
}

TEST(TrueMu, ThirdComponentIsEven) {
  // |x3| sin(2 x3) is odd in x3, so flipping x3 changes mu by twice that term.
  Rng rng(9);
  for (int k = 0; k < 100; ++k) {
    double x[8];
    for (double& e : x) e = rng.normal();
    const double a = true_mu(x);
    x[2] = -x[2];
    const double b = true_mu(x);
    EXPECT_NEAR(a - b, std::abs(x[2]) * std::sin(2.0 * -x[2]), 1e-14);
  }
}

TEST(SynthGenerate, MatchesDesign) {
  Rng rng(10);
  const auto [learn, test] = synth_generate(100000, 100000, rng);
  EXPECT_EQ(learn.q(), kSynthDim);
  EXPECT_EQ(learn.features[7].name, "x8");
  const double r = correlation(test.x.column(1), test.x.column(7));
  EXPECT_GE(r, 0.48);
  EXPECT_LE(r, 0.52);
  Vector resid(test.n());
  double mse = 0.0;
  for (std::size_t i = 0; i < test.n(); ++i) {
    resid[i] = test.y[i] - true_mu(test.x.row(i));
    mse += resid[i] * resid[i];
  }
  const double var = sample_sd(resid) * sample_sd(resid);
  EXPECT_GE(var, 0.98);
  EXPECT_LE(var, 1.02);
  mse /= static_cast<double>(test.n());
  EXPECT_NEAR(mse, 1.0, 0.02);
  EXPECT_NE(learn.x.row(0)[0], test.x.row(0)[0]);
}

TEST(SynthGenerate, DeterministicUnderSeed) {
  Rng a(11), b(11), c(12);
  const auto [la, ta] = synth_generate(100, 50, a);
  const auto [lb, tb] = synth_generate(100, 50, b);
  const auto [lc, tc] = synth_generate(100, 50, c);
  EXPECT_EQ(la.x, lb.x);
  EXPECT_EQ(ta.y, tb.y);
  EXPECT_NE(la.x, lc.x);
}

}  // namespace
}  // namespace lgn

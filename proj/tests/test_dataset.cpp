#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "cddm/dataset.hpp"
#include "oracles.hpp"

using namespace cddm;

namespace {

// 50-digit reference values of the 1-D target.
constexpr double kTf1AtHalf = 0.57357588823428846432;
constexpr double kTf1AtZero = 2.2507034943851822903e-8;
constexpr double kTf1AtQuarter = 0.32107984491237286736;
constexpr double kTf2At0307 = 0.34877057581856053915;
constexpr double kTf2At11 = -1.6367313769357178749;

Dataset small(std::vector<std::vector<double>> xs, std::vector<double> ys) {
  InputMatrix x(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(xs.front().size()));
  Vector y(static_cast<Eigen::Index>(ys.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t j = 0; j < xs[i].size(); ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = xs[i][j];
    y[static_cast<Eigen::Index>(i)] = ys[i];
  }
  return Dataset("small", std::move(x), std::move(y));
}

const char* kKeel =
    "@relation tiny\n"
    "@attribute A real [0.0, 10.0]\n"
    "@attribute B integer [1, 5]\n"
    "@attribute Out real [0.0, 100.0]\n"
    "@inputs A, B\n"
    "@outputs Out\n"
    "@data\n"
    "1.5, 2, 10.0\n"
    "3.0, 4, 20.5\n"
    "\n"
    "7.25,5,99\n";

}  // namespace

TEST(TargetFunctions, Tf1ReferenceValues) {
  EXPECT_NEAR(tf1(0.5), 0.573576, 1e-6);
  EXPECT_NEAR(tf1(0.5), kTf1AtHalf, 1e-15);
  EXPECT_NEAR(tf1(0.0), kTf1AtZero, 1e-20);
  EXPECT_NEAR(tf1(0.25), kTf1AtQuarter, 1e-15);
}

TEST(TargetFunctions, Tf2ReferenceValues) {
  EXPECT_EQ(tf2(0.0, 0.0), 0.0);
  EXPECT_NEAR(tf2(0.3, 0.7), kTf2At0307, 1e-14);
  EXPECT_NEAR(tf2(1.0, 1.0), kTf2At11, 1e-14);
}

TEST(GenerateTf1, SizesAndRegularTestGrid) {
  auto [tr, te] = generate_tf1(1000, 300, 11);
  EXPECT_EQ(tr.size(), 1000u);
  EXPECT_EQ(te.size(), 300u);
  EXPECT_EQ(tr.dim(), 1u);
  EXPECT_EQ(te.inputs()(0, 0), 0.0);
  EXPECT_EQ(te.inputs()(299, 0), 1.0);
  for (Eigen::Index l = 1; l < 300; ++l) {
    ASSERT_GT(te.inputs()(l, 0), te.inputs()(l - 1, 0));
    ASSERT_NEAR(te.inputs()(l, 0) - te.inputs()(l - 1, 0), 1.0 / 299.0, 1e-15);
  }
  for (std::size_t l = 0; l < tr.size(); ++l) {
    const double x = tr.x(l)[0];
    ASSERT_GE(x, 0.0);
    ASSERT_LE(x, 1.0);
    ASSERT_EQ(tr.targets()[static_cast<Eigen::Index>(l)], tf1(x));  // noise-free
  }
}

TEST(GenerateTf1, SeedDeterminism) {
  auto a = generate_tf1(50, 10, 3).first;
  auto b = generate_tf1(50, 10, 3).first;
  auto c = generate_tf1(50, 10, 4).first;
  EXPECT_EQ(a.inputs(), b.inputs());
  EXPECT_NE(a.inputs(), c.inputs());
}

TEST(GenerateTf2, CleanTargetsSpanUnitIntervalOverUnion) {
  auto [tr, te] = generate_tf2(5000, 500, 0.0, 17);
  EXPECT_EQ(tr.size(), 5000u);
  EXPECT_EQ(tr.dim(), 2u);
  const double lo = std::min(tr.targets().minCoeff(), te.targets().minCoeff());
  const double hi = std::max(tr.targets().maxCoeff(), te.targets().maxCoeff());
  EXPECT_EQ(lo, 0.0);
  EXPECT_EQ(hi, 1.0);
}

TEST(GenerateTf2, NoiseBoundedAndInputsUntouched) {
  auto [clean_tr, clean_te] = generate_tf2(2000, 2000, 0.0, 5);
  auto [tr, te] = generate_tf2(2000, 2000, 0.2, 5);
  EXPECT_EQ(clean_tr.inputs(), tr.inputs());
  EXPECT_EQ(clean_te.inputs(), te.inputs());
  const Vector d_tr = tr.targets() - clean_tr.targets();
  const Vector d_te = te.targets() - clean_te.targets();
  EXPECT_LE(d_tr.cwiseAbs().maxCoeff(), 0.2);
  EXPECT_LE(d_te.cwiseAbs().maxCoeff(), 0.2);
  // both sets carry noise
  EXPECT_GT(d_tr.cwiseAbs().maxCoeff(), 0.15);
  EXPECT_GT(d_te.cwiseAbs().maxCoeff(), 0.15);
  EXPECT_NEAR(d_tr.mean(), 0.0, 0.01);
}

TEST(Split, SizesRoundHalfUp) {
  auto ds = generate_tf1(1000, 2, 1).first;
  auto [a, b] = split(ds, 0.75, 9);
  EXPECT_EQ(a.size(), 750u);
  EXPECT_EQ(b.size(), 250u);
  auto ds950 = generate_tf1(950, 2, 1).first;
  auto [c, d] = split(ds950, 0.75, 9);
  EXPECT_EQ(c.size(), 713u);
  EXPECT_EQ(d.size(), 237u);
}

TEST(Split, DisjointPartitionAndDeterministic) {
  auto ds = generate_tf1(101, 2, 1).first;
  auto [a, b] = split(ds, 0.6, 4);
  auto [a2, b2] = split(ds, 0.6, 4);
  EXPECT_EQ(a.inputs(), a2.inputs());
  EXPECT_EQ(b.inputs(), b2.inputs());
  std::multiset<double> all, parts;
  for (std::size_t l = 0; l < ds.size(); ++l) all.insert(ds.x(l)[0]);
  for (std::size_t l = 0; l < a.size(); ++l) parts.insert(a.x(l)[0]);
  for (std::size_t l = 0; l < b.size(); ++l) parts.insert(b.x(l)[0]);
  EXPECT_EQ(all, parts);
  auto [a3, b3] = split(ds, 0.6, 5);
  EXPECT_NE(a.inputs(), a3.inputs());
}

TEST(Split, EmptySideIsAnError) {
  auto ds = generate_tf1(3, 2, 1).first;
  EXPECT_THROW(split(ds, 0.1, 1), ConfigError);
  EXPECT_THROW(split(ds, 0.9, 1), ConfigError);
  EXPECT_THROW(split(ds, 1.0, 1), ConfigError);
}

TEST(Normalizer, MidpointAndDegenerateDimension) {
  auto ds = small({{2.0, 7.0}, {4.0, 7.0}, {3.0, 7.0}}, {10.0, 20.0, 15.0});
  const auto norm = Normalizer::fit(ds);
  EXPECT_EQ(norm.input(0, 3.0), 0.5);
  const auto out = norm.apply(ds);
  for (std::size_t l = 0; l < 3; ++l) EXPECT_EQ(out.x(l)[1], 0.0);
  EXPECT_EQ(out.inputs()(0, 0), 0.0);
  EXPECT_EQ(out.inputs()(1, 0), 1.0);
  EXPECT_EQ(out.targets()[0], 0.0);
  EXPECT_EQ(out.targets()[1], 1.0);
  EXPECT_EQ(out.targets()[2], 0.5);
}

TEST(Normalizer, RoundTripProperty) {
  oracle::Gen gen(77);
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = gen.between(1, 6);
    const auto rows = gen.between(2, 40);
    std::vector<std::vector<double>> xs(rows, std::vector<double>(n));
    std::vector<double> ys(rows);
    for (auto& r : xs)
      for (auto& v : r) v = gen.uniform(-1e3, 1e3);
    for (auto& v : ys) v = gen.uniform(-50, 50);
    auto ds = small(xs, ys);
    const auto norm = Normalizer::fit(ds);
    const auto back = norm.invert(norm.apply(ds));
    for (Eigen::Index i = 0; i < ds.inputs().rows(); ++i) {
      for (Eigen::Index j = 0; j < ds.inputs().cols(); ++j) {
        ASSERT_NEAR(back.inputs()(i, j), ds.inputs()(i, j), 1e-12 * std::abs(ds.inputs()(i, j)) + 1e-12);
      }
      ASSERT_NEAR(back.targets()[i], ds.targets()[i], 1e-12 * std::abs(ds.targets()[i]) + 1e-12);
    }
    const auto scaled = norm.apply(ds);
    for (Eigen::Index j = 0; j < scaled.inputs().cols(); ++j) {
      ASSERT_EQ(scaled.inputs().col(j).minCoeff(), 0.0);
      ASSERT_EQ(scaled.inputs().col(j).maxCoeff(), 1.0);
    }
  }
}

TEST(Normalizer, TestValuesAreNotClipped) {
  auto train = small({{0.0}, {1.0}}, {0.0, 1.0});
  auto test = small({{2.0}, {-1.0}}, {3.0, -2.0});
  const auto out = Normalizer::fit(train).apply(test);
  EXPECT_EQ(out.inputs()(0, 0), 2.0);
  EXPECT_EQ(out.inputs()(1, 0), -1.0);
  EXPECT_EQ(out.targets()[0], 3.0);
}

TEST(Keel, ParsesHeaderAndRowsInOrder) {
  std::istringstream in(kKeel);
  const auto ds = parse_keel(in, "tiny.dat");
  EXPECT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.dim(), 2u);
  EXPECT_EQ(ds.inputs()(0, 0), 1.5);
  EXPECT_EQ(ds.inputs()(1, 1), 4.0);
  EXPECT_EQ(ds.inputs()(2, 0), 7.25);
  EXPECT_EQ(ds.targets()[1], 20.5);
  EXPECT_EQ(ds.targets()[2], 99.0);
}

TEST(Keel, NonNumericCellReportsRowAndColumn) {
  std::string text = kKeel;
  text.replace(text.find("3.0, 4"), 6, "3.0, x");
  std::istringstream in(text);
  try {
    parse_keel(in, "tiny.dat");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 9u);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("tiny.dat:9"), std::string::npos) << msg;
    EXPECT_NE(msg.find("column 2"), std::string::npos) << msg;
  }
}

TEST(Keel, MalformedHeaderNamesLine) {
  std::string text = kKeel;
  text.replace(text.find("@attribute B integer"), 20, "@attribute B");
  std::istringstream in(text);
  try {
    parse_keel(in, "tiny.dat");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Keel, EmptyDataSectionIsAnError) {
  std::string text(kKeel);
  text = text.substr(0, text.find("@data") + 6);
  std::istringstream in(text);
  EXPECT_THROW(parse_keel(in, "tiny.dat"), DataError);
}

TEST(Keel, WrongFieldCountIsAnError) {
  std::string text = kKeel;
  text += "1,2\n";
  std::istringstream in(text);
  EXPECT_THROW(parse_keel(in, "tiny.dat"), ParseError);
}

TEST(Keel, BundledConcreteFile) {
  const auto ds = load_keel(std::string(CDDM_SOURCE_DIR) + "/data/concrete.dat");
  EXPECT_EQ(ds.dim(), 8u);
  EXPECT_EQ(ds.size(), 1030u);
  EXPECT_TRUE(ds.inputs().allFinite());
}

TEST(Keel, MissingFileIsDataError) { EXPECT_THROW(load_keel("/nonexistent/file.dat"), DataError); }

TEST(Csv, RoundTripIsExact) {
  auto ds = generate_tf2(20, 2, 0.1, 8).first;
  std::stringstream ss;
  write_csv(ds, ss);
  const auto table = read_csv(ss, "mem");
  ASSERT_TRUE(table.y.has_value());
  EXPECT_EQ(table.x, ds.inputs());
  EXPECT_EQ(*table.y, ds.targets());
}

TEST(Csv, HeaderAndSeparators) {
  auto ds = small({{0.5, 0.25}}, {1.0});
  std::stringstream ss;
  write_csv(ds, ss);
  const std::string s = ss.str();
  EXPECT_EQ(s.substr(0, s.find('\n')), "x1,x2,y");
  EXPECT_EQ(s.find('\r'), std::string::npos);
  EXPECT_NE(s.find("0.5,0.25,1"), std::string::npos);
}

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <sstream>
#include <string>

#include "test_util.hpp"
#include "umtr/csv.hpp"
#include "umtr/dataset.hpp"
#include "umtr/metrics.hpp"

namespace umtr {
namespace {

using testing::TempDir;
using testing::write_file;

TEST(Csv, MissingCellsFromEmptyFields) {
  const auto ds = parse_csv("x,y\n1.5,2.25\n,3.25\n4.5,\n");
  ASSERT_EQ(ds.n_rows(), 3u);
  ASSERT_EQ(ds.n_features(), 2u);
  EXPECT_TRUE(ds.observed(0, 0));
  EXPECT_TRUE(ds.observed(0, 1));
  EXPECT_FALSE(ds.observed(1, 0));
  EXPECT_TRUE(ds.observed(1, 1));
  EXPECT_TRUE(ds.observed(2, 0));
  EXPECT_FALSE(ds.observed(2, 1));
  EXPECT_TRUE(std::isnan(ds.value(1, 0)));
  EXPECT_DOUBLE_EQ(ds.value(2, 0), 4.5);
}

TEST(Csv, NaTokensAreCaseInsensitive) {
  const auto ds = parse_csv("a,b\nNA,1.5\nnan,2.5\nNaN,3.25\n na ,4.5\n7.5,na\n");
  for (std::size_t i = 0; i < 4; ++i) EXPECT_FALSE(ds.observed(i, 0)) << i;
  EXPECT_FALSE(ds.observed(4, 1));
  EXPECT_EQ(ds.count_observed(), 5u);
}

TEST(Csv, IrisSchema) {
  const auto ds = load_csv(std::string(UMTR_DATA_DIR) + "/iris.csv");
  ASSERT_EQ(ds.n_rows(), 150u);
  ASSERT_EQ(ds.n_features(), 5u);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_TRUE(ds.feature(j).kind.is_continuous());
  EXPECT_EQ(ds.feature(4).name, "species");
  EXPECT_EQ(ds.feature(4).kind, FeatureKind::categorical(3));
  EXPECT_EQ(ds.feature(4).labels, (std::vector<std::string>{"setosa", "versicolor", "virginica"}));
  EXPECT_TRUE(ds.fully_observed());
}

TEST(Csv, InfersSmallIntegerColumnAsCategorical) {
  // {0,1,2} over 100 rows: integer valued, 3 <= 20 distinct -> Categorical(3).
  // A column with 21 distinct integers stays continuous.
  std::ostringstream text;
  text << "code,wide,real\n";
  for (int i = 0; i < 100; ++i) text << i % 3 << "," << i % 21 << "," << i * 0.5 << "\n";
  const auto ds = parse_csv(text.str());
  EXPECT_EQ(ds.feature(0).kind, FeatureKind::categorical(3));
  EXPECT_TRUE(ds.feature(1).kind.is_continuous());
  EXPECT_TRUE(ds.feature(2).kind.is_continuous());
  for (int i = 0; i < 100; ++i) EXPECT_EQ(ds.value(i, 0), i % 3);
}

TEST(Csv, NumericLabelsKeepNumericOrder) {
  const auto ds = parse_csv("c\n10\n9\n10\n100\n");
  EXPECT_EQ(ds.feature(0).labels, (std::vector<std::string>{"9", "10", "100"}));
  EXPECT_EQ(ds.value(0, 0), 1.0);
  EXPECT_EQ(ds.value(3, 0), 2.0);
}

TEST(Csv, MalformedRowReportsRowIndex) {
  try {
    parse_csv("a,b\n1,2\n3\n");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), 2u);
  }
}

TEST(Csv, NonNumericTokenInContinuousColumnReportsCell) {
  const Schema hint{{"a", FeatureKind::continuous(), {}}, {"b", FeatureKind::continuous(), {}}};
  try {
    parse_csv("a,b\n1,2\n3,oops\n", hint);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), 2u);
    EXPECT_EQ(e.column(), 1u);
  }
}

TEST(Csv, QuotedFieldsFollowRfc4180) {
  const auto ds = parse_csv("\"na,me\",v\n\"a \"\"b\"\"\",1\n\"c\nd\",2\n");
  EXPECT_EQ(ds.feature(0).name, "na,me");
  ASSERT_TRUE(ds.feature(0).kind.is_categorical());
  EXPECT_EQ(ds.feature(0).labels, (std::vector<std::string>{"a \"b\"", "c\nd"}));
  EXPECT_EQ(format_csv(ds), "\"na,me\",v\n\"a \"\"b\"\"\",1\n\"c\nd\",2\n");
}

TEST(Csv, CrlfLineEndings) {
  const auto ds = parse_csv("x,y\r\n1,2\r\n3,\r\n");
  EXPECT_EQ(ds.n_rows(), 2u);
  EXPECT_FALSE(ds.observed(1, 1));
}

TEST(Csv, SidecarSchemaOverridesInference) {
  TempDir dir;
  write_file(dir.file("d.csv"), "a,b\n0,1\n1,2\n0,1\n");
  write_file(dir.file("d.schema"), "# columns\na,continuous\nb,categorical,4\n");
  const auto inferred = load_csv(dir.file("d.csv"));
  EXPECT_TRUE(inferred.feature(0).kind.is_categorical());
  const auto ds = load_csv(dir.file("d.csv"), load_schema(dir.file("d.schema")));
  EXPECT_TRUE(ds.feature(0).kind.is_continuous());
  EXPECT_EQ(ds.feature(1).kind, FeatureKind::categorical(4));
  // codes inside [0, 4) are used as-is
  EXPECT_EQ(ds.value(1, 1), 2.0);
}

TEST(Csv, SchemaMismatchIsParseError) {
  EXPECT_THROW(parse_csv("a,b\n1,2\n", Schema{{"a", FeatureKind::continuous(), {}}}), ParseError);
  EXPECT_THROW(parse_csv("a,b\n1,2\n", Schema{{"a", FeatureKind::continuous(), {}},
                                              {"z", FeatureKind::continuous(), {}}}),
               ParseError);
  EXPECT_THROW(parse_schema("a,ordinal\n"), ParseError);
  EXPECT_THROW(parse_schema("a,categorical,1\n"), ParseError);
}

TEST(Csv, CategoricalHintTooSmallIsParseError) {
  const Schema hint{{"c", FeatureKind::categorical(2), {}}};
  EXPECT_THROW(parse_csv("c\nx\ny\nz\n", hint), ParseError);
}

TEST(Csv, SchemaFormatRoundTrips) {
  const Schema s{{"x", FeatureKind::continuous(), {}}, {"kind", FeatureKind::categorical(3), {}}};
  const Schema back = parse_schema(format_schema(s));
  EXPECT_TRUE(schemas_compatible(s, back));
}

TEST(Csv, SaveLoadRoundTripIsCellExact) {
  // Random mixed-type tables with holes: save(load(f)) reproduces f.
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> real(-1e6, 1e6);
  for (int trial = 0; trial < 20; ++trial) {
    std::ostringstream text;
    text << "r,c,s\n";
    const int n = 5 + trial;
    for (int i = 0; i < n; ++i) {
      const bool hole = gen() % 5 == 0;
      if (!hole) text << csv_detail::format_number(real(gen) / 3.0);
      text << "," << (i % 2 ? "" : std::to_string(gen() % 4)) << ","
           << (i % 3 == 0 ? "alpha" : "beta") << "\n";
    }
    const std::string original = text.str();
    const auto ds = parse_csv(original);
    EXPECT_EQ(format_csv(ds), original) << original;
    EXPECT_EQ(parse_csv(format_csv(ds)), ds);
  }
}

TEST(Csv, SingleColumnMissingSurvivesRoundTrip) {
  const auto ds = parse_csv("v\n1.5\n\"\"\n2.5\n");
  ASSERT_EQ(ds.n_rows(), 3u);
  EXPECT_FALSE(ds.observed(1, 0));
  EXPECT_EQ(parse_csv(format_csv(ds)), ds);
}

TEST(Dataset, RejectsNonFiniteObservedCells) {
  const Schema s{{"x", FeatureKind::continuous(), {}}};
  EXPECT_THROW(TabularDataset(s, 1, {INFINITY}, {1}), ArgumentError);
  EXPECT_NO_THROW(TabularDataset(s, 1, {INFINITY}, {0}));
}

TEST(Dataset, RejectsInvalidCategoricalCodes) {
  const Schema s{{"c", FeatureKind::categorical(3), {}}};
  EXPECT_THROW(TabularDataset(s, 1, {3.0}, {1}), ArgumentError);
  EXPECT_THROW(TabularDataset(s, 1, {0.5}, {1}), ArgumentError);
  EXPECT_THROW(FeatureKind::categorical(1), ArgumentError);
}

TEST(TwoMoons, ZeroNoiseLiesOnArcs) {
  const auto ds = two_moons(200, 0.0, 3);
  ASSERT_EQ(ds.n_rows(), 200u);
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    EXPECT_LT(moons_manifold_distance(ds.value(i, 0), ds.value(i, 1)), 1e-9) << i;
    // also against the parametric form directly
    const double x = ds.value(i, 0), y = ds.value(i, 1);
    const double upper = std::abs(std::hypot(x, y) - 1.0);
    const double lower = std::abs(std::hypot(x - 1.0, y - 0.5) - 1.0);
    EXPECT_LT(std::min(upper, lower), 1e-9);
  }
}

TEST(TwoMoons, ShapeAndDeterminism) {
  const auto a = two_moons(200, 0.1, 7);
  const auto b = two_moons(200, 0.1, 7);
  const auto c = two_moons(200, 0.1, 8);
  EXPECT_EQ(a.n_rows(), 200u);
  EXPECT_EQ(a.n_features(), 2u);
  EXPECT_TRUE(a.fully_observed());
  EXPECT_EQ(a, b);
  EXPECT_FALSE(a == c);
  EXPECT_THROW(two_moons(1, 0.1, 0), ArgumentError);
}

TEST(Mcar, ProtectedColumnStaysObserved) {
  const auto iris = load_csv(std::string(UMTR_DATA_DIR) + "/iris.csv");
  const auto masked = apply_mcar(iris, 0.5, 0.5, {4}, 1);
  for (std::size_t i = 0; i < iris.n_rows(); ++i) EXPECT_TRUE(masked.observed(i, 4));
  EXPECT_LT(masked.count_observed(), iris.count_observed());
  EXPECT_TRUE(iris.fully_observed());  // input untouched
}

TEST(Mcar, ZeroRowProbabilityIsIdentity) {
  const auto ds = two_moons(50, 0.1, 1);
  EXPECT_EQ(apply_mcar(ds, 0.0, 1.0, {}, 5), ds);
}

TEST(Mcar, CertainMaskingHidesEverything) {
  const auto ds = two_moons(50, 0.1, 1);
  EXPECT_EQ(apply_mcar(ds, 1.0, 1.0, {}, 5).count_observed(), 0u);
}

TEST(Mcar, ProtectedIndexOutOfRange) {
  const auto ds = two_moons(10, 0.1, 1);
  EXPECT_THROW(apply_mcar(ds, 0.5, 0.5, {2}, 0), IndexError);
  EXPECT_THROW(apply_mcar(ds, 1.5, 0.5, {}, 0), ArgumentError);
}

TEST(Mcar, NeverUnmasksAndHitsExpectedFraction) {
  // 5,000 rows x 2 columns = 10,000 cells, a third already missing.
  const std::size_t n = 5000;
  std::vector<double> values(2 * n);
  std::vector<std::uint8_t> observed(2 * n);
  for (std::size_t c = 0; c < 2 * n; ++c) {
    values[c] = static_cast<double>(c);
    observed[c] = c % 3 != 0;
  }
  const Schema s{{"a", FeatureKind::continuous(), {}}, {"b", FeatureKind::continuous(), {}}};
  const TabularDataset ds(s, n, values, observed);
  const double row_prob = 0.4, cell_prob = 0.3;
  const auto masked = apply_mcar(ds, row_prob, cell_prob, {}, 99);
  std::size_t newly_masked = 0, candidates = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      if (!ds.observed(i, j)) {
        EXPECT_FALSE(masked.observed(i, j));
        continue;
      }
      ++candidates;
      newly_masked += !masked.observed(i, j);
    }
  }
  const double p = row_prob * cell_prob;
  const double frac = static_cast<double>(newly_masked) / static_cast<double>(candidates);
  // Cells of one row share the row draw, so the standard error is computed
  // per row (two cells) and is slightly larger than the binomial one.
  const double se = std::sqrt(p * (1 - p) / static_cast<double>(candidates)) * std::sqrt(2.0);
  EXPECT_NEAR(frac, p, 3 * se);
}

TEST(Dataset, ConcatAndColumnMask) {
  const auto a = two_moons(10, 0.1, 1);
  const auto b = a.concat(a.with_column_masked(1));
  EXPECT_EQ(b.n_rows(), 20u);
  EXPECT_EQ(b.count_observed(), 30u);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(b.value(i + 10, 0), a.value(i, 0));
    EXPECT_FALSE(b.observed(i + 10, 1));
  }
}

}  // namespace
}  // namespace umtr

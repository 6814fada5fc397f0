#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "randcon/rng.hpp"
#include "randcon/timeseries.hpp"

using namespace randcon;

namespace {

RoiTimeSeries random_series(std::size_t n, std::size_t t, std::uint64_t seed) {
  auto rng = make_rng(seed, Stream::noise);
  Matrix m(n, t);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = 10.0 * standard_normal(rng) + 3.0;
  return RoiTimeSeries(std::move(m));
}

double row_mean(const RoiTimeSeries& ts, std::size_t r) {
  double s = 0.0;
  for (double v : ts.roi(r)) s += v;
  return s / static_cast<double>(ts.n_timepoints());
}

double row_pop_sd(const RoiTimeSeries& ts, std::size_t r) {
  const double mu = row_mean(ts, r);
  double s = 0.0;
  for (double v : ts.roi(r)) s += (v - mu) * (v - mu);
  return std::sqrt(s / static_cast<double>(ts.n_timepoints()));
}

}  // namespace

TEST(RoiTimeSeries, RejectsTooSmallShapes) {
  EXPECT_THROW(RoiTimeSeries(Matrix(1, 5)), DimensionError);
  EXPECT_THROW(RoiTimeSeries(Matrix(3, 1)), DimensionError);
}

TEST(RoiTimeSeries, RejectsNonFiniteAndDuplicateLabels) {
  Matrix m(2, 3);
  m(1, 2) = std::nan("");
  EXPECT_THROW(RoiTimeSeries{m}, ValidationError);
  EXPECT_THROW(RoiTimeSeries(Matrix(2, 3), {"a", "a"}), ValidationError);
  EXPECT_THROW(RoiTimeSeries(Matrix(2, 3), {"a"}), ValidationError);
}

TEST(LoadCsv, RowsAreRois) {
  const auto ts = parse_csv("1,2,3,4,5\n6,7,8,9,10\n11,12,13,14,15\n", CsvLayout::rows_are_rois);
  EXPECT_EQ(ts.n_rois(), 3u);
  EXPECT_EQ(ts.n_timepoints(), 5u);
  EXPECT_EQ(ts.roi_labels()[2], "roi_2");
  EXPECT_EQ(ts.values()(1, 3), 9.0);
}

TEST(LoadCsv, RowsAreTimeTransposes) {
  const auto ts = parse_csv("1,2,3,4,5\n6,7,8,9,10\n11,12,13,14,15\n", CsvLayout::rows_are_time);
  EXPECT_EQ(ts.n_rois(), 5u);
  EXPECT_EQ(ts.n_timepoints(), 3u);
  EXPECT_EQ(ts.values()(3, 1), 9.0);
}

TEST(LoadCsv, NonNumericCellNamesRowAndColumn) {
  try {
    parse_csv("1,2,3,4,5\n6,7,8,x,10\n11,12,13,14,15\n", CsvLayout::rows_are_rois);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2 column 4"), std::string::npos) << e.what();
  }
}

TEST(LoadCsv, RaggedRowNamesRow) {
  try {
    parse_csv("1,2,3\n4,5\n", CsvLayout::rows_are_rois);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
  }
}

TEST(LoadCsv, HeaderAndLabelColumn) {
  const auto ts = parse_csv("roi,t0,t1,t2\nleft,1,2,3\nright,4,5,6\n", CsvLayout::rows_are_rois);
  EXPECT_EQ(ts.roi_labels(), (std::vector<std::string>{"left", "right"}));
  EXPECT_EQ(ts.n_timepoints(), 3u);

  const auto tt = parse_csv("a,b\n1,2\n3,4\n5,6\n", CsvLayout::rows_are_time);
  EXPECT_EQ(tt.roi_labels(), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(tt.n_timepoints(), 3u);
}

TEST(LoadCsv, TooFewRoisIsDimensionError) {
  EXPECT_THROW(parse_csv("1,2,3\n", CsvLayout::rows_are_rois), DimensionError);
  EXPECT_THROW(load_csv("/nonexistent/file.csv"), ValidationError);
}

TEST(LoadCsv, CanonicalWriterRoundTripsExactly) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto ts = random_series(2 + seed % 5, 2 + (seed * 7) % 30, seed);
    EXPECT_EQ(parse_csv(to_csv(ts), CsvLayout::rows_are_rois), ts);
  }
  const auto dir = std::filesystem::temp_directory_path() / "randcon_ts_test";
  std::filesystem::create_directories(dir);
  const auto ts = random_series(4, 9, 99);
  save_csv(dir / "x.csv", ts);
  EXPECT_EQ(load_csv(dir / "x.csv"), ts);
}

TEST(ZScore, UnitRow) {
  const auto out = zscore_rows(RoiTimeSeries(Matrix(2, 3, std::vector<double>{1, 2, 3, 4, 4, 5})));
  EXPECT_NEAR(row_mean(out.series, 0), 0.0, 1e-12 * 3);
  EXPECT_NEAR(row_pop_sd(out.series, 0), 1.0, 1e-12);
  EXPECT_TRUE(out.constant_rows.empty());
}

TEST(ZScore, ConstantRowBecomesZerosWithWarning) {
  const auto out = zscore_rows(RoiTimeSeries(Matrix(2, 4, std::vector<double>{5, 5, 5, 5, 1, 2, 3, 4})));
  for (double v : out.series.roi(0)) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(out.constant_rows, std::vector<std::size_t>{0});
}

TEST(ZScore, IdempotentOnRandomRows) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto once = zscore_rows(random_series(5, 50, seed)).series;
    const auto twice = zscore_rows(once).series;
    for (std::size_t i = 0; i < once.values().size(); ++i)
      EXPECT_NEAR(once.values().data()[i], twice.values().data()[i], 1e-12);
    for (std::size_t r = 0; r < once.n_rois(); ++r) {
      EXPECT_LT(std::abs(row_mean(once, r)), 1e-12);
      EXPECT_NEAR(row_pop_sd(once, r), 1.0, 1e-12);
    }
  }
}

TEST(SubjectGroup, RejectsAnyPerturbedShape) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto rng = make_rng(seed, Stream::patterns);
    const auto n = static_cast<std::size_t>(uniform_int(rng, 2, 6));
    const auto t = static_cast<std::size_t>(uniform_int(rng, 3, 20));
    const auto count = static_cast<std::size_t>(uniform_int(rng, 2, 6));
    const auto odd = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(count) - 1));
    std::vector<RoiTimeSeries> subjects;
    for (std::size_t i = 0; i < count; ++i) {
      const bool perturb_rois = uniform_int(rng, 0, 1) == 0;
      const std::size_t ni = i == odd && perturb_rois ? n + 1 : n;
      const std::size_t ti = i == odd && !perturb_rois ? t + 1 : t;
      subjects.push_back(random_series(ni, ti, seed * 100 + i));
    }
    EXPECT_THROW(SubjectGroup(subjects, "g"), DimensionError);
  }
  EXPECT_THROW(SubjectGroup({}, "empty"), ValidationError);
}

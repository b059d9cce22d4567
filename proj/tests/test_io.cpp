#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include "mfmpc/costs.hpp"
#include "mfmpc/io.hpp"

using namespace mfmpc;

TEST(FormatDouble, SeventeenDigitsAndRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(format_double(1.0), "1");
  EXPECT_EQ(format_double(-2.5), "-2.5");
  EXPECT_EQ(format_double(std::nan("")), "nan");
  EXPECT_EQ(format_double(std::numeric_limits<double>::infinity()), "inf");
  EXPECT_EQ(format_double(-std::numeric_limits<double>::infinity()), "-inf");

  std::mt19937_64 rng(12);
  for (int k = 0; k < 20000; ++k) {
    const auto bits = rng();
    const double x = std::bit_cast<double>(bits);
    if (!std::isfinite(x))
      continue;
    EXPECT_EQ(std::bit_cast<std::uint64_t>(parse_double(format_double(x))), bits);
  }
}

TEST(ParseDouble, AcceptsAndRejects) {
  EXPECT_EQ(parse_double("  1.5 "), 1.5);
  EXPECT_EQ(parse_double("+3"), 3.0);
  EXPECT_EQ(parse_double("1e-3\r"), 1e-3);
  EXPECT_TRUE(std::isnan(parse_double("nan")));
  EXPECT_EQ(parse_double("-inf"), -std::numeric_limits<double>::infinity());
  EXPECT_THROW(parse_double(""), InvalidInput);
  EXPECT_THROW(parse_double("1,5"), InvalidInput);
  EXPECT_THROW(parse_double("abc"), InvalidInput);
}

TEST(MeasureIo, CsvRoundTripIsExact) {
  const auto f = sample_uniform(257, Interval{}, 3);
  std::stringstream buf;
  write_measure_csv(buf, f);
  EXPECT_EQ(buf.str().substr(0, 2), "x\n");
  const auto g = read_measure_csv(buf, Interval{});
  EXPECT_EQ(f, g);
}

TEST(MeasureIo, JsonRoundTripIsExact) {
  const auto f = sample_uniform(100, Interval{-2.0, 0.5}, 4);
  const auto doc = measure_to_json(f);
  const auto g = measure_from_json(nlohmann::json::parse(doc.dump()), Interval{-2.0, 0.5});
  EXPECT_EQ(f, g);
}

TEST(MeasureIo, RejectsMalformedInput) {
  std::stringstream no_header("0.5\n");
  EXPECT_THROW(read_measure_csv(no_header), InvalidInput);
  std::stringstream bad_value("x\n0.5\nfoo\n");
  EXPECT_THROW(read_measure_csv(bad_value), InvalidInput);
  std::stringstream empty("x\n");
  EXPECT_THROW(read_measure_csv(empty), InvalidInput);
  EXPECT_THROW(measure_from_json(nlohmann::json::parse(R"({"x": 1})")), InvalidInput);
}

TEST(TrajectoryCsv, SchemaAndRowCount) {
  ModelConfig model;
  model.kernel_gain = 0.1;
  const QuadraticMeanCost cost(1.0);
  const auto traj = simulate<MomentSummary>(MomentSummary{0.2, 0.3, 0.26}, ControlSequence{{0.1, -0.1, 0.0}}, 3,
                                            model, cost);
  std::stringstream out;
  write_trajectory_csv(out, traj);
  std::string line;
  std::getline(out, line);
  EXPECT_EQ(line, "n,mean,second_moment,variance,u,step_cost");
  int rows = 0;
  std::string last;
  while (std::getline(out, line)) {
    ++rows;
    last = line;
  }
  EXPECT_EQ(rows, 4);
  EXPECT_EQ(last.substr(last.size() - 2), ",,");
}

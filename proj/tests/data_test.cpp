#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "lcnn/data.hpp"

namespace lcnn {
namespace {

std::string write_temp(const std::string& name, const std::string& body) {
  const auto path = (std::filesystem::temp_directory_path() / name).string();
  std::ofstream(path) << body;
  return path;
}

// Scalar-loop per-class variance sum, computed from scratch.
std::vector<double> variance_oracle(const Dataset& d) {
  std::vector<double> out;
  for (std::size_t c = 0; c < d.num_classes; ++c) {
    double total = 0.0;
    for (std::size_t k = 0; k < d.dim(); ++k) {
      std::vector<double> xs;
      for (std::size_t i = 0; i < d.size(); ++i)
        if (d.labels[i] == static_cast<int>(c) && d.split[i] == Split::Train)
          xs.push_back(d.features(k, i));
      double mean = 0.0;
      for (double v : xs) mean += v;
      mean /= static_cast<double>(xs.size());
      double var = 0.0;
      for (double v : xs) var += (v - mean) * (v - mean);
      total += var / static_cast<double>(xs.size());
    }
    out.push_back(total);
  }
  return out;
}

TEST(Synthetic, ZeroSpreadGivesCenters) {
  const Dataset d = gen_synthetic_clusters(3, 4, 5, 0.0, 1);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 1; i < 5; ++i)
      for (std::size_t k = 0; k < 4; ++k)
        EXPECT_EQ(d.features(k, c * 5 + i), d.features(k, c * 5));
  // closest pair of centres at unit distance
  double best = INFINITY;
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = a + 1; b < 3; ++b) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < 4; ++k) {
        const double diff = d.features(k, a * 5) - d.features(k, b * 5);
        d2 += diff * diff;
      }
      best = std::min(best, std::sqrt(d2));
    }
  EXPECT_NEAR(best, 1.0, 1e-12);
}

TEST(Synthetic, LabelHistogramAndSplit) {
  const Dataset d = gen_synthetic_clusters(4, 3, 20, 0.5, 2);
  d.validate();
  for (int c = 0; c < 4; ++c)
    EXPECT_EQ(std::count(d.labels.begin(), d.labels.end(), c), 20);
  EXPECT_EQ(d.indices(Split::Test).size(), 20u);  // 25% of 80
  EXPECT_EQ(d.subset(Split::Train).size(), 60u);
}

TEST(Synthetic, DeterministicBytes) {
  const Dataset a = gen_synthetic_clusters(3, 5, 10, 0.3, 9);
  const Dataset b = gen_synthetic_clusters(3, 5, 10, 0.3, 9);
  ASSERT_EQ(a.features.size(), b.features.size());
  EXPECT_EQ(std::memcmp(a.features.data().data(), b.features.data().data(),
                        a.features.size() * sizeof(double)),
            0);
  EXPECT_EQ(fingerprint(a), fingerprint(b));
  EXPECT_NE(fingerprint(a), fingerprint(gen_synthetic_clusters(3, 5, 10, 0.3, 10)));
}

TEST(Synthetic, RejectsInvalidCounts) {
  EXPECT_THROW(gen_synthetic_clusters(1, 4, 5, 0.1, 1), ArgumentError);
  EXPECT_THROW(gen_synthetic_clusters(3, 1, 5, 0.1, 1), ArgumentError);
  EXPECT_THROW(gen_synthetic_clusters(3, 4, 0, 0.1, 1), ArgumentError);
  EXPECT_THROW(gen_synthetic_clusters(3, 4, 5, -0.1, 1), ArgumentError);
}

TEST(ClassPriority, SyntheticSpreadOrdersByDescendingIndex) {
  const Dataset d = gen_synthetic_clusters(5, 16, 200, 0.3, 3);
  EXPECT_EQ(class_priority(d), (std::vector<int>{4, 3, 2, 1, 0}));
  const auto traces = class_covariance_traces(d);
  const auto oracle = variance_oracle(d);
  for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(traces[c], oracle[c], 1e-10);
}

TEST(ClassPriority, IdenticalClassesFallBackToIndexOrder) {
  Dataset d;
  d.num_classes = 3;
  d.features = Matrix{{1, 2, 1, 2, 1, 2}, {0, 1, 0, 1, 0, 1}};
  d.labels = {0, 0, 1, 1, 2, 2};
  d.split.assign(6, Split::Train);
  EXPECT_EQ(class_priority(d), (std::vector<int>{0, 1, 2}));
}

TEST(ClassPriority, DoubledSpreadComesFirst) {
  Dataset d;
  d.num_classes = 2;
  d.features = Matrix{{-1, 1, -2, 2}};
  d.labels = {0, 0, 1, 1};
  d.split.assign(4, Split::Train);
  EXPECT_EQ(class_priority(d), (std::vector<int>{1, 0}));
}

TEST(ClassPriority, EmptyClassIsAnError) {
  Dataset d;
  d.num_classes = 2;
  d.features = Matrix{{1, 2}};
  d.labels = {0, 0};
  d.split.assign(2, Split::Train);
  EXPECT_THROW(class_priority(d), ArgumentError);
}

TEST(LoadCsv, HandWrittenFileExact) {
  const auto path = write_temp("lcnn_small.csv", "1.5,-2,7\n0.25,3,9\n-1,0,7\n");
  const Dataset d = load_csv(path, std::size_t{2}, {.standardize = false});
  EXPECT_EQ(d.features, (Matrix{{1.5, 0.25, -1}, {-2, 3, 0}}));
  EXPECT_EQ(d.labels, (std::vector<int>{0, 1, 0}));  // 7 → 0, 9 → 1
  EXPECT_EQ(d.num_classes, 2u);
  std::filesystem::remove(path);
}

TEST(LoadCsv, HeaderLabelByNameAndSplitColumn) {
  const auto path = write_temp("lcnn_header.csv",
                               "a,b,label,split\n1,2,5,train\n3,4,6,train\n5,6,5,test\n");
  const Dataset d = load_csv(path, std::string("label"), {.standardize = false});
  EXPECT_EQ(d.dim(), 2u);
  EXPECT_EQ(d.split, (std::vector<Split>{Split::Train, Split::Train, Split::Test}));
  EXPECT_EQ(d.labels, (std::vector<int>{0, 1, 0}));
  std::filesystem::remove(path);
}

TEST(LoadCsv, StandardizesWithTrainStatistics) {
  const auto path = write_temp("lcnn_std.csv",
                               "x,c,label,split\n1,4,0,train\n3,4,1,train\n5,4,0,train\n"
                               "7,4,1,test\n");
  const Dataset d = load_csv(path, std::string("label"));
  // train mean 3, population std sqrt(8/3); constant column maps to 0
  const double sd = std::sqrt(8.0 / 3.0);
  EXPECT_NEAR(d.features(0, 0), -2.0 / sd, 1e-15);
  EXPECT_NEAR(d.features(0, 3), 4.0 / sd, 1e-15);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(d.features(1, i), 0.0);
  std::filesystem::remove(path);
}

TEST(LoadCsv, StandardizedTrainSplitHasZeroMeanUnitStd) {
  Dataset d = gen_synthetic_clusters(3, 6, 30, 0.7, 4);
  const auto st = standardize(d);
  const auto train = d.indices(Split::Train);
  for (std::size_t k = 0; k < d.dim(); ++k) {
    double mean = 0.0, var = 0.0;
    for (std::size_t i : train) mean += d.features(k, i);
    mean /= static_cast<double>(train.size());
    for (std::size_t i : train) var += (d.features(k, i) - mean) * (d.features(k, i) - mean);
    EXPECT_LE(std::abs(mean), 1e-9);
    EXPECT_NEAR(std::sqrt(var / static_cast<double>(train.size())), 1.0, 1e-9);
    EXPECT_GT(st.stddev[k], 0.0);
  }
}

TEST(LoadCsv, ParseErrorsCarryLineNumbers) {
  auto expect_parse_error = [](const std::string& body, const std::string& needle) {
    const auto path = write_temp("lcnn_bad.csv", body);
    try {
      load_csv(path, std::size_t{1});
      ADD_FAILURE() << "expected ParseError for " << body;
    } catch (const ParseError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
    std::filesystem::remove(path);
  };
  expect_parse_error("1,0\n2,1\n3\n", ":3:");                    // ragged
  expect_parse_error("1,0\n2,1\nabc,1\n", ":3: non-numeric");
  expect_parse_error("x,label\n1,0\nfoo,1\n", ":3: non-numeric");
  expect_parse_error("x,label\n1,0\n2,0.5\n", ":3: label");
  expect_parse_error("x,label,split\n1,0,train\n2,1,test\n", "never appears");
  expect_parse_error("x,label,split\n1,0,train\n2,1,dev\n", ":3: split");
}

TEST(LoadCsv, MissingFileIsIoError) {
  EXPECT_THROW(load_csv("/nonexistent/lcnn.csv", std::size_t{0}), IoError);
}

TEST(SaveCsv, RoundTripIsBitExact) {
  const Dataset d = gen_synthetic_clusters(3, 4, 8, 0.37, 5);
  const auto path = (std::filesystem::temp_directory_path() / "lcnn_roundtrip.csv").string();
  save_csv(d, path);
  const Dataset back = load_csv(path, std::string("label"), {.standardize = false});
  EXPECT_EQ(back, d);
  EXPECT_EQ(fingerprint(back), fingerprint(d));
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace lcnn

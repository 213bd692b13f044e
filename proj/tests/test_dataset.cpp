// Copyright 2026 The ProbMix Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "probmix/dataset.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

namespace probmix {
namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

TEST(GenToyRegression, SupportsAndDefaults) {
  const ToyRegression toy = gen_toy_regression(100, 100, 3);
  EXPECT_EQ(toy.train.size(), 100u);  // paper-scale default
  EXPECT_EQ(toy.test.size(), 100u);
  for (std::size_t i = 0; i < toy.train.size(); ++i) {
    EXPECT_GE(toy.train.features.at(i, 0), -4.0);
    EXPECT_LE(toy.train.features.at(i, 0), 4.0);
  }
  for (std::size_t i = 0; i < toy.test.size(); ++i) {
    EXPECT_GE(toy.test.features.at(i, 0), 4.0);
    EXPECT_LE(toy.test.features.at(i, 0), 6.0);
  }
}

TEST(GenToyRegression, ResidualVarianceMatchesNoise) {
  const ToyRegression toy = gen_toy_regression(100000, 1, 5);
  double mean = 0.0, second = 0.0;
  for (std::size_t i = 0; i < toy.train.size(); ++i) {
    const double x = toy.train.features.at(i, 0);
    const double r = toy.train.targets.at(i, 0) - x * x * x;
    mean += r;
    second += r * r;
  }
  mean /= static_cast<double>(toy.train.size());
  const double var = second / static_cast<double>(toy.train.size()) - mean * mean;
  EXPECT_NEAR(var, 9.0, 0.3);
}

TEST(GenToyRegression, SeedDeterminism) {
  const ToyRegression a = gen_toy_regression(50, 50, 9);
  const ToyRegression b = gen_toy_regression(50, 50, 9);
  EXPECT_EQ(a.train.features.data, b.train.features.data);
  EXPECT_EQ(a.train.targets.data, b.train.targets.data);
  EXPECT_EQ(a.test.features.data, b.test.features.data);
}

TEST(GenToyRings, ClassCountsDifferByAtMostOne) {
  const Dataset d = gen_toy_rings(100, 1);
  std::vector<int> counts(3, 0);
  for (int label : d.labels) ++counts[static_cast<std::size_t>(label)];
  const int lo = std::min({counts[0], counts[1], counts[2]});
  const int hi = std::max({counts[0], counts[1], counts[2]});
  EXPECT_LE(hi - lo, 1);
  const Dataset e = gen_toy_rings(99, 1);
  std::vector<int> counts99(3, 0);
  for (int label : e.labels) ++counts99[static_cast<std::size_t>(label)];
  EXPECT_EQ(counts99, (std::vector<int>{33, 33, 33}));
}

TEST(GenToyRings, OuterRingRadiusWithinGaussianTailBound) {
  const Dataset d = gen_toy_rings(3000, 7);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.labels[i] != 2) continue;
    const double r = std::hypot(d.features.at(i, 0), d.features.at(i, 1));
    EXPECT_NEAR(r, 2.5, 4.0 * 0.3 * 1.5);  // generous multiple of the noise scale
  }
}

TEST(GenToyRings, SeedDeterminism) {
  const Dataset a = gen_toy_rings(60, 11);
  const Dataset b = gen_toy_rings(60, 11);
  EXPECT_EQ(a.features.data, b.features.data);
  EXPECT_EQ(a.labels, b.labels);
}

TEST(LoadCsv, HeaderFixtureShapes) {
  const auto path = temp_file("probmix_fixture.csv");
  {
    std::ofstream os(path);
    os << "a,b,y\n1.5,2.0,3.25\n-1.0,0.5,2.0\n";
  }
  const Dataset d = load_csv(path.string(), {"y"}, true);
  EXPECT_EQ(d.size(), 2u);
  EXPECT_EQ(d.features.cols, 2u);
  EXPECT_EQ(d.targets.cols, 1u);
  EXPECT_DOUBLE_EQ(d.features.at(0, 0), 1.5);
  EXPECT_DOUBLE_EQ(d.targets.at(1, 0), 2.0);
  std::filesystem::remove(path);
}

TEST(LoadCsv, NonNumericCellNamesCoordinates) {
  const auto path = temp_file("probmix_badcell.csv");
  {
    std::ofstream os(path);
    os << "a,b,y\n1,2,3\noops,5,6\n";
  }
  try {
    load_csv(path.string(), {"y"}, true);
    FAIL() << "expected parse error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("(3,1)"), std::string::npos) << e.what();
  }
  std::filesystem::remove(path);
}

TEST(LoadCsv, RaggedRowAndMissingTargetErrors) {
  const auto path = temp_file("probmix_ragged.csv");
  {
    std::ofstream os(path);
    os << "a,b,y\n1,2,3\n4,5\n";
  }
  EXPECT_THROW(load_csv(path.string(), {"y"}, true), std::runtime_error);
  {
    std::ofstream os(path);
    os << "a,b,y\n1,2,3\n";
  }
  EXPECT_THROW(load_csv(path.string(), {"z"}, true), std::runtime_error);
  std::filesystem::remove(path);
  EXPECT_THROW(load_csv("/nonexistent/file.csv", {"y"}, true), std::runtime_error);
}

TEST(LoadCsv, IndexTargetsWithoutHeader) {
  const auto path = temp_file("probmix_noheader.csv");
  {
    std::ofstream os(path);
    os << "1,2,3\n4,5,6\n";
  }
  const Dataset d = load_csv(path.string(), {"2"}, false);
  EXPECT_EQ(d.features.cols, 2u);
  EXPECT_DOUBLE_EQ(d.targets.at(1, 0), 6.0);
  std::filesystem::remove(path);
}

TEST(SaveCsv, RoundTripIsBitExact) {
  const ToyRegression toy = gen_toy_regression(40, 1, 13);
  const auto path = temp_file("probmix_roundtrip.csv");
  save_csv(toy.train, path.string());
  const Dataset loaded = load_csv(path.string(), {"y0"}, true);
  EXPECT_EQ(loaded.features.data, toy.train.features.data);
  EXPECT_EQ(loaded.targets.data, toy.train.targets.data);
  std::filesystem::remove(path);
}

TEST(Split, SizesAndDisjointCoverage) {
  const ToyRegression toy = gen_toy_regression(100, 1, 17);
  const std::vector<Dataset> parts = split(toy.train, {0.8, 0.2}, 23);
  ASSERT_EQ(parts.size(), 2u);
  EXPECT_EQ(parts[0].size(), 80u);
  EXPECT_EQ(parts[1].size(), 20u);
  // disjointness and coverage via the feature values (all distinct w.p. 1)
  std::set<double> seen;
  for (const Dataset& p : parts) {
    for (std::size_t i = 0; i < p.size(); ++i) seen.insert(p.features.at(i, 0));
  }
  EXPECT_EQ(seen.size(), 100u);
}

TEST(Split, SameSeedSamePartition) {
  const ToyRegression toy = gen_toy_regression(60, 1, 19);
  const auto a = split(toy.train, {0.7, 0.3}, 5);
  const auto b = split(toy.train, {0.7, 0.3}, 5);
  EXPECT_EQ(a[0].features.data, b[0].features.data);
  EXPECT_EQ(a[1].features.data, b[1].features.data);
}

TEST(Split, RejectsBadFractions) {
  const ToyRegression toy = gen_toy_regression(10, 1, 21);
  EXPECT_THROW(split(toy.train, {0.8, 0.4}, 1), std::invalid_argument);
  EXPECT_THROW(split(toy.train, {0.8, -0.2}, 1), std::invalid_argument);
  EXPECT_THROW(split(toy.train, {0.99, 0.01}, 1), std::invalid_argument);  // empty second split
}

TEST(Standardize, TrainColumnsBecomeStandardNormal) {
  ToyRegression toy = gen_toy_regression(200, 50, 23);
  std::vector<Dataset*> others{&toy.test};
  standardize(toy.train, others, true, true);
  const Standardization& fs = *toy.train.feature_stats;
  double mean = 0.0, second = 0.0;
  for (std::size_t i = 0; i < toy.train.size(); ++i) {
    mean += toy.train.features.at(i, 0);
    second += toy.train.features.at(i, 0) * toy.train.features.at(i, 0);
  }
  mean /= static_cast<double>(toy.train.size());
  EXPECT_NEAR(mean, 0.0, 1e-9);
  EXPECT_NEAR(std::sqrt(second / static_cast<double>(toy.train.size()) - mean * mean), 1.0, 1e-9);
  EXPECT_FALSE(fs.constant[0]);
  // stats were fitted on train, merely applied to test
  EXPECT_EQ(toy.test.feature_stats->mean, fs.mean);
}

TEST(Standardize, ConstantColumnFlaggedAndUntouched) {
  Dataset d;
  d.task = Task::kRegression;
  d.features = Array(5, 2);
  d.targets = Array(5, 1);
  for (std::size_t i = 0; i < 5; ++i) {
    d.features.at(i, 0) = 7.0;  // constant column
    d.features.at(i, 1) = static_cast<double>(i);
    d.targets.at(i, 0) = static_cast<double>(i);
  }
  standardize(d, {}, true, false);
  EXPECT_TRUE(d.feature_stats->constant[0]);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(d.features.at(i, 0), 7.0);
}

TEST(Standardize, InverseRecoversOriginals) {
  ToyRegression toy = gen_toy_regression(100, 1, 29);
  const Array original = toy.train.targets;
  standardize(toy.train, {}, false, true);
  Array restored = toy.train.targets;
  invert_standardization(*toy.train.target_stats, restored);
  for (std::size_t i = 0; i < restored.size(); ++i) {
    EXPECT_NEAR(restored.data[i], original.data[i], 1e-9);
  }
}

}  // namespace
}  // namespace probmix

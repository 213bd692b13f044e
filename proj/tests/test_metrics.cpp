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

#include "probmix/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

namespace probmix {
namespace {

Mlp identity_unit_variance_model() {
  Array eye(1, 1);
  eye.at(0, 0) = 1.0;
  return Mlp::affine(eye, {0.0}, Head::kGaussianHomoscedastic, 1.0);
}

TEST(MeanNll, CalibratedUnitVarianceGaussian) {
  // targets = mean + standard normal noise: expected NLL is entropy + 1/2
  const Mlp model = identity_unit_variance_model();
  Rng rng(201);
  Dataset data;
  data.task = Task::kRegression;
  const std::size_t n = 100000;
  data.features = Array(n, 1);
  data.targets = Array(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    data.features.at(i, 0) = rng.uniform(-2.0, 2.0);
    data.targets.at(i, 0) = data.features.at(i, 0) + rng.normal();
  }
  EXPECT_NEAR(mean_nll(model, data), 0.5 * std::log(2.0 * M_PI) + 0.5, 0.02);
}

TEST(MeanNll, UniformClassifierIsLogC) {
  Array zero(4, 2);
  const Mlp model = Mlp::affine(zero, {0.0, 0.0, 0.0, 0.0}, Head::kSoftmax);
  Rng rng(203);
  Dataset data;
  data.task = Task::kClassification;
  data.num_classes = 4;
  data.features = testing::random_array(rng, 50, 2);
  data.labels.assign(50, 0);
  EXPECT_NEAR(mean_nll(model, data), std::log(4.0), 1e-12);
}

TEST(MeanNll, SinglePointEqualsDensityNll) {
  Rng rng(205);
  MlpSpec spec;
  spec.input_dim = 2;
  spec.hidden = {4};
  spec.head = Head::kGaussianHeteroscedastic;
  spec.output_dim = 1;
  const Mlp model = Mlp::init(spec, rng);
  Dataset data;
  data.task = Task::kRegression;
  data.features = testing::random_array(rng, 1, 2);
  data.targets = testing::random_array(rng, 1, 1);
  EXPECT_NEAR(mean_nll(model, data),
              gaussian_nll(forward_regression(model, data.feature_row(0)), data.target_row(0)),
              1e-12);
}

TEST(MeanNll, ConcatenationIsSizeWeightedMean) {
  Rng rng(207);
  MlpSpec spec;
  spec.input_dim = 2;
  spec.hidden = {4};
  spec.head = Head::kGaussianHeteroscedastic;
  spec.output_dim = 1;
  const Mlp model = Mlp::init(spec, rng);
  Dataset a, b, both;
  a.task = b.task = both.task = Task::kRegression;
  a.features = testing::random_array(rng, 7, 2);
  a.targets = testing::random_array(rng, 7, 1);
  b.features = testing::random_array(rng, 13, 2);
  b.targets = testing::random_array(rng, 13, 1);
  both.features = Array(20, 2);
  both.targets = Array(20, 1);
  for (std::size_t i = 0; i < 7; ++i) {
    for (int c = 0; c < 2; ++c) both.features.at(i, c) = a.features.at(i, c);
    both.targets.at(i, 0) = a.targets.at(i, 0);
  }
  for (std::size_t i = 0; i < 13; ++i) {
    for (int c = 0; c < 2; ++c) both.features.at(7 + i, c) = b.features.at(i, c);
    both.targets.at(7 + i, 0) = b.targets.at(i, 0);
  }
  const double weighted = (7.0 * mean_nll(model, a) + 13.0 * mean_nll(model, b)) / 20.0;
  EXPECT_NEAR(mean_nll(model, both), weighted, 1e-12);
}

TEST(MeanNll, McModeOnEmbeddingModel) {
  Rng rng(209);
  MlpSpec spec;
  spec.input_dim = 2;
  spec.hidden = {4, 3};
  spec.head = Head::kGaussianHeteroscedastic;
  spec.output_dim = 1;
  spec.mix_layer = 1;
  spec.embedding_head = true;
  const Mlp model = Mlp::init(spec, rng);
  Dataset data;
  data.task = Task::kRegression;
  data.features = testing::random_array(rng, 10, 2);
  data.targets = testing::random_array(rng, 10, 1);
  Rng mc_rng(211);
  const double mc = mean_nll(model, data, {EvalOptions::Mode::kMc, 128}, &mc_rng);
  EXPECT_TRUE(std::isfinite(mc));
  // averaging likelihoods can only improve on the deterministic point mass
  // by a bounded amount; sanity-check the two agree loosely
  EXPECT_NEAR(mc, mean_nll(model, data), 1.0);
  EXPECT_THROW(mean_nll(model, data, {EvalOptions::Mode::kMc, 4}, nullptr),
               std::invalid_argument);
}

TEST(RmseAccuracy, ExactPredictors) {
  const Mlp model = identity_unit_variance_model();
  Dataset data;
  data.task = Task::kRegression;
  data.features = Array(5, 1);
  data.targets = Array(5, 1);
  for (std::size_t i = 0; i < 5; ++i) {
    data.features.at(i, 0) = static_cast<double>(i);
    data.targets.at(i, 0) = static_cast<double>(i);
  }
  EXPECT_DOUBLE_EQ(rmse(model, data), 0.0);
  EXPECT_DOUBLE_EQ(mse(model, data), 0.0);
  EXPECT_THROW(accuracy(model, data), std::invalid_argument);
}

TEST(RmseAccuracy, ConstantZeroPredictorOnSymmetricTargets) {
  Array zero(1, 1);
  const Mlp model = Mlp::affine(zero, {0.0}, Head::kGaussianHomoscedastic, 1.0);
  Dataset data;
  data.task = Task::kRegression;
  data.features = Array(2, 1);
  data.targets = Array(2, 1);
  data.targets.at(0, 0) = 3.0;
  data.targets.at(1, 0) = -3.0;
  EXPECT_DOUBLE_EQ(rmse(model, data), 3.0);
  EXPECT_DOUBLE_EQ(mse(model, data), 9.0);
}

TEST(RmseAccuracy, HandComputedOnThreePoints) {
  const Mlp model = identity_unit_variance_model();
  Dataset data;
  data.task = Task::kRegression;
  data.features = Array(3, 1);
  data.targets = Array(3, 1);
  const double xs[3] = {1.0, 2.0, 3.0};
  const double ys[3] = {1.5, 1.0, 3.0};
  for (std::size_t i = 0; i < 3; ++i) {
    data.features.at(i, 0) = xs[i];
    data.targets.at(i, 0) = ys[i];
  }
  const double want_mse = (0.25 + 1.0 + 0.0) / 3.0;
  EXPECT_NEAR(mse(model, data), want_mse, 1e-15);
  EXPECT_NEAR(rmse(model, data), std::sqrt(want_mse), 1e-15);
}

TEST(Accuracy, ArgmaxAndShiftInvariance) {
  Rng rng(213);
  Array a(3, 2);
  for (double& v : a.data) v = rng.normal();
  Dataset data;
  data.task = Task::kClassification;
  data.num_classes = 3;
  data.features = testing::random_array(rng, 40, 2);
  data.labels.resize(40);
  const Mlp base = Mlp::affine(a, {0.0, 0.0, 0.0}, Head::kSoftmax);
  for (std::size_t i = 0; i < 40; ++i) {
    const auto probs = forward_classification(base, data.feature_row(i)).probs();
    data.labels[i] = static_cast<int>(std::max_element(probs.begin(), probs.end()) -
                                      probs.begin());
  }
  EXPECT_DOUBLE_EQ(accuracy(base, data), 1.0);
  const Mlp shifted = Mlp::affine(a, {5.0, 5.0, 5.0}, Head::kSoftmax);
  EXPECT_DOUBLE_EQ(accuracy(shifted, data), 1.0);
}

TEST(Aggregate, PairAndSingleton) {
  std::vector<ExperimentRecord> records;
  ExperimentRecord r;
  r.method = "mix";
  r.pooling = "log-linear";
  r.alpha = 0.1;
  r.beta = 0.0;
  r.k_neighbors = 5;
  r.split = "test";
  r.metric = "nll";
  r.value = 1.0;
  records.push_back(r);
  r.value = 3.0;
  records.push_back(r);
  r.method = "erm";
  r.value = 7.0;
  records.push_back(r);
  const auto groups = aggregate(records);
  const AggregateValue pair =
      groups.at({"mix", "log-linear", 0.1, 0.0, 5, "test", "nll"});
  EXPECT_DOUBLE_EQ(pair.mean, 2.0);
  EXPECT_NEAR(pair.stddev, std::sqrt(2.0), 1e-12);
  EXPECT_EQ(pair.count, 2u);
  const AggregateValue single = groups.at({"erm", "log-linear", 0.1, 0.0, 5, "test", "nll"});
  EXPECT_DOUBLE_EQ(single.mean, 7.0);
  EXPECT_DOUBLE_EQ(single.stddev, 0.0);
}

TEST(Aggregate, MatchesTwoPassComputationAndOrderInvariance) {
  Rng rng(215);
  std::vector<ExperimentRecord> records;
  std::vector<double> values;
  for (int i = 0; i < 10; ++i) {
    ExperimentRecord r;
    r.method = "probmix";
    r.pooling = "log-linear";
    r.alpha = 0.1;
    r.beta = 0.01;
    r.k_neighbors = 5;
    r.split = "test";
    r.metric = "nll";
    r.value = rng.normal();
    values.push_back(r.value);
    records.push_back(r);
  }
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= 10.0;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double stddev = std::sqrt(ss / 9.0);
  const AggregateKey key{"probmix", "log-linear", 0.1, 0.01, 5, "test", "nll"};
  const auto forward_order = aggregate(records);
  std::reverse(records.begin(), records.end());
  const auto reverse_order = aggregate(records);
  EXPECT_NEAR(forward_order.at(key).mean, mean, 1e-12);
  EXPECT_NEAR(forward_order.at(key).stddev, stddev, 1e-12);
  EXPECT_DOUBLE_EQ(forward_order.at(key).mean, reverse_order.at(key).mean);
  EXPECT_DOUBLE_EQ(forward_order.at(key).stddev, reverse_order.at(key).stddev);
}

}  // namespace
}  // namespace probmix

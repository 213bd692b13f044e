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

#include "probmix/mixing.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace probmix {
namespace {

TEST(SampleLambda, DegenerateLimitAtLargeAlpha) {
  Rng rng(31);
  const MixingDistribution dist{1e6};
  for (int i = 0; i < 10000; ++i) {
    EXPECT_NEAR(sample_lambda(dist, rng), 0.5, 0.01);
  }
}

TEST(SampleLambda, SymmetricMean) {
  Rng rng(33);
  for (double alpha : {0.1, 0.5, 2.0}) {
    const MixingDistribution dist{alpha};
    double mean = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) mean += sample_lambda(dist, rng);
    EXPECT_NEAR(mean / n, 0.5, 0.01) << "alpha=" << alpha;
  }
}

TEST(SampleLambda, VarianceMatchesBetaFormula) {
  // Var Beta(a, a) = 1 / (4 (2a + 1))
  Rng rng(35);
  const MixingDistribution dist{0.5};
  double mean = 0.0, second = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double lam = sample_lambda(dist, rng);
    ASSERT_GE(lam, 0.0);
    ASSERT_LE(lam, 1.0);
    mean += lam;
    second += lam * lam;
  }
  mean /= n;
  EXPECT_NEAR(second / n - mean * mean, 0.125, 0.01);
}

TEST(SampleLambda, TinyAlphaBehavesLikeCoinFlip) {
  Rng rng(37);
  const MixingDistribution dist{1e-32};
  int ones = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double lam = sample_lambda(dist, rng);
    EXPECT_TRUE(lam < 1e-9 || lam > 1.0 - 1e-9);
    if (lam > 0.5) ++ones;
  }
  EXPECT_NEAR(static_cast<double>(ones) / n, 0.5, 0.02);
}

TEST(SampleLambda, RejectsNonPositiveAlpha) {
  Rng rng(39);
  EXPECT_THROW(sample_lambda(MixingDistribution{0.0}, rng), std::invalid_argument);
}

TEST(MixInputs, EndpointsAndGolden) {
  EXPECT_EQ(mix_inputs({1.0, 2.0}, {5.0, -3.0}, 1.0), (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(mix_inputs({2.0}, {2.0}, 0.37), (std::vector<double>{2.0}));
  EXPECT_NEAR(mix_inputs({5.0}, {-5.0}, 0.8)[0], 3.0, 1e-15);
  EXPECT_THROW(mix_inputs({1.0}, {1.0, 2.0}, 0.5), std::invalid_argument);
}

TEST(FusePerturbedRegression, BetaZeroIsDeterministicInterpolation) {
  Rng rng(41);
  const FusedTarget t = fuse_perturbed_regression({130.0}, {-120.0}, 0.8, 0.0, rng);
  EXPECT_NEAR(t.value[0], 80.0, 1e-12);
}

TEST(FusePerturbedRegression, EqualTargetsStayPut) {
  Rng rng(43);
  for (double beta : {0.0, 0.3}) {
    const FusedTarget t = fuse_perturbed_regression({2.5}, {2.5}, 0.4, beta, rng);
    if (beta == 0.0) {
      EXPECT_DOUBLE_EQ(t.value[0], 2.5);
    } else {
      EXPECT_NEAR(t.value[0], 2.5, 10.0 * std::sqrt(beta));
    }
  }
}

TEST(FusePerturbedRegression, FusedVarianceIsBeta) {
  // log-linear fusion of two equal-variance kernels keeps variance beta
  Rng rng(45);
  const double beta = 0.01;
  const int n = 100000;
  double mean = 0.0, second = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = fuse_perturbed_regression({1.0}, {-1.0}, 0.5, beta, rng).value[0];
    mean += v;
    second += v * v;
  }
  mean /= n;
  const double var = second / n - mean * mean;
  EXPECT_NEAR(var, beta, 0.05 * beta);
}

TEST(FusePerturbedRegression, RejectsNegativeBeta) {
  Rng rng(47);
  EXPECT_THROW(fuse_perturbed_regression({0.0}, {1.0}, 0.5, -0.1, rng), std::invalid_argument);
}

TEST(PerturbedOneHot, NormalizesBias) {
  const std::vector<double> p = perturbed_one_hot(1, 3, 0.01);
  EXPECT_NEAR(p[0], 0.01 / 1.03, 1e-15);
  EXPECT_NEAR(p[1], 1.01 / 1.03, 1e-15);
  EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-15);
}

TEST(FusePerturbedClassification, IdempotentOnEqualLabels) {
  Rng rng(49);
  const double beta = 0.05;
  const FusedTarget t = fuse_perturbed_classification(2, 2, 0.4, beta, 3, Pooling::kLogLinear,
                                                      LabelMode::kExact, rng);
  EXPECT_NEAR(t.label_probs[2], (1.0 + beta) / (1.0 + 3.0 * beta), 1e-12);
  double total = 0.0;
  for (double v : t.label_probs) total += v;
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(FusePerturbedClassification, SymmetricGeometricMeanIsUniform) {
  Rng rng(51);
  const FusedTarget t = fuse_perturbed_classification(0, 1, 0.5, 0.01, 2, Pooling::kLogLinear,
                                                      LabelMode::kExact, rng);
  EXPECT_NEAR(t.label_probs[0], 0.5, 1e-12);
  EXPECT_NEAR(t.label_probs[1], 0.5, 1e-12);
}

TEST(FusePerturbedClassification, EndpointIsPerturbedOneHot) {
  Rng rng(53);
  for (double beta : {0.0, 0.2}) {
    const FusedTarget t = fuse_perturbed_classification(0, 1, 1.0, beta, 3, Pooling::kLogLinear,
                                                        LabelMode::kExact, rng);
    const std::vector<double> want = perturbed_one_hot(0, 3, beta);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(t.label_probs[k], want[k], 1e-15);
  }
}

TEST(FusePerturbedClassification, LogLinearWithZeroBetaAndDistinctLabelsThrows) {
  Rng rng(55);
  EXPECT_THROW(fuse_perturbed_classification(0, 1, 0.5, 0.0, 3, Pooling::kLogLinear,
                                             LabelMode::kExact, rng),
               std::invalid_argument);
  // linear pooling has no support problem at beta = 0
  const FusedTarget t = fuse_perturbed_classification(0, 1, 0.7, 0.0, 3, Pooling::kLinear,
                                                      LabelMode::kExact, rng);
  EXPECT_NEAR(t.label_probs[0], 0.7, 1e-15);
  EXPECT_NEAR(t.label_probs[1], 0.3, 1e-15);
}

TEST(FusePerturbedClassification, SampledModeDrawsFromFusedDistribution) {
  Rng rng(57);
  int zeros = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const FusedTarget t = fuse_perturbed_classification(0, 1, 0.7, 0.0, 2, Pooling::kLinear,
                                                        LabelMode::kSampled, rng);
    ASSERT_GE(t.label, 0);
    if (t.label == 0) ++zeros;
  }
  EXPECT_NEAR(static_cast<double>(zeros) / n, 0.7, 0.01);
}

}  // namespace
}  // namespace probmix

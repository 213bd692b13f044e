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

#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "probmix/densities.hpp"
#include "probmix/rng.hpp"

namespace probmix {

enum class Task { kRegression, kClassification };
enum class Pooling { kLinear, kLogLinear };
enum class LabelMode { kExact, kSampled };

/// Symmetric Beta mixing law for the interpolation coefficient.
struct MixingDistribution {
  double alpha = 0.1;
};

inline double sample_lambda(const MixingDistribution& dist, Rng& rng) {
  if (!(dist.alpha > 0.0)) throw std::invalid_argument("sample_lambda: alpha must be > 0");
  return rng.beta(dist.alpha, dist.alpha);
}

/// Response perturbation kernel: isotropic Gaussian of variance beta around a
/// regression target, or a beta-biased one-hot for classification.
struct PerturbationSpec {
  double beta = 0.0;
  Task task = Task::kRegression;
};

/// A realized training target: either a sampled response or, in exact mode, a
/// full class distribution whose expected loss is taken in closed form.
struct FusedTarget {
  std::vector<double> value;        // regression draw
  int label = -1;                   // sampled class
  std::vector<double> label_probs;  // exact-mode fused class distribution
};

inline std::vector<double> mix_inputs(const std::vector<double>& x_i,
                                      const std::vector<double>& x_j, double lam) {
  if (x_i.size() != x_j.size()) throw std::invalid_argument("mix_inputs: dim mismatch");
  std::vector<double> out(x_i.size());
  for (std::size_t d = 0; d < x_i.size(); ++d) out[d] = lam * x_i[d] + (1.0 - lam) * x_j[d];
  return out;
}

/// Fuses the perturbation kernels around y_i and y_j and draws from the
/// result. Log-linear pooling of the two isotropic Gaussians is the Gaussian
/// N(lam*y_i + (1-lam)*y_j, beta*I); beta = 0 degenerates to the deterministic
/// interpolation. Linear pooling draws the component first.
inline FusedTarget fuse_perturbed_regression(const std::vector<double>& y_i,
                                             const std::vector<double>& y_j, double lam,
                                             double beta, Rng& rng,
                                             Pooling pooling = Pooling::kLogLinear) {
  if (y_i.size() != y_j.size()) throw std::invalid_argument("fuse_perturbed_regression: dims");
  if (beta < 0.0) throw std::invalid_argument("fuse_perturbed_regression: beta < 0");
  FusedTarget t;
  t.value.resize(y_i.size());
  if (pooling == Pooling::kLogLinear) {
    for (std::size_t d = 0; d < y_i.size(); ++d) {
      t.value[d] = lam * y_i[d] + (1.0 - lam) * y_j[d];
      if (beta > 0.0) t.value[d] += std::sqrt(beta) * rng.normal();
    }
  } else {
    const bool pick_i = rng.uniform() < lam;
    const std::vector<double>& y = pick_i ? y_i : y_j;
    for (std::size_t d = 0; d < y.size(); ++d) {
      t.value[d] = y[d];
      if (beta > 0.0) t.value[d] += std::sqrt(beta) * rng.normal();
    }
  }
  return t;
}

/// One-hot biased by beta and renormalized: P(k) = (1[y=k] + beta) / (1 + C*beta).
inline std::vector<double> perturbed_one_hot(int y, int num_classes, double beta) {
  if (y < 0 || y >= num_classes) throw std::out_of_range("perturbed_one_hot: label");
  std::vector<double> p(num_classes, beta);
  p[y] += 1.0;
  const double total = 1.0 + num_classes * beta;
  for (double& v : p) v /= total;
  return p;
}

/// Fuses the perturbed one-hot kernels of the two labels. Exact mode returns
/// the fused distribution for closed-form expectations; sampled mode draws a
/// class from it. Log-linear pooling with beta = 0 and distinct labels has
/// empty support and is rejected.
inline FusedTarget fuse_perturbed_classification(int y_i, int y_j, double lam, double beta,
                                                 int num_classes, Pooling pooling,
                                                 LabelMode mode, Rng& rng) {
  if (beta < 0.0) throw std::invalid_argument("fuse_perturbed_classification: beta < 0");
  const std::vector<double> q_i = perturbed_one_hot(y_i, num_classes, beta);
  const std::vector<double> q_j = perturbed_one_hot(y_j, num_classes, beta);
  FusedTarget t;
  if (lam == 1.0) {
    t.label_probs = q_i;
  } else if (lam == 0.0) {
    t.label_probs = q_j;
  } else if (pooling == Pooling::kLogLinear) {
    if (beta == 0.0 && y_i != y_j) {
      throw std::invalid_argument(
          "fuse_perturbed_classification: log-linear fusion of distinct labels needs beta > 0");
    }
    std::vector<double> log_q(num_classes);
    for (int k = 0; k < num_classes; ++k) {
      log_q[k] = lam * std::log(q_i[k]) + (1.0 - lam) * std::log(q_j[k]);
    }
    const double lse = log_sum_exp(log_q);
    t.label_probs.resize(num_classes);
    for (int k = 0; k < num_classes; ++k) t.label_probs[k] = std::exp(log_q[k] - lse);
  } else {
    t.label_probs.resize(num_classes);
    for (int k = 0; k < num_classes; ++k) t.label_probs[k] = lam * q_i[k] + (1.0 - lam) * q_j[k];
  }
  if (mode == LabelMode::kSampled) t.label = rng.categorical(t.label_probs);
  return t;
}

}  // namespace probmix

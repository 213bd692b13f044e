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

#include "probmix/array.hpp"
#include "probmix/rng.hpp"

namespace probmix {

inline constexpr double kVarianceFloor = 1e-6;
inline constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * log(2*pi)

/// Diagonal Gaussian over a d_y-dimensional response. Variances are floored
/// at construction so every valid instance stays valid under fusion.
struct GaussianDensity {
  std::vector<double> mean;
  std::vector<double> variance;

  GaussianDensity() = default;
  GaussianDensity(std::vector<double> mu, std::vector<double> var)
      : mean(std::move(mu)), variance(std::move(var)) {
    if (mean.size() != variance.size()) {
      throw std::invalid_argument("GaussianDensity: mean/variance dims differ");
    }
    for (double& v : variance) {
      if (!(v > 0.0)) throw std::invalid_argument("GaussianDensity: non-positive variance");
      if (v < kVarianceFloor) v = kVarianceFloor;
    }
  }

  static GaussianDensity univariate(double mu, double var) {
    return GaussianDensity({mu}, {var});
  }

  std::size_t dim() const { return mean.size(); }
};

/// Class distribution stored as logits; normalization lives in the softmax.
struct CategoricalDensity {
  std::vector<double> logits;

  CategoricalDensity() = default;
  explicit CategoricalDensity(std::vector<double> l) : logits(std::move(l)) {
    if (logits.empty()) throw std::invalid_argument("CategoricalDensity: empty logits");
  }

  static CategoricalDensity from_probs(const std::vector<double>& probs) {
    std::vector<double> l(probs.size());
    for (std::size_t k = 0; k < probs.size(); ++k) l[k] = std::log(probs[k]);
    return CategoricalDensity(std::move(l));
  }

  int num_classes() const { return static_cast<int>(logits.size()); }

  std::vector<double> probs() const {
    std::vector<double> p(logits.size());
    const double lse = log_sum_exp(logits);
    for (std::size_t k = 0; k < logits.size(); ++k) p[k] = std::exp(logits[k] - lse);
    return p;
  }
};

/// Convex two-component mixture of densities of the same kind.
template <class Density>
struct MixtureDensity {
  Density first;
  Density second;
  double weight = 0.5;  // mass on `first`
};

inline double gaussian_nll(const GaussianDensity& p, const std::vector<double>& y) {
  if (y.size() != p.dim()) throw std::invalid_argument("gaussian_nll: dim mismatch");
  double nll = 0.0;
  for (std::size_t d = 0; d < y.size(); ++d) {
    const double r = y[d] - p.mean[d];
    nll += kHalfLog2Pi + 0.5 * std::log(p.variance[d]) + r * r / (2.0 * p.variance[d]);
  }
  return nll;
}

inline double categorical_nll(const CategoricalDensity& p, int k) {
  if (k < 0 || k >= p.num_classes()) throw std::out_of_range("categorical_nll: class index");
  return log_sum_exp(p.logits) - p.logits[k];
}

/// Affine combination of natural parameters: the exponential-family form of
/// log-linear pooling. Both fusions below are specializations of this blend.
inline std::vector<double> affine_blend(const std::vector<double>& a,
                                        const std::vector<double>& b, double lam) {
  if (a.size() != b.size()) throw std::invalid_argument("affine_blend: dim mismatch");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = lam * a[i] + (1.0 - lam) * b[i];
  return out;
}

/// Log-linear pooling of diagonal Gaussians: precisions blend affinely and the
/// mean is the precision-weighted blend. Endpoints return the inputs
/// unchanged; equal variances short-circuit to the plain mean blend so the
/// homoscedastic case is exact.
inline GaussianDensity gaussian_log_linear_fuse(const GaussianDensity& p_i,
                                                const GaussianDensity& p_j, double lam) {
  if (p_i.dim() != p_j.dim()) throw std::invalid_argument("gaussian fuse: dim mismatch");
  if (!(lam >= 0.0 && lam <= 1.0)) throw std::invalid_argument("gaussian fuse: lambda outside [0,1]");
  if (lam == 1.0) return p_i;
  if (lam == 0.0) return p_j;
  GaussianDensity out;
  out.mean.resize(p_i.dim());
  out.variance.resize(p_i.dim());
  for (std::size_t d = 0; d < p_i.dim(); ++d) {
    const double vi = p_i.variance[d];
    const double vj = p_j.variance[d];
    if (vi == vj) {
      out.variance[d] = vi;
      out.mean[d] = lam * p_i.mean[d] + (1.0 - lam) * p_j.mean[d];
    } else {
      const double precision = lam / vi + (1.0 - lam) / vj;
      out.variance[d] = 1.0 / precision;
      out.mean[d] = out.variance[d] * (lam * p_i.mean[d] / vi + (1.0 - lam) * p_j.mean[d] / vj);
    }
  }
  return out;
}

/// Log-linear pooling of categoricals: the logits blend affinely; softmax
/// absorbs the normalization constant.
inline CategoricalDensity categorical_log_linear_fuse(const CategoricalDensity& p_i,
                                                      const CategoricalDensity& p_j,
                                                      double lam) {
  if (p_i.num_classes() != p_j.num_classes()) {
    throw std::invalid_argument("categorical fuse: class-count mismatch");
  }
  if (!(lam >= 0.0 && lam <= 1.0)) {
    throw std::invalid_argument("categorical fuse: lambda outside [0,1]");
  }
  if (lam == 1.0) return p_i;
  if (lam == 0.0) return p_j;
  CategoricalDensity out;
  out.logits = affine_blend(p_i.logits, p_j.logits, lam);
  return out;
}

template <class Density>
MixtureDensity<Density> linear_fuse(const Density& p_i, const Density& p_j, double lam) {
  if (!(lam >= 0.0 && lam <= 1.0)) throw std::invalid_argument("linear_fuse: lambda outside [0,1]");
  return MixtureDensity<Density>{p_i, p_j, lam};
}

inline double mixture_nll(const MixtureDensity<GaussianDensity>& m, const std::vector<double>& y) {
  const double log_w1 = m.weight > 0.0 ? std::log(m.weight)
                                       : -std::numeric_limits<double>::infinity();
  const double log_w2 = m.weight < 1.0 ? std::log(1.0 - m.weight)
                                       : -std::numeric_limits<double>::infinity();
  return -log_add_exp(log_w1 - gaussian_nll(m.first, y), log_w2 - gaussian_nll(m.second, y));
}

inline double mixture_nll(const MixtureDensity<CategoricalDensity>& m, int k) {
  const double log_w1 = m.weight > 0.0 ? std::log(m.weight)
                                       : -std::numeric_limits<double>::infinity();
  const double log_w2 = m.weight < 1.0 ? std::log(1.0 - m.weight)
                                       : -std::numeric_limits<double>::infinity();
  return -log_add_exp(log_w1 - categorical_nll(m.first, k),
                      log_w2 - categorical_nll(m.second, k));
}

/// mu + sqrt(var) * noise, with the noise supplied by the caller so gradients
/// can flow through mean and variance.
inline std::vector<double> sample_gaussian_reparameterized(const GaussianDensity& p,
                                                           const std::vector<double>& noise) {
  if (noise.size() != p.dim()) throw std::invalid_argument("reparameterized sample: dim mismatch");
  std::vector<double> z(p.dim());
  for (std::size_t d = 0; d < p.dim(); ++d) {
    z[d] = p.mean[d] + std::sqrt(p.variance[d]) * noise[d];
  }
  return z;
}

inline int sample_categorical(const CategoricalDensity& p, Rng& rng) {
  return rng.categorical(p.probs());
}

}  // namespace probmix

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
#include <cstdint>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace probmix {

/// Deterministic counter-based generator (splitmix64 core). All sampling is
/// hand-rolled so that a run produces identical draws on every platform,
/// independent of standard-library distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1); safe as a logarithm argument.
  double uniform_pos() {
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return u;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller, caching the paired draw.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  /// log of a Gamma(alpha, 1) variate. Marsaglia-Tsang applied at shape
  /// alpha+1 with the boost G_a = G_{a+1} * U^{1/a}, carried out in log space
  /// so that shapes as small as 1e-32 stay representable.
  double log_gamma(double alpha) {
    if (!(alpha > 0.0)) throw std::invalid_argument("log_gamma: alpha <= 0");
    const double d = alpha + 1.0 - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform_pos();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
        return std::log(d * v) + std::log(uniform_pos()) / alpha;
      }
    }
  }

  double gamma(double alpha) { return std::exp(log_gamma(alpha)); }

  /// Beta(a, b) via the gamma ratio, evaluated as a logistic of log-gamma
  /// draws so extreme shapes give exact 0/1 instead of NaN.
  double beta(double a, double b) {
    const double lg_a = log_gamma(a);
    const double lg_b = log_gamma(b);
    return 1.0 / (1.0 + std::exp(lg_b - lg_a));
  }

  /// Index drawn from unnormalized nonnegative weights.
  int categorical(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw std::invalid_argument("categorical: zero mass");
    double u = uniform() * total;
    for (std::size_t k = 0; k + 1 < weights.size(); ++k) {
      u -= weights[k];
      if (u < 0.0) return static_cast<int>(k);
    }
    return static_cast<int>(weights.size()) - 1;
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Expands one master seed into independent named streams, so edge sampling,
/// mixing coefficients, perturbations and embedding noise never share state.
class RngPool {
 public:
  explicit RngPool(std::uint64_t master_seed) : master_(master_seed) {}

  Rng stream(std::string_view name) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (char ch : name) {
      h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(ch));
      h *= 0x100000001b3ULL;
    }
    // one splitmix round decorrelates master and stream tag
    std::uint64_t z = master_ ^ (h + 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return Rng(z ^ (z >> 31));
  }

  std::uint64_t master_seed() const { return master_; }

 private:
  std::uint64_t master_;
};

}  // namespace probmix

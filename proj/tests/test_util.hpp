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

// Test-only oracles kept independent of the library's implementation paths.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <utility>
#include <vector>

#include "probmix/array.hpp"
#include "probmix/rng.hpp"

namespace probmix::testing {

/// Trapezoid quadrature of a 1-D density.
inline double quadrature_mass(const std::function<double(double)>& density, double lo, double hi,
                              int panels = 40000) {
  double acc = 0.5 * (density(lo) + density(hi));
  for (int i = 1; i < panels; ++i) acc += density(lo + (hi - lo) * i / panels);
  return acc * (hi - lo) / panels;
}

/// O(n^2) nearest-neighbor oracle: for every row, the K nearest other rows by
/// Euclidean distance, ties to the lower index.
inline std::set<std::pair<int, int>> brute_force_knn_edges(const Array& features, int k) {
  std::set<std::pair<int, int>> edges;
  const int n = static_cast<int>(features.rows);
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> dist;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      double d2 = 0.0;
      for (std::size_t c = 0; c < features.cols; ++c) {
        const double diff = features.at(i, c) - features.at(j, c);
        d2 += diff * diff;
      }
      dist.emplace_back(d2, j);
    }
    std::sort(dist.begin(), dist.end());
    for (int m = 0; m < k; ++m) edges.emplace(i, dist[m].second);
  }
  return edges;
}

inline std::vector<double> random_vector(Rng& rng, int n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline Array random_array(Rng& rng, std::size_t rows, std::size_t cols, double lo = -1.0,
                          double hi = 1.0) {
  Array a(rows, cols);
  for (double& x : a.data) x = rng.uniform(lo, hi);
  return a;
}

}  // namespace probmix::testing

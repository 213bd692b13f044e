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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include "probmix/array.hpp"
#include "probmix/rng.hpp"

namespace probmix {

/// Weighted directed edge set over training indices; weights are a probability
/// distribution over edges.
struct SamplingGraph {
  std::size_t n = 0;
  std::vector<std::pair<int, int>> edges;
  std::vector<double> weights;

  std::size_t num_edges() const { return edges.size(); }
};

/// All n^2 ordered pairs, self-pairs included, each with weight 1/n^2.
inline SamplingGraph fully_connected(std::size_t n) {
  if (n == 0) throw std::invalid_argument("fully_connected: n must be >= 1");
  SamplingGraph g;
  g.n = n;
  g.edges.reserve(n * n);
  const double w = 1.0 / (static_cast<double>(n) * static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      g.edges.emplace_back(static_cast<int>(i), static_cast<int>(j));
    }
  }
  g.weights.assign(g.edges.size(), w);
  return g;
}

/// Directed edge i -> j for each of the K Euclidean-nearest neighbors of row i
/// (self excluded), uniform weights 1/(nK). Distance ties break toward the
/// lower index.
inline SamplingGraph knn_graph(const Array& features, int k) {
  const std::size_t n = features.rows;
  if (k < 1) throw std::invalid_argument("knn_graph: K must be >= 1");
  if (static_cast<std::size_t>(k) >= n) throw std::invalid_argument("knn_graph: K must be < n");
  SamplingGraph g;
  g.n = n;
  g.edges.reserve(n * static_cast<std::size_t>(k));
  std::vector<std::pair<double, int>> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    dist.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double d2 = 0.0;
      for (std::size_t c = 0; c < features.cols; ++c) {
        const double diff = features.at(i, c) - features.at(j, c);
        d2 += diff * diff;
      }
      dist.emplace_back(d2, static_cast<int>(j));
    }
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    std::vector<int> neighbors(k);
    for (int m = 0; m < k; ++m) neighbors[m] = dist[m].second;
    std::sort(neighbors.begin(), neighbors.end());
    for (int j : neighbors) g.edges.emplace_back(static_cast<int>(i), j);
  }
  g.weights.assign(g.edges.size(), 1.0 / static_cast<double>(g.edges.size()));
  return g;
}

/// i.i.d. edge draws from the categorical distribution defined by the weights.
inline std::vector<std::pair<int, int>> sample_edges(const SamplingGraph& g, std::size_t count,
                                                     Rng& rng) {
  if (g.edges.empty()) throw std::invalid_argument("sample_edges: empty graph");
  std::vector<double> cumulative(g.weights.size());
  std::partial_sum(g.weights.begin(), g.weights.end(), cumulative.begin());
  const double total = cumulative.back();
  std::vector<std::pair<int, int>> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    const double u = rng.uniform() * total;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    std::size_t idx = static_cast<std::size_t>(it - cumulative.begin());
    if (idx >= g.edges.size()) idx = g.edges.size() - 1;
    out.push_back(g.edges[idx]);
  }
  return out;
}

}  // namespace probmix

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
#include <map>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "probmix/dataset.hpp"
#include "probmix/losses.hpp"
#include "probmix/model.hpp"

namespace probmix {

struct EvalOptions {
  enum class Mode { kDeterministic, kMc } mode = Mode::kDeterministic;
  int mc_samples = 64;
};

/// Mean per-sample NLL. Deterministic mode propagates embedding means through
/// the plain forward pass; MC mode averages likelihoods over sampled
/// embeddings before taking -log (only meaningful for embedding models).
inline double mean_nll(const Mlp& model, const Dataset& data, EvalOptions opts = {},
                       Rng* rng = nullptr) {
  if (data.size() == 0) throw std::invalid_argument("mean_nll: empty dataset");
  Tape tape;
  FrozenSource src{&model.params};
  if (opts.mode == EvalOptions::Mode::kDeterministic) {
    TapeOutput out = model.forward(tape, src, tape.constant(data.features));
    Var rows = out.task == Task::kRegression
                   ? gaussian_nll_rows(tape, TapeGauss{out.mean, out.var}, data.targets)
                   : categorical_nll_rows(tape, out.logits, data.labels);
    return tape.scalar_value(mean(rows));
  }
  if (rng == nullptr) throw std::invalid_argument("mean_nll: MC mode needs an RNG");
  if (opts.mc_samples < 1) throw std::invalid_argument("mean_nll: mc_samples must be >= 1");
  Var x = tape.constant(data.features);
  Var embed_mean = model.features(tape, src, x, model.spec.mix_layer);
  Var embed_var = model.spec.aux_variance_net ? model.aux_variance(tape, src, x)
                                              : model.encode(tape, src, x).var;
  const std::size_t n = data.size();
  std::vector<double> acc(n, -std::numeric_limits<double>::infinity());
  const int dz = static_cast<int>(tape.value(embed_mean).cols);
  for (int s = 0; s < opts.mc_samples; ++s) {
    Array noise(n, dz);
    for (double& v : noise.data) v = rng->normal();
    Var z = add(embed_mean, mul(sqrt(embed_var), tape.constant(noise)));
    TapeOutput out = model.decode(tape, src, z);
    Var rows = out.task == Task::kRegression
                   ? gaussian_nll_rows(tape, TapeGauss{out.mean, out.var}, data.targets)
                   : categorical_nll_rows(tape, out.logits, data.labels);
    const Array& values = tape.value(rows);
    for (std::size_t r = 0; r < n; ++r) acc[r] = log_add_exp(acc[r], -values.at(r, 0));
  }
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    total += -(acc[r] - std::log(static_cast<double>(opts.mc_samples)));
  }
  return total / static_cast<double>(n);
}

inline double mse(const Mlp& model, const Dataset& data) {
  if (data.task != Task::kRegression) throw std::invalid_argument("mse: regression only");
  if (data.size() == 0) throw std::invalid_argument("mse: empty dataset");
  Tape tape;
  FrozenSource src{&model.params};
  TapeOutput out = model.forward(tape, src, tape.constant(data.features));
  const Array& pred = tape.value(out.mean);
  double acc = 0.0;
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (std::size_t c = 0; c < data.targets.cols; ++c) {
      const double diff = pred.at(r, c) - data.targets.at(r, c);
      acc += diff * diff;
    }
  }
  return acc / static_cast<double>(data.size());
}

inline double rmse(const Mlp& model, const Dataset& data) { return std::sqrt(mse(model, data)); }

inline double accuracy(const Mlp& model, const Dataset& data) {
  if (data.task != Task::kClassification) throw std::invalid_argument("accuracy: classification only");
  if (data.size() == 0) throw std::invalid_argument("accuracy: empty dataset");
  Tape tape;
  FrozenSource src{&model.params};
  TapeOutput out = model.forward(tape, src, tape.constant(data.features));
  const Array& logits = tape.value(out.logits);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < data.size(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols; ++c) {
      if (logits.at(r, c) > logits.at(r, best)) best = c;
    }
    if (static_cast<int>(best) == data.labels[r]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

/// One metric value of one run; rows of the results CSV.
struct ExperimentRecord {
  std::string run_id;
  std::string method;
  std::string pooling;
  double alpha = 0.0;
  double beta = 0.0;
  int k_neighbors = 0;
  std::uint64_t seed = 0;
  std::string split;
  std::string metric;
  double value = 0.0;
};

struct AggregateKey {
  std::string method;
  std::string pooling;
  double alpha;
  double beta;
  int k_neighbors;
  std::string split;
  std::string metric;

  bool operator<(const AggregateKey& o) const {
    return std::tie(method, pooling, alpha, beta, k_neighbors, split, metric) <
           std::tie(o.method, o.pooling, o.alpha, o.beta, o.k_neighbors, o.split, o.metric);
  }
};

struct AggregateValue {
  double mean = 0.0;
  double stddev = 0.0;  // sample std, 0 for singleton groups
  std::size_t count = 0;
};

/// Mean and (n-1)-denominator std per method/config/split/metric group.
inline std::map<AggregateKey, AggregateValue> aggregate(
    const std::vector<ExperimentRecord>& records) {
  std::map<AggregateKey, std::vector<double>> groups;
  for (const ExperimentRecord& r : records) {
    groups[AggregateKey{r.method, r.pooling, r.alpha, r.beta, r.k_neighbors, r.split, r.metric}]
        .push_back(r.value);
  }
  std::map<AggregateKey, AggregateValue> out;
  for (const auto& [key, values] : groups) {
    AggregateValue agg;
    agg.count = values.size();
    for (double v : values) agg.mean += v;
    agg.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - agg.mean) * (v - agg.mean);
      agg.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    out[key] = agg;
  }
  return out;
}

}  // namespace probmix

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

#include <stdexcept>
#include <string>
#include <vector>

#include "probmix/dataset.hpp"
#include "probmix/graph.hpp"
#include "probmix/losses.hpp"
#include "probmix/metrics.hpp"
#include "probmix/model.hpp"
#include "probmix/optimizer.hpp"
#include "probmix/rng.hpp"

namespace probmix {

struct TrainOptions {
  OptAlgo algorithm = OptAlgo::kFullBatchGd;
  double learning_rate = 0.01;
  int epochs = 500;
  enum class Selection { kObjective, kNll } selection = Selection::kObjective;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int epoch, const std::string& what)
      : std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ": " + what),
        epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

struct TrainResult {
  ParamSet best_params;
  int best_epoch = 0;
  double best_selection_value = 0.0;
  std::vector<double> train_loss_history;
  std::vector<double> val_objective_history;
  std::vector<double> val_nll_history;
};

namespace detail {
inline SamplingGraph build_graph(const Dataset& data, const RegularizerConfig& reg) {
  if (reg.local && static_cast<std::size_t>(reg.k_neighbors) < data.size()) {
    return knn_graph(data.features, reg.k_neighbors);
  }
  return fully_connected(data.size());
}
}  // namespace detail

/// Full-batch training loop. Every epoch takes one optimizer step on the
/// configured objective; validation is scored each epoch (epoch 0 = the
/// initialization) and the parameters with the best selection value win.
inline TrainResult train_model(Mlp& model, const Dataset& train, const Dataset& val,
                               const RegularizerConfig& reg, const TrainOptions& opts,
                               const RngPool& pool) {
  if (train.size() == 0) throw std::invalid_argument("train_model: empty training split");
  Rng edge_rng = pool.stream("edges");
  Rng lambda_rng = pool.stream("lambda");
  Rng target_rng = pool.stream("perturb");
  Rng embed_rng = pool.stream("embed");
  Rng val_edge_rng = pool.stream("val-edges");
  Rng val_lambda_rng = pool.stream("val-lambda");
  Rng val_target_rng = pool.stream("val-perturb");
  Rng val_embed_rng = pool.stream("val-embed");

  SamplingGraph train_graph;
  SamplingGraph val_graph;
  if (reg.needs_pairs()) {
    train_graph = detail::build_graph(train, reg);
    if (val.size() > 0) val_graph = detail::build_graph(val, reg);
  }
  const int dz = model.spec.embed_dim();

  OptimizerState opt = opts.algorithm == OptAlgo::kAdam ? make_adam(opts.learning_rate)
                                                        : make_gd(opts.learning_rate);

  auto val_scores = [&](const Mlp& m) -> std::pair<double, double> {
    if (val.size() == 0) return {0.0, 0.0};
    const double nll = mean_nll(m, val);
    double objective = nll;
    if (reg.needs_pairs()) {
      VicinalPlan plan = make_plan(val_graph, val.size(), val, reg, dz, val_edge_rng,
                                   val_lambda_rng, val_target_rng, val_embed_rng);
      objective = evaluate_loss(m.params, [&](Tape& tape, const Tape::Bound& bound) {
        return build_loss(tape, bound, m, val, reg, plan);
      });
    }
    return {objective, nll};
  };

  TrainResult result;
  result.best_params = model.params;
  const bool have_val = val.size() > 0;
  auto selection_value = [&](double objective, double nll) {
    return opts.selection == TrainOptions::Selection::kObjective ? objective : nll;
  };
  {
    const auto [objective, nll] = val_scores(model);
    result.val_objective_history.push_back(objective);
    result.val_nll_history.push_back(nll);
    result.best_selection_value = selection_value(objective, nll);
    result.best_epoch = 0;
  }

  for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
    VicinalPlan plan;
    if (reg.needs_pairs()) {
      plan = make_plan(train_graph, train.size(), train, reg, dz, edge_rng, lambda_rng,
                       target_rng, embed_rng);
    }
    EvalResult step;
    try {
      step = evaluate_with_gradients(model.params, [&](Tape& tape, const Tape::Bound& bound) {
        return build_loss(tape, bound, model, train, reg, plan);
      });
      optimizer_step(model.params, step.grads, opt);
    } catch (const NonFiniteError& err) {
      throw TrainingDiverged(epoch, err.what());
    }
    result.train_loss_history.push_back(step.loss);

    if (have_val) {
      const auto [objective, nll] = val_scores(model);
      result.val_objective_history.push_back(objective);
      result.val_nll_history.push_back(nll);
      const double score = selection_value(objective, nll);
      if (score < result.best_selection_value) {
        result.best_selection_value = score;
        result.best_epoch = epoch;
        result.best_params = model.params;
      }
    } else {
      result.best_epoch = epoch;
      result.best_params = model.params;
    }
  }
  return result;
}

}  // namespace probmix

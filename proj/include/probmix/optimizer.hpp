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

#include "probmix/autodiff.hpp"

namespace probmix {

enum class OptAlgo { kAdam, kFullBatchGd };

struct OptimizerState {
  OptAlgo algorithm = OptAlgo::kFullBatchGd;
  long step = 0;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  ParamSet first_moment;
  ParamSet second_moment;
};

inline OptimizerState make_gd(double learning_rate) {
  OptimizerState s;
  s.algorithm = OptAlgo::kFullBatchGd;
  s.learning_rate = learning_rate;
  return s;
}

inline OptimizerState make_adam(double learning_rate, double beta1 = 0.9,
                                double beta2 = 0.999, double epsilon = 1e-8) {
  OptimizerState s;
  s.algorithm = OptAlgo::kAdam;
  s.learning_rate = learning_rate;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.epsilon = epsilon;
  return s;
}

namespace detail {
inline void check_step_inputs(const ParamSet& params, const ParamSet& grads) {
  if (params.items.size() != grads.items.size()) {
    throw std::invalid_argument("optimizer: gradient layout mismatch");
  }
  for (std::size_t i = 0; i < params.items.size(); ++i) {
    if (params.items[i].first != grads.items[i].first ||
        !params.items[i].second.same_shape(grads.items[i].second)) {
      throw std::invalid_argument("optimizer: gradient slot mismatch at " +
                                  params.items[i].first);
    }
  }
  if (!grads.all_finite()) throw NonFiniteError("gradient");
}
}  // namespace detail

inline void gd_step(ParamSet& params, const ParamSet& grads, OptimizerState& state) {
  if (state.algorithm != OptAlgo::kFullBatchGd) {
    throw std::invalid_argument("gd_step: state is not full-batch-gd");
  }
  detail::check_step_inputs(params, grads);
  for (std::size_t i = 0; i < params.items.size(); ++i) {
    Array& p = params.items[i].second;
    const Array& g = grads.items[i].second;
    for (std::size_t j = 0; j < p.size(); ++j) p.data[j] -= state.learning_rate * g.data[j];
  }
  ++state.step;
  if (!params.all_finite()) throw NonFiniteError("gd_step");
}

inline void adam_step(ParamSet& params, const ParamSet& grads, OptimizerState& state) {
  if (state.algorithm != OptAlgo::kAdam) {
    throw std::invalid_argument("adam_step: state is not adam");
  }
  detail::check_step_inputs(params, grads);
  if (state.first_moment.items.empty()) {
    state.first_moment = params.zeros_like();
    state.second_moment = params.zeros_like();
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.items.size(); ++i) {
    Array& p = params.items[i].second;
    Array& m = state.first_moment.items[i].second;
    Array& v = state.second_moment.items[i].second;
    const Array& g = grads.items[i].second;
    for (std::size_t j = 0; j < p.size(); ++j) {
      m.data[j] = state.beta1 * m.data[j] + (1.0 - state.beta1) * g.data[j];
      v.data[j] = state.beta2 * v.data[j] + (1.0 - state.beta2) * g.data[j] * g.data[j];
      const double m_hat = m.data[j] / bc1;
      const double v_hat = v.data[j] / bc2;
      p.data[j] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
  if (!params.all_finite()) throw NonFiniteError("adam_step");
}

inline void optimizer_step(ParamSet& params, const ParamSet& grads, OptimizerState& state) {
  if (state.algorithm == OptAlgo::kAdam) {
    adam_step(params, grads, state);
  } else {
    gd_step(params, grads, state);
  }
}

}  // namespace probmix

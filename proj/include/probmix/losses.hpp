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

#include "probmix/autodiff.hpp"
#include "probmix/dataset.hpp"
#include "probmix/graph.hpp"
#include "probmix/mixing.hpp"
#include "probmix/model.hpp"

namespace probmix {

enum class MethodFamily { kErm, kMix, kManifoldMix, kProbMix, kMProbMix, kMProbMixStar };
enum class Criterion { kExpectedLogLikelihood, kLogExpectedLikelihood };
enum class EmbedMode { kSample, kMean };

struct RegularizerConfig {
  MethodFamily family = MethodFamily::kErm;
  bool local = false;
  Pooling pooling = Pooling::kLogLinear;
  double alpha = 0.1;
  double beta = 0.01;
  int k_neighbors = 5;
  int mc_samples = 1;
  Criterion criterion = Criterion::kExpectedLogLikelihood;
  LabelMode label_mode = LabelMode::kExact;
  EmbedMode embed_mode = EmbedMode::kSample;

  bool needs_pairs() const { return family != MethodFamily::kErm; }
};

/// All randomness of one training step, realized up front: sampled edges,
/// per-draw mixing coefficients, fused targets and embedding noise. Loss
/// builders consume a plan and stay deterministic, which lets tests pin
/// individual draws. Draws are laid out pair-major: index p * K + k.
struct VicinalPlan {
  std::vector<int> src;
  std::vector<int> dst;
  int mc_samples = 1;
  std::vector<double> lambda;
  Array reg_targets;
  Array cls_target_probs;
  std::vector<int> cls_targets;
  Array embed_noise;
  std::vector<double> embed_pick;  // linear-pool component choices, 1 = src side
  Array aux_noise;                 // per-sample noise for the separate variance net

  std::size_t pairs() const { return src.size(); }
  std::size_t draws() const { return lambda.size(); }
};

inline VicinalPlan make_plan(const SamplingGraph& graph, std::size_t n_pairs,
                             const Dataset& data, const RegularizerConfig& reg, int embed_dim,
                             Rng& edge_rng, Rng& lambda_rng, Rng& target_rng, Rng& embed_rng) {
  VicinalPlan plan;
  if (!reg.needs_pairs()) return plan;
  const bool probabilistic =
      reg.family == MethodFamily::kProbMix || reg.family == MethodFamily::kMProbMix ||
      reg.family == MethodFamily::kMProbMixStar;
  const int k_draws = probabilistic ? reg.mc_samples : 1;
  if (k_draws < 1) throw std::invalid_argument("make_plan: mc_samples must be >= 1");

  const auto edges = sample_edges(graph, n_pairs, edge_rng);
  plan.src.reserve(n_pairs);
  plan.dst.reserve(n_pairs);
  for (const auto& [i, j] : edges) {
    plan.src.push_back(i);
    plan.dst.push_back(j);
  }
  plan.mc_samples = k_draws;
  const std::size_t draws = n_pairs * static_cast<std::size_t>(k_draws);
  plan.lambda.resize(draws);
  const MixingDistribution mixing{reg.alpha};
  for (double& lam : plan.lambda) lam = sample_lambda(mixing, lambda_rng);

  if (data.task == Task::kRegression) {
    plan.reg_targets = Array(draws, data.targets.cols);
    for (std::size_t p = 0; p < n_pairs; ++p) {
      const std::vector<double> y_i = data.target_row(plan.src[p]);
      const std::vector<double> y_j = data.target_row(plan.dst[p]);
      for (int k = 0; k < k_draws; ++k) {
        const std::size_t d = p * k_draws + k;
        const double beta = probabilistic ? reg.beta : 0.0;
        const Pooling target_pooling = probabilistic ? reg.pooling : Pooling::kLogLinear;
        const FusedTarget t = fuse_perturbed_regression(y_i, y_j, plan.lambda[d], beta,
                                                        target_rng, target_pooling);
        for (std::size_t c = 0; c < t.value.size(); ++c) plan.reg_targets.at(d, c) = t.value[c];
      }
    }
  } else {
    if (reg.label_mode == LabelMode::kExact) {
      plan.cls_target_probs = Array(draws, data.num_classes);
    } else {
      plan.cls_targets.resize(draws);
    }
    for (std::size_t p = 0; p < n_pairs; ++p) {
      const int y_i = data.labels[static_cast<std::size_t>(plan.src[p])];
      const int y_j = data.labels[static_cast<std::size_t>(plan.dst[p])];
      for (int k = 0; k < k_draws; ++k) {
        const std::size_t d = p * k_draws + k;
        // mixup-style methods mix one-hot labels, i.e. a linear fusion at beta = 0
        const double beta = probabilistic ? reg.beta : 0.0;
        const Pooling target_pooling = probabilistic ? reg.pooling : Pooling::kLinear;
        const FusedTarget t =
            fuse_perturbed_classification(y_i, y_j, plan.lambda[d], beta, data.num_classes,
                                          target_pooling, reg.label_mode, target_rng);
        if (reg.label_mode == LabelMode::kExact) {
          for (int c = 0; c < data.num_classes; ++c) {
            plan.cls_target_probs.at(d, c) = t.label_probs[static_cast<std::size_t>(c)];
          }
        } else {
          plan.cls_targets[d] = t.label;
        }
      }
    }
  }

  if (reg.family == MethodFamily::kMProbMix || reg.family == MethodFamily::kMProbMixStar) {
    if (reg.pooling == Pooling::kLinear) {
      plan.embed_pick.resize(draws);
      for (std::size_t d = 0; d < draws; ++d) {
        plan.embed_pick[d] = embed_rng.uniform() < plan.lambda[d] ? 1.0 : 0.0;
      }
    }
    const bool sample_z =
        reg.family == MethodFamily::kMProbMix && reg.embed_mode == EmbedMode::kSample;
    if (sample_z) {
      plan.embed_noise = Array(draws, embed_dim);
      for (double& v : plan.embed_noise.data) v = embed_rng.normal();
    }
    if (reg.family == MethodFamily::kMProbMixStar) {
      plan.aux_noise = Array(data.size(), embed_dim);
      for (double& v : plan.aux_noise.data) v = embed_rng.normal();
    }
  }
  return plan;
}

namespace detail {

inline Array gather_draws(const Array& rows, const std::vector<int>& pair_idx, int k_draws) {
  std::vector<int> expanded;
  expanded.reserve(pair_idx.size() * static_cast<std::size_t>(k_draws));
  for (int idx : pair_idx) {
    for (int k = 0; k < k_draws; ++k) expanded.push_back(idx);
  }
  return gather_rows(rows, expanded);
}

inline std::vector<double> one_minus(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = 1.0 - v[i];
  return out;
}

inline Array log_column_matrix(const std::vector<double>& v, std::size_t cols) {
  Array out(v.size(), cols);
  for (std::size_t r = 0; r < v.size(); ++r) {
    const double lg = v[r] > 0.0 ? std::log(v[r]) : -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = lg;
  }
  return out;
}

}  // namespace detail

/// Per-row Gaussian NLL column for a batch of diagonal Gaussians.
inline Var gaussian_nll_rows(Tape& tape, const TapeGauss& g, const Array& targets) {
  Var y = tape.constant(targets);
  Var quad = div(square(sub(y, g.mean)), g.var);
  Var elems = add_scalar(mul_scalar(add(log(g.var), quad), 0.5), kHalfLog2Pi);
  return sum_rows(elems);
}

inline Var categorical_nll_rows(Tape& tape, Var logits, const Array& target_probs) {
  return sub(logsumexp_rows(logits), sum_rows(mul(tape.constant(target_probs), logits)));
}

inline Var categorical_nll_rows(Tape& tape, Var logits, const std::vector<int>& labels) {
  (void)tape;
  return sub(logsumexp_rows(logits), select_columns(logits, labels));
}

inline Var output_nll_rows(Tape& tape, const TapeOutput& out, const VicinalPlan& plan) {
  if (out.task == Task::kRegression) {
    return gaussian_nll_rows(tape, TapeGauss{out.mean, out.var}, plan.reg_targets);
  }
  if (!plan.cls_targets.empty()) return categorical_nll_rows(tape, out.logits, plan.cls_targets);
  return categorical_nll_rows(tape, out.logits, plan.cls_target_probs);
}

/// Collapses per-draw NLLs into the scalar objective. The expected-log
/// criterion is the plain mean; log-expected takes -log of the mean
/// likelihood per pair before averaging. Identical when K = 1.
inline Var aggregate_draws(Tape& tape, Var nll_rows, std::size_t pairs, int k_draws,
                           Criterion criterion) {
  (void)tape;
  if (criterion == Criterion::kExpectedLogLikelihood || k_draws == 1) return mean(nll_rows);
  Var per_draw = reshape(nll_rows, pairs, static_cast<std::size_t>(k_draws));
  Var lse = logsumexp_rows(neg(per_draw));
  return mean(neg(add_scalar(lse, -std::log(static_cast<double>(k_draws)))));
}

/// Log-linear fusion of two batched diagonal Gaussians with per-row weights.
/// Endpoint rows (lambda exactly 0 or 1) are blended through 0/1 masks so
/// they reproduce the input parameters bit-for-bit. shared_variance marks
/// heads whose variance nodes carry identical values (homoscedastic), where
/// fusion leaves the variance untouched and blends only the means.
inline TapeGauss fuse_gaussian_rows(Tape& tape, const TapeGauss& g_i, const TapeGauss& g_j,
                                    const std::vector<double>& lam, bool shared_variance) {
  (void)tape;
  const std::vector<double> lam_c = detail::one_minus(lam);
  if (shared_variance) {
    TapeGauss out;
    out.mean = add(scale_rows(g_i.mean, lam), scale_rows(g_j.mean, lam_c));
    out.var = g_i.var;
    return out;
  }
  std::vector<double> at_i(lam.size(), 0.0), at_j(lam.size(), 0.0), interior(lam.size(), 0.0);
  for (std::size_t r = 0; r < lam.size(); ++r) {
    if (lam[r] == 1.0) {
      at_i[r] = 1.0;
    } else if (lam[r] == 0.0) {
      at_j[r] = 1.0;
    } else {
      interior[r] = 1.0;
    }
  }
  Var precision = add(scale_rows(recip(g_i.var), lam), scale_rows(recip(g_j.var), lam_c));
  Var var_general = recip(precision);
  Var mean_general = mul(var_general, add(scale_rows(div(g_i.mean, g_i.var), lam),
                                          scale_rows(div(g_j.mean, g_j.var), lam_c)));
  TapeGauss out;
  out.var = add(add(scale_rows(g_i.var, at_i), scale_rows(g_j.var, at_j)),
                scale_rows(var_general, interior));
  out.mean = add(add(scale_rows(g_i.mean, at_i), scale_rows(g_j.mean, at_j)),
                 scale_rows(mean_general, interior));
  return out;
}

template <class ModelT, class Src>
Var erm_loss(Tape& tape, const Src& src, const ModelT& model, const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("erm_loss: empty batch");
  TapeOutput out = model.forward(tape, src, tape.constant(data.features));
  Var rows = out.task == Task::kRegression
                 ? gaussian_nll_rows(tape, TapeGauss{out.mean, out.var}, data.targets)
                 : categorical_nll_rows(tape, out.logits, data.labels);
  return mean(rows);
}

/// Vanilla mixup: the model sees convex input combinations and is scored
/// against the interpolated (regression) or expectation-mixed (classification)
/// targets from the plan.
template <class ModelT, class Src>
Var mixup_loss(Tape& tape, const Src& src, const ModelT& model, const Dataset& data,
               const VicinalPlan& plan) {
  const Array x_i = detail::gather_draws(data.features, plan.src, plan.mc_samples);
  const Array x_j = detail::gather_draws(data.features, plan.dst, plan.mc_samples);
  Array mixed(x_i.rows, x_i.cols);
  for (std::size_t r = 0; r < x_i.rows; ++r) {
    const double lam = plan.lambda[r];
    for (std::size_t c = 0; c < x_i.cols; ++c) {
      mixed.at(r, c) = lam * x_i.at(r, c) + (1.0 - lam) * x_j.at(r, c);
    }
  }
  TapeOutput out = model.forward(tape, src, tape.constant(mixed));
  return aggregate_draws(tape, output_nll_rows(tape, out, plan), plan.pairs(), plan.mc_samples,
                         Criterion::kExpectedLogLikelihood);
}

/// Manifold mixup: interpolation happens between hidden activations at
/// mix_layer, then continues through the head.
template <class ModelT, class Src>
Var manifold_mixup_loss(Tape& tape, const Src& src, const ModelT& model, const Dataset& data,
                        const VicinalPlan& plan, int mix_layer) {
  const Array x_i = detail::gather_draws(data.features, plan.src, plan.mc_samples);
  const Array x_j = detail::gather_draws(data.features, plan.dst, plan.mc_samples);
  Var z_i = model.features(tape, src, tape.constant(x_i), mix_layer);
  Var z_j = model.features(tape, src, tape.constant(x_j), mix_layer);
  Var z_mixed = add(scale_rows(z_i, plan.lambda),
                    scale_rows(z_j, detail::one_minus(plan.lambda)));
  TapeOutput out = model.head_from(tape, src, z_mixed, mix_layer);
  return aggregate_draws(tape, output_nll_rows(tape, out, plan), plan.pairs(), plan.mc_samples,
                         Criterion::kExpectedLogLikelihood);
}

/// ProbMix: the two predicted conditionals are fused (log-linearly into a
/// single member of the family, or linearly into a two-component mixture) and
/// the fusion is scored at the plan's latent targets.
template <class ModelT, class Src>
Var probmix_loss(Tape& tape, const Src& src, const ModelT& model, const Dataset& data,
                 const VicinalPlan& plan, Pooling pooling, Criterion criterion,
                 bool shared_variance = false) {
  const Array x_i = detail::gather_draws(data.features, plan.src, plan.mc_samples);
  const Array x_j = detail::gather_draws(data.features, plan.dst, plan.mc_samples);
  TapeOutput out_i = model.forward(tape, src, tape.constant(x_i));
  TapeOutput out_j = model.forward(tape, src, tape.constant(x_j));
  const std::vector<double> lam_c = detail::one_minus(plan.lambda);
  Var rows;
  if (out_i.task == Task::kRegression) {
    if (pooling == Pooling::kLogLinear) {
      TapeGauss fused = fuse_gaussian_rows(tape, TapeGauss{out_i.mean, out_i.var},
                                           TapeGauss{out_j.mean, out_j.var}, plan.lambda,
                                           shared_variance);
      rows = gaussian_nll_rows(tape, fused, plan.reg_targets);
    } else {
      Var log_p_i = neg(gaussian_nll_rows(tape, TapeGauss{out_i.mean, out_i.var},
                                          plan.reg_targets));
      Var log_p_j = neg(gaussian_nll_rows(tape, TapeGauss{out_j.mean, out_j.var},
                                          plan.reg_targets));
      Var log_w_i = tape.constant(detail::log_column_matrix(plan.lambda, 1));
      Var log_w_j = tape.constant(detail::log_column_matrix(lam_c, 1));
      rows = neg(logaddexp(add(log_p_i, log_w_i), add(log_p_j, log_w_j)));
    }
  } else {
    if (pooling == Pooling::kLogLinear) {
      Var fused_logits =
          add(scale_rows(out_i.logits, plan.lambda), scale_rows(out_j.logits, lam_c));
      rows = plan.cls_targets.empty()
                 ? categorical_nll_rows(tape, fused_logits, plan.cls_target_probs)
                 : categorical_nll_rows(tape, fused_logits, plan.cls_targets);
    } else {
      const std::size_t classes = tape.value(out_i.logits).cols;
      Var log_p_i = sub_colvec(out_i.logits, logsumexp_rows(out_i.logits));
      Var log_p_j = sub_colvec(out_j.logits, logsumexp_rows(out_j.logits));
      Var log_mix = logaddexp(
          add(log_p_i, tape.constant(detail::log_column_matrix(plan.lambda, classes))),
          add(log_p_j, tape.constant(detail::log_column_matrix(lam_c, classes))));
      if (plan.cls_targets.empty()) {
        rows = neg(sum_rows(mul(tape.constant(plan.cls_target_probs), log_mix)));
      } else {
        rows = neg(select_columns(log_mix, plan.cls_targets));
      }
    }
  }
  return aggregate_draws(tape, rows, plan.pairs(), plan.mc_samples, criterion);
}

/// M-ProbMix: the embedding distributions are fused, an embedding is drawn by
/// reparameterization (or the fused mean is propagated), decoded, and scored
/// at the plan targets.
template <class ModelT, class Src>
Var m_probmix_loss(Tape& tape, const Src& src, const ModelT& model, const Dataset& data,
                   const VicinalPlan& plan, Pooling pooling, Criterion criterion,
                   EmbedMode embed_mode, bool shared_variance = false) {
  const Array x_i = detail::gather_draws(data.features, plan.src, plan.mc_samples);
  const Array x_j = detail::gather_draws(data.features, plan.dst, plan.mc_samples);
  TapeGauss enc_i = model.encode(tape, src, tape.constant(x_i));
  TapeGauss enc_j = model.encode(tape, src, tape.constant(x_j));
  TapeGauss fused;
  if (pooling == Pooling::kLogLinear) {
    fused = fuse_gaussian_rows(tape, enc_i, enc_j, plan.lambda, shared_variance);
  } else {
    if (plan.embed_pick.size() != plan.draws()) {
      throw std::invalid_argument("m_probmix_loss: plan lacks component picks");
    }
    const std::vector<double> pick_c = detail::one_minus(plan.embed_pick);
    fused.mean = add(scale_rows(enc_i.mean, plan.embed_pick), scale_rows(enc_j.mean, pick_c));
    fused.var = add(scale_rows(enc_i.var, plan.embed_pick), scale_rows(enc_j.var, pick_c));
  }
  Var z = fused.mean;
  if (embed_mode == EmbedMode::kSample) {
    if (plan.embed_noise.size() == 0) {
      throw std::invalid_argument("m_probmix_loss: plan lacks embedding noise");
    }
    z = add(fused.mean, mul(sqrt(fused.var), tape.constant(plan.embed_noise)));
  }
  TapeOutput out = model.decode(tape, src, z);
  return aggregate_draws(tape, output_nll_rows(tape, out, plan), plan.pairs(), plan.mc_samples,
                         criterion);
}

/// Auxiliary objective for the separate-variance-network variant: the trunk
/// and decoder run frozen, so only the variance network receives gradients.
/// Fits the predictive embedding uncertainty used at inference.
template <class ModelT>
Var aux_variance_loss(Tape& tape, const Tape::Bound& bound, const ModelT& model,
                      const ParamSet& frozen_values, const Dataset& data, const Array& noise) {
  FrozenSource frozen{&frozen_values};
  BoundSource live{&bound};
  Var x = tape.constant(data.features);
  Var embed_mean = model.features(tape, frozen, x, model.spec.mix_layer);
  Var embed_var = model.aux_variance(tape, live, x);
  Var z = add(embed_mean, mul(sqrt(embed_var), tape.constant(noise)));
  TapeOutput out = model.decode(tape, frozen, z);
  Var rows = out.task == Task::kRegression
                 ? gaussian_nll_rows(tape, TapeGauss{out.mean, out.var}, data.targets)
                 : categorical_nll_rows(tape, out.logits, data.labels);
  return mean(rows);
}

/// Dispatch on the configured method family.
inline Var build_loss(Tape& tape, const Tape::Bound& bound, const Mlp& model,
                      const Dataset& data, const RegularizerConfig& reg,
                      const VicinalPlan& plan) {
  BoundSource src{&bound};
  const bool homoscedastic_head = model.spec.head == Head::kGaussianHomoscedastic;
  switch (reg.family) {
    case MethodFamily::kErm:
      return erm_loss(tape, src, model, data);
    case MethodFamily::kMix:
      return mixup_loss(tape, src, model, data, plan);
    case MethodFamily::kManifoldMix:
      return manifold_mixup_loss(tape, src, model, data, plan, model.spec.mix_layer);
    case MethodFamily::kProbMix:
      return probmix_loss(tape, src, model, data, plan, reg.pooling, reg.criterion,
                          homoscedastic_head);
    case MethodFamily::kMProbMix:
      return m_probmix_loss(tape, src, model, data, plan, reg.pooling, reg.criterion,
                            reg.embed_mode, model.spec.embedding_homoscedastic);
    case MethodFamily::kMProbMixStar: {
      Var main = m_probmix_loss(tape, src, model, data, plan, reg.pooling, reg.criterion,
                                EmbedMode::kMean, model.spec.embedding_homoscedastic);
      Var aux = aux_variance_loss(tape, bound, model, model.params, data, plan.aux_noise);
      return add(main, aux);
    }
  }
  throw std::logic_error("build_loss: unknown method family");
}

}  // namespace probmix

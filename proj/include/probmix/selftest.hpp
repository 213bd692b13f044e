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
#include <functional>
#include <iostream>
#include <string>

#include "probmix/densities.hpp"
#include "probmix/losses.hpp"
#include "probmix/model.hpp"
#include "probmix/rng.hpp"

namespace probmix {

/// Fast verification suite behind the `selftest` subcommand: the golden fused
/// densities, the fusion closure identities, the quadrature normalization and
/// the five equivalence properties. Returns the number of failed checks.
inline int run_selftest(std::ostream& os = std::cout) {
  int failures = 0;
  auto check = [&](const std::string& name, bool ok) {
    os << "[selftest] " << name << ": " << (ok ? "PASS" : "FAIL") << "\n";
    if (!ok) ++failures;
  };
  auto near = [](double a, double b, double tol) { return std::abs(a - b) <= tol; };

  // golden heteroscedastic example: cubic mean, (0.5 x^2 + 1)^2 variance
  {
    const GaussianDensity p_i = GaussianDensity::univariate(125.0, 182.25);
    const GaussianDensity p_j = GaussianDensity::univariate(-125.0, 182.25);
    const GaussianDensity fused = gaussian_log_linear_fuse(p_i, p_j, 0.8);
    check("golden fused density", near(fused.mean[0], 75.0, 1e-9) &&
                                      near(fused.variance[0], 182.25, 1e-9));
    const double mix_mean = 27.0, mix_var = 30.25;  // ground truth at mixed input 3
    check("golden mixup-path nll",
          near(gaussian_nll(GaussianDensity::univariate(mix_mean, mix_var), {80.0}), 49.05, 0.01));
    check("golden fused nll", near(gaussian_nll(fused, {80.0}), 3.59, 0.01));
  }

  // closure: fused precisions and logits are exact affine blends
  {
    Rng rng(41);
    bool gauss_ok = true, cat_ok = true;
    for (int trial = 0; trial < 100; ++trial) {
      const double lam = rng.uniform();
      GaussianDensity a({rng.normal()}, {0.1 + rng.uniform()});
      GaussianDensity b({rng.normal()}, {0.1 + rng.uniform()});
      const GaussianDensity f = gaussian_log_linear_fuse(a, b, lam);
      const double want = lam / a.variance[0] + (1.0 - lam) / b.variance[0];
      if (std::abs(1.0 / f.variance[0] - want) > 1e-12) gauss_ok = false;
      CategoricalDensity ca({rng.normal(), rng.normal(), rng.normal()});
      CategoricalDensity cb({rng.normal(), rng.normal(), rng.normal()});
      const CategoricalDensity cf = categorical_log_linear_fuse(ca, cb, lam);
      for (int k = 0; k < 3; ++k) {
        const double expect = lam * ca.logits[k] + (1.0 - lam) * cb.logits[k];
        if (cf.logits[k] != expect) cat_ok = false;
      }
    }
    check("gaussian precision closure", gauss_ok);
    check("categorical logit closure", cat_ok);
  }

  // quadrature mass of fused densities and mixtures
  {
    auto quad_mass = [](const std::function<double(double)>& density, double lo, double hi) {
      const int n = 20000;
      double acc = 0.5 * (density(lo) + density(hi));
      for (int i = 1; i < n; ++i) acc += density(lo + (hi - lo) * i / n);
      return acc * (hi - lo) / n;
    };
    const GaussianDensity f = gaussian_log_linear_fuse(GaussianDensity::univariate(1.0, 0.5),
                                                       GaussianDensity::univariate(-2.0, 3.0),
                                                       0.3);
    const double sd = std::sqrt(f.variance[0]);
    const double mass = quad_mass([&](double y) { return std::exp(-gaussian_nll(f, {y})); },
                                  f.mean[0] - 10 * sd, f.mean[0] + 10 * sd);
    check("fused gaussian mass", near(mass, 1.0, 1e-6));
    const auto mix = linear_fuse(GaussianDensity::univariate(0.0, 1.0),
                                 GaussianDensity::univariate(4.0, 1.0), 0.5);
    const double mix_mass =
        quad_mass([&](double y) { return std::exp(-mixture_nll(mix, {y})); }, -12.0, 16.0);
    check("mixture mass", near(mix_mass, 1.0, 1e-6));
  }

  // equivalence properties
  {
    Rng rng(97);
    auto random_vec = [&](int n) {
      std::vector<double> v(n);
      for (double& x : v) x = rng.normal();
      return v;
    };

    // fused categorical from an affine-softmax model equals the model at the
    // mixed input
    bool theorem_softmax = true;
    for (int trial = 0; trial < 100; ++trial) {
      Array a(3, 2);
      for (double& v : a.data) v = rng.normal();
      const Mlp model = Mlp::affine(a, random_vec(3), Head::kSoftmax);
      const std::vector<double> x_i = random_vec(2), x_j = random_vec(2);
      const double lam = rng.uniform();
      const CategoricalDensity fused = categorical_log_linear_fuse(
          forward_classification(model, x_i), forward_classification(model, x_j), lam);
      const CategoricalDensity direct =
          forward_classification(model, mix_inputs(x_i, x_j, lam));
      const auto p1 = fused.probs(), p2 = direct.probs();
      for (int k = 0; k < 3; ++k) {
        if (std::abs(p1[k] - p2[k]) > 1e-10) theorem_softmax = false;
      }
    }
    check("affine softmax fusion equivalence", theorem_softmax);

    // fused homoscedastic gaussian from an affine model equals the model at
    // the mixed input
    bool theorem_linear = true;
    for (int trial = 0; trial < 100; ++trial) {
      Array a(2, 3);
      for (double& v : a.data) v = rng.normal();
      const Mlp model = Mlp::affine(a, random_vec(2), Head::kGaussianHomoscedastic, 0.7);
      const std::vector<double> x_i = random_vec(3), x_j = random_vec(3);
      const double lam = rng.uniform();
      const GaussianDensity fused = gaussian_log_linear_fuse(
          forward_regression(model, x_i), forward_regression(model, x_j), lam);
      const GaussianDensity direct = forward_regression(model, mix_inputs(x_i, x_j, lam));
      for (int d = 0; d < 2; ++d) {
        if (std::abs(fused.mean[d] - direct.mean[d]) > 1e-10 ||
            std::abs(fused.variance[d] - direct.variance[d]) > 1e-10) {
          theorem_linear = false;
        }
      }
    }
    check("affine homoscedastic fusion equivalence", theorem_linear);
  }

  return failures;
}

}  // namespace probmix

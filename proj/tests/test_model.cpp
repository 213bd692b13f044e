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

#include "probmix/model.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "probmix/losses.hpp"
#include "test_util.hpp"

namespace probmix {
namespace {

MlpSpec small_regression_spec() {
  MlpSpec spec;
  spec.input_dim = 3;
  spec.hidden = {5, 4};
  spec.head = Head::kGaussianHeteroscedastic;
  spec.output_dim = 2;
  spec.mix_layer = 1;
  return spec;
}

TEST(ForwardRegression, ZeroWeightsGiveZeroMeanSoftplusVariance) {
  Rng rng(61);
  Mlp model = Mlp::init(small_regression_spec(), rng);
  for (auto& [name, arr] : model.params.items) {
    for (double& v : arr.data) v = 0.0;
  }
  const GaussianDensity p = forward_regression(model, {0.3, -0.2, 1.0});
  EXPECT_DOUBLE_EQ(p.mean[0], 0.0);
  EXPECT_DOUBLE_EQ(p.mean[1], 0.0);
  EXPECT_NEAR(p.variance[0], std::log(2.0) + 1e-6, 1e-12);
  EXPECT_NEAR(p.variance[1], std::log(2.0) + 1e-6, 1e-12);
}

TEST(ForwardRegression, DeterministicForFixedParams) {
  Rng rng(63);
  const Mlp model = Mlp::init(small_regression_spec(), rng);
  const std::vector<double> x{0.5, -1.0, 0.25};
  const GaussianDensity a = forward_regression(model, x);
  const GaussianDensity b = forward_regression(model, x);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.variance, b.variance);
  EXPECT_THROW(forward_regression(model, {1.0}), std::invalid_argument);
}

TEST(ForwardRegression, NllGradientPassesFiniteDifferences) {
  Rng rng(65);
  const Mlp model = Mlp::init(small_regression_spec(), rng);
  const Array x = testing::random_array(rng, 6, 3);
  const Array y = testing::random_array(rng, 6, 2);
  const double err =
      finite_difference_check(model.params, [&](Tape& t, const Tape::Bound& b) {
        BoundSource src{&b};
        TapeOutput out = model.forward(t, src, t.constant(x));
        return mean(gaussian_nll_rows(t, TapeGauss{out.mean, out.var}, y));
      });
  EXPECT_LT(err, 1e-4);
}

TEST(ForwardClassification, ZeroWeightsGiveUniform) {
  MlpSpec spec;
  spec.input_dim = 2;
  spec.hidden = {4};
  spec.head = Head::kSoftmax;
  spec.output_dim = 3;
  Rng rng(67);
  Mlp model = Mlp::init(spec, rng);
  for (auto& [name, arr] : model.params.items) {
    for (double& v : arr.data) v = 0.0;
  }
  const auto probs = forward_classification(model, {0.7, -0.1}).probs();
  for (double p : probs) EXPECT_NEAR(p, 1.0 / 3.0, 1e-14);
}

TEST(ForwardClassification, AffineModelMatchesHandSoftmax) {
  Rng rng(69);
  Array a(3, 2);
  for (double& v : a.data) v = rng.normal();
  const std::vector<double> bias{0.1, -0.2, 0.3};
  const Mlp model = Mlp::affine(a, bias, Head::kSoftmax);
  const std::vector<double> x{0.4, -1.2};
  const CategoricalDensity got = forward_classification(model, x);
  std::vector<double> logits(3);
  for (int k = 0; k < 3; ++k) logits[k] = a.at(k, 0) * x[0] + a.at(k, 1) * x[1] + bias[k];
  const double lse = log_sum_exp(logits);
  const auto probs = got.probs();
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(probs[k], std::exp(logits[k] - lse), 1e-14);
}

TEST(ForwardClassification, NllGradientPassesFiniteDifferences) {
  MlpSpec spec;
  spec.input_dim = 2;
  spec.hidden = {4, 3};
  spec.head = Head::kSoftmax;
  spec.output_dim = 3;
  Rng rng(71);
  const Mlp model = Mlp::init(spec, rng);
  const Array x = testing::random_array(rng, 5, 2);
  const std::vector<int> labels{0, 2, 1, 1, 0};
  const double err =
      finite_difference_check(model.params, [&](Tape& t, const Tape::Bound& b) {
        BoundSource src{&b};
        TapeOutput out = model.forward(t, src, t.constant(x));
        return mean(categorical_nll_rows(t, out.logits, labels));
      });
  EXPECT_LT(err, 1e-4);
}

TEST(EncodeDistribution, HomoscedasticVarianceIsInputIndependent) {
  MlpSpec spec = small_regression_spec();
  spec.embedding_head = true;
  spec.embedding_homoscedastic = true;
  Rng rng(73);
  const Mlp model = Mlp::init(spec, rng);
  const GaussianDensity a = encode_distribution(model, {1.0, 0.0, 0.0});
  const GaussianDensity b = encode_distribution(model, {-2.0, 3.0, 0.5});
  EXPECT_EQ(a.variance, b.variance);
  EXPECT_NE(a.mean, b.mean);
}

TEST(EncodeDistribution, VarianceStrictlyPositiveOnRandomInputs) {
  MlpSpec spec = small_regression_spec();
  spec.embedding_head = true;
  Rng rng(75);
  const Mlp model = Mlp::init(spec, rng);
  for (int trial = 0; trial < 1000; ++trial) {
    const GaussianDensity p = encode_distribution(model, testing::random_vector(rng, 3, -5.0, 5.0));
    for (double v : p.variance) EXPECT_GE(v, 1e-6);
  }
  Mlp plain = Mlp::init(small_regression_spec(), rng);
  EXPECT_THROW(encode_distribution(plain, {0.0, 0.0, 0.0}), std::invalid_argument);
}

TEST(EncodeDistribution, FusedSelfEncodeIsIdentity) {
  MlpSpec spec = small_regression_spec();
  spec.embedding_head = true;
  Rng rng(77);
  const Mlp model = Mlp::init(spec, rng);
  const GaussianDensity enc = encode_distribution(model, {0.2, 0.4, -0.6});
  const GaussianDensity fused = gaussian_log_linear_fuse(enc, enc, 0.37);
  EXPECT_EQ(fused.mean, enc.mean);
  EXPECT_EQ(fused.variance, enc.variance);
}

TEST(SplitForward, CompositionIdentityAtEveryLayer) {
  Rng rng(79);
  const Mlp model = Mlp::init(small_regression_spec(), rng);
  const Array x = testing::random_array(rng, 4, 3);
  Tape full_tape;
  FrozenSource src{&model.params};
  const TapeOutput full = model.forward(full_tape, src, full_tape.constant(x));
  for (int layer = 0; layer <= model.spec.num_layers(); ++layer) {
    Tape t;
    FrozenSource s{&model.params};
    Var z = model.features(t, s, t.constant(x), layer);
    if (layer == 0) {
      EXPECT_EQ(t.value(z).data, x.data);  // identity extractor
    }
    const TapeOutput head = model.head_from(t, s, z, layer);
    for (std::size_t i = 0; i < full_tape.value(full.mean).size(); ++i) {
      EXPECT_NEAR(t.value(head.mean).data[i], full_tape.value(full.mean).data[i], 1e-12);
      EXPECT_NEAR(t.value(head.var).data[i], full_tape.value(full.var).data[i], 1e-12);
    }
  }
  Tape t;
  FrozenSource s{&model.params};
  EXPECT_THROW(model.features(t, s, t.constant(x), 3), std::invalid_argument);
}

TEST(BuildAffineModel, IdentityMeansAndUniformSoftmax) {
  Array eye(2, 2);
  eye.at(0, 0) = eye.at(1, 1) = 1.0;
  const Mlp reg = Mlp::affine(eye, {0.0, 0.0}, Head::kGaussianHomoscedastic, 1.0);
  const GaussianDensity p = forward_regression(reg, {0.3, -0.7});
  EXPECT_NEAR(p.mean[0], 0.3, 1e-15);
  EXPECT_NEAR(p.mean[1], -0.7, 1e-15);
  EXPECT_NEAR(p.variance[0], 1.0, 1e-12);

  Array zero(3, 2);
  const Mlp cls = Mlp::affine(zero, {0.0, 0.0, 0.0}, Head::kSoftmax);
  for (double prob : forward_classification(cls, {5.0, -3.0}).probs()) {
    EXPECT_NEAR(prob, 1.0 / 3.0, 1e-15);
  }
  EXPECT_THROW(Mlp::affine(zero, {0.0}, Head::kSoftmax), std::invalid_argument);
}

TEST(MlpSpec, ValidatesMixLayerAndWidths) {
  MlpSpec spec = small_regression_spec();
  spec.mix_layer = 3;
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec = small_regression_spec();
  spec.hidden = {0};
  EXPECT_THROW(spec.validate(), std::invalid_argument);
}

TEST(AuxVarianceNet, GradientsOnlyThroughVariancePath) {
  MlpSpec spec = small_regression_spec();
  spec.embedding_head = true;
  spec.aux_variance_net = true;
  Rng rng(81);
  const Mlp model = Mlp::init(spec, rng);
  Dataset data;
  data.task = Task::kRegression;
  data.features = testing::random_array(rng, 6, 3);
  data.targets = testing::random_array(rng, 6, 2);
  Array noise(6, spec.embed_dim());
  for (double& v : noise.data) v = rng.normal();

  const EvalResult res =
      evaluate_with_gradients(model.params, [&](Tape& t, const Tape::Bound& b) {
        return aux_variance_loss(t, b, model, model.params, data, noise);
      });
  double aux_norm = 0.0, other_norm = 0.0;
  for (const auto& [name, grad] : res.grads.items) {
    double norm = 0.0;
    for (double g : grad.data) norm += g * g;
    if (name.rfind("aux.", 0) == 0) {
      aux_norm += norm;
    } else {
      other_norm += norm;
    }
  }
  EXPECT_GT(aux_norm, 0.0);
  EXPECT_DOUBLE_EQ(other_norm, 0.0);
}

TEST(Checkpoint, RoundTripsBitExactly) {
  Rng rng(83);
  MlpSpec spec = small_regression_spec();
  spec.embedding_head = true;
  const Mlp model = Mlp::init(spec, rng);
  const std::string path =
      (std::filesystem::temp_directory_path() / "probmix_ckpt_test.ckpt").string();
  save_checkpoint(model.params, path);
  const ParamSet loaded = load_checkpoint(path);
  ASSERT_EQ(loaded.items.size(), model.params.items.size());
  for (std::size_t i = 0; i < loaded.items.size(); ++i) {
    EXPECT_EQ(loaded.items[i].first, model.params.items[i].first);
    EXPECT_EQ(loaded.items[i].second.rows, model.params.items[i].second.rows);
    EXPECT_EQ(loaded.items[i].second.cols, model.params.items[i].second.cols);
    EXPECT_EQ(loaded.items[i].second.data, model.params.items[i].second.data);
  }
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), std::runtime_error);
}

}  // namespace
}  // namespace probmix

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

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "probmix/autodiff.hpp"
#include "probmix/densities.hpp"
#include "probmix/mixing.hpp"
#include "probmix/rng.hpp"

namespace probmix {

enum class Activation { kTanh, kRelu };
enum class Head { kGaussianHeteroscedastic, kGaussianHomoscedastic, kSoftmax };

/// Architecture of an MLP conditional-density estimator. mix_layer indexes the
/// hidden activation used for feature mixing and as the embedding mean;
/// 0 means the raw input.
struct MlpSpec {
  int input_dim = 1;
  std::vector<int> hidden;
  Activation activation = Activation::kTanh;
  Head head = Head::kGaussianHeteroscedastic;
  int output_dim = 1;
  int mix_layer = 1;
  bool embedding_head = false;
  bool embedding_homoscedastic = false;
  bool aux_variance_net = false;

  int num_layers() const { return static_cast<int>(hidden.size()); }

  int layer_width(int layer) const {
    if (layer == 0) return input_dim;
    return hidden.at(static_cast<std::size_t>(layer) - 1);
  }

  int embed_dim() const { return layer_width(mix_layer); }

  Task task() const {
    return head == Head::kSoftmax ? Task::kClassification : Task::kRegression;
  }

  void validate() const {
    if (input_dim < 1) throw std::invalid_argument("MlpSpec: input_dim < 1");
    if (output_dim < 1) throw std::invalid_argument("MlpSpec: output_dim < 1");
    for (int w : hidden) {
      if (w < 1) throw std::invalid_argument("MlpSpec: hidden width < 1");
    }
    if (mix_layer < 0 || mix_layer > num_layers()) {
      throw std::invalid_argument("MlpSpec: mix_layer outside [0, hidden layers]");
    }
    if (embedding_head && embed_dim() < 1) {
      throw std::invalid_argument("MlpSpec: embedding dim < 1");
    }
  }
};

struct TapeGauss {
  Var mean;
  Var var;
};

struct TapeOutput {
  Task task = Task::kRegression;
  Var mean;
  Var var;
  Var logits;
};

/// Weight source that reads bound parameter leaves (trainable path).
struct BoundSource {
  const Tape::Bound* bound;
  Var operator()(Tape&, const std::string& name) const { return bound->at(name); }
};

/// Weight source that freezes current values as constants (no gradients).
struct FrozenSource {
  const ParamSet* params;
  Var operator()(Tape& tape, const std::string& name) const {
    return tape.constant(params->at(name));
  }
};

namespace detail {
inline double inverse_softplus(double y) {
  // solves softplus(x) = y for y > 0
  if (y > 30.0) return y;
  return std::log(std::expm1(y));
}
}  // namespace detail

class Mlp {
 public:
  MlpSpec spec;
  ParamSet params;

  /// Glorot-uniform weights, zero biases; variance heads start at
  /// softplus(0) + floor.
  static Mlp init(const MlpSpec& spec, Rng& rng) {
    spec.validate();
    Mlp m;
    m.spec = spec;
    for (int l = 1; l <= spec.num_layers(); ++l) {
      m.params.add(layer_name(l) + ".weight",
                   glorot(spec.layer_width(l - 1), spec.layer_width(l), rng));
      m.params.add(layer_name(l) + ".bias", Array(1, spec.layer_width(l)));
    }
    const int last = spec.layer_width(spec.num_layers());
    switch (spec.head) {
      case Head::kGaussianHeteroscedastic:
        m.params.add("head.mean.weight", glorot(last, spec.output_dim, rng));
        m.params.add("head.mean.bias", Array(1, spec.output_dim));
        m.params.add("head.var.weight", glorot(last, spec.output_dim, rng));
        m.params.add("head.var.bias", Array(1, spec.output_dim));
        break;
      case Head::kGaussianHomoscedastic:
        m.params.add("head.mean.weight", glorot(last, spec.output_dim, rng));
        m.params.add("head.mean.bias", Array(1, spec.output_dim));
        m.params.add("head.var.raw", Array(1, spec.output_dim));
        break;
      case Head::kSoftmax:
        m.params.add("head.logits.weight", glorot(last, spec.output_dim, rng));
        m.params.add("head.logits.bias", Array(1, spec.output_dim));
        break;
    }
    if (spec.embedding_head) {
      if (spec.embedding_homoscedastic) {
        m.params.add("embed.var.raw", Array(1, spec.embed_dim()));
      } else {
        const int trunk_in = spec.layer_width(spec.mix_layer - 1 >= 0 ? spec.mix_layer - 1 : 0);
        m.params.add("embed.var.weight", glorot(trunk_in, spec.embed_dim(), rng));
        m.params.add("embed.var.bias", Array(1, spec.embed_dim()));
      }
    }
    if (spec.aux_variance_net) {
      m.params.add("aux.var.weight", glorot(spec.input_dim, spec.embed_dim(), rng));
      m.params.add("aux.var.bias", Array(1, spec.embed_dim()));
    }
    return m;
  }

  /// Degenerate no-hidden-layer model y = A x + b used by the equivalence
  /// property tests. A is output_dim x input_dim.
  static Mlp affine(const Array& a, const std::vector<double>& b, Head head,
                    double homoscedastic_variance = 1.0) {
    if (a.rows != b.size()) throw std::invalid_argument("affine model: A/b shape mismatch");
    MlpSpec spec;
    spec.input_dim = static_cast<int>(a.cols);
    spec.output_dim = static_cast<int>(a.rows);
    spec.head = head;
    spec.mix_layer = 0;
    spec.validate();
    Mlp m;
    m.spec = spec;
    Array w(a.cols, a.rows);
    for (std::size_t r = 0; r < a.rows; ++r) {
      for (std::size_t c = 0; c < a.cols; ++c) w.at(c, r) = a.at(r, c);
    }
    Array bias = Array::row_vector(b);
    switch (head) {
      case Head::kGaussianHeteroscedastic:
        throw std::invalid_argument("affine model: use a homoscedastic head");
      case Head::kGaussianHomoscedastic: {
        m.params.add("head.mean.weight", std::move(w));
        m.params.add("head.mean.bias", std::move(bias));
        Array raw(1, spec.output_dim,
                  detail::inverse_softplus(homoscedastic_variance - kVarianceFloor));
        m.params.add("head.var.raw", std::move(raw));
        break;
      }
      case Head::kSoftmax:
        m.params.add("head.logits.weight", std::move(w));
        m.params.add("head.logits.bias", std::move(bias));
        break;
    }
    return m;
  }

  /// Hidden activations after `upto` layers; upto = 0 returns x unchanged.
  template <class Src>
  Var features(Tape& tape, const Src& src, Var x, int upto) const {
    if (upto < 0 || upto > spec.num_layers()) {
      throw std::invalid_argument("features: invalid layer index");
    }
    Var h = x;
    for (int l = 1; l <= upto; ++l) {
      Var z = add_rowvec(matmul(h, src(tape, layer_name(l) + ".weight")),
                         src(tape, layer_name(l) + ".bias"));
      h = spec.activation == Activation::kTanh ? probmix::tanh(z) : relu(z);
    }
    return h;
  }

  /// Continuation from activations at layer `from` through the head.
  template <class Src>
  TapeOutput head_from(Tape& tape, const Src& src, Var z, int from) const {
    Var h = z;
    for (int l = from + 1; l <= spec.num_layers(); ++l) {
      Var a = add_rowvec(matmul(h, src(tape, layer_name(l) + ".weight")),
                         src(tape, layer_name(l) + ".bias"));
      h = spec.activation == Activation::kTanh ? probmix::tanh(a) : relu(a);
    }
    TapeOutput out;
    out.task = spec.task();
    const std::size_t n = tape.value(h).rows;
    switch (spec.head) {
      case Head::kGaussianHeteroscedastic: {
        out.mean = add_rowvec(matmul(h, src(tape, "head.mean.weight")),
                              src(tape, "head.mean.bias"));
        Var raw = add_rowvec(matmul(h, src(tape, "head.var.weight")),
                             src(tape, "head.var.bias"));
        out.var = add_scalar(softplus(raw), kVarianceFloor);
        break;
      }
      case Head::kGaussianHomoscedastic: {
        out.mean = add_rowvec(matmul(h, src(tape, "head.mean.weight")),
                              src(tape, "head.mean.bias"));
        out.var = add_scalar(softplus(tile_rows(src(tape, "head.var.raw"), n)), kVarianceFloor);
        break;
      }
      case Head::kSoftmax:
        out.logits = add_rowvec(matmul(h, src(tape, "head.logits.weight")),
                                src(tape, "head.logits.bias"));
        break;
    }
    return out;
  }

  template <class Src>
  TapeOutput forward(Tape& tape, const Src& src, Var x) const {
    return head_from(tape, src, features(tape, src, x, spec.mix_layer), spec.mix_layer);
  }

  /// Diagonal-Gaussian embedding distribution at the mix layer: the mean is
  /// the trunk activation, the variance branch shares the trunk below it.
  template <class Src>
  TapeGauss encode(Tape& tape, const Src& src, Var x) const {
    if (!spec.embedding_head) throw std::invalid_argument("encode: embedding head disabled");
    TapeGauss g;
    g.mean = features(tape, src, x, spec.mix_layer);
    const std::size_t n = tape.value(x).rows;
    if (spec.embedding_homoscedastic) {
      g.var = add_scalar(softplus(tile_rows(src(tape, "embed.var.raw"), n)), kVarianceFloor);
    } else {
      Var trunk = spec.mix_layer >= 1 ? features(tape, src, x, spec.mix_layer - 1) : x;
      Var raw = add_rowvec(matmul(trunk, src(tape, "embed.var.weight")),
                           src(tape, "embed.var.bias"));
      g.var = add_scalar(softplus(raw), kVarianceFloor);
    }
    return g;
  }

  template <class Src>
  TapeOutput decode(Tape& tape, const Src& src, Var z) const {
    return head_from(tape, src, z, spec.mix_layer);
  }

  /// Embedding variance predicted by the separate auxiliary network.
  template <class Src>
  Var aux_variance(Tape& tape, const Src& src, Var x) const {
    if (!spec.aux_variance_net) throw std::invalid_argument("aux_variance: net disabled");
    Var raw = add_rowvec(matmul(x, src(tape, "aux.var.weight")),
                         src(tape, "aux.var.bias"));
    return add_scalar(softplus(raw), kVarianceFloor);
  }

  static std::string layer_name(int l) { return "layer" + std::to_string(l); }

 private:
  static Array glorot(int fan_in, int fan_out, Rng& rng) {
    Array w(fan_in, fan_out);
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : w.data) v = rng.uniform(-bound, bound);
    return w;
  }
};

namespace detail {
inline Array single_row(const std::vector<double>& x) { return Array::row_vector(x); }
}  // namespace detail

inline GaussianDensity forward_regression(const Mlp& model, const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != model.spec.input_dim) {
    throw std::invalid_argument("forward_regression: input dim mismatch");
  }
  if (model.spec.task() != Task::kRegression) {
    throw std::invalid_argument("forward_regression: not a regression head");
  }
  Tape tape;
  FrozenSource src{&model.params};
  TapeOutput out = model.forward(tape, src, tape.constant(detail::single_row(x)));
  return GaussianDensity(tape.value(out.mean).data, tape.value(out.var).data);
}

inline CategoricalDensity forward_classification(const Mlp& model, const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != model.spec.input_dim) {
    throw std::invalid_argument("forward_classification: input dim mismatch");
  }
  if (model.spec.task() != Task::kClassification) {
    throw std::invalid_argument("forward_classification: not a softmax head");
  }
  Tape tape;
  FrozenSource src{&model.params};
  TapeOutput out = model.forward(tape, src, tape.constant(detail::single_row(x)));
  return CategoricalDensity(tape.value(out.logits).data);
}

inline GaussianDensity encode_distribution(const Mlp& model, const std::vector<double>& x) {
  Tape tape;
  FrozenSource src{&model.params};
  TapeGauss g = model.encode(tape, src, tape.constant(detail::single_row(x)));
  return GaussianDensity(tape.value(g.mean).data, tape.value(g.var).data);
}

// --- checkpoint format: plain-text header (name, shape, byte offset per
// entry) followed by raw little-endian 64-bit floats ---

namespace detail {
inline void write_doubles_le(std::ostream& os, const std::vector<double>& v) {
  static_assert(sizeof(double) == 8);
  for (double d : v) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    if constexpr (std::endian::native == std::endian::big) {
      bits = __builtin_bswap64(bits);
    }
    os.write(reinterpret_cast<const char*>(&bits), 8);
  }
}

inline void read_doubles_le(std::istream& is, std::vector<double>& v) {
  for (double& d : v) {
    std::uint64_t bits;
    is.read(reinterpret_cast<char*>(&bits), 8);
    if constexpr (std::endian::native == std::endian::big) {
      bits = __builtin_bswap64(bits);
    }
    std::memcpy(&d, &bits, 8);
  }
}
}  // namespace detail

inline void save_checkpoint(const ParamSet& params, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
  os << "probmix-checkpoint 1\n";
  os << "count " << params.items.size() << "\n";
  std::size_t offset = 0;
  for (const auto& [name, arr] : params.items) {
    os << "entry " << name << " " << arr.rows << " " << arr.cols << " " << offset << "\n";
    offset += arr.size() * 8;
  }
  os << "data\n";
  for (const auto& [name, arr] : params.items) detail::write_doubles_le(os, arr.data);
  if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

inline ParamSet load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::string line;
  std::getline(is, line);
  if (line != "probmix-checkpoint 1") {
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  }
  std::getline(is, line);
  std::size_t count = 0;
  {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag >> count;
    if (tag != "count") throw std::runtime_error("load_checkpoint: missing count");
  }
  struct Entry {
    std::string name;
    std::size_t rows, cols, offset;
  };
  std::vector<Entry> entries(count);
  for (Entry& e : entries) {
    std::getline(is, line);
    std::istringstream ss(line);
    std::string tag;
    ss >> tag >> e.name >> e.rows >> e.cols >> e.offset;
    if (tag != "entry") throw std::runtime_error("load_checkpoint: malformed entry");
  }
  std::getline(is, line);
  if (line != "data") throw std::runtime_error("load_checkpoint: missing data section");
  const std::streampos data_start = is.tellg();
  ParamSet params;
  for (const Entry& e : entries) {
    is.seekg(data_start + static_cast<std::streamoff>(e.offset));
    Array arr(e.rows, e.cols);
    detail::read_doubles_le(is, arr.data);
    if (!is) throw std::runtime_error("load_checkpoint: truncated data for " + e.name);
    params.add(e.name, std::move(arr));
  }
  return params;
}

}  // namespace probmix

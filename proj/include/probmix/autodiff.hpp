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
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "probmix/array.hpp"

namespace probmix {

/// Named parameter arrays, kept in insertion order so binding, gradients and
/// checkpoints all agree on layout.
struct ParamSet {
  std::vector<std::pair<std::string, Array>> items;

  void add(const std::string& name, Array value) {
    if (has(name)) throw std::invalid_argument("ParamSet: duplicate " + name);
    items.emplace_back(name, std::move(value));
  }

  bool has(const std::string& name) const {
    for (const auto& [n, v] : items) {
      if (n == name) return true;
    }
    return false;
  }

  Array& at(const std::string& name) {
    for (auto& [n, v] : items) {
      if (n == name) return v;
    }
    throw std::out_of_range("ParamSet: missing " + name);
  }

  const Array& at(const std::string& name) const {
    for (const auto& [n, v] : items) {
      if (n == name) return v;
    }
    throw std::out_of_range("ParamSet: missing " + name);
  }

  ParamSet zeros_like() const {
    ParamSet z;
    for (const auto& [n, v] : items) z.add(n, Array(v.rows, v.cols, 0.0));
    return z;
  }

  std::size_t total_size() const {
    std::size_t s = 0;
    for (const auto& [n, v] : items) s += v.size();
    return s;
  }

  bool all_finite() const {
    for (const auto& [n, v] : items) {
      if (!v.all_finite()) return false;
    }
    return true;
  }
};

/// Raised when a forward pass yields a non-finite scalar; names the first
/// primitive whose output went bad.
class NonFiniteError : public std::runtime_error {
 public:
  explicit NonFiniteError(const std::string& primitive)
      : std::runtime_error("non-finite value produced by " + primitive),
        primitive_(primitive) {}
  const std::string& primitive() const { return primitive_; }

 private:
  std::string primitive_;
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;
};

/// Reverse-mode tape over dense arrays. Values are computed eagerly as nodes
/// are emitted; backward() fills adjoints in one reverse sweep.
class Tape {
 public:
  enum class Op {
    kConst,
    kParam,
    kMatmul,
    kAdd,
    kSub,
    kMul,
    kDiv,
    kRecip,
    kAddScalar,
    kMulScalar,
    kTanh,
    kRelu,
    kSoftplus,
    kExp,
    kLog,
    kSqrt,
    kSquare,
    kSum,
    kMean,
    kSumRows,
    kLogSumExpRows,
    kLogAddExp,
    kAddRowVec,
    kTileRows,
    kSubColVec,
    kScaleRows,
    kSelectCols,
    kReshape,
  };

  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    Array value;
    Array adjoint;
    double scalar = 0.0;
    std::vector<double> coeffs;
    std::vector<int> indices;
  };

  /// Handles to the leaves created for a bound ParamSet.
  struct Bound {
    std::vector<std::pair<std::string, Var>> vars;

    Var at(const std::string& name) const {
      for (const auto& [n, v] : vars) {
        if (n == name) return v;
      }
      throw std::out_of_range("Bound: missing " + name);
    }
  };

  Var constant(Array value) {
    Node n;
    n.op = Op::kConst;
    n.value = std::move(value);
    return push(std::move(n));
  }

  Bound bind(const ParamSet& params) {
    Bound bound;
    for (const auto& [name, value] : params.items) {
      Node n;
      n.op = Op::kParam;
      n.value = value;
      bound.vars.emplace_back(name, push(std::move(n)));
    }
    return bound;
  }

  const Array& value(Var v) const { return nodes_[v.id].value; }

  double scalar_value(Var v) const {
    const Array& a = nodes_[v.id].value;
    if (a.size() != 1) throw std::invalid_argument("scalar_value: not 1x1");
    return a.data[0];
  }

  const Array& adjoint(Var v) const { return nodes_[v.id].adjoint; }

  /// Name of the first node with a non-finite output, or empty.
  std::string first_non_finite() const {
    for (const Node& n : nodes_) {
      if (!n.value.all_finite()) return op_name(n.op);
    }
    return {};
  }

  void backward(Var loss) {
    if (nodes_[loss.id].value.size() != 1) {
      throw std::invalid_argument("backward: loss must be scalar");
    }
    for (Node& n : nodes_) n.adjoint = Array(n.value.rows, n.value.cols, 0.0);
    nodes_[loss.id].adjoint.data[0] = 1.0;
    for (int i = loss.id; i >= 0; --i) backprop(static_cast<std::size_t>(i));
  }

  ParamSet leaf_gradients(const Bound& bound) const {
    ParamSet grads;
    for (const auto& [name, var] : bound.vars) grads.add(name, adjoint(var));
    return grads;
  }

  static const char* op_name(Op op) {
    switch (op) {
      case Op::kConst: return "const";
      case Op::kParam: return "param";
      case Op::kMatmul: return "matmul";
      case Op::kAdd: return "add";
      case Op::kSub: return "sub";
      case Op::kMul: return "mul";
      case Op::kDiv: return "div";
      case Op::kRecip: return "recip";
      case Op::kAddScalar: return "add_scalar";
      case Op::kMulScalar: return "mul_scalar";
      case Op::kTanh: return "tanh";
      case Op::kRelu: return "relu";
      case Op::kSoftplus: return "softplus";
      case Op::kExp: return "exp";
      case Op::kLog: return "log";
      case Op::kSqrt: return "sqrt";
      case Op::kSquare: return "square";
      case Op::kSum: return "sum";
      case Op::kMean: return "mean";
      case Op::kSumRows: return "sum_rows";
      case Op::kLogSumExpRows: return "logsumexp_rows";
      case Op::kLogAddExp: return "logaddexp";
      case Op::kAddRowVec: return "add_rowvec";
      case Op::kTileRows: return "tile_rows";
      case Op::kSubColVec: return "sub_colvec";
      case Op::kScaleRows: return "scale_rows";
      case Op::kSelectCols: return "select_columns";
      case Op::kReshape: return "reshape";
    }
    return "?";
  }

  // Emission helpers; the free-function op API below is the public surface.
  Var emit(Node&& n) { return push(std::move(n)); }
  const Node& node(int id) const { return nodes_[id]; }

 private:
  Var push(Node&& n) {
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  void backprop(std::size_t i);

  std::vector<Node> nodes_;
};

namespace detail {

inline const Array& val(Var v) { return v.tape->node(v.id).value; }

inline Var unary(Tape::Op op, Var a) {
  Tape::Node n;
  n.op = op;
  n.a = a.id;
  const Array& x = val(a);
  n.value = Array(x.rows, x.cols);
  switch (op) {
    case Tape::Op::kTanh:
      for (std::size_t i = 0; i < x.size(); ++i) n.value.data[i] = std::tanh(x.data[i]);
      break;
    case Tape::Op::kRelu:
      for (std::size_t i = 0; i < x.size(); ++i) n.value.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
      break;
    case Tape::Op::kSoftplus:
      for (std::size_t i = 0; i < x.size(); ++i) n.value.data[i] = softplus_stable(x.data[i]);
      break;
    case Tape::Op::kExp:
      for (std::size_t i = 0; i < x.size(); ++i) n.value.data[i] = std::exp(x.data[i]);
      break;
    case Tape::Op::kLog:
      for (std::size_t i = 0; i < x.size(); ++i) n.value.data[i] = std::log(x.data[i]);
      break;
    case Tape::Op::kSqrt:
      for (std::size_t i = 0; i < x.size(); ++i) n.value.data[i] = std::sqrt(x.data[i]);
      break;
    case Tape::Op::kSquare:
      for (std::size_t i = 0; i < x.size(); ++i) n.value.data[i] = x.data[i] * x.data[i];
      break;
    case Tape::Op::kRecip:
      for (std::size_t i = 0; i < x.size(); ++i) n.value.data[i] = 1.0 / x.data[i];
      break;
    default:
      throw std::logic_error("unary: bad op");
  }
  return a.tape->emit(std::move(n));
}

inline Var binary(Tape::Op op, Var a, Var b) {
  if (a.tape != b.tape) throw std::invalid_argument("binary: mixed tapes");
  const Array& x = val(a);
  const Array& y = val(b);
  if (!x.same_shape(y)) {
    throw std::invalid_argument(std::string(Tape::op_name(op)) + ": shape mismatch " +
                                x.shape_string() + " vs " + y.shape_string());
  }
  Tape::Node n;
  n.op = op;
  n.a = a.id;
  n.b = b.id;
  n.value = Array(x.rows, x.cols);
  switch (op) {
    case Tape::Op::kAdd:
      for (std::size_t i = 0; i < x.size(); ++i) n.value.data[i] = x.data[i] + y.data[i];
      break;
    case Tape::Op::kSub:
      for (std::size_t i = 0; i < x.size(); ++i) n.value.data[i] = x.data[i] - y.data[i];
      break;
    case Tape::Op::kMul:
      for (std::size_t i = 0; i < x.size(); ++i) n.value.data[i] = x.data[i] * y.data[i];
      break;
    case Tape::Op::kDiv:
      for (std::size_t i = 0; i < x.size(); ++i) n.value.data[i] = x.data[i] / y.data[i];
      break;
    case Tape::Op::kLogAddExp:
      for (std::size_t i = 0; i < x.size(); ++i) n.value.data[i] = log_add_exp(x.data[i], y.data[i]);
      break;
    default:
      throw std::logic_error("binary: bad op");
  }
  return a.tape->emit(std::move(n));
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  Tape::Node n;
  n.op = Tape::Op::kMatmul;
  n.a = a.id;
  n.b = b.id;
  n.value = matmul(detail::val(a), detail::val(b));
  return a.tape->emit(std::move(n));
}

inline Var add(Var a, Var b) { return detail::binary(Tape::Op::kAdd, a, b); }
inline Var sub(Var a, Var b) { return detail::binary(Tape::Op::kSub, a, b); }
inline Var mul(Var a, Var b) { return detail::binary(Tape::Op::kMul, a, b); }
inline Var div(Var a, Var b) { return detail::binary(Tape::Op::kDiv, a, b); }
inline Var logaddexp(Var a, Var b) { return detail::binary(Tape::Op::kLogAddExp, a, b); }

inline Var recip(Var a) { return detail::unary(Tape::Op::kRecip, a); }
inline Var tanh(Var a) { return detail::unary(Tape::Op::kTanh, a); }
inline Var relu(Var a) { return detail::unary(Tape::Op::kRelu, a); }
inline Var softplus(Var a) { return detail::unary(Tape::Op::kSoftplus, a); }
inline Var exp(Var a) { return detail::unary(Tape::Op::kExp, a); }
inline Var log(Var a) { return detail::unary(Tape::Op::kLog, a); }
inline Var sqrt(Var a) { return detail::unary(Tape::Op::kSqrt, a); }
inline Var square(Var a) { return detail::unary(Tape::Op::kSquare, a); }

inline Var add_scalar(Var a, double s) {
  Tape::Node n;
  n.op = Tape::Op::kAddScalar;
  n.a = a.id;
  n.scalar = s;
  n.value = detail::val(a);
  for (double& v : n.value.data) v += s;
  return a.tape->emit(std::move(n));
}

inline Var mul_scalar(Var a, double s) {
  Tape::Node n;
  n.op = Tape::Op::kMulScalar;
  n.a = a.id;
  n.scalar = s;
  n.value = detail::val(a);
  for (double& v : n.value.data) v *= s;
  return a.tape->emit(std::move(n));
}

inline Var neg(Var a) { return mul_scalar(a, -1.0); }

inline Var sum(Var a) {
  Tape::Node n;
  n.op = Tape::Op::kSum;
  n.a = a.id;
  double acc = 0.0;
  for (double v : detail::val(a).data) acc += v;
  n.value = Array::scalar(acc);
  return a.tape->emit(std::move(n));
}

inline Var mean(Var a) {
  Tape::Node n;
  n.op = Tape::Op::kMean;
  n.a = a.id;
  const Array& x = detail::val(a);
  if (x.size() == 0) throw std::invalid_argument("mean: empty operand");
  double acc = 0.0;
  for (double v : x.data) acc += v;
  n.value = Array::scalar(acc / static_cast<double>(x.size()));
  return a.tape->emit(std::move(n));
}

inline Var sum_rows(Var a) {
  Tape::Node n;
  n.op = Tape::Op::kSumRows;
  n.a = a.id;
  const Array& x = detail::val(a);
  n.value = Array(x.rows, 1);
  for (std::size_t r = 0; r < x.rows; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < x.cols; ++c) acc += x.at(r, c);
    n.value.at(r, 0) = acc;
  }
  return a.tape->emit(std::move(n));
}

inline Var logsumexp_rows(Var a) {
  Tape::Node n;
  n.op = Tape::Op::kLogSumExpRows;
  n.a = a.id;
  const Array& x = detail::val(a);
  n.value = Array(x.rows, 1);
  for (std::size_t r = 0; r < x.rows; ++r) {
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < x.cols; ++c) hi = std::max(hi, x.at(r, c));
    if (hi == -std::numeric_limits<double>::infinity()) {
      n.value.at(r, 0) = hi;
      continue;
    }
    double acc = 0.0;
    for (std::size_t c = 0; c < x.cols; ++c) acc += std::exp(x.at(r, c) - hi);
    n.value.at(r, 0) = hi + std::log(acc);
  }
  return a.tape->emit(std::move(n));
}

/// X (n x m) plus a 1 x m row vector broadcast over rows.
inline Var add_rowvec(Var a, Var b) {
  const Array& x = detail::val(a);
  const Array& y = detail::val(b);
  if (y.rows != 1 || y.cols != x.cols) {
    throw std::invalid_argument("add_rowvec: want 1x" + std::to_string(x.cols) +
                                ", got " + y.shape_string());
  }
  Tape::Node n;
  n.op = Tape::Op::kAddRowVec;
  n.a = a.id;
  n.b = b.id;
  n.value = x;
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t c = 0; c < x.cols; ++c) n.value.at(r, c) += y.at(0, c);
  }
  return a.tape->emit(std::move(n));
}

/// Repeat a 1 x m row vector n times.
inline Var tile_rows(Var v, std::size_t n_rows) {
  const Array& x = detail::val(v);
  if (x.rows != 1) throw std::invalid_argument("tile_rows: operand must be 1xM");
  Tape::Node n;
  n.op = Tape::Op::kTileRows;
  n.a = v.id;
  n.value = Array(n_rows, x.cols);
  for (std::size_t r = 0; r < n_rows; ++r) {
    for (std::size_t c = 0; c < x.cols; ++c) n.value.at(r, c) = x.at(0, c);
  }
  return v.tape->emit(std::move(n));
}

/// X (n x m) minus an n x 1 column broadcast across columns.
inline Var sub_colvec(Var a, Var b) {
  const Array& x = detail::val(a);
  const Array& y = detail::val(b);
  if (y.cols != 1 || y.rows != x.rows) {
    throw std::invalid_argument("sub_colvec: want " + std::to_string(x.rows) +
                                "x1, got " + y.shape_string());
  }
  Tape::Node n;
  n.op = Tape::Op::kSubColVec;
  n.a = a.id;
  n.b = b.id;
  n.value = x;
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t c = 0; c < x.cols; ++c) n.value.at(r, c) -= y.at(r, 0);
  }
  return a.tape->emit(std::move(n));
}

/// Scale row r by the fixed coefficient coeffs[r] (not differentiated).
inline Var scale_rows(Var a, std::vector<double> coeffs) {
  const Array& x = detail::val(a);
  if (coeffs.size() != x.rows) {
    throw std::invalid_argument("scale_rows: coefficient count mismatch");
  }
  Tape::Node n;
  n.op = Tape::Op::kScaleRows;
  n.a = a.id;
  n.coeffs = std::move(coeffs);
  n.value = x;
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t c = 0; c < x.cols; ++c) n.value.at(r, c) *= n.coeffs[r];
  }
  return a.tape->emit(std::move(n));
}

/// Pick X[r, idx[r]] per row into an n x 1 column.
inline Var select_columns(Var a, std::vector<int> idx) {
  const Array& x = detail::val(a);
  if (idx.size() != x.rows) throw std::invalid_argument("select_columns: index count mismatch");
  for (int k : idx) {
    if (k < 0 || static_cast<std::size_t>(k) >= x.cols) {
      throw std::out_of_range("select_columns: column " + std::to_string(k));
    }
  }
  Tape::Node n;
  n.op = Tape::Op::kSelectCols;
  n.a = a.id;
  n.indices = std::move(idx);
  n.value = Array(x.rows, 1);
  for (std::size_t r = 0; r < x.rows; ++r) n.value.at(r, 0) = x.at(r, n.indices[r]);
  return a.tape->emit(std::move(n));
}

inline Var reshape(Var a, std::size_t rows, std::size_t cols) {
  const Array& x = detail::val(a);
  if (rows * cols != x.size()) throw std::invalid_argument("reshape: size mismatch");
  Tape::Node n;
  n.op = Tape::Op::kReshape;
  n.a = a.id;
  n.value = x;
  n.value.rows = rows;
  n.value.cols = cols;
  return a.tape->emit(std::move(n));
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator+(Var a, double s) { return add_scalar(a, s); }
inline Var operator*(Var a, double s) { return mul_scalar(a, s); }
inline Var operator*(double s, Var a) { return mul_scalar(a, s); }
inline Var operator-(Var a) { return neg(a); }

inline void Tape::backprop(std::size_t i) {
  Node& n = nodes_[i];
  const Array& g = n.adjoint;
  bool any = false;
  for (double v : g.data) {
    if (v != 0.0) {
      any = true;
      break;
    }
  }
  if (!any) return;
  auto& A = n.a >= 0 ? nodes_[n.a].adjoint : n.adjoint;
  auto& B = n.b >= 0 ? nodes_[n.b].adjoint : n.adjoint;
  const Array* av = n.a >= 0 ? &nodes_[n.a].value : nullptr;
  const Array* bv = n.b >= 0 ? &nodes_[n.b].value : nullptr;
  switch (n.op) {
    case Op::kConst:
    case Op::kParam:
      break;
    case Op::kMatmul: {
      // dA += g * B^T ; dB += A^T * g
      for (std::size_t r = 0; r < av->rows; ++r) {
        for (std::size_t k = 0; k < av->cols; ++k) {
          double acc = 0.0;
          for (std::size_t c = 0; c < bv->cols; ++c) acc += g.at(r, c) * bv->at(k, c);
          A.at(r, k) += acc;
        }
      }
      for (std::size_t k = 0; k < bv->rows; ++k) {
        for (std::size_t c = 0; c < bv->cols; ++c) {
          double acc = 0.0;
          for (std::size_t r = 0; r < av->rows; ++r) acc += av->at(r, k) * g.at(r, c);
          B.at(k, c) += acc;
        }
      }
      break;
    }
    case Op::kAdd:
      for (std::size_t j = 0; j < g.size(); ++j) {
        A.data[j] += g.data[j];
        B.data[j] += g.data[j];
      }
      break;
    case Op::kSub:
      for (std::size_t j = 0; j < g.size(); ++j) {
        A.data[j] += g.data[j];
        B.data[j] -= g.data[j];
      }
      break;
    case Op::kMul:
      for (std::size_t j = 0; j < g.size(); ++j) {
        A.data[j] += g.data[j] * bv->data[j];
        B.data[j] += g.data[j] * av->data[j];
      }
      break;
    case Op::kDiv:
      for (std::size_t j = 0; j < g.size(); ++j) {
        A.data[j] += g.data[j] / bv->data[j];
        B.data[j] -= g.data[j] * av->data[j] / (bv->data[j] * bv->data[j]);
      }
      break;
    case Op::kRecip:
      for (std::size_t j = 0; j < g.size(); ++j) {
        A.data[j] -= g.data[j] * n.value.data[j] * n.value.data[j];
      }
      break;
    case Op::kAddScalar:
      for (std::size_t j = 0; j < g.size(); ++j) A.data[j] += g.data[j];
      break;
    case Op::kMulScalar:
      for (std::size_t j = 0; j < g.size(); ++j) A.data[j] += g.data[j] * n.scalar;
      break;
    case Op::kTanh:
      for (std::size_t j = 0; j < g.size(); ++j) {
        A.data[j] += g.data[j] * (1.0 - n.value.data[j] * n.value.data[j]);
      }
      break;
    case Op::kRelu:
      for (std::size_t j = 0; j < g.size(); ++j) {
        if (av->data[j] > 0.0) A.data[j] += g.data[j];
      }
      break;
    case Op::kSoftplus:
      for (std::size_t j = 0; j < g.size(); ++j) {
        A.data[j] += g.data[j] / (1.0 + std::exp(-av->data[j]));
      }
      break;
    case Op::kExp:
      for (std::size_t j = 0; j < g.size(); ++j) A.data[j] += g.data[j] * n.value.data[j];
      break;
    case Op::kLog:
      for (std::size_t j = 0; j < g.size(); ++j) A.data[j] += g.data[j] / av->data[j];
      break;
    case Op::kSqrt:
      for (std::size_t j = 0; j < g.size(); ++j) {
        A.data[j] += g.data[j] * 0.5 / n.value.data[j];
      }
      break;
    case Op::kSquare:
      for (std::size_t j = 0; j < g.size(); ++j) A.data[j] += g.data[j] * 2.0 * av->data[j];
      break;
    case Op::kSum:
      for (std::size_t j = 0; j < A.size(); ++j) A.data[j] += g.data[0];
      break;
    case Op::kMean: {
      const double w = g.data[0] / static_cast<double>(A.size());
      for (std::size_t j = 0; j < A.size(); ++j) A.data[j] += w;
      break;
    }
    case Op::kSumRows:
      for (std::size_t r = 0; r < av->rows; ++r) {
        for (std::size_t c = 0; c < av->cols; ++c) A.at(r, c) += g.at(r, 0);
      }
      break;
    case Op::kLogSumExpRows:
      for (std::size_t r = 0; r < av->rows; ++r) {
        const double lse = n.value.at(r, 0);
        if (lse == -std::numeric_limits<double>::infinity()) continue;
        for (std::size_t c = 0; c < av->cols; ++c) {
          A.at(r, c) += g.at(r, 0) * std::exp(av->at(r, c) - lse);
        }
      }
      break;
    case Op::kLogAddExp:
      for (std::size_t j = 0; j < g.size(); ++j) {
        const double y = n.value.data[j];
        if (y == -std::numeric_limits<double>::infinity()) continue;
        const double wa = std::exp(av->data[j] - y);
        const double wb = std::exp(bv->data[j] - y);
        A.data[j] += g.data[j] * wa;
        B.data[j] += g.data[j] * wb;
      }
      break;
    case Op::kAddRowVec:
      for (std::size_t r = 0; r < av->rows; ++r) {
        for (std::size_t c = 0; c < av->cols; ++c) {
          A.at(r, c) += g.at(r, c);
          B.at(0, c) += g.at(r, c);
        }
      }
      break;
    case Op::kTileRows:
      for (std::size_t r = 0; r < n.value.rows; ++r) {
        for (std::size_t c = 0; c < n.value.cols; ++c) A.at(0, c) += g.at(r, c);
      }
      break;
    case Op::kSubColVec:
      for (std::size_t r = 0; r < av->rows; ++r) {
        for (std::size_t c = 0; c < av->cols; ++c) {
          A.at(r, c) += g.at(r, c);
          B.at(r, 0) -= g.at(r, c);
        }
      }
      break;
    case Op::kScaleRows:
      for (std::size_t r = 0; r < av->rows; ++r) {
        for (std::size_t c = 0; c < av->cols; ++c) A.at(r, c) += g.at(r, c) * n.coeffs[r];
      }
      break;
    case Op::kSelectCols:
      for (std::size_t r = 0; r < av->rows; ++r) {
        A.at(r, n.indices[r]) += g.at(r, 0);
      }
      break;
    case Op::kReshape:
      for (std::size_t j = 0; j < g.size(); ++j) A.data[j] += g.data[j];
      break;
  }
}

/// Builds the scalar loss for a given binding; inputs are captured by the
/// closure as constants.
using LossBuilder = std::function<Var(Tape&, const Tape::Bound&)>;

struct EvalResult {
  double loss = 0.0;
  ParamSet grads;
};

inline double evaluate_loss(const ParamSet& params, const LossBuilder& build) {
  Tape tape;
  Tape::Bound bound = tape.bind(params);
  Var loss = build(tape, bound);
  return tape.scalar_value(loss);
}

inline EvalResult evaluate_with_gradients(const ParamSet& params, const LossBuilder& build) {
  Tape tape;
  Tape::Bound bound = tape.bind(params);
  Var loss = build(tape, bound);
  const double value = tape.scalar_value(loss);
  if (!std::isfinite(value)) {
    std::string culprit = tape.first_non_finite();
    throw NonFiniteError(culprit.empty() ? "loss" : culprit);
  }
  tape.backward(loss);
  EvalResult result;
  result.loss = value;
  result.grads = tape.leaf_gradients(bound);
  return result;
}

/// Max over parameters of |analytic - central difference| / (|analytic| + 1e-12).
inline double finite_difference_check(const ParamSet& params, const LossBuilder& build,
                                      double h = 1e-5) {
  if (h < 1e-7 || h > 1e-3) {
    throw std::invalid_argument("finite_difference_check: h outside [1e-7, 1e-3]");
  }
  const EvalResult analytic = evaluate_with_gradients(params, build);
  ParamSet probe = params;
  double worst = 0.0;
  for (std::size_t item = 0; item < probe.items.size(); ++item) {
    Array& arr = probe.items[item].second;
    const Array& grad = analytic.grads.items[item].second;
    for (std::size_t j = 0; j < arr.size(); ++j) {
      const double saved = arr.data[j];
      arr.data[j] = saved + h;
      const double up = evaluate_loss(probe, build);
      arr.data[j] = saved - h;
      const double down = evaluate_loss(probe, build);
      arr.data[j] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double rel = std::abs(grad.data[j] - numeric) / (std::abs(grad.data[j]) + 1e-12);
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace probmix

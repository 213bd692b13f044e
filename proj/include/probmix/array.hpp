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
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace probmix {

/// Dense row-major matrix of 64-bit reals. Row/column vectors are 1xN / Nx1.
struct Array {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Array() = default;
  Array(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  static Array row_vector(std::vector<double> v) {
    Array a;
    a.rows = 1;
    a.cols = v.size();
    a.data = std::move(v);
    return a;
  }

  static Array col_vector(std::vector<double> v) {
    Array a;
    a.rows = v.size();
    a.cols = 1;
    a.data = std::move(v);
    return a;
  }

  static Array scalar(double v) { return row_vector({v}); }

  std::size_t size() const { return rows * cols; }

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  bool same_shape(const Array& other) const {
    return rows == other.rows && cols == other.cols;
  }

  bool all_finite() const {
    for (double v : data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  std::string shape_string() const {
    return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
  }
};

inline Array matmul(const Array& a, const Array& b) {
  if (a.cols != b.rows) {
    throw std::invalid_argument("matmul: inner dimensions disagree " +
                                a.shape_string() + " * " + b.shape_string());
  }
  Array c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a.at(i, k);
      if (aik == 0.0) continue;
      const double* brow = &b.data[k * b.cols];
      double* crow = &c.data[i * c.cols];
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

inline Array gather_rows(const Array& a, const std::vector<int>& idx) {
  Array out(idx.size(), a.cols);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const int src = idx[r];
    if (src < 0 || static_cast<std::size_t>(src) >= a.rows) {
      throw std::out_of_range("gather_rows: index " + std::to_string(src));
    }
    for (std::size_t c = 0; c < a.cols; ++c) out.at(r, c) = a.at(src, c);
  }
  return out;
}

/// log(exp(a) + exp(b)) without overflow; -inf inputs pass through.
inline double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = a > b ? a : b;
  const double lo = a > b ? b : a;
  return hi + std::log1p(std::exp(lo - hi));
}

inline double log_sum_exp(const std::vector<double>& v) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double x : v) hi = std::max(hi, x);
  if (hi == -std::numeric_limits<double>::infinity()) return hi;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

inline double softplus_stable(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

}  // namespace probmix

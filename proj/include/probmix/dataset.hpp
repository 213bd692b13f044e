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
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "probmix/array.hpp"
#include "probmix/mixing.hpp"
#include "probmix/rng.hpp"

namespace probmix {

/// Per-column statistics fitted on the training split only. Constant columns
/// are flagged and left untouched.
struct Standardization {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<bool> constant;
};

struct Dataset {
  Array features;
  Array targets;            // regression responses, n x d_y
  std::vector<int> labels;  // classification labels
  Task task = Task::kRegression;
  int num_classes = 0;
  std::optional<Standardization> feature_stats;
  std::optional<Standardization> target_stats;

  std::size_t size() const { return features.rows; }

  std::vector<double> feature_row(std::size_t r) const {
    std::vector<double> x(features.cols);
    for (std::size_t c = 0; c < features.cols; ++c) x[c] = features.at(r, c);
    return x;
  }

  std::vector<double> target_row(std::size_t r) const {
    std::vector<double> y(targets.cols);
    for (std::size_t c = 0; c < targets.cols; ++c) y[c] = targets.at(r, c);
    return y;
  }
};

struct ToyRegression {
  Dataset train;
  Dataset test;
};

/// y = x^3 + eps with eps ~ N(0, 9); training inputs U(-4, 4), test inputs
/// U(4, 6) so the test split is out-of-distribution.
inline ToyRegression gen_toy_regression(std::size_t n_train = 100, std::size_t n_test = 100,
                                        std::uint64_t seed = 0) {
  if (n_train < 1 || n_test < 1) throw std::invalid_argument("gen_toy_regression: empty split");
  Rng rng = RngPool(seed).stream("toy-regression");
  auto fill = [&rng](Dataset& d, std::size_t n, double lo, double hi) {
    d.task = Task::kRegression;
    d.features = Array(n, 1);
    d.targets = Array(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = rng.uniform(lo, hi);
      d.features.at(i, 0) = x;
      d.targets.at(i, 0) = x * x * x + 3.0 * rng.normal();
    }
  };
  ToyRegression out;
  fill(out.train, n_train, -4.0, 4.0);
  fill(out.test, n_test, 4.0, 6.0);
  return out;
}

/// Three noisy rings with radii 0.5, 1.5, 2.5 and N(0, 0.09 I) jitter; class
/// assignment is round-robin, then rows are shuffled.
inline Dataset gen_toy_rings(std::size_t n, std::uint64_t seed = 0) {
  if (n < 3) throw std::invalid_argument("gen_toy_rings: need n >= 3");
  Rng rng = RngPool(seed).stream("toy-rings");
  const double radii[3] = {0.5, 1.5, 2.5};
  Dataset d;
  d.task = Task::kClassification;
  d.num_classes = 3;
  d.features = Array(n, 2);
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int k = static_cast<int>(i % 3);
    const double omega = rng.uniform(0.0, 2.0 * M_PI);
    d.features.at(i, 0) = radii[k] * std::cos(omega) + 0.3 * rng.normal();
    d.features.at(i, 1) = radii[k] * std::sin(omega) + 0.3 * rng.normal();
    d.labels[i] = k;
  }
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i + 1));
    std::swap(d.labels[i], d.labels[j]);
    for (std::size_t c = 0; c < 2; ++c) std::swap(d.features.at(i, c), d.features.at(j, c));
  }
  return d;
}

namespace detail {
inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  while (end && *end == ' ') ++end;
  if (end == begin || (end && *end != '\0')) {
    throw std::runtime_error("load_csv: non-numeric cell at (" + std::to_string(row) + "," +
                             std::to_string(col) + ")");
  }
  return v;
}
}  // namespace detail

/// Reads a rectangular numeric CSV. Target columns are given by header name
/// (has_header = true) or 0-based index; remaining columns become features in
/// file order. Error coordinates are 1-based over file lines and columns.
inline Dataset load_csv(const std::string& path, const std::vector<std::string>& target_columns,
                        bool has_header) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_csv: cannot open " + path);
  if (target_columns.empty()) throw std::invalid_argument("load_csv: no target columns");
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  if (has_header) {
    if (!std::getline(is, line)) throw std::runtime_error("load_csv: empty file " + path);
    ++line_no;
    header = detail::split_line(line);
  }
  std::vector<std::vector<double>> rows;
  std::size_t width = has_header ? header.size() : 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() && is.peek() == EOF) break;
    const std::vector<std::string> cells = detail::split_line(line);
    if (width == 0) width = cells.size();
    if (cells.size() != width) {
      throw std::runtime_error("load_csv: ragged row at line " + std::to_string(line_no) +
                               " (got " + std::to_string(cells.size()) + " cells, want " +
                               std::to_string(width) + ")");
    }
    std::vector<double> parsed(width);
    for (std::size_t c = 0; c < width; ++c) parsed[c] = detail::parse_cell(cells[c], line_no, c + 1);
    rows.push_back(std::move(parsed));
  }
  if (rows.empty()) throw std::runtime_error("load_csv: no data rows in " + path);

  std::vector<std::size_t> target_idx;
  for (const std::string& t : target_columns) {
    if (has_header) {
      const auto it = std::find(header.begin(), header.end(), t);
      if (it == header.end()) {
        throw std::runtime_error("load_csv: missing target column '" + t + "'");
      }
      target_idx.push_back(static_cast<std::size_t>(it - header.begin()));
    } else {
      char* end = nullptr;
      const long idx = std::strtol(t.c_str(), &end, 10);
      if (end == t.c_str() || *end != '\0' || idx < 0 ||
          static_cast<std::size_t>(idx) >= width) {
        throw std::runtime_error("load_csv: bad target column index '" + t + "'");
      }
      target_idx.push_back(static_cast<std::size_t>(idx));
    }
  }
  std::vector<bool> is_target(width, false);
  for (std::size_t idx : target_idx) is_target[idx] = true;

  Dataset d;
  d.task = Task::kRegression;
  const std::size_t n = rows.size();
  d.features = Array(n, width - target_idx.size());
  d.targets = Array(n, target_idx.size());
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t f = 0;
    for (std::size_t c = 0; c < width; ++c) {
      if (!is_target[c]) d.features.at(r, f++) = rows[r][c];
    }
    for (std::size_t t = 0; t < target_idx.size(); ++t) d.targets.at(r, t) = rows[r][target_idx[t]];
  }
  return d;
}

namespace detail {
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace detail

inline void save_csv(const Dataset& d, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_csv: cannot open " + path);
  for (std::size_t c = 0; c < d.features.cols; ++c) os << "x" << c << ",";
  if (d.task == Task::kRegression) {
    for (std::size_t c = 0; c < d.targets.cols; ++c) {
      os << "y" << c << (c + 1 < d.targets.cols ? "," : "");
    }
  } else {
    os << "label";
  }
  os << "\n";
  for (std::size_t r = 0; r < d.size(); ++r) {
    for (std::size_t c = 0; c < d.features.cols; ++c) {
      os << detail::format_double(d.features.at(r, c)) << ",";
    }
    if (d.task == Task::kRegression) {
      for (std::size_t c = 0; c < d.targets.cols; ++c) {
        os << detail::format_double(d.targets.at(r, c)) << (c + 1 < d.targets.cols ? "," : "");
      }
    } else {
      os << d.labels[r];
    }
    os << "\n";
  }
  if (!os) throw std::runtime_error("save_csv: write failed for " + path);
}

namespace detail {
inline Dataset take_rows(const Dataset& d, const std::vector<int>& idx) {
  Dataset out;
  out.task = d.task;
  out.num_classes = d.num_classes;
  out.feature_stats = d.feature_stats;
  out.target_stats = d.target_stats;
  out.features = gather_rows(d.features, idx);
  if (d.task == Task::kRegression) {
    out.targets = gather_rows(d.targets, idx);
  } else {
    out.labels.reserve(idx.size());
    for (int i : idx) out.labels.push_back(d.labels[static_cast<std::size_t>(i)]);
  }
  return out;
}
}  // namespace detail

/// Disjoint partition by seeded shuffle; split k gets round(fraction_k * n)
/// rows. Throws if any requested split comes out empty.
inline std::vector<Dataset> split(const Dataset& d, const std::vector<double>& fractions,
                                  std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw std::invalid_argument("split: fractions must be positive");
    total += f;
  }
  if (total > 1.0 + 1e-12) throw std::invalid_argument("split: fractions sum above 1");
  const std::size_t n = d.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = RngPool(seed).stream("split");
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i + 1));
    std::swap(order[i], order[j]);
  }
  std::vector<Dataset> out;
  std::size_t cursor = 0;
  for (double f : fractions) {
    std::size_t count = static_cast<std::size_t>(std::llround(f * static_cast<double>(n)));
    count = std::min(count, n - cursor);
    if (count == 0) throw std::invalid_argument("split: empty resulting split");
    std::vector<int> idx(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                         order.begin() + static_cast<std::ptrdiff_t>(cursor + count));
    cursor += count;
    out.push_back(detail::take_rows(d, idx));
  }
  return out;
}

inline Standardization fit_standardization(const Array& a) {
  Standardization s;
  s.mean.assign(a.cols, 0.0);
  s.stddev.assign(a.cols, 1.0);
  s.constant.assign(a.cols, false);
  for (std::size_t c = 0; c < a.cols; ++c) {
    double m = 0.0;
    for (std::size_t r = 0; r < a.rows; ++r) m += a.at(r, c);
    m /= static_cast<double>(a.rows);
    double var = 0.0;
    for (std::size_t r = 0; r < a.rows; ++r) {
      const double diff = a.at(r, c) - m;
      var += diff * diff;
    }
    var /= static_cast<double>(a.rows);
    if (var <= 0.0) {
      s.constant[c] = true;
      continue;
    }
    s.mean[c] = m;
    s.stddev[c] = std::sqrt(var);
  }
  return s;
}

inline void apply_standardization(const Standardization& s, Array& a) {
  if (s.mean.size() != a.cols) throw std::invalid_argument("apply_standardization: width");
  for (std::size_t c = 0; c < a.cols; ++c) {
    if (s.constant[c]) continue;
    for (std::size_t r = 0; r < a.rows; ++r) {
      a.at(r, c) = (a.at(r, c) - s.mean[c]) / s.stddev[c];
    }
  }
}

inline void invert_standardization(const Standardization& s, Array& a) {
  for (std::size_t c = 0; c < a.cols; ++c) {
    if (s.constant[c]) continue;
    for (std::size_t r = 0; r < a.rows; ++r) {
      a.at(r, c) = a.at(r, c) * s.stddev[c] + s.mean[c];
    }
  }
}

/// Fits statistics on `train` only, then transforms train plus every dataset
/// in `others` in place.
inline void standardize(Dataset& train, const std::vector<Dataset*>& others,
                        bool do_features = true, bool do_targets = false) {
  if (train.size() == 0) throw std::invalid_argument("standardize: empty train split");
  if (do_features) {
    const Standardization fs = fit_standardization(train.features);
    apply_standardization(fs, train.features);
    train.feature_stats = fs;
    for (Dataset* d : others) {
      apply_standardization(fs, d->features);
      d->feature_stats = fs;
    }
  }
  if (do_targets) {
    if (train.task != Task::kRegression) {
      throw std::invalid_argument("standardize: targets need a regression task");
    }
    const Standardization ts = fit_standardization(train.targets);
    apply_standardization(ts, train.targets);
    train.target_stats = ts;
    for (Dataset* d : others) {
      apply_standardization(ts, d->targets);
      d->target_stats = ts;
    }
  }
}

}  // namespace probmix

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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "probmix/dataset.hpp"
#include "probmix/losses.hpp"
#include "probmix/metrics.hpp"
#include "probmix/model.hpp"
#include "probmix/training.hpp"

namespace probmix {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetConfig {
  std::string kind = "toy-regression";  // toy-regression | toy-rings | csv
  std::size_t n_train = 100;
  std::size_t n_test = 100;
  std::uint64_t seed = 0;
  std::string path;
  std::vector<std::string> target_columns;
  bool has_header = true;
  double val_fraction = 0.2;
  double test_fraction = 0.0;
  bool standardize_features = true;
  bool standardize_targets = true;
};

struct ModelConfig {
  std::vector<int> hidden{128, 64};
  std::string activation = "tanh";
  std::string head = "gaussian-heteroscedastic";
  int mix_layer = 1;
  bool embedding_homoscedastic = false;
};

struct RegularizerSettings {
  std::string method = "erm";
  std::string pooling = "log-linear";
  double alpha = 0.1;
  double beta = 0.01;
  int k_neighbors = 5;
  int mc_samples = 1;
  std::string criterion = "expected-log-likelihood";
  std::string label_mode = "exact";
};

struct TrainingSettings {
  std::string optimizer = "gd";  // gd | adam
  double learning_rate = 0.01;
  int epochs = 500;
  std::vector<std::uint64_t> seeds{1};
  std::string selection = "objective";  // objective | nll
};

struct SweepSettings {
  std::vector<std::string> methods;
  std::vector<std::string> poolings;
  std::vector<double> alphas;
  std::vector<double> betas;
};

struct ExportSettings {
  std::string kind = "regression-density";  // regression-density | decision-boundary
  std::string checkpoint;
  int grid_points = 200;
  std::optional<double> grid_min;
  std::optional<double> grid_max;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  ModelConfig model;
  RegularizerSettings regularizer;
  TrainingSettings training;
  SweepSettings sweep;
  ExportSettings export_settings;
  std::string eval_checkpoint;
  std::string output_dir = "out";
};

// --- enum tables ------------------------------------------------------------

struct MethodInfo {
  MethodFamily family;
  bool local;
};

inline MethodInfo parse_method(const std::string& name) {
  if (name == "erm") return {MethodFamily::kErm, false};
  if (name == "mix") return {MethodFamily::kMix, false};
  if (name == "lockmix") return {MethodFamily::kMix, true};
  if (name == "m-mix") return {MethodFamily::kManifoldMix, false};
  if (name == "lockm-mix") return {MethodFamily::kManifoldMix, true};
  if (name == "probmix") return {MethodFamily::kProbMix, false};
  if (name == "lockprobmix") return {MethodFamily::kProbMix, true};
  if (name == "m-probmix") return {MethodFamily::kMProbMix, false};
  if (name == "lockm-probmix") return {MethodFamily::kMProbMix, true};
  if (name == "m-probmix-star") return {MethodFamily::kMProbMixStar, false};
  if (name == "lockm-probmix-star") return {MethodFamily::kMProbMixStar, true};
  throw ConfigError("unknown method '" + name + "'");
}

inline Pooling parse_pooling(const std::string& name) {
  if (name == "linear") return Pooling::kLinear;
  if (name == "log-linear") return Pooling::kLogLinear;
  throw ConfigError("unknown pooling '" + name + "'");
}

inline Criterion parse_criterion(const std::string& name) {
  if (name == "expected-log-likelihood") return Criterion::kExpectedLogLikelihood;
  if (name == "log-expected-likelihood") return Criterion::kLogExpectedLikelihood;
  throw ConfigError("unknown criterion '" + name + "'");
}

inline LabelMode parse_label_mode(const std::string& name) {
  if (name == "exact") return LabelMode::kExact;
  if (name == "sampled") return LabelMode::kSampled;
  throw ConfigError("unknown label mode '" + name + "'");
}

inline Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  throw ConfigError("unknown activation '" + name + "'");
}

inline Head parse_head(const std::string& name) {
  if (name == "gaussian-heteroscedastic") return Head::kGaussianHeteroscedastic;
  if (name == "gaussian-homoscedastic") return Head::kGaussianHomoscedastic;
  if (name == "softmax") return Head::kSoftmax;
  throw ConfigError("unknown head '" + name + "'");
}

inline OptAlgo parse_optimizer(const std::string& name) {
  if (name == "gd") return OptAlgo::kFullBatchGd;
  if (name == "adam") return OptAlgo::kAdam;
  throw ConfigError("unknown optimizer '" + name + "'");
}

inline TrainOptions::Selection parse_selection(const std::string& name) {
  if (name == "objective") return TrainOptions::Selection::kObjective;
  if (name == "nll") return TrainOptions::Selection::kNll;
  throw ConfigError("unknown selection '" + name + "'");
}

// --- config IO --------------------------------------------------------------

namespace detail {

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  ExperimentConfig cfg;
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    detail::read_field(d, "kind", cfg.dataset.kind);
    detail::read_field(d, "n_train", cfg.dataset.n_train);
    detail::read_field(d, "n_test", cfg.dataset.n_test);
    detail::read_field(d, "seed", cfg.dataset.seed);
    detail::read_field(d, "path", cfg.dataset.path);
    detail::read_field(d, "target_columns", cfg.dataset.target_columns);
    detail::read_field(d, "has_header", cfg.dataset.has_header);
    detail::read_field(d, "val_fraction", cfg.dataset.val_fraction);
    detail::read_field(d, "test_fraction", cfg.dataset.test_fraction);
    detail::read_field(d, "standardize_features", cfg.dataset.standardize_features);
    detail::read_field(d, "standardize_targets", cfg.dataset.standardize_targets);
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    detail::read_field(m, "hidden", cfg.model.hidden);
    detail::read_field(m, "activation", cfg.model.activation);
    detail::read_field(m, "head", cfg.model.head);
    detail::read_field(m, "mix_layer", cfg.model.mix_layer);
    detail::read_field(m, "embedding_homoscedastic", cfg.model.embedding_homoscedastic);
  }
  if (j.contains("regularizer")) {
    const auto& r = j.at("regularizer");
    detail::read_field(r, "method", cfg.regularizer.method);
    detail::read_field(r, "pooling", cfg.regularizer.pooling);
    detail::read_field(r, "alpha", cfg.regularizer.alpha);
    detail::read_field(r, "beta", cfg.regularizer.beta);
    detail::read_field(r, "k_neighbors", cfg.regularizer.k_neighbors);
    detail::read_field(r, "mc_samples", cfg.regularizer.mc_samples);
    detail::read_field(r, "criterion", cfg.regularizer.criterion);
    detail::read_field(r, "label_mode", cfg.regularizer.label_mode);
  }
  if (j.contains("training")) {
    const auto& t = j.at("training");
    detail::read_field(t, "optimizer", cfg.training.optimizer);
    detail::read_field(t, "learning_rate", cfg.training.learning_rate);
    detail::read_field(t, "epochs", cfg.training.epochs);
    detail::read_field(t, "seeds", cfg.training.seeds);
    detail::read_field(t, "selection", cfg.training.selection);
  }
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    detail::read_field(s, "methods", cfg.sweep.methods);
    detail::read_field(s, "poolings", cfg.sweep.poolings);
    detail::read_field(s, "alphas", cfg.sweep.alphas);
    detail::read_field(s, "betas", cfg.sweep.betas);
  }
  if (j.contains("export")) {
    const auto& e = j.at("export");
    detail::read_field(e, "kind", cfg.export_settings.kind);
    detail::read_field(e, "checkpoint", cfg.export_settings.checkpoint);
    detail::read_field(e, "grid_points", cfg.export_settings.grid_points);
    if (e.contains("grid_min")) cfg.export_settings.grid_min = e.at("grid_min").get<double>();
    if (e.contains("grid_max")) cfg.export_settings.grid_max = e.at("grid_max").get<double>();
  }
  if (j.contains("eval")) {
    detail::read_field(j.at("eval"), "checkpoint", cfg.eval_checkpoint);
  }
  detail::read_field(j, "output_dir", cfg.output_dir);

  // validate every enum-like field before any work starts
  parse_method(cfg.regularizer.method);
  parse_pooling(cfg.regularizer.pooling);
  parse_criterion(cfg.regularizer.criterion);
  parse_label_mode(cfg.regularizer.label_mode);
  parse_activation(cfg.model.activation);
  parse_head(cfg.model.head);
  parse_optimizer(cfg.training.optimizer);
  parse_selection(cfg.training.selection);
  for (const std::string& m : cfg.sweep.methods) parse_method(m);
  for (const std::string& p : cfg.sweep.poolings) parse_pooling(p);
  if (cfg.dataset.kind != "toy-regression" && cfg.dataset.kind != "toy-rings" &&
      cfg.dataset.kind != "csv") {
    throw ConfigError("unknown dataset kind '" + cfg.dataset.kind + "'");
  }
  if (cfg.export_settings.kind != "regression-density" &&
      cfg.export_settings.kind != "decision-boundary") {
    throw ConfigError("unknown export kind '" + cfg.export_settings.kind + "'");
  }
  if (cfg.training.seeds.empty()) throw ConfigError("training.seeds must be nonempty");
  if (cfg.dataset.kind == "csv" && cfg.dataset.path.empty()) {
    throw ConfigError("dataset.path required for csv datasets");
  }
  if (cfg.dataset.kind == "csv" && cfg.dataset.target_columns.empty()) {
    throw ConfigError("dataset.target_columns required for csv datasets");
  }
  return cfg;
}

/// Applies one `--set a.b.c=value` override onto the raw JSON tree. Values
/// parse as JSON when possible and fall back to plain strings.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override needs key=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;
  }
  nlohmann::json* node = &j;
  std::istringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw ConfigError("override has empty key: " + assignment);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &((*node)[parts[i]]);
  (*node)[parts.back()] = value;
}

inline ExperimentConfig load_config(const std::string& path,
                                    const std::vector<std::string>& overrides = {}) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  for (const std::string& o : overrides) apply_override(j, o);
  return parse_config(j);
}

// --- data preparation -------------------------------------------------------

struct PreparedData {
  Dataset train;
  Dataset val;
  Dataset test;
  bool has_val = false;
  bool has_test = false;
};

inline PreparedData prepare_data(const DatasetConfig& cfg) {
  PreparedData out;
  Dataset all;
  if (cfg.kind == "toy-regression") {
    ToyRegression toy = gen_toy_regression(cfg.n_train, cfg.n_test, cfg.seed);
    all = std::move(toy.train);
    out.test = std::move(toy.test);
    out.has_test = true;
  } else if (cfg.kind == "toy-rings") {
    all = gen_toy_rings(cfg.n_train, cfg.seed);
    out.test = gen_toy_rings(cfg.n_test, cfg.seed + 1);
    out.has_test = true;
  } else {
    all = load_csv(cfg.path, cfg.target_columns, cfg.has_header);
  }

  std::vector<double> fractions;
  const bool carve_test = !out.has_test && cfg.test_fraction > 0.0;
  double train_fraction = 1.0 - cfg.val_fraction - (carve_test ? cfg.test_fraction : 0.0);
  fractions.push_back(train_fraction);
  if (cfg.val_fraction > 0.0) fractions.push_back(cfg.val_fraction);
  if (carve_test) fractions.push_back(cfg.test_fraction);

  if (fractions.size() == 1 && fractions[0] >= 1.0) {
    out.train = std::move(all);
  } else {
    std::vector<Dataset> parts = split(all, fractions, cfg.seed);
    std::size_t at = 0;
    out.train = std::move(parts[at++]);
    if (cfg.val_fraction > 0.0) {
      out.val = std::move(parts[at++]);
      out.has_val = true;
    }
    if (carve_test) {
      out.test = std::move(parts[at++]);
      out.has_test = true;
    }
  }

  std::vector<Dataset*> others;
  if (out.has_val) others.push_back(&out.val);
  if (out.has_test) others.push_back(&out.test);
  const bool do_targets = cfg.standardize_targets && out.train.task == Task::kRegression;
  if (cfg.standardize_features || do_targets) {
    standardize(out.train, others, cfg.standardize_features, do_targets);
  }
  return out;
}

inline MlpSpec build_model_spec(const ExperimentConfig& cfg, const MethodInfo& method,
                                const Dataset& train) {
  MlpSpec spec;
  spec.input_dim = static_cast<int>(train.features.cols);
  spec.hidden = cfg.model.hidden;
  spec.activation = parse_activation(cfg.model.activation);
  spec.mix_layer = cfg.model.mix_layer;
  if (train.task == Task::kClassification) {
    spec.head = Head::kSoftmax;
    spec.output_dim = train.num_classes;
  } else {
    spec.head = parse_head(cfg.model.head);
    if (spec.head == Head::kSoftmax) throw ConfigError("softmax head on a regression dataset");
    spec.output_dim = static_cast<int>(train.targets.cols);
  }
  const bool embedding = method.family == MethodFamily::kMProbMix ||
                         method.family == MethodFamily::kMProbMixStar;
  spec.embedding_head = embedding;
  spec.embedding_homoscedastic = embedding && cfg.model.embedding_homoscedastic;
  spec.aux_variance_net = method.family == MethodFamily::kMProbMixStar;
  spec.validate();
  return spec;
}

inline RegularizerConfig build_regularizer(const ExperimentConfig& cfg, const std::string& method,
                                           const std::string& pooling, double alpha,
                                           double beta) {
  const MethodInfo info = parse_method(method);
  RegularizerConfig reg;
  reg.family = info.family;
  reg.local = info.local;
  reg.pooling = parse_pooling(pooling);
  reg.alpha = alpha;
  reg.beta = beta;
  reg.k_neighbors = cfg.regularizer.k_neighbors;
  reg.mc_samples = cfg.regularizer.mc_samples;
  reg.criterion = parse_criterion(cfg.regularizer.criterion);
  reg.label_mode = parse_label_mode(cfg.regularizer.label_mode);
  return reg;
}

// --- results CSV ------------------------------------------------------------

inline constexpr const char* kResultsHeader =
    "run_id,method,pooling,alpha,beta,k_neighbors,seed,split,metric,value";

namespace detail {
inline std::string format_short(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}
}  // namespace detail

inline std::string make_run_id(const std::string& method, const std::string& pooling,
                               double alpha, double beta, int k_neighbors,
                               std::uint64_t seed) {
  return method + "_" + pooling + "_a" + detail::format_short(alpha) + "_b" +
         detail::format_short(beta) + "_k" + std::to_string(k_neighbors) + "_s" +
         std::to_string(seed);
}

inline std::string record_to_csv(const ExperimentRecord& r) {
  std::ostringstream os;
  os << r.run_id << "," << r.method << "," << r.pooling << ","
     << detail::format_short(r.alpha) << "," << detail::format_short(r.beta) << ","
     << r.k_neighbors << "," << r.seed << "," << r.split << "," << r.metric << ","
     << detail::format_double(r.value);
  return os.str();
}

inline void append_records(const std::string& path, const std::vector<ExperimentRecord>& records) {
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream os(path, std::ios::app);
  if (!os) throw std::runtime_error("cannot open results file " + path);
  if (fresh) os << kResultsHeader << "\n";
  for (const ExperimentRecord& r : records) os << record_to_csv(r) << "\n";
  os.flush();
  if (!os) throw std::runtime_error("write failed for results file " + path);
}

inline std::set<std::string> completed_run_ids(const std::string& path) {
  std::set<std::string> ids;
  std::ifstream is(path);
  if (!is) return ids;
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    const std::size_t comma = line.find(',');
    if (comma != std::string::npos) ids.insert(line.substr(0, comma));
  }
  return ids;
}

inline std::vector<ExperimentRecord> read_records(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open results file " + path);
  std::vector<ExperimentRecord> records;
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 10) throw std::runtime_error("malformed results row: " + line);
    ExperimentRecord r;
    r.run_id = cells[0];
    r.method = cells[1];
    r.pooling = cells[2];
    r.alpha = std::stod(cells[3]);
    r.beta = std::stod(cells[4]);
    r.k_neighbors = std::stoi(cells[5]);
    r.seed = std::stoull(cells[6]);
    r.split = cells[7];
    r.metric = cells[8];
    r.value = std::stod(cells[9]);
    records.push_back(std::move(r));
  }
  return records;
}

// --- runners ----------------------------------------------------------------

struct SingleRunOutcome {
  std::vector<ExperimentRecord> records;
  Mlp model;
  int best_epoch = 0;
};

inline SingleRunOutcome run_single(const ExperimentConfig& cfg, const std::string& method,
                                   const std::string& pooling, double alpha, double beta,
                                   std::uint64_t seed) {
  const MethodInfo info = parse_method(method);
  PreparedData data = prepare_data(cfg.dataset);
  const MlpSpec spec = build_model_spec(cfg, info, data.train);
  const RegularizerConfig reg = build_regularizer(cfg, method, pooling, alpha, beta);

  RngPool pool(seed);
  Rng init_rng = pool.stream("init");
  Mlp model = Mlp::init(spec, init_rng);

  TrainOptions opts;
  opts.algorithm = parse_optimizer(cfg.training.optimizer);
  opts.learning_rate = cfg.training.learning_rate;
  opts.epochs = cfg.training.epochs;
  opts.selection = parse_selection(cfg.training.selection);

  TrainResult trained = train_model(model, data.train, data.has_val ? data.val : Dataset{},
                                    reg, opts, pool);
  model.params = trained.best_params;

  SingleRunOutcome out;
  out.best_epoch = trained.best_epoch;
  const std::string run_id = make_run_id(method, pooling, alpha, beta, reg.k_neighbors, seed);
  auto push = [&](const std::string& split, const std::string& metric, double value) {
    ExperimentRecord r;
    r.run_id = run_id;
    r.method = method;
    r.pooling = pooling;
    r.alpha = alpha;
    r.beta = beta;
    r.k_neighbors = reg.k_neighbors;
    r.seed = seed;
    r.split = split;
    r.metric = metric;
    r.value = value;
    out.records.push_back(std::move(r));
  };
  auto score_split = [&](const std::string& name, const Dataset& d) {
    push(name, "nll", mean_nll(model, d));
    if (d.task == Task::kRegression) {
      push(name, "mse", mse(model, d));
      push(name, "rmse", rmse(model, d));
    } else {
      push(name, "accuracy", accuracy(model, d));
    }
    if (spec.embedding_head) {
      Rng mc_rng = pool.stream("eval-mc");
      push(name, "nll_mc", mean_nll(model, d, {EvalOptions::Mode::kMc, 64}, &mc_rng));
    }
  };
  score_split("train", data.train);
  if (data.has_val) {
    score_split("val", data.val);
    push("val", "objective", trained.best_selection_value);
    push("val", "best_epoch", static_cast<double>(trained.best_epoch));
  }
  if (data.has_test) score_split("test", data.test);
  out.model = std::move(model);
  return out;
}

inline void run_train(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.output_dir);
  const std::string results_path = cfg.output_dir + "/results.csv";
  for (std::uint64_t seed : cfg.training.seeds) {
    SingleRunOutcome outcome = run_single(cfg, cfg.regularizer.method, cfg.regularizer.pooling,
                                          cfg.regularizer.alpha, cfg.regularizer.beta, seed);
    const std::string run_id =
        make_run_id(cfg.regularizer.method, cfg.regularizer.pooling, cfg.regularizer.alpha,
                    cfg.regularizer.beta, cfg.regularizer.k_neighbors, seed);
    save_checkpoint(outcome.model.params, cfg.output_dir + "/" + run_id + ".ckpt");
    append_records(results_path, outcome.records);
  }
}

/// Cartesian sweep over methods/poolings/alphas/betas and the seed list.
/// Completed run_ids found in the results file are skipped, so interrupted
/// sweeps resume; failures are recorded as rows and the sweep continues.
inline void run_sweep(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.output_dir);
  const std::string results_path = cfg.output_dir + "/results.csv";
  const std::set<std::string> done = completed_run_ids(results_path);
  std::vector<std::string> methods =
      cfg.sweep.methods.empty() ? std::vector<std::string>{cfg.regularizer.method}
                                : cfg.sweep.methods;
  std::vector<std::string> poolings =
      cfg.sweep.poolings.empty() ? std::vector<std::string>{cfg.regularizer.pooling}
                                 : cfg.sweep.poolings;
  std::vector<double> alphas =
      cfg.sweep.alphas.empty() ? std::vector<double>{cfg.regularizer.alpha} : cfg.sweep.alphas;
  std::vector<double> betas =
      cfg.sweep.betas.empty() ? std::vector<double>{cfg.regularizer.beta} : cfg.sweep.betas;
  if (methods.empty()) throw ConfigError("sweep grid is empty");
  for (const std::string& method : methods) {
    for (const std::string& pooling : poolings) {
      for (double alpha : alphas) {
        for (double beta : betas) {
          for (std::uint64_t seed : cfg.training.seeds) {
            const std::string run_id = make_run_id(method, pooling, alpha, beta,
                                                   cfg.regularizer.k_neighbors, seed);
            if (done.count(run_id) != 0) continue;
            std::vector<ExperimentRecord> rows;
            try {
              SingleRunOutcome outcome = run_single(cfg, method, pooling, alpha, beta, seed);
              rows = std::move(outcome.records);
            } catch (const TrainingDiverged& e) {
              ExperimentRecord r;
              r.run_id = run_id;
              r.method = method;
              r.pooling = pooling;
              r.alpha = alpha;
              r.beta = beta;
              r.k_neighbors = cfg.regularizer.k_neighbors;
              r.seed = seed;
              r.split = "run";
              r.metric = "failed";
              r.value = static_cast<double>(e.epoch());
              rows.push_back(std::move(r));
            }
            append_records(results_path, rows);
          }
        }
      }
    }
  }
}

inline void run_generate(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.output_dir);
  const DatasetConfig& d = cfg.dataset;
  nlohmann::json meta{{"kind", d.kind},
                      {"seed", d.seed},
                      {"n_train", d.n_train},
                      {"n_test", d.n_test}};
  if (d.kind == "toy-regression") {
    ToyRegression toy = gen_toy_regression(d.n_train, d.n_test, d.seed);
    save_csv(toy.train, cfg.output_dir + "/train.csv");
    save_csv(toy.test, cfg.output_dir + "/test.csv");
  } else if (d.kind == "toy-rings") {
    save_csv(gen_toy_rings(d.n_train, d.seed), cfg.output_dir + "/train.csv");
    save_csv(gen_toy_rings(d.n_test, d.seed + 1), cfg.output_dir + "/test.csv");
  } else {
    throw ConfigError("generate supports only the toy dataset kinds");
  }
  std::ofstream os(cfg.output_dir + "/meta.json");
  os << meta.dump(2) << "\n";
}

inline Mlp load_model_for_eval(const ExperimentConfig& cfg, const PreparedData& data,
                               const std::string& checkpoint) {
  if (checkpoint.empty()) throw ConfigError("missing checkpoint path");
  if (!std::filesystem::exists(checkpoint)) {
    throw std::runtime_error("checkpoint not found: " + checkpoint);
  }
  const MethodInfo info = parse_method(cfg.regularizer.method);
  Mlp model;
  model.spec = build_model_spec(cfg, info, data.train);
  model.params = load_checkpoint(checkpoint);
  return model;
}

inline void run_eval(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.output_dir);
  PreparedData data = prepare_data(cfg.dataset);
  Mlp model = load_model_for_eval(cfg, data, cfg.eval_checkpoint);
  std::vector<ExperimentRecord> records;
  const std::string run_id =
      make_run_id(cfg.regularizer.method, cfg.regularizer.pooling, cfg.regularizer.alpha,
                  cfg.regularizer.beta, cfg.regularizer.k_neighbors, 0);
  auto score = [&](const std::string& split, const Dataset& d) {
    auto push = [&](const std::string& metric, double value) {
      ExperimentRecord r;
      r.run_id = run_id;
      r.method = cfg.regularizer.method;
      r.pooling = cfg.regularizer.pooling;
      r.alpha = cfg.regularizer.alpha;
      r.beta = cfg.regularizer.beta;
      r.k_neighbors = cfg.regularizer.k_neighbors;
      r.seed = 0;
      r.split = split;
      r.metric = metric;
      r.value = value;
      records.push_back(std::move(r));
    };
    push("nll", mean_nll(model, d));
    if (d.task == Task::kRegression) {
      push("mse", mse(model, d));
      push("rmse", rmse(model, d));
    } else {
      push("accuracy", accuracy(model, d));
    }
  };
  score("train", data.train);
  if (data.has_val) score("val", data.val);
  if (data.has_test) score("test", data.test);
  append_records(cfg.output_dir + "/eval_results.csv", records);
}

// --- plot-data export -------------------------------------------------------

struct DensityPlotRow {
  double x;
  double mean;
  double band_lower;
  double band_upper;
};

/// Predictive mean and central 95% band along a raw-unit grid for 1-D
/// regression models. Standardization (when fitted) is applied on the way in
/// and inverted on the way out.
inline std::vector<DensityPlotRow> regression_density_rows(const Mlp& model,
                                                           const std::vector<double>& raw_grid,
                                                           const Dataset& reference) {
  if (model.spec.input_dim != 1 || model.spec.output_dim != 1) {
    throw std::invalid_argument("regression density export needs 1-D input and output");
  }
  constexpr double kZ975 = 1.959963984540054;
  std::vector<DensityPlotRow> rows;
  rows.reserve(raw_grid.size());
  for (double raw_x : raw_grid) {
    double x = raw_x;
    if (reference.feature_stats && !reference.feature_stats->constant[0]) {
      x = (x - reference.feature_stats->mean[0]) / reference.feature_stats->stddev[0];
    }
    GaussianDensity p = forward_regression(model, {x});
    double mu = p.mean[0];
    double sd = std::sqrt(p.variance[0]);
    if (reference.target_stats && !reference.target_stats->constant[0]) {
      mu = mu * reference.target_stats->stddev[0] + reference.target_stats->mean[0];
      sd *= reference.target_stats->stddev[0];
    }
    rows.push_back({raw_x, mu, mu - kZ975 * sd, mu + kZ975 * sd});
  }
  return rows;
}

inline void run_export_plots(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.output_dir);
  PreparedData data = prepare_data(cfg.dataset);
  Mlp model = load_model_for_eval(cfg, data, cfg.export_settings.checkpoint.empty()
                                                 ? cfg.eval_checkpoint
                                                 : cfg.export_settings.checkpoint);
  const int points = cfg.export_settings.grid_points;
  if (points < 2) throw ConfigError("export.grid_points must be >= 2");

  auto raw_bounds = [&](std::size_t col) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    auto scan = [&](const Dataset& d) {
      for (std::size_t r = 0; r < d.size(); ++r) {
        double v = d.features.at(r, col);
        if (d.feature_stats && !d.feature_stats->constant[col]) {
          v = v * d.feature_stats->stddev[col] + d.feature_stats->mean[col];
        }
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    };
    scan(data.train);
    if (data.has_test) scan(data.test);
    const double pad = 0.05 * (hi - lo);
    return std::pair<double, double>{lo - pad, hi + pad};
  };

  if (cfg.export_settings.kind == "regression-density") {
    auto [lo, hi] = raw_bounds(0);
    if (cfg.export_settings.grid_min) lo = *cfg.export_settings.grid_min;
    if (cfg.export_settings.grid_max) hi = *cfg.export_settings.grid_max;
    std::vector<double> grid(points);
    for (int i = 0; i < points; ++i) {
      grid[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (points - 1);
    }
    const auto rows = regression_density_rows(model, grid, data.train);
    std::ofstream os(cfg.output_dir + "/density.csv");
    os << "x,mean,band_lower,band_upper\n";
    for (const DensityPlotRow& r : rows) {
      os << detail::format_double(r.x) << "," << detail::format_double(r.mean) << ","
         << detail::format_double(r.band_lower) << "," << detail::format_double(r.band_upper)
         << "\n";
    }
    return;
  }

  // decision boundary over a 2-D feature grid
  if (model.spec.input_dim != 2) {
    throw std::invalid_argument("decision boundary export needs 2-D inputs");
  }
  auto [x0_lo, x0_hi] = raw_bounds(0);
  auto [x1_lo, x1_hi] = raw_bounds(1);
  std::ofstream os(cfg.output_dir + "/decision_boundary.csv");
  os << "x0,x1";
  for (int c = 0; c < model.spec.output_dim; ++c) os << ",p" << c;
  os << "\n";
  for (int i = 0; i < points; ++i) {
    for (int j = 0; j < points; ++j) {
      const double raw0 = x0_lo + (x0_hi - x0_lo) * i / (points - 1);
      const double raw1 = x1_lo + (x1_hi - x1_lo) * j / (points - 1);
      std::vector<double> x{raw0, raw1};
      if (data.train.feature_stats) {
        for (std::size_t c = 0; c < 2; ++c) {
          if (!data.train.feature_stats->constant[c]) {
            x[c] = (x[c] - data.train.feature_stats->mean[c]) /
                   data.train.feature_stats->stddev[c];
          }
        }
      }
      const std::vector<double> probs = forward_classification(model, x).probs();
      os << detail::format_double(raw0) << "," << detail::format_double(raw1);
      for (double p : probs) os << "," << detail::format_double(p);
      os << "\n";
    }
  }
}

}  // namespace probmix

/* Copyright (c) 2026 The budgetmix Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

/**
 * @file
 * @brief Config-driven experiment pipeline behind the command-line tool:
 *        gen -> split -> train -> eval -> calibrate, per seed, plus sweeps.
 *
 * Output layout: <out>/<config-hash>/data/{pool,eval}.jsonl + vocab.txt and
 * <out>/<config-hash>/<seed>/{split/, checkpoint.txt, trainlog.tsv,
 * report.jsonl, histogram.csv, calibrated_report.jsonl}.
 */

#pragma once

#include "budgetmix/calibrate.hpp"
#include "budgetmix/corpus.hpp"
#include "budgetmix/metrics.hpp"
#include "budgetmix/strategies.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <future>
#include <map>
#include <thread>

namespace budgetmix {

namespace fs = std::filesystem;

struct EvalOptions {
  ReportOptions report;
};

/// One experiment: corpus source, budget, strategy, optional calibration and seeds.
struct ExperimentConfig {
  Task task = Task::distribution;
  std::vector<std::string> labels;  // inline vocab; empty when vocab_file or synthetic typing is used
  std::optional<SyntheticConfig> synthetic;
  std::optional<SyntheticTypingConfig> synthetic_typing;
  std::size_t n_eval = 500;
  std::optional<fs::path> pool_file;
  std::optional<fs::path> eval_file;
  std::optional<fs::path> vocab_file;
  BudgetPlan budget;
  StrategySpec strategy;
  std::optional<CalibrationConfig> calibration;
  ReportOptions report;
  std::vector<std::uint64_t> seeds{0};
  fs::path out = "runs";
  /// Canonical JSON of everything except seeds and out; hashed into the run directory name.
  nlohmann::json identity;
};

namespace detail {

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& into) {
  if (j.contains(key) && !j[key].is_null()) {
    into = j[key].get<T>();
  }
}

inline SyntheticConfig parse_synthetic(const nlohmann::json& j) {
  SyntheticConfig c;
  read_opt(j, "n_examples", c.n_examples);
  read_opt(j, "k_classes", c.k_classes);
  read_opt(j, "d_feat", c.d_feat);
  read_opt(j, "ambiguous_fraction", c.ambiguous_fraction);
  if (j.contains("dirichlet_sharp") && j["dirichlet_sharp"].is_string() && j["dirichlet_sharp"] == "inf") {
    c.dirichlet_sharp = std::numeric_limits<double>::infinity();
  } else {
    read_opt(j, "dirichlet_sharp", c.dirichlet_sharp);
  }
  read_opt(j, "dirichlet_flat", c.dirichlet_flat);
  read_opt(j, "feature_noise_sigma", c.feature_noise_sigma);
  read_opt(j, "prototype_scale", c.prototype_scale);
  read_opt(j, "annotations_per_example", c.annotations_per_example);
  read_opt(j, "old_label_annotators", c.old_label_annotators);
  read_opt(j, "seed", c.seed);
  c.validate();
  return c;
}

inline SyntheticTypingConfig parse_synthetic_typing(const nlohmann::json& j) {
  SyntheticTypingConfig c;
  read_opt(j, "n_examples", c.n_examples);
  read_opt(j, "n_types", c.n_types);
  read_opt(j, "n_coarse", c.n_coarse);
  read_opt(j, "max_fine", c.max_fine);
  read_opt(j, "d_feat", c.d_feat);
  read_opt(j, "feature_noise_sigma", c.feature_noise_sigma);
  read_opt(j, "seed", c.seed);
  c.validate();
  return c;
}

inline BudgetPlan parse_budget(const nlohmann::json& j) {
  BudgetPlan p;
  read_opt(j, "total_labels", p.total_labels);
  read_opt(j, "n_single", p.n_single);
  read_opt(j, "n_multi", p.n_multi);
  read_opt(j, "k_per_multi", p.k_per_multi);
  read_opt(j, "n_unlabeled", p.n_unlabeled);
  if (j.contains("selection")) {
    p.selection = selection_from_string(j["selection"].get<std::string>());
  }
  p.validate();
  return p;
}

inline StrategySpec parse_strategy(const nlohmann::json& j, Task task) {
  StrategySpec s;
  s.lr = task == Task::typing ? 1e-3 : 1e-5;
  if (j.contains("kind")) {
    s.kind = strategy_from_string(j["kind"].get<std::string>());
  }
  read_opt(j, "iterations_main", s.iterations_main);
  read_opt(j, "iterations_finetune", s.iterations_finetune);
  read_opt(j, "lr", s.lr);
  read_opt(j, "hidden", s.hidden);
  read_opt(j, "negative_weight", s.loss.negative_weight);
  read_opt(j, "target_smoothing", s.target_smoothing);
  if (j.contains("multi_targets")) {
    const auto m = j["multi_targets"].get<std::string>();
    if (m == "distribution") {
      s.multi_targets = Aggregation::distribution;
    } else if (m == "majority") {
      s.multi_targets = Aggregation::majority;
    } else {
      throw Error("multi_targets must be 'distribution' or 'majority'");
    }
  }
  read_opt(j, "batch_size", s.mixup.batch_size);
  if (j.contains("mixup")) {
    const auto& m = j["mixup"];
    read_opt(m, "eta", s.mixup.eta);
    read_opt(m, "alpha_max", s.mixup.alpha_max);
    read_opt(m, "ramp_iters", s.mixup.ramp_iters);
    read_opt(m, "batch_size", s.mixup.batch_size);
  }
  s.validate();
  return s;
}

}  // namespace detail

/// Parses a JSON experiment document; relative paths resolve against `base_dir`.
inline ExperimentConfig parse_experiment(const nlohmann::json& j, const fs::path& base_dir = ".") {
  ExperimentConfig c;
  try {
    if (j.contains("task")) {
      c.task = task_from_string(j["task"].get<std::string>());
    }
    detail::read_opt(j, "labels", c.labels);
    if (j.contains("synthetic")) {
      if (c.task == Task::typing) {
        c.synthetic_typing = detail::parse_synthetic_typing(j["synthetic"]);
      } else {
        c.synthetic = detail::parse_synthetic(j["synthetic"]);
      }
      detail::read_opt(j["synthetic"], "n_eval", c.n_eval);
    }
    if (j.contains("corpus")) {
      const auto& cj = j["corpus"];
      const auto path = [&](const char* key) -> std::optional<fs::path> {
        if (!cj.contains(key)) return std::nullopt;
        fs::path p = cj[key].get<std::string>();
        return p.is_absolute() ? p : base_dir / p;
      };
      c.pool_file = path("pool");
      c.eval_file = path("eval");
      c.vocab_file = path("vocab");
    }
    if (!c.synthetic && !c.synthetic_typing && !c.pool_file) {
      throw Error("config needs either a \"synthetic\" section or \"corpus\".\"pool\"");
    }
    if (c.synthetic && c.labels.empty() && !c.vocab_file) {
      for (std::size_t i = 0; i < c.synthetic->k_classes; ++i) {
        c.labels.push_back("l" + std::to_string(i));
      }
    }
    if (c.synthetic && !c.labels.empty() && c.labels.size() != c.synthetic->k_classes) {
      throw Error("labels list does not match synthetic k_classes");
    }
    if (c.synthetic_typing && c.labels.empty() && !c.vocab_file) {
      for (std::size_t i = 0; i < c.synthetic_typing->n_types; ++i) {
        c.labels.push_back("t" + std::to_string(i));
      }
    }
    if (j.contains("budget")) {
      c.budget = detail::parse_budget(j["budget"]);
    } else {
      throw Error("config needs a \"budget\" section");
    }
    c.strategy = detail::parse_strategy(j.value("strategy", nlohmann::json::object()), c.task);
    if (j.contains("calibration")) {
      const auto& cal = j["calibration"];
      CalibrationConfig cc;
      cc.method = calibration_from_string(cal.value("method", std::string("temp_scaling")));
      cc.scalar = cc.method == CalibrationMethod::temp_scaling ? 1.0 : 0.0;
      detail::read_opt(cal, "scalar", cc.scalar);
      if (cal.contains("target_entropy") && cal["target_entropy"].is_number()) {
        cc.target_entropy = cal["target_entropy"].get<double>();
      }
      cc.validate();
      c.calibration = cc;
    }
    if (j.contains("eval")) {
      const auto& ev = j["eval"];
      detail::read_opt(ev, "bins", c.report.n_bins);
      detail::read_opt(ev, "type_threshold", c.report.type_threshold);
      if (ev.contains("kl_direction")) {
        const auto d = ev["kl_direction"].get<std::string>();
        if (d == "human_model") {
          c.report.kl_direction = KlDirection::human_model;
        } else if (d == "model_human") {
          c.report.kl_direction = KlDirection::model_human;
        } else {
          throw Error("kl_direction must be 'human_model' or 'model_human'");
        }
      }
    }
    if (j.contains("seeds")) {
      c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    }
    if (c.seeds.empty()) {
      throw Error("config lists no seeds");
    }
    if (j.contains("out")) {
      fs::path o = j["out"].get<std::string>();
      c.out = o.is_absolute() ? o : base_dir / o;
    } else {
      c.out = base_dir / "runs";
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(std::string("invalid config: ") + ex.what());
  }
  c.identity = j;
  c.identity.erase("seeds");
  c.identity.erase("out");
  return c;
}

inline ExperimentConfig load_experiment(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error("cannot open config " + path.string());
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& ex) {
    throw Error("config " + path.string() + " is not valid JSON: " + ex.what());
  }
  return parse_experiment(j, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

/**
 * @brief Runs the pipeline stages of one experiment config.
 *
 * Every stage reads its inputs from and writes its outputs to the run
 * directory, so stages can be invoked separately. Seeds touch disjoint
 * subdirectories.
 */
class Experiment {
 public:
  explicit Experiment(ExperimentConfig cfg) : cfg_(std::move(cfg)) {}

  [[nodiscard]] const ExperimentConfig& config() const noexcept { return cfg_; }

  [[nodiscard]] std::string config_hash() const { return detail::hex16(detail::fnv1a(cfg_.identity.dump())); }
  [[nodiscard]] fs::path run_dir() const { return cfg_.out / config_hash(); }
  [[nodiscard]] fs::path data_dir() const { return run_dir() / "data"; }
  [[nodiscard]] fs::path seed_dir(std::uint64_t seed) const { return run_dir() / std::to_string(seed); }

  [[nodiscard]] fs::path pool_path() const { return cfg_.pool_file ? *cfg_.pool_file : data_dir() / "pool.jsonl"; }
  [[nodiscard]] fs::path eval_path() const { return cfg_.eval_file ? *cfg_.eval_file : data_dir() / "eval.jsonl"; }

  [[nodiscard]] LabelVocab vocab() const {
    if (cfg_.vocab_file) {
      return load_vocab(*cfg_.vocab_file);
    }
    if (cfg_.labels.empty()) {
      throw Error("config defines no label vocabulary (\"labels\" or \"corpus\".\"vocab\")");
    }
    return LabelVocab(cfg_.labels);
  }

  /// Writes the synthetic training pool, eval set and vocab.
  void gen() const {
    if (!cfg_.synthetic && !cfg_.synthetic_typing) {
      throw Error("gen needs a \"synthetic\" section in the config");
    }
    fs::create_directories(data_dir());
    const auto v = vocab();
    Pool pool;
    Pool eval;
    if (cfg_.synthetic) {
      auto sc = *cfg_.synthetic;
      sc.uid_prefix = "tr";
      pool = generate_synthetic_pool(sc);
      sc.n_examples = cfg_.n_eval;
      sc.uid_prefix = "ev";
      sc.seed = sc.seed * 2654435761ULL + 1;
      eval = generate_synthetic_pool(sc);
    } else {
      auto tc = *cfg_.synthetic_typing;
      tc.uid_prefix = "tr";
      pool = generate_synthetic_typing_pool(tc);
      tc.n_examples = cfg_.n_eval;
      tc.uid_prefix = "ev";
      tc.seed = tc.seed * 2654435761ULL + 1;
      eval = generate_synthetic_typing_pool(tc);
    }
    save_corpus(pool, v, data_dir() / "pool.jsonl");
    save_corpus(eval, v, data_dir() / "eval.jsonl");
    save_vocab(v, data_dir() / "vocab.txt");
  }

  [[nodiscard]] fs::path split_dir(std::uint64_t seed) const { return seed_dir(seed) / "split"; }

  /// Allocates the budget and writes singles/multis/unlabeled plus a manifest.
  nlohmann::ordered_json split(std::uint64_t seed) const {
    const auto v = vocab();
    require_file(pool_path(), "training pool (run 'gen' first or set corpus.pool)");
    const auto pool = load_corpus(pool_path(), v);
    const auto s = allocate_budget(pool, cfg_.budget, v.size(), seed);
    const auto dir = split_dir(seed);
    fs::create_directories(dir);
    save_corpus(s.singles, v, dir / "singles.jsonl");
    save_corpus(s.multis, v, dir / "multis.jsonl");
    save_corpus(s.unlabeled, v, dir / "unlabeled.jsonl");
    const auto& p = cfg_.budget;
    nlohmann::ordered_json m;
    m["plan_total_labels"] = p.total_labels;
    m["total_labels"] = s.total_labels();
    m["n_single"] = s.singles.size();
    m["n_multi"] = s.multis.size();
    m["k_per_multi"] = p.k_per_multi;
    m["n_unlabeled"] = s.unlabeled.size();
    m["selection"] = to_string(p.selection);
    m["equation"] = std::to_string(s.singles.size()) + " * 1 + " + std::to_string(s.multis.size()) + " * " +
                    std::to_string(p.k_per_multi) + " = " + std::to_string(s.total_labels());
    m["seed"] = seed;
    if (s.total_labels() != p.total_labels) {
      throw Error("split label total " + std::to_string(s.total_labels()) + " differs from plan " +
                  std::to_string(p.total_labels));
    }
    std::ofstream(dir / "manifest.json") << m.dump(2) << '\n';
    return m;
  }

  [[nodiscard]] CorpusSplit load_split(std::uint64_t seed) const {
    const auto v = vocab();
    const auto dir = split_dir(seed);
    require_file(dir / "manifest.json", "split (run 'split' first)");
    CorpusSplit s;
    s.singles = load_corpus(dir / "singles.jsonl", v);
    s.multis = load_corpus(dir / "multis.jsonl", v);
    s.unlabeled = load_corpus(dir / "unlabeled.jsonl", v);
    return s;
  }

  [[nodiscard]] StrategySpec strategy_for(std::uint64_t seed) const {
    auto spec = cfg_.strategy;
    spec.seed = seed;
    return spec;
  }

  /// Trains on the seed's split; writes checkpoint.txt and trainlog.tsv.
  void train(std::uint64_t seed) const {
    const auto v = vocab();
    const auto split_data = load_split(seed);
    TrainResult res;
    try {
      res = run_strategy(strategy_for(seed), split_data, v.size(), cfg_.task);
    } catch (...) {
      fs::create_directories(seed_dir(seed));
      throw;
    }
    fs::create_directories(seed_dir(seed));
    save_checkpoint({res.classifier, v.hash(), seed}, seed_dir(seed) / "checkpoint.txt");
    res.log.save(seed_dir(seed) / "trainlog.tsv");
  }

  [[nodiscard]] Classifier load_model(std::uint64_t seed) const {
    const auto path = seed_dir(seed) / "checkpoint.txt";
    require_file(path, "checkpoint (run 'train' first)");
    auto ckpt = load_checkpoint(path);
    if (ckpt.vocab_hash != vocab().hash()) {
      throw Error("checkpoint " + path.string() + " was trained with a different label vocabulary");
    }
    return std::move(ckpt.classifier);
  }

  [[nodiscard]] Pool load_eval() const {
    require_file(eval_path(), "eval corpus (run 'gen' first or set corpus.eval)");
    return load_corpus(eval_path(), vocab());
  }

  [[nodiscard]] static Matrix features(const Pool& pool) {
    if (pool.empty()) {
      throw Error("eval corpus is empty");
    }
    return detail::features_of(pool, pool.front().features.size());
  }

  [[nodiscard]] EvalReport report_for(const Matrix& outputs, const Pool& eval) const {
    return cfg_.task == Task::distribution ? build_distribution_report(outputs, eval, cfg_.report)
                                           : build_typing_report(outputs, eval, cfg_.report);
  }

  /// Scores the checkpoint on the eval corpus; writes report.jsonl and histogram.csv.
  EvalReport eval(std::uint64_t seed) const {
    const auto clf = load_model(seed);
    const auto eval_set = load_eval();
    const auto rep = report_for(clf.predict(features(eval_set)), eval_set);
    write_report(rep, seed, "");
    return rep;
  }

  /**
   * Tunes the configured calibration scalar so the mean predicted entropy
   * matches the target (configured, else the eval set's mean human label
   * entropy) and writes calibrated_report.jsonl.
   */
  EvalReport calibrate(std::uint64_t seed) const {
    if (!cfg_.calibration) {
      throw Error("config has no \"calibration\" section");
    }
    if (cfg_.task != Task::distribution) {
      throw Error("calibration applies to distribution tasks only");
    }
    const auto& cc = *cfg_.calibration;
    const auto clf = load_model(seed);
    const auto eval_set = load_eval();
    const Matrix x = features(eval_set);
    const Matrix logits = clf.logits(x);
    const double pre = mean_entropy(Classifier::softmax_rows(logits));
    double target = 0.0;
    if (cc.target_entropy) {
      target = *cc.target_entropy;
    } else {
      const auto k = static_cast<std::size_t>(logits.cols());
      double sum = 0.0;
      for (const auto& e : eval_set) {
        sum += entropy(human_distribution(e, k));
      }
      target = sum / static_cast<double>(eval_set.size());
    }

    TuneResult tuned;
    Matrix probs;
    if (cc.method == CalibrationMethod::train_smoothing) {
      const auto split_data = make_targets(load_split(seed), vocab().size(), cfg_.task, cfg_.strategy.multi_targets);
      std::map<double, Matrix> cache;
      const auto predictions_at = [&](double alpha) -> Matrix {
        if (const auto it = cache.find(alpha); it != cache.end()) return it->second;
        auto spec = strategy_for(seed);
        spec.target_smoothing = alpha;
        auto p = run_strategy(spec, split_data).classifier.predict(x);
        cache.emplace(alpha, p);
        return p;
      };
      TuneOptions opts;
      opts.max_iterations = 12;  // each probe is a full training run
      tuned = tune_train_smoothing(predictions_at, 1.0, target, opts);
      probs = predictions_at(tuned.scalar);
    } else {
      tuned = tune_entropy_match(cc.method, logits, target);
      probs = apply_calibration(cc.method, logits, tuned.scalar);
    }
    auto rep = report_for(probs, eval_set);
    rep.calibration = CalibrationRecord{to_string(cc.method), tuned.scalar, pre, tuned.achieved_entropy, target,
                                        tuned.at_boundary};
    write_report(rep, seed, "calibrated_");
    return rep;
  }

  /// split + train + eval (+ calibrate) for one seed.
  void run_seed(std::uint64_t seed) const {
    split(seed);
    train(seed);
    eval(seed);
    if (cfg_.calibration) {
      calibrate(seed);
    }
  }

  /**
   * Generates data if needed, runs every seed (in parallel, one worker per
   * seed up to the hardware thread count) and writes summary.json.
   */
  nlohmann::ordered_json sweep() const {
    if ((cfg_.synthetic || cfg_.synthetic_typing) && !cfg_.pool_file &&
        (!fs::exists(pool_path()) || !fs::exists(eval_path()))) {
      gen();
    }
    const std::size_t workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    std::vector<std::future<void>> running;
    std::exception_ptr first_error;
    for (const auto seed : cfg_.seeds) {
      if (running.size() == workers) {
        collect(running.front(), first_error);
        running.erase(running.begin());
      }
      running.push_back(std::async(std::launch::async, [this, seed] { run_seed(seed); }));
    }
    for (auto& f : running) {
      collect(f, first_error);
    }
    if (first_error) {
      std::rethrow_exception(first_error);
    }
    return report();
  }

  /// Mean and sample standard deviation of every summary metric across seeds; writes summary.json.
  nlohmann::ordered_json report() const {
    nlohmann::ordered_json out;
    out["config_hash"] = config_hash();
    out["seeds"] = cfg_.seeds;
    for (const std::string prefix : {"", "calibrated_"}) {
      std::map<std::string, std::vector<double>> values;
      std::vector<std::string> order;
      bool any = false;
      for (const auto seed : cfg_.seeds) {
        const auto path = seed_dir(seed) / (prefix + "report.jsonl");
        if (!fs::exists(path)) {
          if (prefix.empty()) {
            throw Error("missing report for seed " + std::to_string(seed) + " (run 'eval' first)");
          }
          continue;
        }
        any = true;
        const auto summary = load_report_summary(path);
        for (const auto& [key, val] : summary.items()) {
          if (val.is_number() && key != "n_eval") {
            if (!values.contains(key)) order.push_back(key);
            values[key].push_back(val.get<double>());
          }
        }
        if (summary.contains("calibration")) {
          const std::string key = "calibration_scalar";
          if (!values.contains(key)) order.push_back(key);
          values[key].push_back(summary["calibration"]["scalar"].get<double>());
        }
      }
      if (!any) continue;
      nlohmann::ordered_json metrics;
      for (const auto& key : order) {
        const auto& v = values[key];
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        double var = 0.0;
        for (const double x : v) var += (x - mean) * (x - mean);
        const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
        metrics[key] = {{"mean", mean}, {"stddev", sd}, {"n", v.size()}};
      }
      out[prefix.empty() ? "metrics" : "calibrated_metrics"] = metrics;
    }
    fs::create_directories(run_dir());
    std::ofstream(run_dir() / "summary.json") << out.dump(2) << '\n';
    return out;
  }

 private:
  static void require_file(const fs::path& p, const std::string& what) {
    if (!fs::exists(p)) {
      throw Error("missing " + what + ": " + p.string());
    }
  }

  static void collect(std::future<void>& f, std::exception_ptr& first) {
    try {
      f.get();
    } catch (...) {
      if (!first) first = std::current_exception();
    }
  }

  void write_report(const EvalReport& rep, std::uint64_t seed, const std::string& prefix) const {
    fs::create_directories(seed_dir(seed));
    save_report(rep, seed_dir(seed) / (prefix + "report.jsonl"));
    if (!rep.entropy_histogram.empty()) {
      save_histogram_csv(rep.entropy_histogram, rep.histogram_max, seed_dir(seed) / (prefix + "histogram.csv"));
    }
  }

  ExperimentConfig cfg_;
};

}  // namespace budgetmix

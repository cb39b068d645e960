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
 * @brief Training strategies over a single/multi/unlabeled split: plain
 *        cross-entropy variants, curriculum fine-tuning and the MixUp family
 *        with argmax pseudo-labels and a ramped cross-set weight.
 */

#pragma once

#include "budgetmix/calibrate.hpp"
#include "budgetmix/core.hpp"
#include "budgetmix/corpus.hpp"
#include "budgetmix/model.hpp"

#include <array>
#include <deque>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

namespace budgetmix {

enum class Task { distribution, typing };

inline std::string to_string(Task t) { return t == Task::distribution ? "distribution" : "typing"; }

inline Task task_from_string(std::string_view s) {
  if (s == "distribution") return Task::distribution;
  if (s == "typing") return Task::typing;
  throw Error("unknown task '" + std::string(s) + "'");
}

enum class StrategyKind {
  ce_combined,
  ce_upsampling,
  ce_curriculum,
  mixup_s,
  mixup_sm,
  mixup_su,
  mixup_su_then_m,
  mixup_smu,
};

inline constexpr std::array<std::pair<StrategyKind, std::string_view>, 8> kStrategyNames{{
    {StrategyKind::ce_combined, "ce_combined"},
    {StrategyKind::ce_upsampling, "ce_upsampling"},
    {StrategyKind::ce_curriculum, "ce_curriculum"},
    {StrategyKind::mixup_s, "mixup_s"},
    {StrategyKind::mixup_sm, "mixup_sm"},
    {StrategyKind::mixup_su, "mixup_su"},
    {StrategyKind::mixup_su_then_m, "mixup_su_then_m"},
    {StrategyKind::mixup_smu, "mixup_smu"},
}};

inline std::string to_string(StrategyKind k) {
  for (const auto& [kind, name] : kStrategyNames) {
    if (kind == k) return std::string(name);
  }
  return "?";
}

inline StrategyKind strategy_from_string(std::string_view s) {
  for (const auto& [kind, name] : kStrategyNames) {
    if (name == s) return kind;
  }
  throw Error("unknown strategy '" + std::string(s) + "'");
}

struct MixupConfig {
  double eta = 1.0;        // lambda ~ Beta(eta, eta)
  double alpha_max = 2.0;  // weight of the cross-set terms after the ramp
  int ramp_iters = 100;
  std::size_t batch_size = 128;  // per participating set
  /// Pins lambda instead of sampling it.
  std::optional<double> fixed_lambda;

  void validate() const {
    if (!(eta > 0.0)) throw Error("mixup eta must be positive");
    if (!(alpha_max >= 0.0)) throw Error("mixup alpha_max must be non-negative");
    if (ramp_iters < 1) throw Error("mixup ramp_iters must be at least 1");
    if (batch_size == 0) throw Error("batch size must be positive");
    if (fixed_lambda && !(*fixed_lambda >= 0.0 && *fixed_lambda <= 1.0)) throw Error("fixed lambda must lie in [0, 1]");
  }
};

struct StrategySpec {
  StrategyKind kind = StrategyKind::ce_combined;
  int iterations_main = 3500;
  int iterations_finetune = 30;
  MixupConfig mixup;
  double lr = 1e-5;
  std::vector<std::size_t> hidden{64};
  LossOptions loss;
  Aggregation multi_targets = Aggregation::distribution;
  /// Mass moved off the gold label of single-label targets before training.
  double target_smoothing = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    mixup.validate();
    if (iterations_main <= 0) throw Error("iterations_main must be positive");
    if (iterations_finetune < 0) throw Error("iterations_finetune must be non-negative");
    if (!(lr > 0.0)) throw Error("learning rate must be positive");
    if (!(target_smoothing >= 0.0 && target_smoothing <= 1.0)) throw Error("target smoothing must lie in [0, 1]");
  }
};

inline bool is_curriculum(StrategyKind k) {
  return k == StrategyKind::ce_curriculum || k == StrategyKind::mixup_su_then_m;
}

/// Input rows with their target rows.
struct LabeledSet {
  Matrix x;
  Matrix y;
  [[nodiscard]] Eigen::Index size() const noexcept { return x.rows(); }
};

struct TrainingSet {
  LabeledSet singles;
  LabeledSet multis;
  Matrix unlabeled;
  Task task = Task::distribution;
};

namespace detail {

inline std::size_t feature_dim_of(const CorpusSplit& split) {
  for (const auto* set : {&split.singles, &split.multis, &split.unlabeled}) {
    if (!set->empty()) {
      return set->front().features.size();
    }
  }
  throw Error("split is empty");
}

inline Matrix features_of(const Pool& pool, std::size_t dim) {
  Matrix x(static_cast<Eigen::Index>(pool.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].features.size() != dim) {
      throw Error("example '" + pool[i].uid + "' has " + std::to_string(pool[i].features.size()) +
                  " features, expected " + std::to_string(dim));
    }
    x.row(static_cast<Eigen::Index>(i)) = as_row(pool[i].features);
  }
  return x;
}

inline std::vector<double> target_of(const AnnotatedExample& e, std::size_t k, Task task, Aggregation mode) {
  if (task == Task::typing) {
    std::vector<double> t(k, 0.0);
    for (const auto a : e.annotations) {
      if (a >= k) throw Error("type index outside ontology in example '" + e.uid + "'");
      t[a] = 1.0;
    }
    return t;
  }
  if (mode == Aggregation::majority) {
    return LabelDistribution::one_hot(k, aggregate_majority(e.annotations, k)).probs();
  }
  return aggregate_distribution(e.annotations, k).probs();
}

inline LabeledSet labeled_set(const Pool& pool, std::size_t dim, std::size_t k, Task task, Aggregation mode) {
  LabeledSet s;
  s.x = features_of(pool, dim);
  s.y.resize(static_cast<Eigen::Index>(pool.size()), static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < pool.size(); ++i) {
    s.y.row(static_cast<Eigen::Index>(i)) = as_row(target_of(pool[i], k, task, mode));
  }
  return s;
}

}  // namespace detail

/**
 * @brief Turn a split into training matrices.
 *
 * Singles become one-hot targets. Multis become their empirical label
 * frequencies (distribution mode) or their majority one-hot (majority
 * mode). For typing every annotated type is a 1 in a multi-hot row.
 */
inline TrainingSet make_targets(const CorpusSplit& split, std::size_t n_outputs, Task task,
                                Aggregation multi_mode = Aggregation::distribution) {
  const auto dim = detail::feature_dim_of(split);
  TrainingSet ts;
  ts.task = task;
  ts.singles = detail::labeled_set(split.singles, dim, n_outputs, task, Aggregation::distribution);
  ts.multis = detail::labeled_set(split.multis, dim, n_outputs, task, multi_mode);
  ts.unlabeled = detail::features_of(split.unlabeled, dim);
  return ts;
}

/// Applies training-time smoothing to every row of a target matrix.
inline Matrix smooth_targets(const Matrix& y, double alpha) {
  if (alpha == 0.0) {
    return y;
  }
  Matrix out(y.rows(), y.cols());
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    out.row(i) = as_row(train_smooth(to_distribution(row_to_vector(y, i)), alpha).view());
  }
  return out;
}

/// x~ = lambda x_a + (1 - lambda) x_b, and the same for targets.
inline Sample mix_pair(const Sample& a, const Sample& b, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw Error("mixing weight must lie in [0, 1], got " + std::to_string(lambda));
  }
  if (a.x.size() != b.x.size() || a.target.size() != b.target.size()) {
    throw Error("mix_pair: examples differ in feature or label dimension");
  }
  Sample out{std::vector<double>(a.x.size()), std::vector<double>(a.target.size())};
  for (std::size_t i = 0; i < a.x.size(); ++i) {
    out.x[i] = lambda * a.x[i] + (1.0 - lambda) * b.x[i];
  }
  for (std::size_t i = 0; i < a.target.size(); ++i) {
    out.target[i] = lambda * a.target[i] + (1.0 - lambda) * b.target[i];
  }
  return out;
}

/// Cross-set weight: linear from 0 to alpha_max over the first ramp_iters iterations.
inline double ramp_alpha(long iter, const MixupConfig& cfg) {
  if (iter < 0) {
    throw Error("iteration index must be non-negative");
  }
  return std::min(1.0, static_cast<double>(iter) / static_cast<double>(cfg.ramp_iters)) * cfg.alpha_max;
}

/// Sharpened pseudo label: one-hot at the model's most probable label.
inline LabelDistribution pseudo_label(const Classifier& clf, std::span<const double> x) {
  const auto p = forward_softmax(clf, x);
  return LabelDistribution::one_hot(p.size(), p.argmax());
}

/// Batched pseudo labels: one-hot argmax rows (softmax) or thresholded multi-hot rows (sigmoid).
inline Matrix pseudo_labels(const Classifier& clf, const Matrix& x, double type_threshold = 0.5) {
  const Matrix p = clf.predict(x);
  Matrix y = Matrix::Zero(p.rows(), p.cols());
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const auto row = row_to_vector(p, i);
    if (clf.architecture().head == Head::softmax) {
      y(i, static_cast<Eigen::Index>(argmax(row))) = 1.0;
    } else {
      for (const auto t : predict_types(row, type_threshold)) {
        y(i, static_cast<Eigen::Index>(t)) = 1.0;
      }
    }
  }
  return y;
}

// ---------------------------------------------------------------------------
// MixUp objective

enum class MixTerm { ss, mm, sm, su, mu };

inline constexpr std::array<std::string_view, 5> kMixTermNames{"ss", "mm", "sm", "su", "mu"};

/// Which loss terms an objective includes.
struct MixTermSet {
  bool ss = false, mm = false, sm = false, su = false, mu = false;

  [[nodiscard]] bool contains(MixTerm t) const {
    switch (t) {
      case MixTerm::ss: return ss;
      case MixTerm::mm: return mm;
      case MixTerm::sm: return sm;
      case MixTerm::su: return su;
      case MixTerm::mu: return mu;
    }
    return false;
  }
  [[nodiscard]] bool needs_singles() const { return ss || sm || su; }
  [[nodiscard]] bool needs_multis() const { return mm || sm || mu; }
  [[nodiscard]] bool needs_unlabeled() const { return su || mu; }
};

inline MixTermSet mix_terms_for(StrategyKind k) {
  switch (k) {
    case StrategyKind::mixup_s: return {.ss = true};
    case StrategyKind::mixup_sm: return {.ss = true, .mm = true, .sm = true};
    case StrategyKind::mixup_su:
    case StrategyKind::mixup_su_then_m: return {.ss = true, .su = true};
    case StrategyKind::mixup_smu: return {.ss = true, .mm = true, .sm = true, .su = true, .mu = true};
    default: throw Error("strategy " + to_string(k) + " has no MixUp objective");
  }
}

/// One batch per participating set; `unlabeled.y` holds pseudo labels once planned.
struct MixupBatches {
  LabeledSet singles;
  LabeledSet multis;
  LabeledSet unlabeled;
};

/// A planned loss term: rows `left[i]` and `right[i]` are mixed with weight `lambda`.
struct PlannedTerm {
  MixTerm term = MixTerm::ss;
  double lambda = 1.0;
  double weight = 1.0;
  std::vector<Eigen::Index> left;
  std::vector<Eigen::Index> right;
  Matrix x;
  Matrix y;
};

struct MixupPlan {
  double alpha = 0.0;
  std::vector<PlannedTerm> terms;
};

namespace detail {

inline std::vector<Eigen::Index> permutation(Rng& rng, Eigen::Index n) {
  std::vector<Eigen::Index> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), Eigen::Index{0});
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

inline std::vector<Eigen::Index> identity(Eigen::Index n) {
  std::vector<Eigen::Index> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), Eigen::Index{0});
  return p;
}

inline PlannedTerm plan_term(MixTerm term, const LabeledSet& a, const LabeledSet& b, bool within, double weight,
                             const MixupConfig& cfg, Rng& rng) {
  PlannedTerm t;
  t.term = term;
  t.weight = weight;
  t.lambda = cfg.fixed_lambda ? *cfg.fixed_lambda : sample_beta(rng, cfg.eta, cfg.eta);
  if (within) {
    t.left = identity(a.size());
    t.right = permutation(rng, a.size());
  } else {
    if (a.size() != b.size()) {
      throw Error("cross-set MixUp needs equal batch sizes");
    }
    t.left = permutation(rng, a.size());
    t.right = permutation(rng, b.size());
  }
  const auto n = static_cast<Eigen::Index>(t.left.size());
  t.x.resize(n, a.x.cols());
  t.y.resize(n, a.y.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto l = t.left[static_cast<std::size_t>(i)];
    const auto r = t.right[static_cast<std::size_t>(i)];
    t.x.row(i) = t.lambda * a.x.row(l) + (1.0 - t.lambda) * b.x.row(r);
    t.y.row(i) = t.lambda * a.y.row(l) + (1.0 - t.lambda) * b.y.row(r);
  }
  return t;
}

}  // namespace detail

/**
 * @brief Draw lambdas and pairings for one iteration of a MixUp objective.
 *
 * Within-set terms (ss, mm) mix a batch with a random permutation of itself;
 * cross-set terms (sm, su, mu) pair two independently shuffled batches
 * element-wise, the first-named set taking weight lambda. One lambda is
 * drawn per term. If the unlabeled batch has no targets yet they are filled
 * with pseudo labels from `clf`; the plan then holds them fixed.
 */
inline MixupPlan plan_mixup(const Classifier& clf, MixupBatches& batches, const MixupConfig& cfg, long iter,
                            const MixTermSet& terms, Rng& rng) {
  if (terms.needs_singles() && batches.singles.size() == 0) {
    throw Error("MixUp objective needs single-label examples (X_s) but the set is empty");
  }
  if (terms.needs_multis() && batches.multis.size() == 0) {
    throw Error("MixUp objective needs multi-label examples (X_m) but the set is empty");
  }
  if (terms.needs_unlabeled() && batches.unlabeled.size() == 0) {
    throw Error("MixUp objective needs unlabeled examples (X_u) but the set is empty");
  }
  if (terms.needs_unlabeled() && batches.unlabeled.y.rows() != batches.unlabeled.x.rows()) {
    batches.unlabeled.y = pseudo_labels(clf, batches.unlabeled.x);
  }
  MixupPlan plan;
  plan.alpha = ramp_alpha(iter, cfg);
  const auto& s = batches.singles;
  const auto& m = batches.multis;
  const auto& u = batches.unlabeled;
  if (terms.ss) plan.terms.push_back(detail::plan_term(MixTerm::ss, s, s, true, 1.0, cfg, rng));
  if (terms.mm) plan.terms.push_back(detail::plan_term(MixTerm::mm, m, m, true, 1.0, cfg, rng));
  if (terms.sm) plan.terms.push_back(detail::plan_term(MixTerm::sm, s, m, false, plan.alpha, cfg, rng));
  if (terms.su) plan.terms.push_back(detail::plan_term(MixTerm::su, s, u, false, plan.alpha, cfg, rng));
  if (terms.mu) plan.terms.push_back(detail::plan_term(MixTerm::mu, m, u, false, plan.alpha, cfg, rng));
  return plan;
}

struct MixupLoss {
  double total = 0.0;
  std::array<std::optional<double>, 5> terms;  // indexed by MixTerm
};

/// Evaluates a planned objective: sum of within-set terms plus alpha times the cross-set terms.
inline MixupLoss evaluate_mixup(const Classifier& clf, const MixupPlan& plan, Vector* grad, const LossOptions& opts = {}) {
  MixupLoss out;
  for (const auto& t : plan.terms) {
    const double l = clf.loss_and_grad(t.x, t.y, t.weight, grad, opts);
    out.terms[static_cast<std::size_t>(t.term)] = l;
    out.total += t.weight * l;
  }
  return out;
}

/// plan_mixup followed by evaluate_mixup.
inline MixupLoss mixup_loss(const Classifier& clf, MixupBatches& batches, const MixupConfig& cfg, long iter,
                            const MixTermSet& terms, Rng& rng, Vector* grad, const LossOptions& opts = {}) {
  const auto plan = plan_mixup(clf, batches, cfg, iter, terms, rng);
  return evaluate_mixup(clf, plan, grad, opts);
}

// ---------------------------------------------------------------------------
// training log

enum class Phase { main, finetune };

struct TrainLogEntry {
  long iter = 0;
  Phase phase = Phase::main;
  std::optional<double> alpha;  // MixUp phases only
  double total = 0.0;
  std::optional<double> ce;     // plain cross-entropy phases
  std::array<std::optional<double>, 5> terms;
};

struct TrainLog {
  std::vector<TrainLogEntry> entries;

  /// Tab-separated with a header row; absent values are written as "-".
  void write(std::ostream& out) const {
    out << "iter\tphase\talpha\ttotal\tce";
    for (const auto name : kMixTermNames) {
      out << '\t' << name;
    }
    out << '\n';
    const auto opt = [&](const std::optional<double>& v) { out << '\t' << (v ? format_double(*v) : std::string("-")); };
    for (const auto& e : entries) {
      out << e.iter << '\t' << (e.phase == Phase::main ? "main" : "finetune");
      opt(e.alpha);
      out << '\t' << format_double(e.total);
      opt(e.ce);
      for (const auto& t : e.terms) {
        opt(t);
      }
      out << '\n';
    }
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) {
      throw Error("cannot write train log " + path.string());
    }
    write(out);
  }

  [[nodiscard]] std::string tail(std::size_t n) const {
    TrainLog t;
    const auto start = entries.size() > n ? entries.size() - n : 0;
    t.entries.assign(entries.begin() + static_cast<std::ptrdiff_t>(start), entries.end());
    std::ostringstream os;
    t.write(os);
    return os.str();
  }
};

// ---------------------------------------------------------------------------
// training loops

/// Batch indices: without replacement when the set is large enough, with replacement otherwise.
inline std::vector<Eigen::Index> sample_batch(Rng& rng, Eigen::Index n, std::size_t batch_size) {
  if (n <= 0) {
    throw Error("cannot draw a batch from an empty set");
  }
  std::vector<Eigen::Index> idx;
  idx.reserve(batch_size);
  if (static_cast<std::size_t>(n) >= batch_size) {
    for (const auto i : sample_without_replacement(rng, static_cast<std::size_t>(n), batch_size)) {
      idx.push_back(static_cast<Eigen::Index>(i));
    }
  } else {
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    for (std::size_t i = 0; i < batch_size; ++i) {
      idx.push_back(pick(rng));
    }
  }
  return idx;
}

inline LabeledSet gather(const LabeledSet& s, const std::vector<Eigen::Index>& idx) {
  LabeledSet out;
  out.x.resize(static_cast<Eigen::Index>(idx.size()), s.x.cols());
  out.y.resize(static_cast<Eigen::Index>(idx.size()), s.y.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.x.row(static_cast<Eigen::Index>(i)) = s.x.row(idx[i]);
    out.y.row(static_cast<Eigen::Index>(i)) = s.y.row(idx[i]);
  }
  return out;
}

inline LabeledSet concat(const LabeledSet& a, const LabeledSet& b) {
  if (a.size() == 0) return b;
  if (b.size() == 0) return a;
  LabeledSet out;
  out.x.resize(a.x.rows() + b.x.rows(), a.x.cols());
  out.y.resize(a.y.rows() + b.y.rows(), a.y.cols());
  out.x << a.x, b.x;
  out.y << a.y, b.y;
  return out;
}

struct TrainResult {
  Classifier classifier;
  TrainLog log;
};

/**
 * @brief Runs a strategy on a prepared training set.
 *
 * Non-curriculum kinds run `iterations_main` Adam steps. Curriculum kinds
 * (ce_curriculum, mixup_su_then_m) follow with `iterations_finetune` steps
 * of plain cross-entropy on the multi-label set under a fresh optimizer.
 * Deterministic given `spec.seed`.
 */
inline TrainResult run_strategy(const StrategySpec& spec, const TrainingSet& data) {
  spec.validate();
  const auto dim = static_cast<std::size_t>(std::max({data.singles.x.cols(), data.multis.x.cols(), data.unlabeled.cols()}));
  const auto k = static_cast<std::size_t>(std::max(data.singles.y.cols(), data.multis.y.cols()));
  if (dim == 0 || k == 0) {
    throw Error("training set has no labeled examples");
  }

  const auto require = [&](bool ok, const char* set) {
    if (!ok) {
      throw Error("strategy " + to_string(spec.kind) + " needs " + set + " but the split has none");
    }
  };
  const bool has_s = data.singles.size() > 0;
  const bool has_m = data.multis.size() > 0;
  const bool has_u = data.unlabeled.rows() > 0;
  switch (spec.kind) {
    case StrategyKind::ce_combined: require(has_s || has_m, "labeled examples (X_s or X_m)"); break;
    case StrategyKind::ce_upsampling: require(has_s, "single-label examples (X_s)"); require(has_m, "multi-label examples (X_m)"); break;
    case StrategyKind::ce_curriculum: require(has_s, "single-label examples (X_s)"); break;
    default: {
      const auto terms = mix_terms_for(spec.kind);
      if (terms.needs_singles()) require(has_s, "single-label examples (X_s)");
      if (terms.needs_multis()) require(has_m, "multi-label examples (X_m)");
      if (terms.needs_unlabeled()) require(has_u, "unlabeled examples (X_u)");
    }
  }
  if (is_curriculum(spec.kind) && spec.iterations_finetune > 0) {
    require(has_m, "multi-label examples (X_m) for fine-tuning");
  }

  const Head head = data.task == Task::distribution ? Head::softmax : Head::sigmoid;
  Architecture arch{dim, spec.hidden, k, head};
  TrainResult res{Classifier(arch, spec.seed), {}};
  Classifier& clf = res.classifier;
  Rng rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);

  LabeledSet singles = data.singles;
  if (spec.target_smoothing > 0.0) {
    singles.y = smooth_targets(singles.y, spec.target_smoothing);
  }
  const LabeledSet& multis = data.multis;
  const std::size_t B = spec.mixup.batch_size;

  Vector grad(clf.num_params());
  const auto check_finite = [&](double loss, long iter) {
    if (!std::isfinite(loss)) {
      throw Error("non-finite loss at iteration " + std::to_string(iter) + "; log tail:\n" + res.log.tail(5));
    }
  };

  const auto ce_phase = [&](const LabeledSet& set, const std::vector<Eigen::Index>* index_pool, int iterations, Phase phase) {
    AdamState adam(clf.num_params(), spec.lr);
    for (long it = 0; it < iterations; ++it) {
      LabeledSet batch;
      if (index_pool != nullptr) {
        std::vector<Eigen::Index> pick;
        for (const auto j : sample_batch(rng, static_cast<Eigen::Index>(index_pool->size()), B)) {
          pick.push_back((*index_pool)[static_cast<std::size_t>(j)]);
        }
        batch = gather(set, pick);
      } else {
        batch = gather(set, sample_batch(rng, set.size(), B));
      }
      grad.setZero();
      const double loss = clf.loss_and_grad(batch.x, batch.y, 1.0, &grad, spec.loss);
      TrainLogEntry e;
      e.iter = it;
      e.phase = phase;
      e.total = loss;
      e.ce = loss;
      res.log.entries.push_back(e);
      check_finite(loss, it);
      adam_step(clf.params(), adam, grad);
    }
  };

  const auto mixup_phase = [&](const MixTermSet& terms, int iterations) {
    AdamState adam(clf.num_params(), spec.lr);
    for (long it = 0; it < iterations; ++it) {
      MixupBatches batches;
      if (terms.needs_singles()) batches.singles = gather(singles, sample_batch(rng, singles.size(), B));
      if (terms.needs_multis()) batches.multis = gather(multis, sample_batch(rng, multis.size(), B));
      if (terms.needs_unlabeled()) {
        const auto idx = sample_batch(rng, data.unlabeled.rows(), B);
        batches.unlabeled.x.resize(static_cast<Eigen::Index>(idx.size()), data.unlabeled.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) {
          batches.unlabeled.x.row(static_cast<Eigen::Index>(i)) = data.unlabeled.row(idx[i]);
        }
      }
      grad.setZero();
      const auto loss = mixup_loss(clf, batches, spec.mixup, it, terms, rng, &grad, spec.loss);
      TrainLogEntry e;
      e.iter = it;
      e.phase = Phase::main;
      e.alpha = ramp_alpha(it, spec.mixup);
      e.total = loss.total;
      e.terms = loss.terms;
      res.log.entries.push_back(e);
      check_finite(loss.total, it);
      adam_step(clf.params(), adam, grad);
    }
  };

  switch (spec.kind) {
    case StrategyKind::ce_combined: {
      ce_phase(concat(singles, multis), nullptr, spec.iterations_main, Phase::main);
      break;
    }
    case StrategyKind::ce_upsampling: {
      // multis are repeated (in shuffled order) until they match the single-label count
      const LabeledSet combined = concat(singles, multis);
      std::vector<Eigen::Index> pool_idx(static_cast<std::size_t>(singles.size()));
      std::iota(pool_idx.begin(), pool_idx.end(), Eigen::Index{0});
      const auto target = std::max(singles.size(), multis.size());
      auto order = detail::permutation(rng, multis.size());
      for (Eigen::Index i = 0; i < target; ++i) {
        pool_idx.push_back(singles.size() + order[static_cast<std::size_t>(i % multis.size())]);
      }
      ce_phase(combined, &pool_idx, spec.iterations_main, Phase::main);
      break;
    }
    case StrategyKind::ce_curriculum: {
      ce_phase(singles, nullptr, spec.iterations_main, Phase::main);
      if (spec.iterations_finetune > 0) {
        ce_phase(multis, nullptr, spec.iterations_finetune, Phase::finetune);
      }
      break;
    }
    case StrategyKind::mixup_su_then_m: {
      mixup_phase(mix_terms_for(spec.kind), spec.iterations_main);
      if (spec.iterations_finetune > 0) {
        ce_phase(multis, nullptr, spec.iterations_finetune, Phase::finetune);
      }
      break;
    }
    default: mixup_phase(mix_terms_for(spec.kind), spec.iterations_main);
  }
  return res;
}

/// Convenience overload: builds targets from the split first.
inline TrainResult run_strategy(const StrategySpec& spec, const CorpusSplit& split, std::size_t n_outputs, Task task) {
  return run_strategy(spec, make_targets(split, n_outputs, task, spec.multi_targets));
}

}  // namespace budgetmix

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
 * @brief Annotated examples, annotation aggregation, budget allocation into
 *        single/multi/unlabeled sets, synthetic pools and corpus file I/O.
 */

#pragma once

#include "budgetmix/core.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

namespace budgetmix {

/**
 * @brief One pool entry: a fixed feature vector plus the labels bought for it.
 *
 * For distribution tasks `annotations` holds one label index per annotator.
 * For typing tasks it holds the distinct positive type indices; each counts
 * as one label toward the budget. The optional fields are evaluation
 * references and never feed training.
 */
struct AnnotatedExample {
  std::string uid;
  std::vector<double> features;
  std::vector<std::size_t> annotations;
  std::optional<LabelDistribution> true_dist;
  std::optional<std::size_t> old_label;
  /// Per-label annotator counts aligned to the vocab.
  std::optional<std::vector<int>> label_counter;

  [[nodiscard]] std::size_t label_cost() const noexcept { return annotations.size(); }

  friend bool operator==(const AnnotatedExample&, const AnnotatedExample&) = default;
};

using Pool = std::vector<AnnotatedExample>;

enum class SelectionStrategy { random, low_entropy, high_entropy };

inline std::string to_string(SelectionStrategy s) {
  switch (s) {
    case SelectionStrategy::random: return "random";
    case SelectionStrategy::low_entropy: return "low_entropy";
    case SelectionStrategy::high_entropy: return "high_entropy";
  }
  return "random";
}

inline SelectionStrategy selection_from_string(std::string_view s) {
  if (s == "random") return SelectionStrategy::random;
  if (s == "low_entropy") return SelectionStrategy::low_entropy;
  if (s == "high_entropy") return SelectionStrategy::high_entropy;
  throw Error("unknown selection strategy '" + std::string(s) + "'");
}

/// How many examples receive one, k, or zero labels; the label total is exact.
struct BudgetPlan {
  std::size_t total_labels = 0;
  std::size_t n_single = 0;
  std::size_t n_multi = 0;
  std::size_t k_per_multi = 0;
  std::size_t n_unlabeled = 0;
  SelectionStrategy selection = SelectionStrategy::random;

  [[nodiscard]] std::size_t labels_spent() const noexcept { return n_single + n_multi * k_per_multi; }

  void validate() const {
    if (labels_spent() != total_labels) {
      throw Error("budget plan does not add up: " + std::to_string(n_single) + " * 1 + " + std::to_string(n_multi) + " * " +
                  std::to_string(k_per_multi) + " = " + std::to_string(labels_spent()) + " != " + std::to_string(total_labels));
    }
    if (n_multi > 0 && k_per_multi == 0) {
      throw Error("budget plan has multi-label examples with zero labels each");
    }
  }
};

/// The three disjoint training sets carved out of a pool.
struct CorpusSplit {
  Pool singles;
  Pool multis;
  Pool unlabeled;

  [[nodiscard]] std::size_t total_labels() const noexcept {
    std::size_t n = 0;
    for (const auto* set : {&singles, &multis, &unlabeled}) {
      for (const auto& e : *set) {
        n += e.label_cost();
      }
    }
    return n;
  }
};

// ---------------------------------------------------------------------------
// aggregation

enum class Aggregation { distribution, majority };

inline std::vector<int> count_labels(std::span<const std::size_t> annotations, std::size_t k) {
  std::vector<int> counts(k, 0);
  for (const auto a : annotations) {
    if (a >= k) {
      throw Error("annotation index " + std::to_string(a) + " outside vocabulary of size " + std::to_string(k));
    }
    ++counts[a];
  }
  return counts;
}

/// Empirical label frequencies of an annotation multiset.
inline LabelDistribution aggregate_distribution(std::span<const std::size_t> annotations, std::size_t k) {
  if (annotations.empty()) {
    throw Error("cannot aggregate zero annotations");
  }
  const auto counts = count_labels(annotations, k);
  std::vector<double> p(k);
  const auto n = static_cast<double>(annotations.size());
  for (std::size_t c = 0; c < k; ++c) {
    p[c] = counts[c] / n;
  }
  return LabelDistribution(std::move(p));
}

/// Most frequent label; ties go to the label that comes first in the vocab.
inline std::size_t aggregate_majority(std::span<const std::size_t> annotations, std::size_t k) {
  if (annotations.empty()) {
    throw Error("cannot aggregate zero annotations");
  }
  const auto counts = count_labels(annotations, k);
  return static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

/// Majority label of a counter map; ties by vocab order.
inline std::size_t majority_of_counts(std::span<const int> counts) {
  if (counts.empty()) {
    throw Error("cannot take the majority of an empty counter");
  }
  return static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

// ---------------------------------------------------------------------------
// budget allocation

namespace detail {

inline double annotation_entropy(const AnnotatedExample& e, std::size_t k) {
  if (e.annotations.empty()) {
    return 0.0;
  }
  return entropy(aggregate_distribution(e.annotations, k));
}

inline std::vector<std::size_t> subsample(Rng& rng, const std::vector<std::size_t>& from, std::size_t count) {
  std::vector<std::size_t> out;
  out.reserve(count);
  for (const auto i : sample_without_replacement(rng, from.size(), count)) {
    out.push_back(from[i]);
  }
  return out;
}

}  // namespace detail

/**
 * @brief Spend a label budget over a pool.
 *
 * Picks `n_multi` examples by the plan's selection rule (entropy of the
 * example's available annotations, or uniformly at random) and keeps exactly
 * `k_per_multi` of their annotations, then picks `n_single` of the rest and
 * keeps one annotation each. Up to `n_unlabeled` of the leftovers are kept
 * with their annotations stripped. All subsampling is uniform without
 * replacement and fully determined by `seed`.
 *
 * @param k_labels size of the label vocabulary (used for entropy ranking)
 */
inline CorpusSplit allocate_budget(const Pool& pool, const BudgetPlan& plan, std::size_t k_labels, std::uint64_t seed) {
  plan.validate();
  {
    std::unordered_set<std::string> seen;
    for (const auto& e : pool) {
      if (!seen.insert(e.uid).second) {
        throw Error("duplicate uid '" + e.uid + "' in pool");
      }
    }
  }
  Rng rng(seed);

  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<bool> used(pool.size(), false);
  CorpusSplit split;

  if (plan.n_multi > 0) {
    std::vector<std::size_t> candidates;
    for (const auto i : order) {
      if (pool[i].annotations.size() >= plan.k_per_multi) {
        candidates.push_back(i);
      }
    }
    if (candidates.size() < plan.n_multi) {
      throw Error("infeasible budget plan: need " + std::to_string(plan.n_multi) + " multi-label examples with at least " +
                  std::to_string(plan.k_per_multi) + " annotations, pool has " + std::to_string(candidates.size()) +
                  " (deficit " + std::to_string(plan.n_multi - candidates.size()) + ")");
    }
    if (plan.selection != SelectionStrategy::random) {
      std::vector<double> h(pool.size(), 0.0);
      for (const auto i : candidates) {
        h[i] = detail::annotation_entropy(pool[i], k_labels);
      }
      const bool ascending = plan.selection == SelectionStrategy::low_entropy;
      std::stable_sort(candidates.begin(), candidates.end(),
                       [&](std::size_t a, std::size_t b) { return ascending ? h[a] < h[b] : h[a] > h[b]; });
    }
    candidates.resize(plan.n_multi);
    for (const auto i : candidates) {
      used[i] = true;
      AnnotatedExample e = pool[i];
      e.annotations = detail::subsample(rng, pool[i].annotations, plan.k_per_multi);
      split.multis.push_back(std::move(e));
    }
  }

  if (plan.n_single > 0) {
    std::size_t available = 0;
    for (const auto i : order) {
      if (!used[i] && !pool[i].annotations.empty()) {
        ++available;
      }
    }
    if (available < plan.n_single) {
      throw Error("infeasible budget plan: need " + std::to_string(plan.n_single) +
                  " single-label examples, pool has " + std::to_string(available) + " annotated examples left (deficit " +
                  std::to_string(plan.n_single - available) + ")");
    }
    for (const auto i : order) {
      if (split.singles.size() == plan.n_single) {
        break;
      }
      if (used[i] || pool[i].annotations.empty()) {
        continue;
      }
      used[i] = true;
      AnnotatedExample e = pool[i];
      e.annotations = detail::subsample(rng, pool[i].annotations, 1);
      split.singles.push_back(std::move(e));
    }
  }

  for (const auto i : order) {
    if (split.unlabeled.size() == plan.n_unlabeled) {
      break;
    }
    if (used[i]) {
      continue;
    }
    used[i] = true;
    AnnotatedExample e = pool[i];
    e.annotations.clear();
    split.unlabeled.push_back(std::move(e));
  }
  return split;
}

// ---------------------------------------------------------------------------
// synthetic pools

/**
 * @brief Parameters of the synthetic annotator-distribution generator.
 *
 * Unambiguous examples draw their true distribution from a Dirichlet whose
 * concentration is `dirichlet_sharp` on one uniformly chosen dominant label
 * and 1 elsewhere, so larger values give peakier distributions (infinity
 * gives an exact one-hot). Ambiguous examples draw from the symmetric
 * Dirichlet(`dirichlet_flat`).
 */
struct SyntheticConfig {
  std::size_t n_examples = 1000;
  std::size_t k_classes = 3;
  std::size_t d_feat = 16;
  double ambiguous_fraction = 0.5;
  double dirichlet_sharp = 30.0;
  double dirichlet_flat = 4.0;
  double feature_noise_sigma = 0.5;
  double prototype_scale = 1.0;
  std::size_t annotations_per_example = 100;
  /// Number of leading reservoir annotations whose majority becomes `old_label`.
  std::size_t old_label_annotators = 5;
  std::string uid_prefix = "ex";
  std::uint64_t seed = 0;

  void validate() const {
    if (k_classes < 2) throw Error("synthetic config: k_classes must be at least 2");
    if (d_feat < k_classes) throw Error("synthetic config: d_feat must be at least k_classes");
    if (!(ambiguous_fraction >= 0.0 && ambiguous_fraction <= 1.0)) throw Error("synthetic config: ambiguous_fraction must lie in [0, 1]");
    if (!(dirichlet_sharp > 0.0)) throw Error("synthetic config: dirichlet_sharp must be positive");
    if (!(dirichlet_flat > 0.0) || std::isinf(dirichlet_flat)) throw Error("synthetic config: dirichlet_flat must be positive and finite");
    if (!(feature_noise_sigma >= 0.0)) throw Error("synthetic config: feature_noise_sigma must be non-negative");
    if (annotations_per_example == 0) throw Error("synthetic config: annotations_per_example must be positive");
    if (old_label_annotators == 0 || old_label_annotators > annotations_per_example) {
      throw Error("synthetic config: old_label_annotators must lie in [1, annotations_per_example]");
    }
  }
};

/// Draws the true distribution of one synthetic example.
inline std::vector<double> sample_true_distribution(Rng& rng, const SyntheticConfig& cfg, bool ambiguous) {
  const std::size_t k = cfg.k_classes;
  if (ambiguous) {
    return sample_dirichlet(rng, k, cfg.dirichlet_flat);
  }
  const auto dominant = std::uniform_int_distribution<std::size_t>(0, k - 1)(rng);
  std::vector<double> p(k, 0.0);
  if (std::isinf(cfg.dirichlet_sharp)) {
    p[dominant] = 1.0;
    return p;
  }
  double sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    std::gamma_distribution<double> g(c == dominant ? cfg.dirichlet_sharp : 1.0, 1.0);
    p[c] = g(rng);
    sum += p[c];
  }
  for (auto& v : p) {
    v /= sum;
  }
  return p;
}

/**
 * @brief Generate a pool whose examples carry a 100-way annotation reservoir.
 *
 * Features are the true distribution projected onto scaled standard-basis
 * prototypes plus isotropic Gaussian noise. Each example also records its
 * reservoir counts (`label_counter`) and the majority of the first few
 * reservoir annotations (`old_label`).
 */
inline Pool generate_synthetic_pool(const SyntheticConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::bernoulli_distribution ambiguous(cfg.ambiguous_fraction);
  std::normal_distribution<double> noise(0.0, 1.0);

  Pool pool;
  pool.reserve(cfg.n_examples);
  const int width = static_cast<int>(std::to_string(cfg.n_examples == 0 ? 0 : cfg.n_examples - 1).size());
  for (std::size_t i = 0; i < cfg.n_examples; ++i) {
    AnnotatedExample e;
    std::string num = std::to_string(i);
    e.uid = cfg.uid_prefix + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(num.size()))), '0') + num;

    auto p = sample_true_distribution(rng, cfg, ambiguous(rng));
    e.features.assign(cfg.d_feat, 0.0);
    for (std::size_t c = 0; c < cfg.k_classes; ++c) {
      e.features[c] = cfg.prototype_scale * p[c];
    }
    for (auto& f : e.features) {
      f += cfg.feature_noise_sigma * noise(rng);
    }

    std::discrete_distribution<std::size_t> annotator(p.begin(), p.end());
    e.annotations.resize(cfg.annotations_per_example);
    for (auto& a : e.annotations) {
      a = annotator(rng);
    }
    e.label_counter = count_labels(e.annotations, cfg.k_classes);
    e.old_label = aggregate_majority(std::span(e.annotations).first(cfg.old_label_annotators), cfg.k_classes);
    e.true_dist = LabelDistribution(std::move(p));
    pool.push_back(std::move(e));
  }
  return pool;
}

/**
 * @brief Synthetic entity-typing pool.
 *
 * Every example gets one coarse type (indices [0, n_coarse)) and a random
 * number of fine types in [1, max_fine] from the rest of the ontology, with
 * a fixed coarse parent per fine type. Features are the sum of the gold
 * types' prototype directions plus Gaussian noise; annotations are the gold
 * type indices.
 */
struct SyntheticTypingConfig {
  std::size_t n_examples = 1000;
  std::size_t n_types = 12;
  std::size_t n_coarse = 3;
  std::size_t max_fine = 3;
  std::size_t d_feat = 24;
  double feature_noise_sigma = 0.3;
  std::string uid_prefix = "ty";
  std::uint64_t seed = 0;

  void validate() const {
    if (n_coarse == 0 || n_coarse >= n_types) throw Error("typing config: need 0 < n_coarse < n_types");
    if (max_fine == 0) throw Error("typing config: max_fine must be positive");
    if (d_feat < n_types) throw Error("typing config: d_feat must be at least n_types");
    if (!(feature_noise_sigma >= 0.0)) throw Error("typing config: feature_noise_sigma must be non-negative");
  }
};

inline Pool generate_synthetic_typing_pool(const SyntheticTypingConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t n_fine = cfg.n_types - cfg.n_coarse;

  // fine type t belongs to coarse parent (t - n_coarse) % n_coarse
  std::vector<std::vector<std::size_t>> children(cfg.n_coarse);
  for (std::size_t t = cfg.n_coarse; t < cfg.n_types; ++t) {
    children[(t - cfg.n_coarse) % cfg.n_coarse].push_back(t);
  }

  Pool pool;
  pool.reserve(cfg.n_examples);
  for (std::size_t i = 0; i < cfg.n_examples; ++i) {
    AnnotatedExample e;
    e.uid = cfg.uid_prefix + std::to_string(i);
    const auto coarse = std::uniform_int_distribution<std::size_t>(0, cfg.n_coarse - 1)(rng);
    const auto& kids = children[coarse];
    std::set<std::size_t> gold{coarse};
    if (!kids.empty() && n_fine > 0) {
      const auto n = std::uniform_int_distribution<std::size_t>(1, std::min(cfg.max_fine, kids.size()))(rng);
      for (const auto j : sample_without_replacement(rng, kids.size(), n)) {
        gold.insert(kids[j]);
      }
    }
    e.annotations.assign(gold.begin(), gold.end());
    e.features.assign(cfg.d_feat, 0.0);
    for (const auto t : gold) {
      e.features[t] += 1.0;
    }
    for (auto& f : e.features) {
      f += cfg.feature_noise_sigma * noise(rng);
    }
    pool.push_back(std::move(e));
  }
  return pool;
}

// ---------------------------------------------------------------------------
// file I/O
//
// Corpus files hold one JSON object per line:
//   {"uid": str, "x": [real], "labels": [str], "true_dist": [real]?,
//    "old_label": str?, "label_counter": {str: int}?}
// Vocab files hold one label name per line in canonical order.

inline LabelVocab load_vocab(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error("cannot open vocab file " + path.string());
  }
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (!line.empty()) {
      names.push_back(line);
    }
  }
  return LabelVocab(std::move(names));
}

inline void save_vocab(const LabelVocab& vocab, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error("cannot write vocab file " + path.string());
  }
  for (const auto& n : vocab.names()) {
    out << n << '\n';
  }
}

inline nlohmann::ordered_json example_to_json(const AnnotatedExample& e, const LabelVocab& vocab) {
  nlohmann::ordered_json j;
  j["uid"] = e.uid;
  j["x"] = e.features;
  auto labels = nlohmann::ordered_json::array();
  for (const auto a : e.annotations) {
    labels.push_back(vocab.name(a));
  }
  j["labels"] = std::move(labels);
  if (e.true_dist) {
    j["true_dist"] = e.true_dist->probs();
  }
  if (e.old_label) {
    j["old_label"] = vocab.name(*e.old_label);
  }
  if (e.label_counter) {
    auto counter = nlohmann::ordered_json::object();
    for (std::size_t c = 0; c < e.label_counter->size(); ++c) {
      if ((*e.label_counter)[c] != 0) {
        counter[vocab.name(c)] = (*e.label_counter)[c];
      }
    }
    j["label_counter"] = std::move(counter);
  }
  return j;
}

inline AnnotatedExample example_from_json(const nlohmann::json& j, const LabelVocab& vocab, std::size_t line_no) {
  const auto where = [&](const std::string& uid) {
    return "line " + std::to_string(line_no) + (uid.empty() ? "" : " (uid '" + uid + "')");
  };
  if (!j.is_object()) {
    throw Error("corpus parse error at " + where("") + ": record is not an object");
  }
  AnnotatedExample e;
  if (!j.contains("uid") || !j["uid"].is_string()) {
    throw Error("corpus parse error at " + where("") + ": missing string field \"uid\"");
  }
  e.uid = j["uid"].get<std::string>();
  if (!j.contains("x") || !j["x"].is_array()) {
    throw Error("corpus parse error at " + where(e.uid) + ": missing array field \"x\"");
  }
  try {
    e.features = j["x"].get<std::vector<double>>();
    if (j.contains("labels")) {
      for (const auto& l : j["labels"]) {
        const auto name = l.get<std::string>();
        if (!vocab.contains(name)) {
          throw Error("label '" + name + "' outside vocabulary");
        }
        e.annotations.push_back(vocab.index_of(name));
      }
    }
    if (j.contains("true_dist") && !j["true_dist"].is_null()) {
      auto p = j["true_dist"].get<std::vector<double>>();
      if (p.size() != vocab.size()) {
        throw Error("true_dist has " + std::to_string(p.size()) + " entries, vocabulary has " + std::to_string(vocab.size()));
      }
      e.true_dist = LabelDistribution(std::move(p));
    }
    if (j.contains("old_label") && !j["old_label"].is_null()) {
      const auto name = j["old_label"].get<std::string>();
      if (!vocab.contains(name)) {
        throw Error("old_label '" + name + "' outside vocabulary");
      }
      e.old_label = vocab.index_of(name);
    }
    if (j.contains("label_counter") && !j["label_counter"].is_null()) {
      std::vector<int> counts(vocab.size(), 0);
      for (const auto& [name, count] : j["label_counter"].items()) {
        if (!vocab.contains(name)) {
          throw Error("label_counter key '" + name + "' outside vocabulary");
        }
        counts[vocab.index_of(name)] = count.get<int>();
      }
      e.label_counter = std::move(counts);
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error("corpus parse error at " + where(e.uid) + ": " + ex.what());
  } catch (const Error& ex) {
    throw Error("corpus parse error at " + where(e.uid) + ": " + ex.what());
  }
  return e;
}

inline Pool load_corpus(const std::filesystem::path& path, const LabelVocab& vocab) {
  std::ifstream in(path);
  if (!in) {
    throw Error("cannot open corpus file " + path.string());
  }
  Pool pool;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& ex) {
      throw Error("corpus parse error at line " + std::to_string(line_no) + " of " + path.string() + ": " + ex.what());
    }
    pool.push_back(example_from_json(j, vocab, line_no));
  }
  return pool;
}

inline void save_corpus(const Pool& pool, const LabelVocab& vocab, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error("cannot write corpus file " + path.string());
  }
  for (const auto& e : pool) {
    out << example_to_json(e, vocab).dump() << '\n';
  }
}

}  // namespace budgetmix

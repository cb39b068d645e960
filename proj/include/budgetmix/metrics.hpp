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
 * @brief Distribution metrics (KL, JSD, old/new accuracy, entropy
 *        histograms), typing metrics (macro P/R/F1, MRR) and EvalReport.
 *
 * Log bases: KL and entropy are in nats; JSD is in bits so that it lies in
 * [0, 1].
 */

#pragma once

#include "budgetmix/core.hpp"
#include "budgetmix/corpus.hpp"
#include "budgetmix/model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>

namespace budgetmix {

inline constexpr double kKlFloor = 1e-10;

/// KL(p || q) in nats; q is clamped at 1e-10 and 0 ln 0 = 0.
inline double kl_div(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw Error("kl_div: size mismatch");
  }
  double d = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    if (p[c] > 0.0) {
      d += p[c] * (std::log(p[c]) - std::log(std::max(q[c], kKlFloor)));
    }
  }
  return std::max(d, 0.0);
}

inline double kl_div(const LabelDistribution& p, const LabelDistribution& q) { return kl_div(p.view(), q.view()); }

namespace detail {

// KL(p || m) in bits where m > 0 wherever p > 0
inline double kl_bits(std::span<const double> p, std::span<const double> m) {
  double d = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    if (p[c] > 0.0) {
      d += p[c] * std::log2(p[c] / m[c]);
    }
  }
  return d;
}

}  // namespace detail

/// Jensen-Shannon divergence in bits, the mean of KL to the midpoint.
inline double jsd(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw Error("jsd: size mismatch");
  }
  std::vector<double> m(p.size());
  for (std::size_t c = 0; c < p.size(); ++c) {
    m[c] = 0.5 * (p[c] + q[c]);
  }
  return std::clamp(0.5 * (detail::kl_bits(p, m) + detail::kl_bits(q, m)), 0.0, 1.0);
}

inline double jsd(const LabelDistribution& p, const LabelDistribution& q) { return jsd(p.view(), q.view()); }

struct OldNewAccuracy {
  double acc_old = 0.0;
  double acc_new = 0.0;
};

/**
 * Argmax of each prediction against `old_label` and against the majority of
 * `label_counter`; both ties go to the first vocab label.
 */
inline OldNewAccuracy accuracy_old_new(const Matrix& preds, const Pool& examples) {
  if (static_cast<std::size_t>(preds.rows()) != examples.size()) {
    throw Error("accuracy_old_new: " + std::to_string(preds.rows()) + " predictions for " + std::to_string(examples.size()) +
                " examples");
  }
  if (examples.empty()) {
    throw Error("accuracy_old_new: no examples");
  }
  double old_hits = 0.0;
  double new_hits = 0.0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& e = examples[i];
    if (!e.old_label || !e.label_counter) {
      throw Error("example '" + e.uid + "' lacks old_label or label_counter");
    }
    const auto row = row_to_vector(preds, static_cast<Eigen::Index>(i));
    const auto guess = argmax(row);
    old_hits += guess == *e.old_label ? 1.0 : 0.0;
    new_hits += guess == majority_of_counts(*e.label_counter) ? 1.0 : 0.0;
  }
  const auto n = static_cast<double>(examples.size());
  return {old_hits / n, new_hits / n};
}

/// Counts over `n_bins` equal-width bins on [0, max_value]; the last bin is right-inclusive.
inline std::vector<std::size_t> histogram(std::span<const double> values, std::size_t n_bins, double max_value) {
  if (n_bins == 0) {
    throw Error("histogram needs at least one bin");
  }
  std::vector<std::size_t> counts(n_bins, 0);
  const double width = max_value / static_cast<double>(n_bins);
  for (const double v : values) {
    std::size_t bin = 0;
    if (width > 0.0 && v > 0.0) {
      bin = std::min(n_bins - 1, static_cast<std::size_t>(v / width));
    }
    ++counts[bin];
  }
  return counts;
}

/// Histogram of per-row entropies over [0, ln k].
inline std::vector<std::size_t> entropy_histogram(const Matrix& preds, std::size_t n_bins) {
  std::vector<double> h(static_cast<std::size_t>(preds.rows()));
  for (Eigen::Index i = 0; i < preds.rows(); ++i) {
    h[static_cast<std::size_t>(i)] = entropy(row_to_vector(preds, i));
  }
  return histogram(h, n_bins, std::log(static_cast<double>(preds.cols())));
}

struct MacroPrf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

using TypeSet = std::set<std::size_t>;

/// Example-averaged precision and recall; F1 is their harmonic mean.
inline MacroPrf macro_prf(std::span<const TypeSet> preds, std::span<const TypeSet> golds,
                          std::span<const std::string> uids = {}) {
  if (preds.size() != golds.size() || preds.empty()) {
    throw Error("macro_prf: need equally many non-zero predictions and gold sets");
  }
  double p = 0.0;
  double r = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (golds[i].empty()) {
      throw Error("empty gold type set for example '" + (i < uids.size() ? uids[i] : std::to_string(i)) + "'");
    }
    std::size_t hit = 0;
    for (const auto t : preds[i]) {
      hit += golds[i].contains(t) ? 1 : 0;
    }
    p += preds[i].empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(preds[i].size());
    r += static_cast<double>(hit) / static_cast<double>(golds[i].size());
  }
  const auto n = static_cast<double>(preds.size());
  MacroPrf out{p / n, r / n, 0.0};
  if (out.precision + out.recall > 0.0) {
    out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
  }
  return out;
}

/// 1-based rank of `type` in descending score order; ties go to the lower type index.
inline std::size_t rank_of(std::span<const double> scores, std::size_t type) {
  std::size_t rank = 1;
  for (std::size_t t = 0; t < scores.size(); ++t) {
    if (scores[t] > scores[type] || (scores[t] == scores[type] && t < type)) {
      ++rank;
    }
  }
  return rank;
}

/// Mean reciprocal rank over all (example, gold type) pairs.
inline double mrr(const Matrix& scores, std::span<const TypeSet> golds) {
  if (static_cast<std::size_t>(scores.rows()) != golds.size()) {
    throw Error("mrr: score rows and gold sets differ in count");
  }
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const auto row = row_to_vector(scores, static_cast<Eigen::Index>(i));
    for (const auto t : golds[i]) {
      if (t >= row.size()) {
        throw Error("mrr: gold type outside ontology");
      }
      sum += 1.0 / static_cast<double>(rank_of(row, t));
      ++pairs;
    }
  }
  if (pairs == 0) {
    throw Error("mrr: no gold types");
  }
  return sum / static_cast<double>(pairs);
}

// ---------------------------------------------------------------------------
// reports

enum class KlDirection { human_model, model_human };

struct ReportOptions {
  std::size_t n_bins = 20;
  KlDirection kl_direction = KlDirection::human_model;
  double type_threshold = 0.5;
};

struct ExampleRecord {
  std::string uid;
  std::vector<double> prediction;  // distribution or per-type scores
  std::vector<double> gold;        // human distribution (distribution task)
  TypeSet predicted_types;         // typing only
  TypeSet gold_types;              // typing only
  std::optional<double> kl, jsd, entropy, gold_entropy;
  std::optional<double> correct_old, correct_new;
  std::optional<double> precision, recall, reciprocal_rank;
};

struct CalibrationRecord {
  std::string method;
  double scalar = 0.0;
  double pre_entropy = 0.0;
  double post_entropy = 0.0;
  double target_entropy = 0.0;
  bool at_boundary = false;
};

struct EvalReport {
  std::string task;
  std::size_t n_eval = 0;
  std::optional<double> jsd, kl, acc_old, acc_new, mean_pred_entropy, mean_gold_entropy;
  std::vector<std::size_t> entropy_histogram;
  std::vector<std::size_t> gold_entropy_histogram;
  double histogram_max = 0.0;
  std::optional<double> macro_p, macro_r, macro_f1, mrr;
  std::optional<CalibrationRecord> calibration;
  std::vector<ExampleRecord> per_example;
};

/// Human label distribution of an eval example: counter, else true_dist, else its annotations.
inline std::vector<double> human_distribution(const AnnotatedExample& e, std::size_t k) {
  if (e.label_counter) {
    double total = 0.0;
    for (const int c : *e.label_counter) {
      total += c;
    }
    if (total > 0.0) {
      std::vector<double> p(k, 0.0);
      for (std::size_t c = 0; c < k && c < e.label_counter->size(); ++c) {
        p[c] = (*e.label_counter)[c] / total;
      }
      return p;
    }
  }
  if (e.true_dist) {
    return e.true_dist->probs();
  }
  if (!e.annotations.empty()) {
    return aggregate_distribution(e.annotations, k).probs();
  }
  throw Error("eval example '" + e.uid + "' has no human label distribution");
}

namespace detail {

inline double mean_of(const std::vector<ExampleRecord>& recs, std::optional<double> ExampleRecord::*field) {
  double sum = 0.0;
  for (const auto& r : recs) {
    sum += *(r.*field);
  }
  return sum / static_cast<double>(recs.size());
}

}  // namespace detail

/// Scores probability predictions (one row per eval example) against human distributions.
inline EvalReport build_distribution_report(const Matrix& probs, const Pool& examples, const ReportOptions& opts = {}) {
  if (static_cast<std::size_t>(probs.rows()) != examples.size() || examples.empty()) {
    throw Error("distribution report: " + std::to_string(probs.rows()) + " predictions for " +
                std::to_string(examples.size()) + " eval examples");
  }
  const auto k = static_cast<std::size_t>(probs.cols());
  EvalReport rep;
  rep.task = "distribution";
  rep.n_eval = examples.size();
  const bool has_acc = std::all_of(examples.begin(), examples.end(),
                                   [](const AnnotatedExample& e) { return e.old_label && e.label_counter; });
  std::vector<double> pred_h, gold_h;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& e = examples[i];
    ExampleRecord r;
    r.uid = e.uid;
    r.prediction = row_to_vector(probs, static_cast<Eigen::Index>(i));
    r.gold = human_distribution(e, k);
    r.kl = opts.kl_direction == KlDirection::human_model ? kl_div(r.gold, r.prediction) : kl_div(r.prediction, r.gold);
    r.jsd = jsd(r.gold, r.prediction);
    r.entropy = entropy(r.prediction);
    r.gold_entropy = entropy(r.gold);
    if (has_acc) {
      const auto guess = argmax(r.prediction);
      r.correct_old = guess == *e.old_label ? 1.0 : 0.0;
      r.correct_new = guess == majority_of_counts(*e.label_counter) ? 1.0 : 0.0;
    }
    pred_h.push_back(*r.entropy);
    gold_h.push_back(*r.gold_entropy);
    rep.per_example.push_back(std::move(r));
  }
  rep.kl = detail::mean_of(rep.per_example, &ExampleRecord::kl);
  rep.jsd = detail::mean_of(rep.per_example, &ExampleRecord::jsd);
  rep.mean_pred_entropy = detail::mean_of(rep.per_example, &ExampleRecord::entropy);
  rep.mean_gold_entropy = detail::mean_of(rep.per_example, &ExampleRecord::gold_entropy);
  if (has_acc) {
    rep.acc_old = detail::mean_of(rep.per_example, &ExampleRecord::correct_old);
    rep.acc_new = detail::mean_of(rep.per_example, &ExampleRecord::correct_new);
  }
  rep.histogram_max = std::log(static_cast<double>(k));
  rep.entropy_histogram = histogram(pred_h, opts.n_bins, rep.histogram_max);
  rep.gold_entropy_histogram = histogram(gold_h, opts.n_bins, rep.histogram_max);
  return rep;
}

/// Scores per-type sigmoid outputs against the eval examples' full gold type sets.
inline EvalReport build_typing_report(const Matrix& scores, const Pool& examples, const ReportOptions& opts = {}) {
  if (static_cast<std::size_t>(scores.rows()) != examples.size() || examples.empty()) {
    throw Error("typing report: " + std::to_string(scores.rows()) + " predictions for " + std::to_string(examples.size()) +
                " eval examples");
  }
  EvalReport rep;
  rep.task = "typing";
  rep.n_eval = examples.size();
  std::vector<TypeSet> preds, golds;
  std::vector<std::string> uids;
  double rr_sum = 0.0;
  std::size_t rr_pairs = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& e = examples[i];
    ExampleRecord r;
    r.uid = e.uid;
    r.prediction = row_to_vector(scores, static_cast<Eigen::Index>(i));
    r.predicted_types = predict_types(r.prediction, opts.type_threshold);
    r.gold_types = TypeSet(e.annotations.begin(), e.annotations.end());
    const auto prf = macro_prf(std::span(&r.predicted_types, 1), std::span(&r.gold_types, 1), std::span(&e.uid, 1));
    r.precision = prf.precision;
    r.recall = prf.recall;
    double rr = 0.0;
    for (const auto t : r.gold_types) {
      rr += 1.0 / static_cast<double>(rank_of(r.prediction, t));
    }
    rr_sum += rr;
    rr_pairs += r.gold_types.size();
    r.reciprocal_rank = rr / static_cast<double>(r.gold_types.size());
    preds.push_back(r.predicted_types);
    golds.push_back(r.gold_types);
    uids.push_back(e.uid);
    rep.per_example.push_back(std::move(r));
  }
  const auto prf = macro_prf(preds, golds, uids);
  rep.macro_p = prf.precision;
  rep.macro_r = prf.recall;
  rep.macro_f1 = prf.f1;
  rep.mrr = rr_sum / static_cast<double>(rr_pairs);
  return rep;
}

// ---------------------------------------------------------------------------
// serialisation: line 1 is the summary, then one line per example

inline nlohmann::ordered_json report_summary_json(const EvalReport& rep) {
  nlohmann::ordered_json j;
  j["kind"] = "summary";
  j["task"] = rep.task;
  j["n_eval"] = rep.n_eval;
  const auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) {
      j[key] = *v;
    }
  };
  put("jsd", rep.jsd);
  put("kl", rep.kl);
  put("acc_old", rep.acc_old);
  put("acc_new", rep.acc_new);
  put("mean_pred_entropy", rep.mean_pred_entropy);
  put("mean_gold_entropy", rep.mean_gold_entropy);
  put("macro_p", rep.macro_p);
  put("macro_r", rep.macro_r);
  put("macro_f1", rep.macro_f1);
  put("mrr", rep.mrr);
  if (!rep.entropy_histogram.empty()) {
    j["entropy_histogram"] = rep.entropy_histogram;
    j["gold_entropy_histogram"] = rep.gold_entropy_histogram;
    j["histogram_max"] = rep.histogram_max;
  }
  if (rep.calibration) {
    const auto& c = *rep.calibration;
    j["calibration"] = {{"method", c.method},           {"scalar", c.scalar},
                        {"pre_entropy", c.pre_entropy}, {"post_entropy", c.post_entropy},
                        {"target_entropy", c.target_entropy}, {"at_boundary", c.at_boundary}};
  }
  return j;
}

inline void save_report(const EvalReport& rep, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error("cannot write report " + path.string());
  }
  out << report_summary_json(rep).dump() << '\n';
  for (const auto& r : rep.per_example) {
    nlohmann::ordered_json j;
    j["kind"] = "example";
    j["uid"] = r.uid;
    if (rep.task == "typing") {
      j["scores"] = r.prediction;
      j["pred_types"] = r.predicted_types;
      j["gold_types"] = r.gold_types;
      j["precision"] = *r.precision;
      j["recall"] = *r.recall;
      j["reciprocal_rank"] = *r.reciprocal_rank;
    } else {
      j["pred"] = r.prediction;
      j["gold"] = r.gold;
      j["kl"] = *r.kl;
      j["jsd"] = *r.jsd;
      j["entropy"] = *r.entropy;
      if (r.correct_old) {
        j["correct_old"] = *r.correct_old;
        j["correct_new"] = *r.correct_new;
      }
    }
    out << j.dump() << '\n';
  }
}

/// Reads back the summary line of a saved report.
inline nlohmann::json load_report_summary(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::string line;
  if (!in || !std::getline(in, line)) {
    throw Error("cannot read report " + path.string());
  }
  return nlohmann::json::parse(line);
}

inline void save_histogram_csv(const std::vector<std::size_t>& counts, double max_value, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error("cannot write histogram " + path.string());
  }
  out << "bin_left,bin_right,count\n";
  const double width = max_value / static_cast<double>(counts.size());
  for (std::size_t b = 0; b < counts.size(); ++b) {
    out << format_double(width * static_cast<double>(b)) << ',' << format_double(width * static_cast<double>(b + 1)) << ','
        << counts[b] << '\n';
  }
}

}  // namespace budgetmix

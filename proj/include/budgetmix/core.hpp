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
 * @brief Shared vocabulary, label-distribution and random-number utilities.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace budgetmix {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

/**
 * @brief Ordered set of label names.
 *
 * The position of a name is its label index; lower indices win every tie
 * (majority vote, argmax, rank ordering).
 */
class LabelVocab {
 public:
  LabelVocab() = default;

  explicit LabelVocab(std::vector<std::string> names) : names_(std::move(names)) {
    if (names_.empty()) {
      throw Error("label vocabulary is empty");
    }
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (names_[i].empty()) {
        throw Error("label vocabulary contains an empty name at position " + std::to_string(i));
      }
      if (!index_.emplace(names_[i], i).second) {
        throw Error("duplicate label name '" + names_[i] + "' in vocabulary");
      }
    }
  }

  LabelVocab(std::initializer_list<std::string> names) : LabelVocab(std::vector<std::string>(names)) {}

  [[nodiscard]] std::size_t size() const noexcept { return names_.size(); }
  [[nodiscard]] const std::vector<std::string>& names() const noexcept { return names_; }
  [[nodiscard]] const std::string& name(std::size_t index) const { return names_.at(index); }

  [[nodiscard]] bool contains(std::string_view name) const { return index_.find(std::string(name)) != index_.end(); }

  [[nodiscard]] std::size_t index_of(std::string_view name) const {
    const auto it = index_.find(std::string(name));
    if (it == index_.end()) {
      throw Error("label '" + std::string(name) + "' is not in the vocabulary");
    }
    return it->second;
  }

  /// FNV-1a over the newline-joined names; stored in checkpoints to catch vocab mix-ups.
  [[nodiscard]] std::uint64_t hash() const noexcept {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& n : names_) {
      for (const unsigned char c : n) {
        h ^= c;
        h *= 1099511628211ULL;
      }
      h ^= static_cast<unsigned char>('\n');
      h *= 1099511628211ULL;
    }
    return h;
  }

  friend bool operator==(const LabelVocab& a, const LabelVocab& b) { return a.names_ == b.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

/**
 * @brief Probability vector aligned to a LabelVocab.
 *
 * Construction validates that every entry lies in [0, 1] and that the
 * entries sum to one within 1e-9.
 */
class LabelDistribution {
 public:
  static constexpr double kSumTolerance = 1e-9;

  LabelDistribution() = default;

  explicit LabelDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) {
      throw Error("label distribution is empty");
    }
    double sum = 0.0;
    for (const double p : probs_) {
      if (!(p >= 0.0 && p <= 1.0)) {
        throw Error("label distribution entry outside [0, 1]: " + std::to_string(p));
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) {
      throw Error("label distribution does not sum to 1 (sum = " + std::to_string(sum) + ")");
    }
  }

  LabelDistribution(std::initializer_list<double> probs) : LabelDistribution(std::vector<double>(probs)) {}

  static LabelDistribution one_hot(std::size_t k, std::size_t index) {
    if (index >= k) {
      throw Error("one-hot index " + std::to_string(index) + " out of range for " + std::to_string(k) + " labels");
    }
    std::vector<double> p(k, 0.0);
    p[index] = 1.0;
    return LabelDistribution(std::move(p));
  }

  static LabelDistribution uniform(std::size_t k) { return LabelDistribution(std::vector<double>(k, 1.0 / static_cast<double>(k))); }

  [[nodiscard]] std::size_t size() const noexcept { return probs_.size(); }
  [[nodiscard]] double operator[](std::size_t i) const { return probs_[i]; }
  [[nodiscard]] const std::vector<double>& probs() const noexcept { return probs_; }
  [[nodiscard]] std::span<const double> view() const noexcept { return probs_; }

  /// Index of the largest entry; the lowest index wins ties.
  [[nodiscard]] std::size_t argmax() const noexcept {
    return static_cast<std::size_t>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
  }

  friend bool operator==(const LabelDistribution& a, const LabelDistribution& b) = default;

 private:
  std::vector<double> probs_;
};

/// First index of the maximum; the canonical tie-break used everywhere.
inline std::size_t argmax(std::span<const double> values) {
  if (values.empty()) {
    throw Error("argmax of an empty vector");
  }
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

/// Shannon entropy in nats, 0 ln 0 = 0.
inline double entropy(std::span<const double> p) {
  double h = 0.0;
  for (const double v : p) {
    if (v > 0.0) {
      h -= v * std::log(v);
    }
  }
  return h;
}

inline double entropy(const LabelDistribution& p) { return entropy(p.view()); }

/// Draws from Beta(a, b) as a ratio of Gamma variates.
inline double sample_beta(Rng& rng, double a, double b) {
  std::gamma_distribution<double> ga(a, 1.0);
  std::gamma_distribution<double> gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  if (x + y <= 0.0) {
    // both gammas underflowed (tiny shape); fall back to a fair coin
    return std::bernoulli_distribution(0.5)(rng) ? 1.0 : 0.0;
  }
  return x / (x + y);
}

/// Draws from a symmetric Dirichlet(concentration, ..., concentration) over k outcomes.
inline std::vector<double> sample_dirichlet(Rng& rng, std::size_t k, double concentration) {
  std::gamma_distribution<double> g(concentration, 1.0);
  std::vector<double> out(k);
  double sum = 0.0;
  for (auto& v : out) {
    v = g(rng);
    sum += v;
  }
  if (sum <= 0.0) {
    // every draw underflowed; the limit is a one-hot at a uniformly chosen label
    std::fill(out.begin(), out.end(), 0.0);
    out[std::uniform_int_distribution<std::size_t>(0, k - 1)(rng)] = 1.0;
    return out;
  }
  for (auto& v : out) {
    v /= sum;
  }
  return out;
}

/// Uniform sample of `count` distinct indices from [0, n) in random order.
inline std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t count) {
  if (count > n) {
    throw Error("cannot sample " + std::to_string(count) + " items without replacement from " + std::to_string(n));
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(count);
  return idx;
}

}  // namespace budgetmix

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
 * @brief Temperature scaling, prediction smoothing, training-target smoothing
 *        and entropy-matched tuning of their single scalar.
 */

#pragma once

#include "budgetmix/core.hpp"
#include "budgetmix/model.hpp"

#include <functional>
#include <optional>

namespace budgetmix {

enum class CalibrationMethod { temp_scaling, pred_smoothing, train_smoothing };

inline std::string to_string(CalibrationMethod m) {
  switch (m) {
    case CalibrationMethod::temp_scaling: return "temp_scaling";
    case CalibrationMethod::pred_smoothing: return "pred_smoothing";
    case CalibrationMethod::train_smoothing: return "train_smoothing";
  }
  return "temp_scaling";
}

inline CalibrationMethod calibration_from_string(std::string_view s) {
  if (s == "temp_scaling") return CalibrationMethod::temp_scaling;
  if (s == "pred_smoothing") return CalibrationMethod::pred_smoothing;
  if (s == "train_smoothing") return CalibrationMethod::train_smoothing;
  throw Error("unknown calibration method '" + std::string(s) + "'");
}

struct CalibrationConfig {
  CalibrationMethod method = CalibrationMethod::temp_scaling;
  /// Temperature (> 0) or smoothing mass (in [0, 1]).
  double scalar = 1.0;
  /// Nats; when absent the tuner matches the eval set's human label entropy.
  std::optional<double> target_entropy;

  void validate() const {
    if (method == CalibrationMethod::temp_scaling && !(scalar > 0.0)) {
      throw Error("temperature must be positive");
    }
    if (method != CalibrationMethod::temp_scaling && !(scalar >= 0.0 && scalar <= 1.0)) {
      throw Error("smoothing mass must lie in [0, 1]");
    }
    if (target_entropy && !(*target_entropy >= 0.0)) {
      throw Error("target entropy must be non-negative");
    }
  }
};

// ---------------------------------------------------------------------------
// the three transforms

/// softmax(logits / T).
inline LabelDistribution temp_scale(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) {
    throw Error("temperature must be positive, got " + std::to_string(temperature));
  }
  Matrix z = as_row(logits) / temperature;
  return to_distribution(row_to_vector(Classifier::softmax_rows(z), 0));
}

inline Matrix temp_scale_rows(const Matrix& logits, double temperature) {
  if (!(temperature > 0.0)) {
    throw Error("temperature must be positive, got " + std::to_string(temperature));
  }
  return Classifier::softmax_rows(logits / temperature);
}

namespace detail {

// Moves `alpha` from entry `from` and spreads it over all k entries.
inline std::vector<double> shift_mass(std::vector<double> p, std::size_t from, double alpha) {
  const double share = alpha / static_cast<double>(p.size());
  p[from] -= alpha;
  for (auto& v : p) {
    v += share;
  }
  // the shifted entry can land a rounding step below zero when alpha equals its mass
  for (auto& v : p) {
    v = std::clamp(v, 0.0, 1.0);
  }
  return p;
}

}  // namespace detail

/// Moves `alpha` mass off the most probable label and spreads it over every label.
inline LabelDistribution pred_smooth(const LabelDistribution& dist, double alpha) {
  if (!(alpha >= 0.0)) {
    throw Error("smoothing mass must be non-negative");
  }
  const auto top = dist.argmax();
  if (alpha > dist[top]) {
    throw Error("smoothing mass " + std::to_string(alpha) + " exceeds the largest probability " + std::to_string(dist[top]));
  }
  return LabelDistribution(detail::shift_mass(dist.probs(), top, alpha));
}

inline Matrix pred_smooth_rows(const Matrix& probs, double alpha) {
  Matrix out(probs.rows(), probs.cols());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const auto smoothed = pred_smooth(to_distribution(row_to_vector(probs, i)), alpha);
    out.row(i) = as_row(smoothed.view());
  }
  return out;
}

/// Moves `alpha` mass off the gold label of a training target; the gold label must be unique.
inline LabelDistribution train_smooth(const LabelDistribution& target, double alpha) {
  if (!(alpha >= 0.0)) {
    throw Error("smoothing mass must be non-negative");
  }
  const auto gold = target.argmax();
  for (std::size_t c = 0; c < target.size(); ++c) {
    if (c != gold && target[c] == target[gold]) {
      throw Error("training target has no unique gold label");
    }
  }
  if (alpha > target[gold]) {
    throw Error("smoothing mass " + std::to_string(alpha) + " exceeds the gold label mass " + std::to_string(target[gold]));
  }
  return LabelDistribution(detail::shift_mass(target.probs(), gold, alpha));
}

// ---------------------------------------------------------------------------
// entropy-matched tuning

inline double mean_entropy(const Matrix& probs) {
  if (probs.rows() == 0) {
    throw Error("mean entropy of an empty prediction set");
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const auto row = row_to_vector(probs, i);
    sum += entropy(row);
  }
  return sum / static_cast<double>(probs.rows());
}

struct TuneResult {
  double scalar = 0.0;
  double achieved_entropy = 0.0;
  /// The target was not bracketed by the search interval; `scalar` is the nearer boundary.
  bool at_boundary = false;
  int iterations = 0;
};

struct TuneOptions {
  double tolerance = 1e-3;  // nats, the acceptance band for `achieved_entropy`
  int max_iterations = 200;
};

/**
 * @brief Bisection for the scalar whose mean predicted entropy hits `target`.
 *
 * `mean_entropy_at` must be non-decreasing on [lo, hi]. When `log_space` is
 * set the bisection runs on ln(scalar). Iterates until the bracket collapses
 * or `max_iterations` is reached.
 */
inline TuneResult bisect_entropy(const std::function<double(double)>& mean_entropy_at, double lo, double hi, double target,
                                 bool log_space, const TuneOptions& opts = {}) {
  const auto to_x = [&](double s) { return log_space ? std::log(s) : s; };
  const auto to_s = [&](double x) { return log_space ? std::exp(x) : x; };
  TuneResult r;
  const double f_lo = mean_entropy_at(lo) - target;
  const double f_hi = mean_entropy_at(hi) - target;
  if (f_hi < 0.0) {
    r.scalar = hi;
    r.achieved_entropy = f_hi + target;
    r.at_boundary = true;
    return r;
  }
  if (f_lo > 0.0) {
    r.scalar = lo;
    r.achieved_entropy = f_lo + target;
    r.at_boundary = true;
    return r;
  }
  double a = to_x(lo);
  double b = to_x(hi);
  double best = lo;
  double best_gap = std::abs(f_lo);
  if (std::abs(f_hi) < best_gap) {
    best = hi;
    best_gap = std::abs(f_hi);
  }
  for (r.iterations = 0; r.iterations < opts.max_iterations; ++r.iterations) {
    const double mid = 0.5 * (a + b);
    if (mid <= a || mid >= b) {
      break;
    }
    const double f = mean_entropy_at(to_s(mid)) - target;
    if (std::abs(f) < best_gap) {
      best_gap = std::abs(f);
      best = to_s(mid);
    }
    if (f == 0.0) {
      break;
    }
    (f < 0.0 ? a : b) = mid;
  }
  r.scalar = best;
  r.achieved_entropy = mean_entropy_at(best);
  r.at_boundary = std::abs(r.achieved_entropy - target) > opts.tolerance;
  return r;
}

inline constexpr double kMinTemperature = 1e-3;
inline constexpr double kMaxTemperature = 1e3;

/// Throws if mean entropy decreases anywhere on a doubling grid of T >= 1.
inline void check_temperature_monotone(const Matrix& logits) {
  double prev = -1.0;
  for (double t = 1.0; t <= kMaxTemperature; t *= 2.0) {
    const double h = mean_entropy(temp_scale_rows(logits, t));
    if (h < prev - 1e-12) {
      throw Error("mean predicted entropy is not monotone in the temperature at T = " + std::to_string(t));
    }
    prev = h;
  }
}

inline TuneResult tune_temperature(const Matrix& logits, double target_entropy, const TuneOptions& opts = {}) {
  if (logits.rows() == 0) {
    throw Error("cannot tune on an empty prediction set");
  }
  const double ceiling = std::log(static_cast<double>(logits.cols()));
  if (!(target_entropy >= 0.0 && target_entropy <= ceiling + 1e-12)) {
    throw Error("target entropy must lie in [0, ln k]");
  }
  check_temperature_monotone(logits);
  return bisect_entropy([&](double t) { return mean_entropy(temp_scale_rows(logits, t)); }, kMinTemperature, kMaxTemperature,
                        target_entropy, true, opts);
}

/// Largest smoothing mass valid for every row (the smallest row maximum).
inline double max_feasible_smoothing(const Matrix& probs) {
  return probs.rowwise().maxCoeff().minCoeff();
}

inline TuneResult tune_pred_smoothing(const Matrix& probs, double target_entropy, const TuneOptions& opts = {}) {
  if (probs.rows() == 0) {
    throw Error("cannot tune on an empty prediction set");
  }
  const double ceiling = std::log(static_cast<double>(probs.cols()));
  if (!(target_entropy >= 0.0 && target_entropy <= ceiling + 1e-12)) {
    throw Error("target entropy must lie in [0, ln k]");
  }
  return bisect_entropy([&](double a) { return mean_entropy(pred_smooth_rows(probs, a)); }, 0.0,
                        max_feasible_smoothing(probs), target_entropy, false, opts);
}

/**
 * Training-time smoothing needs a retrain per candidate; `predictions_at`
 * trains with the given mass and returns eval predictions.
 */
inline TuneResult tune_train_smoothing(const std::function<Matrix(double)>& predictions_at, double max_alpha,
                                       double target_entropy, const TuneOptions& opts = {}) {
  return bisect_entropy([&](double a) { return mean_entropy(predictions_at(a)); }, 0.0, max_alpha, target_entropy, false, opts);
}

/// Post-hoc methods tune on eval logits; training smoothing goes through tune_train_smoothing.
inline TuneResult tune_entropy_match(CalibrationMethod method, const Matrix& logits, double target_entropy,
                                     const TuneOptions& opts = {}) {
  switch (method) {
    case CalibrationMethod::temp_scaling: return tune_temperature(logits, target_entropy, opts);
    case CalibrationMethod::pred_smoothing:
      if (logits.rows() == 0) {
        throw Error("cannot tune on an empty prediction set");
      }
      return tune_pred_smoothing(Classifier::softmax_rows(logits), target_entropy, opts);
    case CalibrationMethod::train_smoothing:
      throw Error("training-time smoothing cannot be tuned from fixed predictions; use tune_train_smoothing");
  }
  return {};
}

/// Applies a post-hoc method to eval logits.
inline Matrix apply_calibration(CalibrationMethod method, const Matrix& logits, double scalar) {
  switch (method) {
    case CalibrationMethod::temp_scaling: return temp_scale_rows(logits, scalar);
    case CalibrationMethod::pred_smoothing: return pred_smooth_rows(Classifier::softmax_rows(logits), scalar);
    case CalibrationMethod::train_smoothing: return Classifier::softmax_rows(logits);
  }
  return {};
}

}  // namespace budgetmix

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
 * @brief Tanh MLP classifier over fixed features with softmax or per-type
 *        sigmoid output, soft-target losses with exact backprop, and Adam.
 */

#pragma once

#include "budgetmix/core.hpp"

#include <Eigen/Dense>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace budgetmix {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Head { softmax, sigmoid };

inline std::string to_string(Head h) { return h == Head::softmax ? "softmax" : "sigmoid"; }

inline Head head_from_string(std::string_view s) {
  if (s == "softmax") return Head::softmax;
  if (s == "sigmoid") return Head::sigmoid;
  throw Error("unknown output head '" + std::string(s) + "'");
}

/// Layer widths of the network: input, hidden..., output.
struct Architecture {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden{64};
  std::size_t output_dim = 0;
  Head head = Head::softmax;

  [[nodiscard]] std::vector<std::size_t> widths() const {
    std::vector<std::size_t> w{input_dim};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(output_dim);
    return w;
  }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Loss knobs shared by training and evaluation.
struct LossOptions {
  /// Weight of the negative (target 0) side of the per-type binary loss.
  double negative_weight = 0.1;
};

inline constexpr double kProbFloor = 1e-12;

/**
 * @brief Feed-forward classifier; all weights live in one flat vector.
 *
 * Layer l stores a column-major (out x in) weight matrix followed by its
 * bias. Inputs are batched row-wise: an (n x input_dim) matrix holds n
 * examples.
 */
class Classifier {
 public:
  Classifier() = default;

  /// Xavier-uniform weights, zero biases.
  Classifier(Architecture arch, std::uint64_t seed) : Classifier(std::move(arch)) {
    Rng rng(seed);
    const auto w = arch_.widths();
    for (std::size_t l = 0; l + 1 < w.size(); ++l) {
      const double bound = std::sqrt(6.0 / static_cast<double>(w[l] + w[l + 1]));
      std::uniform_real_distribution<double> u(-bound, bound);
      auto W = weight(l);
      for (Eigen::Index j = 0; j < W.cols(); ++j) {
        for (Eigen::Index i = 0; i < W.rows(); ++i) {
          W(i, j) = u(rng);
        }
      }
    }
  }

  /// All-zero parameters.
  explicit Classifier(Architecture arch) : arch_(std::move(arch)) {
    if (arch_.input_dim == 0 || arch_.output_dim == 0) {
      throw Error("classifier needs positive input and output dimensions");
    }
    const auto w = arch_.widths();
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < w.size(); ++l) {
      if (w[l + 1] == 0) {
        throw Error("hidden layer " + std::to_string(l) + " has zero width");
      }
      offsets_.push_back(offset);
      offset += w[l + 1] * w[l] + w[l + 1];
    }
    params_ = Vector::Zero(static_cast<Eigen::Index>(offset));
  }

  [[nodiscard]] const Architecture& architecture() const noexcept { return arch_; }
  [[nodiscard]] std::size_t num_layers() const noexcept { return offsets_.size(); }
  [[nodiscard]] Eigen::Index num_params() const noexcept { return params_.size(); }
  [[nodiscard]] Vector& params() noexcept { return params_; }
  [[nodiscard]] const Vector& params() const noexcept { return params_; }

  [[nodiscard]] Eigen::Map<Matrix> weight(std::size_t l) { return weight_of(params_.data(), l); }
  [[nodiscard]] Eigen::Map<const Matrix> weight(std::size_t l) const { return weight_of(params_.data(), l); }
  [[nodiscard]] Eigen::Map<Vector> bias(std::size_t l) { return bias_of(params_.data(), l); }
  [[nodiscard]] Eigen::Map<const Vector> bias(std::size_t l) const { return bias_of(params_.data(), l); }

  /// Final-layer pre-activations for a batch.
  [[nodiscard]] Matrix logits(const Matrix& x) const {
    std::vector<Matrix> acts;
    return forward(x, acts);
  }

  /// Softmax probabilities or per-type sigmoid scores, one row per example.
  [[nodiscard]] Matrix predict(const Matrix& x) const {
    Matrix z = logits(x);
    return arch_.head == Head::softmax ? softmax_rows(z) : sigmoid(z);
  }

  /**
   * @brief Mean loss over the batch; adds `scale` times its gradient to `grad`.
   *
   * Softmax head: soft cross-entropy -sum_c t_c ln p_c with ln p clamped at
   * ln 1e-12. Sigmoid head: per-type binary cross-entropy with the negative
   * side down-weighted, averaged over examples and types. Targets may be soft.
   */
  double loss_and_grad(const Matrix& x, const Matrix& targets, double scale, Vector* grad,
                       const LossOptions& opts = {}) const {
    if (targets.rows() != x.rows() || targets.cols() != static_cast<Eigen::Index>(arch_.output_dim)) {
      throw Error("target shape (" + std::to_string(targets.rows()) + " x " + std::to_string(targets.cols()) +
                  ") does not match batch of " + std::to_string(x.rows()) + " with " + std::to_string(arch_.output_dim) +
                  " outputs");
    }
    if (x.rows() == 0) {
      throw Error("empty batch");
    }
    std::vector<Matrix> acts;
    const Matrix z = forward(x, acts);
    Matrix dz(z.rows(), z.cols());
    const double loss = arch_.head == Head::softmax ? softmax_loss(z, targets, dz) : sigmoid_loss(z, targets, opts, dz);
    if (grad != nullptr) {
      if (grad->size() != params_.size()) {
        throw Error("gradient buffer has the wrong size");
      }
      backward(acts, dz * scale, *grad);
    }
    return loss;
  }

  [[nodiscard]] static Matrix softmax_rows(const Matrix& z) {
    Matrix p(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const double m = z.row(i).maxCoeff();
      p.row(i) = (z.row(i).array() - m).exp().matrix();
      p.row(i) /= p.row(i).sum();
    }
    return p;
  }

  [[nodiscard]] static Matrix sigmoid(const Matrix& z) {
    return z.unaryExpr([](double v) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); });
  }

 private:
  [[nodiscard]] Eigen::Map<Matrix> weight_of(double* base, std::size_t l) const {
    const auto w = arch_.widths();
    return {base + offsets_.at(l), static_cast<Eigen::Index>(w[l + 1]), static_cast<Eigen::Index>(w[l])};
  }
  [[nodiscard]] Eigen::Map<const Matrix> weight_of(const double* base, std::size_t l) const {
    const auto w = arch_.widths();
    return {base + offsets_.at(l), static_cast<Eigen::Index>(w[l + 1]), static_cast<Eigen::Index>(w[l])};
  }
  [[nodiscard]] Eigen::Map<Vector> bias_of(double* base, std::size_t l) const {
    const auto w = arch_.widths();
    return {base + offsets_.at(l) + w[l + 1] * w[l], static_cast<Eigen::Index>(w[l + 1])};
  }
  [[nodiscard]] Eigen::Map<const Vector> bias_of(const double* base, std::size_t l) const {
    const auto w = arch_.widths();
    return {base + offsets_.at(l) + w[l + 1] * w[l], static_cast<Eigen::Index>(w[l + 1])};
  }

  // acts[0] = input, acts[l] = tanh output of hidden layer l
  Matrix forward(const Matrix& x, std::vector<Matrix>& acts) const {
    if (x.cols() != static_cast<Eigen::Index>(arch_.input_dim)) {
      throw Error("feature dimension " + std::to_string(x.cols()) + " does not match classifier input " +
                  std::to_string(arch_.input_dim));
    }
    acts.clear();
    acts.push_back(x);
    const std::size_t L = num_layers();
    for (std::size_t l = 0; l < L; ++l) {
      Matrix z = acts.back() * weight(l).transpose();
      z.rowwise() += bias(l).transpose();
      if (l + 1 == L) {
        return z;
      }
      acts.push_back(z.array().tanh().matrix());
    }
    return {};
  }

  void backward(const std::vector<Matrix>& acts, Matrix dz, Vector& grad) const {
    for (std::size_t l = num_layers(); l-- > 0;) {
      const Matrix& a = acts[l];
      weight_of(grad.data(), l).noalias() += dz.transpose() * a;
      bias_of(grad.data(), l) += dz.colwise().sum().transpose();
      if (l > 0) {
        Matrix da = dz * weight(l);
        dz = (da.array() * (1.0 - a.array().square())).matrix();
      }
    }
  }

  static double softmax_loss(const Matrix& z, const Matrix& t, Matrix& dz) {
    const double floor = std::log(kProbFloor);
    const auto n = static_cast<double>(z.rows());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const double m = z.row(i).maxCoeff();
      const double lse = m + std::log((z.row(i).array() - m).exp().sum());
      double active_mass = 0.0;
      for (Eigen::Index c = 0; c < z.cols(); ++c) {
        const double logp = z(i, c) - lse;
        if (!(logp <= floor)) {  // NaN must reach the caller
          loss -= t(i, c) * logp;
          active_mass += t(i, c);
          dz(i, c) = -t(i, c);
        } else {
          loss -= t(i, c) * floor;
          dz(i, c) = 0.0;
        }
      }
      for (Eigen::Index c = 0; c < z.cols(); ++c) {
        dz(i, c) += std::exp(z(i, c) - lse) * active_mass;
      }
    }
    dz /= n;
    return loss / n;
  }

  static double sigmoid_loss(const Matrix& z, const Matrix& t, const LossOptions& opts, Matrix& dz) {
    const double floor = std::log(kProbFloor);
    const double w = opts.negative_weight;
    const double count = static_cast<double>(z.rows() * z.cols());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      for (Eigen::Index c = 0; c < z.cols(); ++c) {
        const double v = z(i, c);
        const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        // ln s = -softplus(-v), ln(1-s) = -softplus(v)
        const double log_s = -(std::max(-v, 0.0) + std::log1p(std::exp(-std::abs(v))));
        const double log_1ms = -(std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))));
        const double tc = t(i, c);
        double g = 0.0;
        if (!(log_s <= floor)) {
          loss -= tc * log_s;
          g -= tc * (1.0 - s);
        } else {
          loss -= tc * floor;
        }
        if (!(log_1ms <= floor)) {
          loss -= w * (1.0 - tc) * log_1ms;
          g += w * (1.0 - tc) * s;
        } else {
          loss -= w * (1.0 - tc) * floor;
        }
        dz(i, c) = g / count;
      }
    }
    return loss / count;
  }

  Architecture arch_;
  std::vector<std::size_t> offsets_;
  Vector params_;
};

// ---------------------------------------------------------------------------
// single-example views and standalone losses

inline Matrix as_row(std::span<const double> x) {
  Matrix m(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    m(0, static_cast<Eigen::Index>(i)) = x[i];
  }
  return m;
}

inline std::vector<double> row_to_vector(const Matrix& m, Eigen::Index row) {
  std::vector<double> v(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    v[static_cast<std::size_t>(c)] = m(row, c);
  }
  return v;
}

/// Normalises a probability row against rounding so it validates as a distribution.
inline LabelDistribution to_distribution(std::vector<double> p) {
  double sum = 0.0;
  for (auto& v : p) {
    v = std::clamp(v, 0.0, 1.0);
    sum += v;
  }
  for (auto& v : p) {
    v /= sum;
  }
  return LabelDistribution(std::move(p));
}

inline LabelDistribution forward_softmax(const Classifier& clf, std::span<const double> x) {
  if (clf.architecture().head != Head::softmax) {
    throw Error("forward_softmax called on a classifier with a sigmoid head");
  }
  return to_distribution(row_to_vector(clf.predict(as_row(x)), 0));
}

inline std::vector<double> forward_multilabel(const Classifier& clf, std::span<const double> x) {
  if (clf.architecture().head != Head::sigmoid) {
    throw Error("forward_multilabel called on a classifier with a softmax head");
  }
  return row_to_vector(clf.predict(as_row(x)), 0);
}

/// -sum_c target_c ln(pred_c), with pred clamped at 1e-12.
inline double soft_cross_entropy(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) {
    throw Error("soft_cross_entropy: size mismatch");
  }
  double loss = 0.0;
  for (std::size_t c = 0; c < pred.size(); ++c) {
    if (target[c] != 0.0) {
      loss -= target[c] * std::log(std::max(pred[c], kProbFloor));
    }
  }
  return loss;
}

inline double soft_cross_entropy(const LabelDistribution& pred, const LabelDistribution& target) {
  return soft_cross_entropy(pred.view(), target.view());
}

/**
 * Mean over types of the binary cross-entropy against the positive set,
 * negatives weighted by `negative_weight`. Scores are clamped to
 * [1e-12, 1 - 1e-12].
 */
inline double multilabel_bce(std::span<const double> scores, const std::set<std::size_t>& positives,
                             double negative_weight = 0.1) {
  if (scores.empty()) {
    throw Error("multilabel_bce: empty score vector");
  }
  for (const auto p : positives) {
    if (p >= scores.size()) {
      throw Error("multilabel_bce: positive type " + std::to_string(p) + " outside ontology");
    }
  }
  double loss = 0.0;
  for (std::size_t t = 0; t < scores.size(); ++t) {
    const double s = std::clamp(scores[t], kProbFloor, 1.0 - kProbFloor);
    loss -= positives.contains(t) ? std::log(s) : negative_weight * std::log(1.0 - s);
  }
  return loss / static_cast<double>(scores.size());
}

/// Types scoring above `threshold`; the top-scoring type if none does.
inline std::set<std::size_t> predict_types(std::span<const double> scores, double threshold = 0.5) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw Error("predict_types: threshold must lie in (0, 1)");
  }
  std::set<std::size_t> out;
  for (std::size_t t = 0; t < scores.size(); ++t) {
    if (scores[t] > threshold) {
      out.insert(t);
    }
  }
  if (out.empty() && !scores.empty()) {
    out.insert(argmax(scores));
  }
  return out;
}

/// A training pair with a soft target.
struct Sample {
  std::vector<double> x;
  std::vector<double> target;
};

/// Gradient of the mean loss over a batch with respect to all parameters.
inline Vector grad_batch(const Classifier& clf, std::span<const Sample> batch, const LossOptions& opts = {}) {
  if (batch.empty()) {
    throw Error("grad_batch: empty batch");
  }
  Matrix x(static_cast<Eigen::Index>(batch.size()), static_cast<Eigen::Index>(batch.front().x.size()));
  Matrix t(static_cast<Eigen::Index>(batch.size()), static_cast<Eigen::Index>(batch.front().target.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].x.size() != batch.front().x.size() || batch[i].target.size() != batch.front().target.size()) {
      throw Error("grad_batch: ragged batch");
    }
    x.row(static_cast<Eigen::Index>(i)) = as_row(batch[i].x);
    t.row(static_cast<Eigen::Index>(i)) = as_row(batch[i].target);
  }
  Vector g = Vector::Zero(clf.num_params());
  clf.loss_and_grad(x, t, 1.0, &g, opts);
  return g;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  Vector m;
  Vector v;

  AdamState() = default;
  AdamState(Eigen::Index n, double learning_rate) : lr(learning_rate), m(Vector::Zero(n)), v(Vector::Zero(n)) {}
};

/// One bias-corrected Adam update of `params` in place.
inline void adam_step(Vector& params, AdamState& state, const Vector& grad) {
  if (state.m.size() != params.size() || state.v.size() != params.size() || grad.size() != params.size()) {
    throw Error("adam_step: parameter, gradient and moment shapes differ");
  }
  ++state.step;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.array() -= state.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
}

// ---------------------------------------------------------------------------
// checkpoints
//
//   budgetmix-checkpoint 1
//   head softmax|sigmoid
//   widths <input> <hidden...> <output>
//   vocab_hash <16 hex digits>
//   seed <integer>
//   params <count>
//   <one shortest round-trip decimal per line>

struct Checkpoint {
  Classifier classifier;
  std::uint64_t vocab_hash = 0;
  std::uint64_t seed = 0;
};

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw Error("not a number: '" + std::string(s) + "'");
  }
  return v;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error("cannot write checkpoint " + path.string());
  }
  const auto& arch = ckpt.classifier.architecture();
  out << "budgetmix-checkpoint 1\n";
  out << "head " << to_string(arch.head) << '\n';
  out << "widths";
  for (const auto w : arch.widths()) {
    out << ' ' << w;
  }
  out << '\n';
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(ckpt.vocab_hash));
  out << "vocab_hash " << hex << '\n';
  out << "seed " << ckpt.seed << '\n';
  const auto& p = ckpt.classifier.params();
  out << "params " << p.size() << '\n';
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    out << format_double(p[i]) << '\n';
  }
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error("cannot open checkpoint " + path.string());
  }
  const auto fail = [&](const std::string& what) { return Error("malformed checkpoint " + path.string() + ": " + what); };
  std::string line;
  const auto expect = [&](const std::string& key) {
    if (!std::getline(in, line) || line.rfind(key + " ", 0) != 0) {
      throw fail("expected '" + key + "' line");
    }
    return line.substr(key.size() + 1);
  };
  if (expect("budgetmix-checkpoint") != "1") {
    throw fail("unsupported version");
  }
  Architecture arch;
  arch.head = head_from_string(expect("head"));
  std::vector<std::size_t> widths;
  {
    std::istringstream ws(expect("widths"));
    std::size_t w = 0;
    while (ws >> w) {
      widths.push_back(w);
    }
  }
  if (widths.size() < 2) {
    throw fail("need at least input and output widths");
  }
  arch.input_dim = widths.front();
  arch.output_dim = widths.back();
  arch.hidden.assign(widths.begin() + 1, widths.end() - 1);
  Checkpoint ckpt;
  ckpt.vocab_hash = std::stoull(expect("vocab_hash"), nullptr, 16);
  ckpt.seed = std::stoull(expect("seed"));
  const auto count = std::stoll(expect("params"));
  ckpt.classifier = Classifier(arch);
  if (count != ckpt.classifier.num_params()) {
    throw fail("parameter count " + std::to_string(count) + " does not match widths");
  }
  auto& p = ckpt.classifier.params();
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (!std::getline(in, line)) {
      throw fail("truncated parameter list");
    }
    p[i] = parse_double(line);
  }
  return ckpt;
}

}  // namespace budgetmix

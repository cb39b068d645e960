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

// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "budgetmix/budgetmix.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

namespace bm = budgetmix;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Clock {
 public:
  [[nodiscard]] double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << std::fixed << v;
  return os.str();
}

fs::path workdir() {
  const auto dir = fs::temp_directory_path() / "budgetmix_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (const double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stddev(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (const double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// ---------------------------------------------------------------------------
// independent reference computations

std::vector<double> ref_softmax(const std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += p[i] = std::exp(z[i] - m);
  for (auto& v : p) v /= s;
  return p;
}

std::vector<double> ref_logits(const bm::Classifier& clf, std::vector<double> a) {
  for (std::size_t l = 0; l < clf.num_layers(); ++l) {
    const auto W = clf.weight(l);
    const auto b = clf.bias(l);
    std::vector<double> z(static_cast<std::size_t>(W.rows()));
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      double s = b[i];
      for (Eigen::Index j = 0; j < W.cols(); ++j) s += W(i, j) * a[static_cast<std::size_t>(j)];
      z[static_cast<std::size_t>(i)] = l + 1 == clf.num_layers() ? s : std::tanh(s);
    }
    a = std::move(z);
  }
  return a;
}

bm::Vector central_difference(const std::function<double(const bm::Vector&)>& f, bm::Vector p) {
  const double h = 1e-5;
  bm::Vector g(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double old = p[i];
    p[i] = old + h;
    const double up = f(p);
    p[i] = old - h;
    const double down = f(p);
    p[i] = old;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

double rel_error(const bm::Vector& a, const bm::Vector& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double d = std::max({std::abs(a[i]), std::abs(b[i]), 1e-6});
    worst = std::max(worst, std::abs(a[i] - b[i]) / d);
  }
  return worst;
}

bm::Matrix gaussian(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> n;
  bm::Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

bm::Matrix simplex_rows(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::gamma_distribution<double> g(1.0, 1.0);
  bm::Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = g(rng);
    m.row(i) /= m.row(i).sum();
  }
  return m;
}

// ---------------------------------------------------------------------------
// 1

Outcome budget_exactness(const fs::path& dir) {
  Outcome o;
  // the 150k plan needs 145,500 distinct examples; a feature-light pool keeps it cheap
  const auto make_pool = [](std::size_t n, std::uint64_t seed) {
    bm::SyntheticConfig c;
    c.n_examples = n;
    c.d_feat = 3;
    c.annotations_per_example = 10;
    c.old_label_annotators = 5;
    c.seed = seed;
    return bm::generate_synthetic_pool(c);
  };
  const bm::LabelVocab vocab{"e", "n", "c"};
  const auto pool_20k = dir / "pool20k.jsonl";
  const auto pool_150k = dir / "pool150k.jsonl";
  bm::save_corpus(make_pool(20000, 1), vocab, pool_20k);
  bm::save_corpus(make_pool(146000, 2), vocab, pool_150k);

  struct Plan {
    const char* name;
    json budget;
    fs::path pool;
    bool timed;
  };
  const std::vector<Plan> plans{
      {"150k", {{"total_labels", 150000}, {"n_single", 145000}, {"n_multi", 500}, {"k_per_multi", 10}}, pool_150k, false},
      {"6k", {{"total_labels", 6000}, {"n_single", 1000}, {"n_multi", 500}, {"k_per_multi", 10}, {"n_unlabeled", 5000}},
       pool_20k, true},
      {"ufet-500", {{"total_labels", 500}, {"n_single", 100}, {"n_multi", 200}, {"k_per_multi", 2}}, pool_20k, true},
      {"single-only", {{"total_labels", 1000}, {"n_single", 1000}}, pool_20k, true},
  };
  double desk_seconds = 0.0;
  for (const auto& p : plans) {
    json cfg = {{"labels", {"e", "n", "c"}},
                {"corpus", {{"pool", p.pool.string()}}},
                {"budget", p.budget},
                {"out", (dir / "runs").string()}};
    const bm::Experiment exp(bm::parse_experiment(cfg, dir));
    const Clock clock;
    const auto manifest = exp.split(0);
    if (p.timed) desk_seconds += clock.seconds();
    const auto reread = json::parse(std::ifstream(exp.split_dir(0) / "manifest.json"));
    const auto plan_total = p.budget["total_labels"].get<std::size_t>();
    const bool exact = reread["total_labels"].get<std::size_t>() == plan_total &&
                       manifest["total_labels"].get<std::size_t>() == plan_total;
    o.pass = o.pass && exact;
    o.detail += std::string(p.name) + " " + manifest["equation"].get<std::string>() + (exact ? "" : " MISMATCH") + "; ";
  }
  const double per_plan = desk_seconds / 3.0;
  o.pass = o.pass && per_plan < 1.0;
  o.detail += "split time on 20k pool " + fmt(per_plan, 3) + " s/plan";
  return o;
}

// ---------------------------------------------------------------------------
// 2

Outcome gradient_suite() {
  const Clock clock;
  std::mt19937_64 rng(2024);
  double worst_ce = 0.0, worst_bce = 0.0, worst_mix = 0.0;
  const int instances = 20;
  for (int t = 0; t < instances; ++t) {
    const auto in = static_cast<std::size_t>(2 + rng() % 5);
    const auto k = static_cast<std::size_t>(2 + rng() % 4);
    const std::vector<std::size_t> hidden{static_cast<std::size_t>(3 + rng() % 4)};
    const auto rows = static_cast<Eigen::Index>(2 + rng() % 3);
    const bm::Matrix x = gaussian(rng, rows, static_cast<Eigen::Index>(in));
    const bm::Matrix y = simplex_rows(rng, rows, static_cast<Eigen::Index>(k));

    // soft cross-entropy
    {
      const bm::Classifier clf(bm::Architecture{in, hidden, k, bm::Head::softmax}, rng());
      bm::Vector g = bm::Vector::Zero(clf.num_params());
      clf.loss_and_grad(x, y, 1.0, &g);
      const auto f = [&](const bm::Vector& p) {
        bm::Classifier c = clf;
        c.params() = p;
        double l = 0.0;
        for (Eigen::Index i = 0; i < rows; ++i) {
          const auto pr = ref_softmax(ref_logits(c, bm::row_to_vector(x, i)));
          for (std::size_t j = 0; j < k; ++j) l -= y(i, static_cast<Eigen::Index>(j)) * std::log(pr[j]);
        }
        return l / static_cast<double>(rows);
      };
      worst_ce = std::max(worst_ce, rel_error(g, central_difference(f, clf.params())));
    }
    // multilabel binary cross-entropy with down-weighted negatives
    {
      const bm::Classifier clf(bm::Architecture{in, hidden, k, bm::Head::sigmoid}, rng());
      const bm::Matrix hard = (y.array() > 0.25).cast<double>();
      bm::Vector g = bm::Vector::Zero(clf.num_params());
      clf.loss_and_grad(x, hard, 1.0, &g);
      const auto f = [&](const bm::Vector& p) {
        bm::Classifier c = clf;
        c.params() = p;
        double l = 0.0;
        for (Eigen::Index i = 0; i < rows; ++i) {
          const auto z = ref_logits(c, bm::row_to_vector(x, i));
          for (std::size_t j = 0; j < k; ++j) {
            const double s = 1.0 / (1.0 + std::exp(-z[j]));
            const double tj = hard(i, static_cast<Eigen::Index>(j));
            l -= tj * std::log(s) + 0.1 * (1.0 - tj) * std::log(1.0 - s);
          }
        }
        return l / static_cast<double>(rows * static_cast<Eigen::Index>(k));
      };
      worst_bce = std::max(worst_bce, rel_error(g, central_difference(f, clf.params())));
    }
    // Mixup(X_s, X_m, X_u) with lambda and pseudo labels frozen in the plan
    {
      const bm::Classifier clf(bm::Architecture{in, hidden, k, bm::Head::softmax}, rng());
      bm::MixupBatches b;
      b.singles = {x, y};
      b.multis = {gaussian(rng, rows, static_cast<Eigen::Index>(in)), simplex_rows(rng, rows, static_cast<Eigen::Index>(k))};
      b.unlabeled.x = gaussian(rng, rows, static_cast<Eigen::Index>(in));
      bm::MixupConfig cfg;
      cfg.fixed_lambda = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      bm::Rng r(rng());
      const auto plan = bm::plan_mixup(clf, b, cfg, 50, bm::mix_terms_for(bm::StrategyKind::mixup_smu), r);
      bm::Vector g = bm::Vector::Zero(clf.num_params());
      bm::evaluate_mixup(clf, plan, &g);
      const auto f = [&](const bm::Vector& p) {
        bm::Classifier c = clf;
        c.params() = p;
        double total = 0.0;
        for (const auto& term : plan.terms) {
          double l = 0.0;
          for (Eigen::Index i = 0; i < term.x.rows(); ++i) {
            const auto pr = ref_softmax(ref_logits(c, bm::row_to_vector(term.x, i)));
            for (std::size_t j = 0; j < k; ++j) l -= term.y(i, static_cast<Eigen::Index>(j)) * std::log(pr[j]);
          }
          total += term.weight * l / static_cast<double>(term.x.rows());
        }
        return total;
      };
      worst_mix = std::max(worst_mix, rel_error(g, central_difference(f, clf.params())));
    }
  }
  const double secs = clock.seconds();
  Outcome o;
  o.pass = worst_ce < 1e-4 && worst_bce < 1e-4 && worst_mix < 1e-4 && secs < 10.0;
  o.detail = std::to_string(instances) + " instances each; max rel err soft-CE " + fmt(worst_ce * 1e6, 3) + "e-6, BCE " +
             fmt(worst_bce * 1e6, 3) + "e-6, mixup " + fmt(worst_mix * 1e6, 3) + "e-6; " + fmt(secs, 2) + " s";
  return o;
}

// ---------------------------------------------------------------------------
// 3

Outcome mixup_degeneracies() {
  Outcome o;
  std::mt19937_64 rng(3);
  const bm::Classifier clf(bm::Architecture{5, {6}, 3, bm::Head::softmax}, 4);
  bm::MixupBatches b;
  b.singles = {gaussian(rng, 8, 5), simplex_rows(rng, 8, 3)};
  b.multis = {gaussian(rng, 8, 5), simplex_rows(rng, 8, 3)};
  b.unlabeled.x = gaussian(rng, 8, 5);
  b.unlabeled.y = bm::pseudo_labels(clf, b.unlabeled.x);
  const auto ce = [&](const bm::LabeledSet& s) { return clf.loss_and_grad(s.x, s.y, 1.0, nullptr); };
  const double ce_s = ce(b.singles), ce_m = ce(b.multis), ce_u = ce(b.unlabeled);
  // expected plain-CE value for each term (ss, mm, sm, su, mu) at lambda = 1 and lambda = 0
  const double at_one[5] = {ce_s, ce_m, ce_s, ce_s, ce_m};
  const double at_zero[5] = {ce_s, ce_m, ce_m, ce_u, ce_u};
  double worst = 0.0;
  for (const double lambda : {1.0, 0.0}) {
    bm::MixupConfig cfg;
    cfg.fixed_lambda = lambda;
    bm::Rng r(9);
    const auto loss = bm::evaluate_mixup(clf, bm::plan_mixup(clf, b, cfg, 0, bm::mix_terms_for(bm::StrategyKind::mixup_smu), r),
                                         nullptr);
    for (std::size_t t = 0; t < 5; ++t) {
      worst = std::max(worst, std::abs(*loss.terms[t] - (lambda == 1.0 ? at_one[t] : at_zero[t])));
    }
  }
  o.pass = worst < 1e-9;
  o.detail = "max |term - CE| " + fmt(worst * 1e12, 3) + "e-12";

  // alpha trace from an actual training run with the default schedule
  bm::TrainingSet ts;
  ts.singles = b.singles;
  ts.multis = b.multis;
  ts.unlabeled = b.unlabeled.x;
  bm::StrategySpec spec;
  spec.kind = bm::StrategyKind::mixup_smu;
  spec.iterations_main = 250;
  spec.hidden = {4};
  spec.mixup.batch_size = 4;
  const auto res = bm::run_strategy(spec, ts);
  bool exact = res.log.entries.size() == 250;
  for (const auto& e : res.log.entries) {
    exact = exact && e.alpha && *e.alpha == std::min(1.0, static_cast<double>(e.iter) / 100.0) * 2.0;
  }
  o.pass = o.pass && exact;
  o.detail += std::string("; alpha trace over 250 iterations ") + (exact ? "exact" : "MISMATCH");
  return o;
}

// ---------------------------------------------------------------------------
// 4

Outcome metric_axioms() {
  Outcome o;
  std::mt19937_64 rng(4);
  const bm::Matrix p = simplex_rows(rng, 2000, 4), q = simplex_rows(rng, 2000, 4);
  bool kl_ok = true, jsd_ok = true;
  double worst_two_path = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const auto a = bm::row_to_vector(p, i), b = bm::row_to_vector(q, i);
    kl_ok = kl_ok && bm::kl_div(a, b) > 0.0 && bm::kl_div(a, a) == 0.0;
    const double d = bm::jsd(a, b);
    jsd_ok = jsd_ok && d == bm::jsd(b, a) && d >= 0.0 && d <= 1.0;
    // second path: H(m) - (H(p) + H(q)) / 2 in bits
    std::vector<double> m(4);
    for (std::size_t c = 0; c < 4; ++c) m[c] = 0.5 * (a[c] + b[c]);
    const double two_path = (bm::entropy(m) - 0.5 * (bm::entropy(a) + bm::entropy(b))) / std::log(2.0);
    worst_two_path = std::max(worst_two_path, std::abs(d - two_path));
  }
  const std::vector<bm::TypeSet> pred{{0, 1}}, gold{{1, 2}};
  const auto prf = bm::macro_prf(pred, gold);
  const bool prf_ok = prf.precision == 0.5 && prf.recall == 0.5 && prf.f1 == 0.5;
  bm::Matrix s(1, 3);
  s << 0.9, 0.5, 0.7;  // gold {b, c}: ranks 3 and 2
  const double mrr = bm::mrr(s, gold);
  const bool mrr_ok = std::abs(mrr - (1.0 / 3 + 1.0 / 2) / 2) < 1e-15;
  o.pass = kl_ok && jsd_ok && worst_two_path < 1e-12 && prf_ok && mrr_ok;
  o.detail = std::string("KL ") + (kl_ok ? "ok" : "FAIL") + ", JSD symmetric/bounded " + (jsd_ok ? "ok" : "FAIL") +
             ", two-path gap " + fmt(worst_two_path * 1e15, 2) + "e-15, P/R/F1 " + fmt(prf.precision, 2) + "/" +
             fmt(prf.recall, 2) + "/" + fmt(prf.f1, 2) + ", MRR " + fmt(mrr, 4);
  return o;
}

// ---------------------------------------------------------------------------
// synthetic corpus shared by 5-8

const char* kCorpusConfig = R"({
  "task": "distribution",
  "labels": ["e", "n", "c"],
  "synthetic": {"n_examples": 2000, "k_classes": 3, "d_feat": 128, "ambiguous_fraction": 0.5,
                "dirichlet_sharp": 30, "dirichlet_flat": 4, "feature_noise_sigma": 0.1,
                "prototype_scale": 1.0, "n_eval": 500, "seed": 7},
  "budget": {"total_labels": 1500, "n_single": 1500},
  "seeds": [0]
})";

struct Corpus {
  fs::path pool, eval, vocab;
};

Corpus make_corpus(const fs::path& dir) {
  auto cfg = bm::parse_experiment(json::parse(kCorpusConfig), dir);
  cfg.out = dir / "corpus";
  const bm::Experiment exp(cfg);
  exp.gen();
  return {exp.pool_path(), exp.eval_path(), exp.data_dir() / "vocab.txt"};
}

json strategy_json(const std::string& kind, int finetune = 300) {
  return {{"kind", kind},
          {"iterations_main", 3000},
          {"iterations_finetune", finetune},
          {"lr", 1e-2},
          {"hidden", {64}},
          {"mixup", {{"eta", 1.0}, {"alpha_max", 2.0}, {"ramp_iters", 100}, {"batch_size", 64}}}};
}

bm::Experiment experiment(const Corpus& c, const fs::path& dir, const json& budget, const json& strategy,
                          const std::vector<std::uint64_t>& seeds) {
  json j = {{"task", "distribution"},
            {"corpus", {{"pool", c.pool.string()}, {"eval", c.eval.string()}, {"vocab", c.vocab.string()}}},
            {"budget", budget},
            {"strategy", strategy},
            {"seeds", seeds},
            {"out", (dir / "runs").string()}};
  return bm::Experiment(bm::parse_experiment(j, dir));
}

std::vector<bm::EvalReport> run_seeds(const bm::Experiment& exp) {
  std::vector<bm::EvalReport> reps;
  for (const auto seed : exp.config().seeds) {
    exp.split(seed);
    exp.train(seed);
    reps.push_back(exp.eval(seed));
  }
  return reps;
}

std::vector<double> field(const std::vector<bm::EvalReport>& reps, std::optional<double> bm::EvalReport::*f) {
  std::vector<double> v;
  for (const auto& r : reps) v.push_back(*(r.*f));
  return v;
}

const std::vector<std::uint64_t> kSeeds{0, 1, 2, 3, 4};

const json kSinglesOnly = {{"total_labels", 1500}, {"n_single", 1500}};
const json kSinglesMultis = {{"total_labels", 1500}, {"n_single", 250}, {"n_multi", 125}, {"k_per_multi", 10}};
const json kSinglesMultisUnlabeled = {
    {"total_labels", 1500}, {"n_single", 250}, {"n_multi", 125}, {"k_per_multi", 10}, {"n_unlabeled", 1625}};

// ---------------------------------------------------------------------------
// 5

Outcome calibration_contract(const Corpus& c, const fs::path& dir) {
  const Clock clock;
  const auto exp = experiment(c, dir, kSinglesOnly, strategy_json("ce_combined"), {0});
  exp.split(0);
  exp.train(0);
  const auto clf = exp.load_model(0);
  const auto eval = exp.load_eval();
  const bm::Matrix logits = clf.logits(bm::Experiment::features(eval));
  const auto base = bm::build_distribution_report(bm::Classifier::softmax_rows(logits), eval);
  const double target = 0.732;
  const auto tuned = bm::tune_temperature(logits, target);
  bool acc_same = true;
  for (const double t : {0.25, 0.5, 2.0, 5.0, 50.0, tuned.scalar}) {
    const auto rep = bm::build_distribution_report(bm::temp_scale_rows(logits, t), eval);
    acc_same = acc_same && *rep.acc_old == *base.acc_old && *rep.acc_new == *base.acc_new;
  }
  const double achieved = bm::mean_entropy(bm::temp_scale_rows(logits, tuned.scalar));
  const double secs = clock.seconds();
  Outcome o;
  const bool over_confident = *base.mean_pred_entropy < target;
  o.pass = acc_same && over_confident && std::abs(achieved - target) < 1e-3 && !tuned.at_boundary && secs < 5.0;
  o.detail = "acc_old/new " + fmt(*base.acc_old, 3) + "/" + fmt(*base.acc_new, 3) + (acc_same ? " unchanged" : " CHANGED") +
             " across 6 temperatures; entropy " + fmt(*base.mean_pred_entropy) + " -> " + fmt(achieved, 6) + " (target " +
             fmt(target, 3) + ", T = " + fmt(tuned.scalar) + "); " + fmt(secs, 2) + " s";
  return o;
}

// ---------------------------------------------------------------------------
// 6

Outcome central_trend(const Corpus& c, const fs::path& dir) {
  const Clock clock;
  const auto xs = run_seeds(experiment(c, dir, kSinglesOnly, strategy_json("ce_combined"), kSeeds));
  const auto cur = run_seeds(experiment(c, dir, kSinglesMultis, strategy_json("ce_curriculum"), kSeeds));
  const auto msm = run_seeds(experiment(c, dir, kSinglesMultis, strategy_json("mixup_sm"), kSeeds));
  const auto msmu = run_seeds(experiment(c, dir, kSinglesMultisUnlabeled, strategy_json("mixup_smu"), kSeeds));
  const double secs = clock.seconds();

  const auto kl = [&](const auto& r) { return mean(field(r, &bm::EvalReport::kl)); };
  const auto js = [&](const auto& r) { return mean(field(r, &bm::EvalReport::jsd)); };
  const double rel_cur = 1.0 - kl(cur) / kl(xs), rel_msm = 1.0 - kl(msm) / kl(xs);
  const bool a = kl(cur) < kl(xs) && js(cur) < js(xs) && kl(msm) < kl(xs) && js(msm) < js(xs) && rel_cur >= 0.15 &&
                 rel_msm >= 0.15;
  const double sd_sm = stddev(field(msm, &bm::EvalReport::kl)), sd_smu = stddev(field(msmu, &bm::EvalReport::kl));
  const double pooled = std::sqrt(0.5 * (sd_sm * sd_sm + sd_smu * sd_smu));
  const bool b = kl(msmu) <= kl(msm) + pooled;
  Outcome o;
  o.pass = a && b && secs < 120.0;
  o.detail = "KL/JSD X_s " + fmt(kl(xs)) + "/" + fmt(js(xs)) + ", curriculum " + fmt(kl(cur)) + "/" + fmt(js(cur)) + " (-" +
             fmt(100 * rel_cur, 1) + "%), mixup_sm " + fmt(kl(msm)) + "/" + fmt(js(msm)) + " (-" + fmt(100 * rel_msm, 1) +
             "%), mixup_smu " + fmt(kl(msmu)) + " (pooled sd " + fmt(pooled) + "); " + fmt(secs, 1) + " s";
  return o;
}

// ---------------------------------------------------------------------------
// 7

std::vector<double> entropies(const bm::EvalReport& r, bool gold) {
  std::vector<double> h;
  for (const auto& e : r.per_example) h.push_back(gold ? *e.gold_entropy : *e.entropy);
  return h;
}

Outcome entropy_trend(const Corpus& c, const fs::path& dir) {
  // before fine-tuning: the same curriculum run stopped after its single-label phase
  const auto before = run_seeds(experiment(c, dir, kSinglesMultis, strategy_json("ce_curriculum", 0), kSeeds));
  const auto after = run_seeds(experiment(c, dir, kSinglesMultis, strategy_json("ce_curriculum"), kSeeds));
  const auto eval = bm::load_corpus(c.eval, bm::load_vocab(c.vocab));
  std::vector<double> true_h;
  for (const auto& e : eval) true_h.push_back(bm::entropy(*e.true_dist));
  const double true_mean = mean(true_h);
  const double ln3 = std::log(3.0);
  const auto true_hist = bm::histogram(true_h, 20, ln3);
  const auto l1 = [&](const std::vector<double>& h) {
    const auto hist = bm::histogram(h, 20, ln3);
    double d = 0.0;
    for (std::size_t i = 0; i < 20; ++i) {
      d += std::abs(static_cast<double>(hist[i]) - static_cast<double>(true_hist[i])) / static_cast<double>(h.size());
    }
    return d;
  };
  int over_confident = 0, closer = 0, hist_closer = 0;
  std::ostringstream per_seed;
  for (std::size_t s = 0; s < kSeeds.size(); ++s) {
    const double hb = mean(entropies(before[s], false)), ha = mean(entropies(after[s], false));
    const double lb = l1(entropies(before[s], false)), la = l1(entropies(after[s], false));
    over_confident += hb < true_mean;
    closer += std::abs(ha - true_mean) < std::abs(hb - true_mean);
    hist_closer += la < lb;
    per_seed << (s ? ", " : "") << fmt(hb, 3) << "->" << fmt(ha, 3) << " (L1 " << fmt(lb, 2) << "->" << fmt(la, 2) << ")";
  }
  Outcome o;
  const int n = static_cast<int>(kSeeds.size());
  o.pass = over_confident == n && closer == n && hist_closer == n;
  o.detail = "true mean entropy " + fmt(true_mean, 3) + "; over-confident " + std::to_string(over_confident) + "/5, closer " +
             std::to_string(closer) + "/5, histogram closer " + std::to_string(hist_closer) + "/5; " + per_seed.str();
  return o;
}

// ---------------------------------------------------------------------------
// 8

Outcome tiny_budget(const Corpus& c, const fs::path& dir) {
  const auto one_way = run_seeds(experiment(c, dir, {{"total_labels", 1000}, {"n_single", 1000}}, strategy_json("ce_combined"), kSeeds));
  const auto two_way = run_seeds(
      experiment(c, dir, {{"total_labels", 1000}, {"n_multi", 500}, {"k_per_multi", 2}}, strategy_json("ce_combined"), kSeeds));
  const double a = mean(field(one_way, &bm::EvalReport::kl)), b = mean(field(two_way, &bm::EvalReport::kl));
  Outcome o;
  o.pass = b <= a;
  o.detail = "mean KL 1000x1 " + fmt(a) + ", 500x2 " + fmt(b);
  return o;
}

// ---------------------------------------------------------------------------
// 9

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file()) {
      std::ifstream in(entry.path(), std::ios::binary);
      files[fs::relative(entry.path(), root).string()] = std::string(std::istreambuf_iterator<char>(in), {});
    }
  }
  return files;
}

Outcome determinism(const fs::path& dir) {
  const json cfg = json::parse(R"({
    "task": "distribution",
    "labels": ["e", "n", "c"],
    "synthetic": {"n_examples": 600, "d_feat": 16, "n_eval": 100, "seed": 11},
    "budget": {"total_labels": 400, "n_single": 200, "n_multi": 20, "k_per_multi": 10, "n_unlabeled": 200},
    "strategy": {"kind": "mixup_smu", "iterations_main": 200, "lr": 0.01, "hidden": [16], "batch_size": 32},
    "calibration": {"method": "temp_scaling"},
    "seeds": [0, 1]
  })");
  const auto cfg_path = dir / "determinism.json";
  std::ofstream(cfg_path) << cfg.dump(2);
  std::vector<std::map<std::string, std::string>> runs;
  bool commands_ok = true;
  for (const auto* out : {"run_a", "run_b"}) {
    for (const auto* cmd : {"gen", "split", "train", "eval", "calibrate", "report"}) {
      const std::string line = std::string(BUDGETMIX_CLI) + " " + cmd + " --config " + cfg_path.string() + " --out " +
                               (dir / out).string() + " > /dev/null";
      commands_ok = commands_ok && std::system(line.c_str()) == 0;
    }
    runs.push_back(snapshot(dir / out));
  }
  Outcome o;
  o.pass = commands_ok && !runs[0].empty() && runs[0] == runs[1];
  o.detail = std::to_string(runs[0].size()) + " files across gen/split/train/eval/calibrate/report, " +
             (runs[0] == runs[1] ? "byte-identical" : "DIFFER");
  return o;
}

}  // namespace

int main() {
  const auto dir = workdir();
  std::vector<std::pair<std::string, std::function<Outcome()>>> criteria;
  Corpus corpus;
  criteria.emplace_back("budget exactness", [&] { return budget_exactness(dir); });
  criteria.emplace_back("gradient suite", [] { return gradient_suite(); });
  criteria.emplace_back("mixup degeneracies", [] { return mixup_degeneracies(); });
  criteria.emplace_back("metric axioms", [] { return metric_axioms(); });
  criteria.emplace_back("calibration contract", [&] {
    corpus = make_corpus(dir);
    return calibration_contract(corpus, dir);
  });
  criteria.emplace_back("central trend", [&] { return central_trend(corpus, dir); });
  criteria.emplace_back("entropy-distribution trend", [&] { return entropy_trend(corpus, dir); });
  criteria.emplace_back("multi-only vs single-only at tiny budget", [&] { return tiny_budget(corpus, dir); });
  criteria.emplace_back("determinism", [&] { return determinism(dir); });

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first << "): " << o.detail
              << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}

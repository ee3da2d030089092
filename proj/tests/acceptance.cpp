// Copyright 2026 The dptab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Acceptance checks for the whole pipeline. Prints one PASS/FAIL line per
// criterion; exits non-zero when any fails. Pass criterion numbers as
// arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli_helpers.hpp"
#include "dptab/accountant.hpp"
#include "dptab/dp_trainer.hpp"
#include "dptab/eval.hpp"
#include "dptab/losses.hpp"
#include "dptab/sampler.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "toy.hpp"

using namespace dptab;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

const std::vector<std::uint64_t> kSeeds{1, 2, 3};

// --- bookkeeping shared by every training run in this binary -------------------

struct Bookkeeping {
  std::size_t runs = 0, steps = 0;
  std::size_t norm_violations = 0, epsilon_drops = 0, over_budget = 0;
  double max_norm = 0.0;
};
Bookkeeping g_book;

TrainResult checked_train(const Table& train, const TrainConfig& c) {
  double last_eps = 0.0;
  TrainObserver obs;
  obs.on_stage2_step = [&](std::size_t, const std::vector<double>& norms, double eps) {
    ++g_book.steps;
    for (double n : norms) {
      g_book.max_norm = std::max(g_book.max_norm, n);
      if (n > c.privacy.clip_norm) ++g_book.norm_violations;
    }
    if (eps < last_eps) ++g_book.epsilon_drops;
    last_eps = eps;
  };
  TrainResult r = two_stage_finetune(train.schema, train, c, nullptr, &obs);
  ++g_book.runs;
  if (!c.privacy.non_private && r.report.spent_epsilon > c.privacy.epsilon_target) ++g_book.over_budget;
  return r;
}

// --- toy pipeline settings -------------------------------------------------------

constexpr std::size_t kToyRows = 4000;

TrainConfig toy_config(std::uint64_t seed) {
  TrainConfig c;
  c.model = toy::small_model();
  c.stage1 = {3, 3e-3, 16};
  c.stage2 = {2, 2e-3, 64};
  c.random_rows = kToyRows;
  c.privacy.epsilon_target = 1.0;
  c.privacy.delta = 1e-6;
  c.privacy.clip_norm = 1.0;
  c.probe_samples = 0;
  c.seed = seed;
  return c;
}

Table toy_train(std::uint64_t seed) { return toy::table(kToyRows, 1000 + seed); }
Table toy_heldout(std::uint64_t seed) { return toy::table(1000, 2000 + seed); }

const TrainResult& nonprivate_model(std::uint64_t seed) {
  static std::map<std::uint64_t, TrainResult> cache;
  auto it = cache.find(seed);
  if (it == cache.end()) {
    TrainConfig c = toy_config(seed);
    c.privacy.non_private = true;
    c.stage2 = {10, 3e-3, 64};  // no noise, so a longer schedule costs nothing
    it = cache.emplace(seed, checked_train(toy_train(seed), c)).first;
  }
  return it->second;
}

// --- criteria ------------------------------------------------------------------------

Verdict adult_baseline_tvd() {
#ifdef DPTAB_ADULT_CSV
  const auto start = std::chrono::steady_clock::now();
  const RawCsv raw = load_raw_csv(DPTAB_ADULT_CSV);
  const Schema schema = infer_schema(raw, "income");
  const Table table = load_csv(DPTAB_ADULT_CSV, schema);
  const auto [train, test] = split_train_test(table, 0.8, 0);
  const BinningSpec bins = make_binning(test, 20);
  const double one = kway_tvd(train, test, 1, bins).mean;
  const double two = kway_tvd(train, test, 2, bins).mean;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool ok = std::abs(one - 0.004) <= 0.01 && std::abs(two - 0.011) <= 0.01 && secs < 120.0;
  return {ok, "rows " + std::to_string(train.size()) + "/" + std::to_string(test.size()) + ", 1-way " + fmt(one) +
                  " (want 0.004+-0.01), 2-way " + fmt(two) + " (want 0.011+-0.01), " + fmt(secs, 3) + " s"};
#else
  return {false, "Adult CSV not configured"};
#endif
}

Verdict accountant_oracle() {
  const auto start = std::chrono::steady_clock::now();
  struct Point {
    double q, sigma;
    std::size_t steps;
  };
  const std::vector<Point> grid{{0.001, 0.8, 1000},  {0.001, 2.0, 100000}, {0.004, 1.1, 5000}, {0.01, 0.7, 100},
                                {0.01, 1.0, 1000},   {0.01, 2.0, 10000},   {0.02, 1.5, 3000},  {0.05, 1.1, 200},
                                {0.05, 3.0, 2000},   {0.1, 1.0, 50},       {0.1, 4.0, 500},    {0.25, 6.0, 100}};
  const double delta = 1e-5;
  double worst = 0.0;
  for (const Point& p : grid) {
    const double got = rdp_epsilon(p.q, p.sigma, p.steps, delta);
    const double ref = oracle::epsilon_quadrature(p.q, p.sigma, p.steps, delta);
    worst = std::max(worst, std::abs(got - ref) / ref);
  }
  const double closed = oracle::gaussian_mechanism_epsilon(4.0, delta);
  const double full = rdp_epsilon(1.0, 4.0, 1, delta);
  const double full_err = std::abs(full - closed) / closed;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {worst <= 0.01 && full_err <= 0.05 && secs < 60.0,
          "grid max rel err " + fmt(worst) + " (<= 0.01), q=1 rel err " + fmt(full_err) + " (<= 0.05), " +
              fmt(secs, 3) + " s"};
}

Verdict gradient_check() {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  Rng rng(20);
  for (std::uint64_t i = 0; i < 20; ++i) {
    const auto model = gradcheck::model12(100 + i);
    const TokenizedExample ex = gradcheck::example12(rng);
    worst = std::max(worst, gradcheck::relative_error(model, ex, gradcheck::combined_soft_spec()));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {worst <= 1e-3 && secs < 60.0, "max rel err " + fmt(worst) + " over 20 examples, " + fmt(secs, 3) + " s"};
}

Verdict loss_identities() {
  const Schema schema = toy::schema();
  const Vocab vocab = build_vocab(schema);
  const Table rows = toy::table(25, 9);
  LossSpec spec;
  spec.lambda = lambda_from_schema(schema, LambdaMode::range);
  Rng rng(4);
  double half_err = 0.0, line_err = 0.0, beta_err = 0.0;
  for (const Record& r : rows.rows) {
    const auto perm = random_permutation(schema.size(), rng);
    const TokenizedExample ex = tokenize_record(r, schema, perm, vocab);
    LogitMatrix<double> l(static_cast<Eigen::Index>(ex.size()), static_cast<Eigen::Index>(vocab.size()));
    for (Eigen::Index i = 0; i < l.size(); ++i) l.data()[i] = rng.normal(0.0, 2.0);
    const double ce = stage1_ce(l, ex);
    half_err = std::max(half_err, std::abs(wcel(l, ex, 0.5) - 0.5 * ce));
    const double a = wcel(l, ex, 0.1), b = wcel(l, ex, 0.4), c = wcel(l, ex, 0.9);
    line_err = std::max(line_err, std::abs((b - a) / 0.3 - (c - b) / 0.5));
    for (double alpha : {0.0, 0.3, 0.65, 1.0}) {
      LossSpec s = spec;
      s.alpha = alpha;
      s.beta = 0.0;
      beta_err = std::max(beta_err, std::abs(combined_loss(l, ex, s, vocab.numeric()) - wcel(l, ex, alpha)));
    }
  }
  return {half_err <= 1e-9 && line_err <= 1e-9 && beta_err <= 1e-9,
          "|wcel(0.5) - ce/2| " + fmt(half_err) + ", collinearity " + fmt(line_err) + ", |combined(beta=0) - wcel| " +
              fmt(beta_err)};
}

double compliance(const TrainResult& r, const Schema& schema, std::uint64_t seed) {
  const PromptSpec prompt;
  return try_sample_rows(r.model, r.vocab, schema, 1000, prompt, seed).report.format_compliance();
}

Verdict two_stage_ordering() {
  const std::clock_t cpu0 = std::clock();
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed : kSeeds) {
    const Table train = toy_train(seed);
    const TrainConfig two = toy_config(seed);
    TrainConfig one = two;
    one.single_stage = true;
    const double c2 = compliance(checked_train(train, two), train.schema, seed);
    const double c1 = compliance(checked_train(train, one), train.schema, seed);
    ok = ok && c2 >= 0.95 && c1 < c2;
    detail += "seed " + std::to_string(seed) + ": two-stage " + fmt(c2) + " vs single-stage " + fmt(c1) + "; ";
  }
  const double cpu = static_cast<double>(std::clock() - cpu0) / CLOCKS_PER_SEC;
  ok = ok && cpu < 1800.0;
  return {ok, detail + fmt(cpu, 4) + " s CPU"};
}

Verdict fidelity_signal() {
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed : kSeeds) {
    const TrainResult& r = nonprivate_model(seed);
    const Table heldout = toy_heldout(seed);
    const BinningSpec bins = make_binning(heldout, 20);
    const Table syn = sample_rows(r.model, r.vocab, heldout.schema, 1000, PromptSpec{}, 50 + seed).table;
    const Table random = generate_random_table(heldout.schema, 1000, 50 + seed);
    const double model_tvd = kway_tvd(syn, heldout, 2, bins).mean;
    const double random_tvd = kway_tvd(random, heldout, 2, bins).mean;
    ok = ok && model_tvd <= 0.5 * random_tvd;
    detail += "seed " + std::to_string(seed) + ": model " + fmt(model_tvd) + " vs random " + fmt(random_tvd) + "; ";
  }
  return {ok, detail};
}

Verdict fairness_sweep_check() {
  const std::vector<double> fractions{0.0, 0.05, 0.1, 0.2, 0.5};
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed : kSeeds) {
    const TrainResult& r = nonprivate_model(seed);
    const auto sweep = fairness_sweep(r.model, r.vocab, toy::schema(), 1000, fractions, PromptSpec{}, 70 + seed);
    bool monotone = true;
    for (std::size_t i = 1; i < sweep.size(); ++i) monotone = monotone && sweep[i].data_dpdiff <= sweep[i - 1].data_dpdiff;
    const double ref = sweep.front().data_dpdiff, last = sweep.back().data_dpdiff;
    ok = ok && ref >= 0.3 && last <= 0.02 && monotone;
    detail += "seed " + std::to_string(seed) + ": DPDiff";
    for (const auto& p : sweep) detail += " " + fmt(p.data_dpdiff, 3);
    detail += monotone ? "; " : " (not monotone); ";
  }
  return {ok, detail};
}

Table oracle_table(std::size_t n, std::uint64_t seed) {
  Table t;
  t.schema.features.push_back(FeatureSpec::categorical("Colour", {"red", "green", "blue"}));
  t.schema.features.push_back(FeatureSpec::numerical("Count", 0, 40, 0));
  t.schema.features.push_back(FeatureSpec::numerical("Level", -3, 3, 2));
  t.schema.features.push_back(FeatureSpec::categorical("Flag", {"off", "on"}));
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    t.rows.push_back(Record{{Cell::of_category(static_cast<int>(rng.index(3))),
                             Cell::of_number(static_cast<double>(rng.index(6) * rng.index(7))),
                             Cell::of_number(canonical_number(rng.uniform() * 6 - 3, 2)),
                             Cell::of_category(static_cast<int>(rng.index(2)))}});
  }
  return t;
}

Verdict metric_oracles() {
  // Sums run in a different order than the oracles, so "exact" means 1e-12.
  double tvd_err = 0.0, dcr_err = 0.0, auc_err = 0.0, eo_err = 0.0;
  Rng rng(31);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Table syn = oracle_table(30 + 7 * seed, seed), ref = oracle_table(100, seed + 500);
    const BinningSpec bins = make_binning(ref, 20);
    for (std::size_t k = 1; k <= 4; ++k) {
      tvd_err = std::max(tvd_err, std::abs(kway_tvd(syn, ref, k, bins).mean - oracle::mean_kway_tvd(syn, ref, k)));
    }
    const auto want = oracle::dcr(syn, ref);
    const auto got = dcr_histogram(syn, ref, 20).distances;
    for (std::size_t i = 0; i < want.size(); ++i) dcr_err = std::max(dcr_err, std::abs(got[i] - want[i]));

    const std::size_t n = 20 + rng.index(81);
    std::vector<double> scores(n);
    std::vector<int> labels(n), groups(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = rng.bernoulli(0.4);
      groups[i] = rng.bernoulli(0.5);
      scores[i] = std::round(rng.uniform() * 20.0) / 20.0;  // plenty of ties
      pred[i] = scores[i] >= 0.5;
    }
    const auto a = auc(scores, labels), b = oracle::auc(scores, labels);
    if (a.has_value() != b.has_value()) return {false, "AUC availability differs from oracle"};
    if (a) auc_err = std::max(auc_err, std::abs(*a - *b));
    Table fair;
    fair.schema = toy::schema();
    for (std::size_t i = 0; i < n; ++i) {
      fair.rows.push_back(Record{{Cell::of_category(groups[i]), Cell::of_category(labels[i]), Cell::of_number(50)}});
    }
    const FairnessReport fr = fairness_metrics(fair, &scores, "Group", "Label");
    if (!fr.eodiff) return {false, "EODiff missing"};
    eo_err = std::max(eo_err, std::abs(*fr.eodiff - oracle::eodiff(groups, labels, pred)));
  }
  return {tvd_err <= 1e-12 && dcr_err <= 1e-12 && auc_err <= 1e-12 && eo_err <= 1e-12,
          "max |diff|: TVD " + fmt(tvd_err) + ", DCR " + fmt(dcr_err) + ", AUC " + fmt(auc_err) + ", EODiff " +
              fmt(eo_err)};
}

Verdict privacy_bookkeeping() {
  // A dedicated short private run so this criterion stands on its own.
  TrainConfig c = toy_config(9);
  c.stage1.epochs = 1;
  c.random_rows = 500;
  c.privacy.clip_norm = 0.5;
  checked_train(toy::table(800, 9), c);
  const bool ok = g_book.norm_violations == 0 && g_book.epsilon_drops == 0 && g_book.over_budget == 0 &&
                  g_book.steps > 0;
  return {ok, std::to_string(g_book.runs) + " runs, " + std::to_string(g_book.steps) + " DP steps, max norm " +
                  fmt(g_book.max_norm) + ", norm violations " + std::to_string(g_book.norm_violations) +
                  ", epsilon decreases " + std::to_string(g_book.epsilon_drops) + ", over budget " +
                  std::to_string(g_book.over_budget)};
}

std::vector<fs::path> files_under(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), dir));
  }
  std::sort(out.begin(), out.end());
  return out;
}

Verdict cli_determinism() {
  const fs::path root = clitest::scratch_dir("acceptance_determinism");
  save_csv(root / "data.csv", toy::table(400, 17));
  std::ofstream(root / "run.conf") << clitest::quick_config();
  const fs::path work = root / "work";
  auto pipeline = [&]() -> std::string {
    fs::remove_all(work);
    const std::string conf = (root / "run.conf").string(), w = work.string();
    const std::vector<std::vector<std::string>> steps{
        {"prepare", "--csv", (root / "data.csv").string(), "--target", "Label", "--sensitive", "Group"},
        {"train", "--schema", w + "/prep/schema.json", "--train", w + "/prep/train.csv", "--test",
         w + "/prep/test.csv", "--epsilon", "1"},
        {"sample", "--checkpoint", w + "/model/model.ckpt", "--n", "200"},
        {"evaluate", "--schema", w + "/prep/schema.json", "--synthetic", w + "/sample/synthetic.csv", "--train",
         w + "/prep/train.csv", "--test", w + "/prep/test.csv", "--checkpoint", w + "/model/model.ckpt",
         "--sampling-report", w + "/sample/sampling_report.json"}};
    const std::vector<std::string> outs{"prep", "model", "sample", "eval"};
    for (std::size_t i = 0; i < steps.size(); ++i) {
      std::vector<std::string> args = steps[i];
      for (const std::string& extra : {std::string("--config"), conf, std::string("--seed"), std::string("7"),
                                       std::string("--out"), (work / outs[i]).string()}) {
        args.push_back(extra);
      }
      const auto o = clitest::run(args);
      if (o.code != 0) return steps[i][0] + " exited " + std::to_string(o.code) + ": " + o.err;
    }
    return {};
  };
  if (auto e = pipeline(); !e.empty()) return {false, "first run: " + e};
  const fs::path first = root / "first";
  fs::rename(work, first);
  if (auto e = pipeline(); !e.empty()) return {false, "second run: " + e};
  const auto a = files_under(first), b = files_under(work);
  if (a != b) return {false, "runs wrote different file sets"};
  std::size_t csv = 0, json = 0;
  for (const auto& rel : a) {
    if (clitest::slurp(first / rel) != clitest::slurp(work / rel)) return {false, rel.string() + " differs"};
    csv += rel.extension() == ".csv";
    json += rel.extension() == ".json";
  }
  return {csv >= 5 && json >= 4, std::to_string(a.size()) + " files byte-identical (" + std::to_string(csv) +
                                     " CSV, " + std::to_string(json) + " JSON)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"adult baseline TVD", adult_baseline_tvd},
      {"accountant vs quadrature oracle", accountant_oracle},
      {"combined-loss gradient check", gradient_check},
      {"loss identities", loss_identities},
      {"two-stage format compliance", two_stage_ordering},
      {"fidelity learning signal", fidelity_signal},
      {"fairness sweep", fairness_sweep_check},
      {"metric oracles", metric_oracles},
      {"privacy bookkeeping", privacy_bookkeeping},
      {"CLI determinism", cli_determinism}};
  std::set<std::size_t> only;
  for (int i = 1; i < argc; ++i) only.insert(static_cast<std::size_t>(std::stoul(argv[i])));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.count(i + 1)) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !v.pass;
    std::printf("%s %2zu %s: %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                v.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}

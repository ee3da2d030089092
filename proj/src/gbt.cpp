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

#include "dptab/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dptab/eval.hpp"
#include "dptab/parallel.hpp"
#include "dptab/rng.hpp"

namespace dptab {
namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct Split {
  double gain = 0.0;
  int feature = -1;
  int threshold = 0;
  std::vector<bool> left_categories;
};

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<std::uint16_t>& x, std::size_t nf, const FeatureBinner& binner,
              const GbtParams& params, const std::vector<double>& g, const std::vector<double>& h)
      : x_(x), nf_(nf), binner_(binner), params_(params), g_(g), h_(h) {}

  GbtModel::Tree build(std::vector<std::size_t> rows) {
    tree_.clear();
    grow(std::move(rows), 0);
    return std::move(tree_);
  }

 private:
  double score(double G, double H) const { return G * G / (H + params_.l2); }

  int grow(std::vector<std::size_t> rows, int depth) {
    double G = 0.0, H = 0.0;
    for (std::size_t r : rows) {
      G += g_[r];
      H += h_[r];
    }
    const int id = static_cast<int>(tree_.size());
    tree_.emplace_back();
    tree_[static_cast<std::size_t>(id)].value = -G / (H + params_.l2) * params_.learning_rate;
    if (depth >= params_.max_depth || rows.size() < 2) return id;

    Split best = find_split(rows, G, H);
    if (best.feature < 0) return id;

    std::vector<std::size_t> left, right;
    for (std::size_t r : rows) (goes_left(best, x_[r * nf_ + static_cast<std::size_t>(best.feature)]) ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    const int l = grow(std::move(left), depth + 1);
    const int rgt = grow(std::move(right), depth + 1);
    GbtModel::Node& node = tree_[static_cast<std::size_t>(id)];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left_categories = std::move(best.left_categories);
    node.left = l;
    node.right = rgt;
    return id;
  }

  bool goes_left(const Split& s, std::uint16_t code) const {
    if (!s.left_categories.empty()) return code < s.left_categories.size() && s.left_categories[code];
    return code <= s.threshold;
  }

  Split find_split(const std::vector<std::size_t>& rows, double G, double H) const {
    Split best;
    const double parent = score(G, H);
    for (std::size_t j = 0; j < nf_; ++j) {
      const std::size_t nb = binner_.bins(j);
      if (nb < 2) continue;
      std::vector<double> hg(nb, 0.0), hh(nb, 0.0);
      for (std::size_t r : rows) {
        const std::uint16_t b = x_[r * nf_ + j];
        hg[b] += g_[r];
        hh[b] += h_[r];
      }
      std::vector<std::size_t> order;
      if (binner_.categorical(j)) {
        for (std::size_t b = 0; b < nb; ++b) {
          if (hh[b] > 0.0) order.push_back(b);
        }
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
          return hg[a] / (hh[a] + params_.l2) < hg[b] / (hh[b] + params_.l2);
        });
      } else {
        order.resize(nb);
        std::iota(order.begin(), order.end(), 0);
      }
      double GL = 0.0, HL = 0.0;
      for (std::size_t k = 0; k + 1 < order.size(); ++k) {
        GL += hg[order[k]];
        HL += hh[order[k]];
        const double GR = G - GL, HR = H - HL;
        if (HL < params_.min_child_weight || HR < params_.min_child_weight) continue;
        const double gain = score(GL, HL) + score(GR, HR) - parent;
        if (gain > best.gain + 1e-12) {
          best.gain = gain;
          best.feature = static_cast<int>(j);
          if (binner_.categorical(j)) {
            best.left_categories.assign(nb, false);
            for (std::size_t t = 0; t <= k; ++t) best.left_categories[order[t]] = true;
            best.threshold = 0;
          } else {
            best.left_categories.clear();
            best.threshold = static_cast<int>(order[k]);
          }
        }
      }
    }
    return best;
  }

  const std::vector<std::uint16_t>& x_;
  std::size_t nf_;
  const FeatureBinner& binner_;
  const GbtParams& params_;
  const std::vector<double>& g_;
  const std::vector<double>& h_;
  GbtModel::Tree tree_;
};

double tree_output(const GbtModel::Tree& tree, const std::uint16_t* row) {
  int n = 0;
  while (tree[static_cast<std::size_t>(n)].feature >= 0) {
    const GbtModel::Node& node = tree[static_cast<std::size_t>(n)];
    const std::uint16_t code = row[node.feature];
    bool left;
    if (!node.left_categories.empty()) {
      left = code < node.left_categories.size() && node.left_categories[code];
    } else {
      left = code <= node.threshold;
    }
    n = left ? node.left : node.right;
  }
  return tree[static_cast<std::size_t>(n)].value;
}

double accuracy_of(const std::vector<double>& p, const std::vector<int>& y, const std::vector<std::size_t>& rows) {
  double correct = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) correct += ((p[i] >= 0.5) == (y[rows[i]] == 1));
  return correct / static_cast<double>(rows.size());
}

std::vector<std::uint16_t> select_rows(const std::vector<std::uint16_t>& x, std::size_t nf,
                                       const std::vector<std::size_t>& rows) {
  std::vector<std::uint16_t> out;
  out.reserve(rows.size() * nf);
  for (std::size_t r : rows) out.insert(out.end(), x.begin() + static_cast<std::ptrdiff_t>(r * nf),
                                        x.begin() + static_cast<std::ptrdiff_t>((r + 1) * nf));
  return out;
}

}  // namespace

FeatureBinner::FeatureBinner(const Table& train, std::size_t target, std::size_t max_bins) {
  if (max_bins < 2 || max_bins > 65535) throw InputError("max_bins must lie in [2, 65535]");
  const Schema& schema = train.schema;
  for (std::size_t f = 0; f < schema.size(); ++f) {
    if (f == target) continue;
    const FeatureSpec& spec = schema.features[f];
    columns_.push_back(f);
    categorical_.push_back(spec.is_categorical());
    std::vector<double> cuts;
    if (spec.is_categorical()) {
      bins_.push_back(spec.categories.size());
    } else {
      std::vector<double> v;
      for (const Record& r : train.rows) v.push_back(r.cells[f].number);
      std::sort(v.begin(), v.end());
      for (std::size_t i = 1; i < max_bins && !v.empty(); ++i) {
        cuts.push_back(v[std::min(v.size() - 1, i * v.size() / max_bins)]);
      }
      cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
      bins_.push_back(cuts.size() + 1);
    }
    cuts_.push_back(std::move(cuts));
  }
}

std::vector<std::uint16_t> FeatureBinner::transform(const Table& table) const {
  std::vector<std::uint16_t> x;
  x.reserve(table.rows.size() * columns_.size());
  for (const Record& r : table.rows) {
    for (std::size_t j = 0; j < columns_.size(); ++j) {
      const Cell& c = r.cells[columns_[j]];
      if (categorical_[j]) {
        x.push_back(static_cast<std::uint16_t>(c.category));
      } else {
        const auto& cuts = cuts_[j];
        x.push_back(static_cast<std::uint16_t>(std::lower_bound(cuts.begin(), cuts.end(), c.number) - cuts.begin()));
      }
    }
  }
  return x;
}

void GbtModel::fit(const std::vector<std::uint16_t>& x, const std::vector<int>& y, const FeatureBinner& binner,
                   const GbtParams& params, const std::vector<std::size_t>* subset) {
  if (params.n_estimators < 0 || params.max_depth < 0 || !(params.learning_rate > 0.0)) {
    throw InputError("invalid boosting parameters");
  }
  const std::size_t nf = binner.features();
  std::vector<std::size_t> rows;
  if (subset) {
    rows = *subset;
  } else {
    rows.resize(y.size());
    std::iota(rows.begin(), rows.end(), 0);
  }
  if (rows.empty()) throw InputError("boosting needs at least one row");
  double pos = 0.0;
  for (std::size_t r : rows) pos += y[r];
  const double p0 = std::clamp(pos / static_cast<double>(rows.size()), 1e-6, 1.0 - 1e-6);
  base_ = std::log(p0 / (1.0 - p0));
  trees_.clear();

  std::vector<double> margin(y.size(), base_), g(y.size(), 0.0), h(y.size(), 0.0);
  for (int t = 0; t < params.n_estimators; ++t) {
    for (std::size_t r : rows) {
      const double p = sigmoid(margin[r]);
      g[r] = p - y[r];
      h[r] = p * (1.0 - p);
    }
    TreeBuilder builder(x, nf, binner, params, g, h);
    trees_.push_back(builder.build(rows));
    for (std::size_t r : rows) margin[r] += tree_output(trees_.back(), &x[r * nf]);
  }
}

std::vector<double> GbtModel::margins(const std::vector<std::uint16_t>& x, std::size_t nf, int trees) const {
  const std::size_t n = nf ? x.size() / nf : 0;
  const std::size_t use = trees < 0 ? trees_.size() : std::min(trees_.size(), static_cast<std::size_t>(trees));
  std::vector<double> out(n, base_);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < use; ++t) out[i] += tree_output(trees_[t], &x[i * nf]);
  }
  return out;
}

std::vector<double> GbtModel::predict_proba(const std::vector<std::uint16_t>& x, std::size_t nf, int trees) const {
  std::vector<double> m = margins(x, nf, trees);
  for (double& v : m) v = sigmoid(v);
  return m;
}

DownstreamResult gbt_downstream(const Table& synthetic_train, const Table& real_test, const GridSpec& grid,
                                std::size_t folds, std::uint64_t seed, std::size_t workers,
                                std::optional<std::string> positive) {
  const Schema& schema = synthetic_train.schema;
  if (synthetic_train.rows.empty()) throw InputError("downstream training table is empty");
  if (real_test.rows.empty()) throw InputError("downstream test table is empty");
  if (grid.estimators.empty() || grid.depths.empty() || grid.rates.empty()) throw InputError("empty grid");
  if (folds < 2) throw InputError("cross-validation needs at least two folds");
  const std::string target_name = schema.target_feature.empty() ? schema.features.back().name : schema.target_feature;
  const std::size_t target = schema.index_of(target_name);
  const std::vector<int> y = binary_labels(synthetic_train, target_name, positive);
  const std::vector<int> y_test = binary_labels(real_test, target_name, positive);

  DownstreamResult result;
  const long pos = std::count(y.begin(), y.end(), 1);
  if (pos == 0 || pos == static_cast<long>(y.size())) {
    const int constant = pos == 0 ? 0 : 1;
    result.single_class = true;
    result.accuracy = static_cast<double>(std::count(y_test.begin(), y_test.end(), constant)) /
                      static_cast<double>(y_test.size());
    result.note = "synthetic target has a single class; AUC undefined, accuracy is the constant predictor's";
    result.test_scores.assign(y_test.size(), static_cast<double>(constant));
    return result;
  }

  const FeatureBinner binner(synthetic_train, target);
  const std::size_t nf = binner.features();
  const std::vector<std::uint16_t> x = binner.transform(synthetic_train);
  const std::size_t n = y.size();
  folds = std::min(folds, n);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> fold_rows(folds);
  for (std::size_t i = 0; i < n; ++i) fold_rows[i % folds].push_back(order[i]);

  std::vector<int> estimators = grid.estimators;
  std::sort(estimators.begin(), estimators.end());
  const int max_trees = estimators.back();

  struct Job {
    std::size_t depth, rate, fold;
  };
  std::vector<Job> jobs;
  for (std::size_t d = 0; d < grid.depths.size(); ++d) {
    for (std::size_t r = 0; r < grid.rates.size(); ++r) {
      for (std::size_t f = 0; f < folds; ++f) jobs.push_back({d, r, f});
    }
  }
  // accuracy[job][estimator index]
  std::vector<std::vector<double>> acc(jobs.size(), std::vector<double>(estimators.size(), 0.0));
  parallel_for(jobs.size(), workers, [&](std::size_t j) {
    const Job& job = jobs[j];
    std::vector<std::size_t> train_rows;
    for (std::size_t f = 0; f < folds; ++f) {
      if (f != job.fold) train_rows.insert(train_rows.end(), fold_rows[f].begin(), fold_rows[f].end());
    }
    std::sort(train_rows.begin(), train_rows.end());
    GbtParams p;
    p.n_estimators = max_trees;
    p.max_depth = grid.depths[job.depth];
    p.learning_rate = grid.rates[job.rate];
    GbtModel model;
    model.fit(x, y, binner, p, &train_rows);
    const std::vector<std::uint16_t> xv = select_rows(x, nf, fold_rows[job.fold]);
    for (std::size_t e = 0; e < estimators.size(); ++e) {
      acc[j][e] = accuracy_of(model.predict_proba(xv, nf, estimators[e]), y, fold_rows[job.fold]);
    }
  });

  double best = -1.0;
  std::size_t j = 0;
  for (std::size_t d = 0; d < grid.depths.size(); ++d) {
    for (std::size_t r = 0; r < grid.rates.size(); ++r) {
      for (std::size_t e = 0; e < estimators.size(); ++e) {
        double mean = 0.0;
        for (std::size_t f = 0; f < folds; ++f) mean += acc[j + f][e];
        mean /= static_cast<double>(folds);
        if (mean > best + 1e-12) {
          best = mean;
          result.chosen = GbtParams{estimators[e], grid.depths[d], grid.rates[r]};
        }
      }
      j += folds;
    }
  }
  result.cv_accuracy = best;

  GbtModel model;
  model.fit(x, y, binner, result.chosen);
  const std::vector<double> p = model.predict_proba(binner.transform(real_test), nf);
  std::vector<std::size_t> all(y_test.size());
  std::iota(all.begin(), all.end(), 0);
  result.accuracy = accuracy_of(p, y_test, all);
  result.auc = auc(p, y_test);
  result.test_scores = p;
  return result;
}

}  // namespace dptab

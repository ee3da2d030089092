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

#include "dptab/eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <unordered_map>

#include "dptab/lm.hpp"
#include "dptab/parallel.hpp"
#include "dptab/rng.hpp"

namespace dptab {
namespace {

void check_same_schema(const Table& a, const Table& b) {
  if (a.schema.size() != b.schema.size()) throw InputError("tables have different schemas");
  for (std::size_t i = 0; i < a.schema.size(); ++i) {
    if (a.schema.features[i].name != b.schema.features[i].name ||
        a.schema.features[i].kind != b.schema.features[i].kind) {
      throw InputError("tables have different schemas at feature " + a.schema.features[i].name);
    }
  }
}

std::size_t binomial_saturating(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  double c = 1.0;
  for (std::size_t i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
  if (c > 1e18) return std::numeric_limits<std::size_t>::max();
  return static_cast<std::size_t>(std::llround(c));
}

std::vector<std::vector<std::size_t>> all_subsets(std::size_t n, std::size_t k) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  while (true) {
    out.push_back(idx);
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
    if (i == 0) break;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  return out;
}

std::unordered_map<std::uint64_t, double> joint_distribution(const Table& t, const std::vector<std::size_t>& features,
                                                            const BinningSpec& binning) {
  std::unordered_map<std::uint64_t, double> counts;
  for (const Record& r : t.rows) {
    std::uint64_t key = 0;
    for (std::size_t f : features) key = key * binning.bins[f] + binning.bin(f, r.cells[f]);
    counts[key] += 1.0;
  }
  const double n = static_cast<double>(t.rows.size());
  for (auto& [key, c] : counts) c /= n;
  return counts;
}

}  // namespace

std::size_t BinningSpec::bin(std::size_t feature, const Cell& cell) const {
  const auto& c = cuts[feature];
  if (cell.category >= 0) return static_cast<std::size_t>(cell.category);
  return static_cast<std::size_t>(std::lower_bound(c.begin(), c.end(), cell.number) - c.begin());
}

BinningSpec make_binning(const Table& reference, std::size_t groups) {
  if (reference.rows.empty()) throw InputError("binning needs a non-empty reference table");
  if (groups < 1) throw InputError("binning needs at least one group");
  BinningSpec spec;
  const Schema& schema = reference.schema;
  spec.cuts.resize(schema.size());
  spec.bins.resize(schema.size());
  for (std::size_t f = 0; f < schema.size(); ++f) {
    const FeatureSpec& feature = schema.features[f];
    if (feature.is_categorical()) {
      spec.bins[f] = feature.categories.size();
      continue;
    }
    std::vector<double> values;
    values.reserve(reference.rows.size());
    for (const Record& r : reference.rows) values.push_back(r.cells[f].number);
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    std::vector<double>& cuts = spec.cuts[f];
    for (std::size_t i = 1; i < groups; ++i) {
      // smallest value with at least i/groups of the mass at or below it
      const std::size_t rank = (i * n + groups - 1) / groups;
      cuts.push_back(values[std::max<std::size_t>(rank, 1) - 1]);
    }
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    spec.bins[f] = cuts.size() + 1;
  }
  return spec;
}

double subset_tvd(const Table& synthetic, const Table& reference, const std::vector<std::size_t>& features,
                  const BinningSpec& binning) {
  const auto p = joint_distribution(synthetic, features, binning);
  const auto q = joint_distribution(reference, features, binning);
  double sum = 0.0;
  for (const auto& [key, pv] : p) {
    auto it = q.find(key);
    sum += std::abs(pv - (it == q.end() ? 0.0 : it->second));
  }
  for (const auto& [key, qv] : q) {
    if (!p.count(key)) sum += qv;
  }
  return std::min(1.0, 0.5 * sum);
}

TvdResult kway_tvd(const Table& synthetic, const Table& reference, std::size_t k, const BinningSpec& binning,
                   std::size_t max_subsets, std::uint64_t seed) {
  check_same_schema(synthetic, reference);
  const std::size_t nf = reference.schema.size();
  if (k < 1 || k > nf) throw InputError("k must lie in [1, " + std::to_string(nf) + "]");
  if (synthetic.rows.empty() || reference.rows.empty()) throw InputError("TVD needs non-empty tables");
  if (binning.bins.size() != nf) throw InputError("binning does not match the schema");
  TvdResult result;
  result.k = k;
  result.subsets_total = binomial_saturating(nf, k);
  if (result.subsets_total <= max_subsets) {
    result.subsets = all_subsets(nf, k);
  } else {
    Rng rng(seed);
    std::set<std::vector<std::size_t>> chosen;
    std::vector<std::size_t> pool(nf);
    while (chosen.size() < max_subsets) {
      for (std::size_t i = 0; i < nf; ++i) pool[i] = i;
      rng.shuffle(pool);
      std::vector<std::size_t> s(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
      std::sort(s.begin(), s.end());
      chosen.insert(std::move(s));
    }
    result.subsets.assign(chosen.begin(), chosen.end());
  }
  double sum = 0.0;
  for (const auto& s : result.subsets) {
    const double v = subset_tvd(synthetic, reference, s, binning);
    result.values.push_back(v);
    sum += v;
  }
  result.subsets_used = result.subsets.size();
  result.mean = sum / static_cast<double>(result.subsets_used);
  return result;
}

DcrScaler::DcrScaler(const Table& train) {
  if (train.rows.empty()) throw InputError("DCR needs a non-empty training table");
  const std::size_t nf = train.schema.size();
  min.assign(nf, 0.0);
  range.assign(nf, 1.0);
  for (std::size_t f = 0; f < nf; ++f) {
    if (!train.schema.features[f].is_numerical()) continue;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const Record& r : train.rows) {
      lo = std::min(lo, r.cells[f].number);
      hi = std::max(hi, r.cells[f].number);
    }
    min[f] = lo;
    range[f] = hi > lo ? hi - lo : 1.0;
  }
}

double DcrScaler::squared_distance(const Record& a, const Record& b, const Schema& schema) const {
  double d2 = 0.0;
  for (std::size_t f = 0; f < schema.size(); ++f) {
    if (schema.features[f].is_categorical()) {
      d2 += a.cells[f].category == b.cells[f].category ? 0.0 : 1.0;
    } else {
      const double d = (a.cells[f].number - min[f]) / range[f] - (b.cells[f].number - min[f]) / range[f];
      d2 += d * d;
    }
  }
  return d2;
}

DcrResult dcr_histogram(const Table& synthetic, const Table& train, std::size_t bins, std::size_t workers) {
  check_same_schema(synthetic, train);
  if (bins == 0) throw InputError("DCR histogram needs at least one bin");
  const DcrScaler scaler(train);
  const Schema& schema = train.schema;

  // Embedding whose squared L2 distance equals the DCR distance: scaled
  // numbers plus one-hot categories weighted 1/sqrt(2).
  std::vector<Eigen::Index> offset(schema.size());
  Eigen::Index dims = 0;
  for (std::size_t f = 0; f < schema.size(); ++f) {
    offset[f] = dims;
    dims += schema.features[f].is_categorical() ? static_cast<Eigen::Index>(schema.features[f].categories.size()) : 1;
  }
  const double w = 1.0 / std::sqrt(2.0);
  auto embed = [&](const Table& t) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(t.rows.size()), dims);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      for (std::size_t f = 0; f < schema.size(); ++f) {
        const Cell& c = t.rows[r].cells[f];
        if (schema.features[f].is_categorical()) {
          m(static_cast<Eigen::Index>(r), offset[f] + c.category) = w;
        } else {
          m(static_cast<Eigen::Index>(r), offset[f]) = (c.number - scaler.min[f]) / scaler.range[f];
        }
      }
    }
    return m;
  };
  const Eigen::MatrixXd S = embed(synthetic);
  const Eigen::MatrixXd T = embed(train);
  const Eigen::VectorXd t_sq = T.rowwise().squaredNorm();

  DcrResult result;
  result.distances.assign(synthetic.rows.size(), 0.0);
  const Eigen::Index chunk = 128;
  const Eigen::Index n_syn = S.rows();
  const std::size_t n_chunks = static_cast<std::size_t>((n_syn + chunk - 1) / chunk);
  parallel_for(n_chunks, workers, [&](std::size_t c) {
    const Eigen::Index begin = static_cast<Eigen::Index>(c) * chunk;
    const Eigen::Index rows = std::min(chunk, n_syn - begin);
    Eigen::MatrixXd d2 = -2.0 * S.middleRows(begin, rows) * T.transpose();
    d2.colwise() += S.middleRows(begin, rows).rowwise().squaredNorm();
    d2.rowwise() += t_sq.transpose();
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double approx = d2.row(i).minCoeff();
      const double slack = 1e-7 * (1.0 + std::abs(approx));
      const Record& s = synthetic.rows[static_cast<std::size_t>(begin + i)];
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < d2.cols(); ++j) {
        if (d2(i, j) > approx + slack) continue;
        best = std::min(best, scaler.squared_distance(s, train.rows[static_cast<std::size_t>(j)], schema));
      }
      result.distances[static_cast<std::size_t>(begin + i)] = std::sqrt(best);
    }
  });

  if (result.distances.empty()) return result;
  std::vector<double> sorted = result.distances;
  std::sort(sorted.begin(), sorted.end());
  result.min = sorted.front();
  const std::size_t n = sorted.size();
  result.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  const double top = sorted.back() > 0.0 ? sorted.back() : 1.0;
  result.edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) result.edges[b] = top * static_cast<double>(b) / static_cast<double>(bins);
  result.counts.assign(bins, 0);
  for (double d : result.distances) {
    auto b = static_cast<std::size_t>(d / top * static_cast<double>(bins));
    ++result.counts[std::min(b, bins - 1)];
  }
  return result;
}

std::optional<double> auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw InputError("scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;  // ranks of positives, ties averaged, 1-based
  double pos = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]]) {
        rank_sum += avg_rank;
        pos += 1.0;
      }
    }
    i = j;
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) return std::nullopt;
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

std::vector<int> binary_labels(const Table& data, std::string_view label, std::optional<std::string> positive) {
  const std::size_t f = data.schema.index_of(label);
  const FeatureSpec& spec = data.schema.features[f];
  if (!spec.is_categorical()) throw InputError("label feature \"" + spec.name + "\" must be categorical");
  const std::string pos = positive ? *positive : spec.categories.back();
  const auto idx = spec.category_index(pos);
  if (!idx) throw InputError("positive label \"" + pos + "\" is not a category of \"" + spec.name + "\"");
  std::vector<int> y;
  y.reserve(data.rows.size());
  for (const Record& r : data.rows) y.push_back(r.cells[f].category == *idx ? 1 : 0);
  return y;
}

FairnessReport fairness_metrics(const Table& data, const std::vector<double>* scores, std::string_view sensitive,
                                std::string_view label, std::optional<std::string> positive) {
  const std::size_t a = data.schema.index_of(sensitive);
  if (!data.schema.features[a].is_categorical()) throw InputError("sensitive feature must be categorical");
  const std::vector<int> y = binary_labels(data, label, positive);
  if (scores && scores->size() != data.rows.size()) throw InputError("one score per row is required");
  const std::size_t groups = data.schema.features[a].categories.size();

  struct GroupStats {
    double n = 0, pos = 0, pred_pos = 0;
    double tp = 0, fn = 0, fp = 0, tn = 0;
  };
  std::vector<GroupStats> g(groups);
  for (std::size_t r = 0; r < data.rows.size(); ++r) {
    GroupStats& s = g[static_cast<std::size_t>(data.rows[r].cells[a].category)];
    s.n += 1;
    s.pos += y[r];
    if (scores) {
      const bool pred = (*scores)[r] >= 0.5;
      s.pred_pos += pred;
      if (y[r]) {
        (pred ? s.tp : s.fn) += 1;
      } else {
        (pred ? s.fp : s.tn) += 1;
      }
    }
  }
  std::size_t present = 0;
  for (const auto& s : g) present += s.n > 0;
  if (present < 2) throw InputError("fairness metrics need at least two groups with rows");

  auto spread = [&](auto rate) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& s : g) {
      const std::optional<double> v = rate(s);
      if (!v) continue;
      lo = std::min(lo, *v);
      hi = std::max(hi, *v);
    }
    return hi >= lo ? std::optional<double>(hi - lo) : std::nullopt;
  };

  FairnessReport report;
  report.data_dpdiff = *spread([](const GroupStats& s) {
    return s.n > 0 ? std::optional<double>(s.pos / s.n) : std::nullopt;
  });
  if (!scores) return report;
  report.model_dpdiff = spread([](const GroupStats& s) {
    return s.n > 0 ? std::optional<double>(s.pred_pos / s.n) : std::nullopt;
  });
  const auto& names = data.schema.features[a].categories;
  for (std::size_t i = 0; i < groups; ++i) {
    if (g[i].n == 0) continue;
    if (g[i].tp + g[i].fn == 0) report.warnings.push_back("group \"" + names[i] + "\" has no positives; TPR undefined");
    if (g[i].fp + g[i].tn == 0) report.warnings.push_back("group \"" + names[i] + "\" has no negatives; FPR undefined");
  }
  const auto tpr = spread([](const GroupStats& s) {
    return s.tp + s.fn > 0 ? std::optional<double>(s.tp / (s.tp + s.fn)) : std::nullopt;
  });
  const auto fpr = spread([](const GroupStats& s) {
    return s.fp + s.tn > 0 ? std::optional<double>(s.fp / (s.fp + s.tn)) : std::nullopt;
  });
  if (tpr && fpr) {
    report.eodiff = std::max(*tpr, *fpr);
  } else if (tpr || fpr) {
    report.eodiff = tpr ? *tpr : *fpr;
  }
  return report;
}

double perplexity(const Model& model, const std::vector<TokenizedExample>& examples, std::size_t workers) {
  if (examples.empty()) throw InputError("perplexity needs at least one example");
  std::vector<double> ce(examples.size());
  std::vector<std::size_t> positions(examples.size());
  LossSpec spec;
  spec.kind = LossKind::stage1_ce;
  parallel_for(examples.size(), workers, [&](std::size_t i) {
    const auto logits = model.forward(examples[i].ids);
    ce[i] = compute_loss<float>(logits, examples[i], spec, NumericTokens{}).total;
    positions[i] = examples[i].ids.size() - 1;
  });
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    total += ce[i];
    count += positions[i];
  }
  return std::exp(total / static_cast<double>(count));
}

}  // namespace dptab

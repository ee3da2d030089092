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

// Fidelity, privacy-adjacent and fairness measurements over tables, plus
// model perplexity.

#ifndef DPTAB_EVAL_HPP_
#define DPTAB_EVAL_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dptab/schema.hpp"
#include "dptab/tokenizer.hpp"
#include "dptab/transformer.hpp"

namespace dptab {

// Per-feature bins fitted on a reference table. Numerical features get the
// reference quantiles at i/groups (i = 1..groups-1, lower empirical quantile,
// duplicates merged); a value equal to a cut point falls in the lower bin.
// Categorical features bin by category.
struct BinningSpec {
  std::vector<std::vector<double>> cuts;  // empty for categorical features
  std::vector<std::size_t> bins;          // bin count per feature

  std::size_t bin(std::size_t feature, const Cell& cell) const;
};

BinningSpec make_binning(const Table& reference, std::size_t groups = 20);

struct TvdResult {
  std::size_t k = 0;
  double mean = 0.0;
  std::size_t subsets_used = 0;
  std::size_t subsets_total = 0;  // C(N_F, k), saturating
  std::vector<std::vector<std::size_t>> subsets;
  std::vector<double> values;  // TVD per subset
};

// Mean over feature subsets of size k of 0.5 * sum |p_syn - p_ref| on the
// joint binned cells. All subsets when there are at most `max_subsets`,
// otherwise a seeded sample of distinct subsets.
TvdResult kway_tvd(const Table& synthetic, const Table& reference, std::size_t k, const BinningSpec& binning,
                   std::size_t max_subsets = 2000, std::uint64_t seed = 0);

// TVD of one subset.
double subset_tvd(const Table& synthetic, const Table& reference, const std::vector<std::size_t>& features,
                  const BinningSpec& binning);

struct DcrResult {
  std::vector<double> distances;  // per synthetic row
  std::vector<double> edges;      // bins + 1 edges over [0, max]
  std::vector<std::size_t> counts;
  double min = 0.0;
  double median = 0.0;
};

// Distance of one synthetic row to one training row: numerical features
// scaled by the training min/max (range 0 scales by 1), categorical features
// add 0 when equal and 1 otherwise, L2 over all features.
struct DcrScaler {
  std::vector<double> min, range;
  explicit DcrScaler(const Table& train);
  double squared_distance(const Record& a, const Record& b, const Schema& schema) const;
};

DcrResult dcr_histogram(const Table& synthetic, const Table& train, std::size_t bins = 50, std::size_t workers = 1);

// Probability that a random positive outranks a random negative, ties 1/2.
// nullopt when either class is absent.
std::optional<double> auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct FairnessReport {
  double data_dpdiff = 0.0;
  std::optional<double> model_dpdiff;
  std::optional<double> eodiff;
  std::vector<std::string> warnings;
};

// Binary label: `positive` (default: the label feature's last category)
// versus the rest. `scores` (one per row, thresholded at 0.5) enable the model
// metrics; with more than two groups each metric is the largest pairwise gap.
FairnessReport fairness_metrics(const Table& data, const std::vector<double>* scores, std::string_view sensitive,
                                std::string_view label, std::optional<std::string> positive = std::nullopt);

// 1 for rows whose `label` value is `positive` (default: last category).
std::vector<int> binary_labels(const Table& data, std::string_view label,
                               std::optional<std::string> positive = std::nullopt);

// Exp of the mean next-token cross entropy over every predicted position.
double perplexity(const Model& model, const std::vector<TokenizedExample>& examples, std::size_t workers = 1);

}  // namespace dptab

#endif  // DPTAB_EVAL_HPP_

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

// Histogram gradient-boosted trees on the logistic loss, used to score
// synthetic tables on a downstream classification task.

#ifndef DPTAB_GBT_HPP_
#define DPTAB_GBT_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dptab/schema.hpp"

namespace dptab {

struct GbtParams {
  int n_estimators = 100;
  int max_depth = 3;
  double learning_rate = 0.1;
  double l2 = 1.0;
  double min_child_weight = 1.0;

  bool operator==(const GbtParams&) const = default;
};

struct GridSpec {
  std::vector<int> estimators{50, 100};
  std::vector<int> depths{3, 5};
  std::vector<double> rates{0.05, 0.1};

  static GridSpec desk() { return GridSpec{}; }
  static GridSpec full() { return GridSpec{{100, 200, 300}, {3, 5, 10, 20}, {0.01, 0.05, 0.1}}; }
};

// Bin codes for every non-target feature: categories map to their index,
// numbers to quantile bins fitted on the training table.
class FeatureBinner {
 public:
  FeatureBinner() = default;
  FeatureBinner(const Table& train, std::size_t target, std::size_t max_bins = 64);

  // Row-major rows x features matrix of bin codes.
  std::vector<std::uint16_t> transform(const Table& table) const;
  std::size_t features() const { return columns_.size(); }
  std::size_t bins(std::size_t j) const { return bins_[j]; }
  bool categorical(std::size_t j) const { return categorical_[j]; }

 private:
  std::vector<std::size_t> columns_;
  std::vector<bool> categorical_;
  std::vector<std::size_t> bins_;
  std::vector<std::vector<double>> cuts_;
};

class GbtModel {
 public:
  struct Node {
    int feature = -1;  // -1: leaf
    int threshold = 0;                 // numerical: bin <= threshold goes left
    std::vector<bool> left_categories;  // categorical: membership goes left
    int left = -1, right = -1;
    double value = 0.0;
  };
  using Tree = std::vector<Node>;

  // Rows are bin codes from FeatureBinner::transform; y in {0, 1}.
  void fit(const std::vector<std::uint16_t>& x, const std::vector<int>& y, const FeatureBinner& binner,
           const GbtParams& params, const std::vector<std::size_t>* rows = nullptr);

  // Margins after the first `trees` trees (all when negative).
  std::vector<double> margins(const std::vector<std::uint16_t>& x, std::size_t n_features, int trees = -1) const;
  std::vector<double> predict_proba(const std::vector<std::uint16_t>& x, std::size_t n_features,
                                    int trees = -1) const;

  const std::vector<Tree>& trees() const { return trees_; }

 private:
  double base_ = 0.0;
  std::vector<Tree> trees_;
};

struct DownstreamResult {
  double accuracy = 0.0;
  std::optional<double> auc;  // undefined for a single-class training target
  GbtParams chosen;
  double cv_accuracy = 0.0;
  bool single_class = false;
  std::string note;
  std::vector<double> test_scores;  // P(positive) per test row
};

// Grid search by k-fold cross-validated accuracy on the synthetic table,
// refit of the best point on all of it, scoring on the real test table.
DownstreamResult gbt_downstream(const Table& synthetic_train, const Table& real_test, const GridSpec& grid,
                                std::size_t folds = 5, std::uint64_t seed = 0, std::size_t workers = 1,
                                std::optional<std::string> positive = std::nullopt);

}  // namespace dptab

#endif  // DPTAB_GBT_HPP_

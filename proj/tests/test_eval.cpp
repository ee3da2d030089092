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

#include <gtest/gtest.h>

#include <cmath>

#include "dptab/eval.hpp"
#include "dptab/gbt.hpp"
#include "dptab/rng.hpp"
#include "oracles.hpp"
#include "toy.hpp"

using namespace dptab;

namespace {

Schema two_binary() {
  Schema s;
  s.features.push_back(FeatureSpec::categorical("F", {"0", "1"}));
  s.features.push_back(FeatureSpec::categorical("G", {"0", "1"}));
  return s;
}

Table binary_table(const std::vector<std::pair<int, int>>& rows) {
  Table t;
  t.schema = two_binary();
  for (auto [a, b] : rows) t.rows.push_back(Record{{Cell::of_category(a), Cell::of_category(b)}});
  return t;
}

// Mixed table with heavy ties in the numbers.
Table mixed_table(std::size_t n, std::uint64_t seed) {
  Table t;
  t.schema.features.push_back(FeatureSpec::categorical("C", {"a", "b", "c"}));
  t.schema.features.push_back(FeatureSpec::numerical("X", 0, 30, 0));
  t.schema.features.push_back(FeatureSpec::numerical("Y", -5, 5, 2));
  t.schema.features.push_back(FeatureSpec::categorical("D", {"u", "v"}));
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    t.rows.push_back(Record{{Cell::of_category(static_cast<int>(rng.index(3))),
                             Cell::of_number(static_cast<double>(rng.index(8) * rng.index(5))),
                             Cell::of_number(canonical_number(rng.uniform() * 10 - 5, 2)),
                             Cell::of_category(static_cast<int>(rng.index(2)))}});
  }
  return t;
}

Table fairness_table(const std::vector<int>& group, const std::vector<int>& label) {
  Table t;
  t.schema = toy::schema();
  for (std::size_t i = 0; i < group.size(); ++i) {
    t.rows.push_back(Record{{Cell::of_category(group[i]), Cell::of_category(label[i]), Cell::of_number(50)}});
  }
  return t;
}

}  // namespace

TEST(TvdTest, IdenticalAndDisjointTables) {
  const Table t = toy::table(300, 1);
  const BinningSpec b = make_binning(t);
  for (std::size_t k = 1; k <= 3; ++k) EXPECT_EQ(kway_tvd(t, t, k, b).mean, 0.0);
  Table all_a, all_b;
  all_a.schema = all_b.schema = two_binary();
  for (int i = 0; i < 5; ++i) {
    all_a.rows.push_back(Record{{Cell::of_category(0), Cell::of_category(0)}});
    all_b.rows.push_back(Record{{Cell::of_category(1), Cell::of_category(0)}});
  }
  EXPECT_EQ(subset_tvd(all_a, all_b, {0}, make_binning(all_b)), 1.0);
}

TEST(TvdTest, HandEnumeratedFourRowTables) {
  const Table syn = binary_table({{0, 0}, {0, 1}, {1, 1}, {1, 1}});
  const Table ref = binary_table({{0, 0}, {0, 0}, {1, 0}, {1, 1}});
  const BinningSpec b = make_binning(ref);
  // feature F marginals agree; G: (0.25, 0.75) vs (0.75, 0.25)
  EXPECT_EQ(kway_tvd(syn, ref, 1, b).mean, 0.25);
  // joint cells 00, 01, 10, 11: (.25, .25, 0, .5) vs (.5, 0, .25, .25)
  EXPECT_EQ(kway_tvd(syn, ref, 2, b).mean, 0.5);
}

TEST(TvdTest, MatchesCellCountOracle) {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const Table syn = mixed_table(40 + seed * 7, seed);
    const Table ref = mixed_table(100, seed + 100);
    const BinningSpec b = make_binning(ref);
    for (std::size_t k = 1; k <= 4; ++k) {
      const TvdResult r = kway_tvd(syn, ref, k, b);
      EXPECT_NEAR(r.mean, oracle::mean_kway_tvd(syn, ref, k), 1e-12);
      for (std::size_t i = 0; i < r.subsets.size(); ++i) {
        EXPECT_NEAR(r.values[i], oracle::tvd(syn, ref, r.subsets[i]), 1e-12);
        EXPECT_GE(r.values[i], 0.0);
        EXPECT_LE(r.values[i], 1.0);
      }
    }
  }
}

TEST(TvdTest, SymmetricAndMonotoneInK) {
  const Table a = mixed_table(80, 3), c = mixed_table(90, 4);
  const BinningSpec b = make_binning(c);
  double last = 0.0;
  for (std::size_t k = 1; k <= 4; ++k) {
    const double ab = kway_tvd(a, c, k, b).mean;
    EXPECT_NEAR(ab, kway_tvd(c, a, k, b).mean, 1e-15);
    EXPECT_GE(ab, last - 1e-15);
    last = ab;
  }
}

TEST(BinningTest, TiesGoToLowerBin) {
  Table t;
  t.schema.features.push_back(FeatureSpec::numerical("X", 0, 10, 0));
  for (double v : {1, 1, 1, 2, 3, 4, 5, 6, 7, 8}) t.rows.push_back(Record{{Cell::of_number(v)}});
  const BinningSpec b = make_binning(t, 5);
  // cuts at the 2nd, 4th, 6th, 8th order statistics: 1, 2, 4, 6
  ASSERT_EQ(b.cuts[0], (std::vector<double>{1, 2, 4, 6}));
  EXPECT_EQ(b.bin(0, Cell::of_number(1)), 0u);
  EXPECT_EQ(b.bin(0, Cell::of_number(2)), 1u);
  EXPECT_EQ(b.bin(0, Cell::of_number(3)), 2u);
  EXPECT_EQ(b.bin(0, Cell::of_number(9)), 4u);
}

TEST(DcrTest, ReplicaAndMidpoint) {
  const Table t = mixed_table(30, 2);
  const DcrResult same = dcr_histogram(t, t);
  EXPECT_EQ(same.min, 0.0);
  for (double d : same.distances) EXPECT_EQ(d, 0.0);
  Table train, syn;
  train.schema.features.push_back(FeatureSpec::numerical("X", 0, 10, 0));
  syn.schema = train.schema;
  train.rows = {Record{{Cell::of_number(0)}}, Record{{Cell::of_number(10)}}};
  syn.rows = {Record{{Cell::of_number(5)}}};
  EXPECT_EQ(dcr_histogram(syn, train).distances[0], 0.5);
}

TEST(DcrTest, MatchesAllPairsOracle) {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const Table syn = mixed_table(seed == 1 ? 5 : 60, seed), train = mixed_table(seed == 1 ? 5 : 100, seed + 50);
    const DcrResult r = dcr_histogram(syn, train, 10, 2);
    const auto expected = oracle::dcr(syn, train);
    ASSERT_EQ(r.distances.size(), expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(r.distances[i], expected[i], 1e-12);
    std::size_t total = 0;
    for (auto c : r.counts) total += c;
    EXPECT_EQ(total, syn.size());
  }
}

TEST(AucTest, HandCasesAndPairwiseOracle) {
  EXPECT_EQ(auc({0.3, 0.3, 0.3, 0.3}, {1, 0, 1, 0}), std::optional<double>(0.5));
  EXPECT_EQ(auc({0.9, 0.4, 0.8}, {1, 0, 1}), std::optional<double>(1.0));
  EXPECT_EQ(auc({0.9, 0.4}, {1, 1}), std::nullopt);
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + rng.index(49);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.index(10)) / 10.0;  // plenty of ties
      y[i] = rng.bernoulli(0.4);
    }
    const auto want = oracle::auc(s, y);
    const auto got = auc(s, y);
    ASSERT_EQ(got.has_value(), want.has_value());
    if (want) EXPECT_NEAR(*got, *want, 1e-12);
  }
}

TEST(FairnessTest, DataParityValues) {
  const Table balanced = fairness_table({0, 0, 1, 1}, {1, 0, 0, 1});
  EXPECT_EQ(fairness_metrics(balanced, nullptr, "Group", "Label").data_dpdiff, 0.0);
  std::vector<int> g, y;
  for (int i = 0; i < 10; ++i) {
    g.push_back(0);
    y.push_back(i < 9);
    g.push_back(1);
    y.push_back(i < 1);
  }
  EXPECT_NEAR(fairness_metrics(fairness_table(g, y), nullptr, "Group", "Label").data_dpdiff, 0.8, 1e-12);
}

TEST(FairnessTest, HandConfusionMatrices) {
  // A: y 1,1,1,0 pred 1,1,0,1 -> TPR 2/3, FPR 1; B: y 1,0,0,0 pred 1,1,0,0 -> TPR 1, FPR 1/3
  const std::vector<int> group{0, 0, 0, 0, 1, 1, 1, 1};
  const std::vector<int> label{1, 1, 1, 0, 1, 0, 0, 0};
  const std::vector<int> pred{1, 1, 0, 1, 1, 1, 0, 0};
  std::vector<double> scores;
  for (int p : pred) scores.push_back(p ? 0.9 : 0.1);
  const FairnessReport r = fairness_metrics(fairness_table(group, label), &scores, "Group", "Label");
  EXPECT_NEAR(r.data_dpdiff, 0.5, 1e-15);
  ASSERT_TRUE(r.model_dpdiff && r.eodiff);
  EXPECT_NEAR(*r.model_dpdiff, 0.25, 1e-15);
  EXPECT_NEAR(*r.eodiff, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(*r.eodiff, oracle::eodiff(group, label, pred), 1e-15);
}

TEST(FairnessTest, EoDiffOracleAndRelabelInvariance) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 20 + rng.index(80);
    std::vector<int> g(n), y(n), p(n);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = rng.bernoulli(0.5);
      y[i] = rng.bernoulli(0.5);
      s[i] = rng.uniform();
      p[i] = s[i] >= 0.5;
    }
    const FairnessReport r = fairness_metrics(fairness_table(g, y), &s, "Group", "Label");
    ASSERT_TRUE(r.eodiff);
    EXPECT_NEAR(*r.eodiff, oracle::eodiff(g, y, p), 1e-15);
    std::vector<int> flipped(n);
    for (std::size_t i = 0; i < n; ++i) flipped[i] = 1 - g[i];
    const FairnessReport f = fairness_metrics(fairness_table(flipped, y), &s, "Group", "Label");
    EXPECT_EQ(*f.eodiff, *r.eodiff);
    EXPECT_EQ(f.data_dpdiff, r.data_dpdiff);
    for (double v : {r.data_dpdiff, *r.model_dpdiff, *r.eodiff}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(GbtTest, SeparableBlobs) {
  Schema s;
  s.features.push_back(FeatureSpec::numerical("X1", -10, 20, 2));
  s.features.push_back(FeatureSpec::numerical("X2", -10, 20, 2));
  s.features.push_back(FeatureSpec::categorical("Y", {"neg", "pos"}));
  s.target_feature = "Y";
  auto make = [&](std::size_t n, std::uint64_t seed) {
    Table t;
    t.schema = s;
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
      const int y = rng.bernoulli(0.5);
      // classes 2 apart along X1 + X2
      const double a = rng.uniform() * 4 + (y ? 6 : 0);
      const double b = rng.uniform() * 6 - 3;
      t.rows.push_back(Record{{Cell::of_number(canonical_number((a + b) / 2, 2)),
                               Cell::of_number(canonical_number((a - b) / 2, 2)), Cell::of_category(y)}});
    }
    return t;
  };
  const DownstreamResult r = gbt_downstream(make(400, 1), make(400, 2), GridSpec::desk(), 3, 7);
  EXPECT_GE(r.accuracy, 0.95);
  ASSERT_TRUE(r.auc);
  EXPECT_GE(*r.auc, 0.98);
  EXPECT_EQ(r.test_scores.size(), 400u);
}

TEST(GbtTest, SingleClassTrainingIsReported) {
  Table t = fairness_table({0, 1, 0, 1, 0, 1}, {1, 1, 1, 1, 1, 1});
  const Table test = fairness_table({0, 1}, {0, 1});
  const DownstreamResult r = gbt_downstream(t, test, GridSpec::desk(), 2, 1);
  EXPECT_TRUE(r.single_class);
  EXPECT_FALSE(r.auc.has_value());
}

TEST(PerplexityTest, UniformModelGivesVocabSize) {
  ModelConfig c = toy::small_model();
  c.vocab_size = 23;
  Model m = Model::init(c, 1);
  m.param("lm_head").setZero();
  TokenizedExample ex;
  ex.ids = {0, 5, 6, 7, 1};
  ex.format_mask.assign(5, true);
  EXPECT_NEAR(perplexity(m, {ex, ex}), 23.0, 23.0 * 1e-6);
}

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

// Small fixtures shared by the unit and acceptance tests.

#ifndef DPTAB_TESTS_TOY_HPP_
#define DPTAB_TESTS_TOY_HPP_

#include <algorithm>
#include <cmath>

#include "dptab/dp_trainer.hpp"
#include "dptab/rng.hpp"
#include "dptab/schema.hpp"

namespace toy {

// Group in {A, B}; Label yes with probability 0.8 (A) or 0.3 (B); Score ~
// N(60 if yes else 40, 8) clipped to [0, 100] with one decimal.
inline dptab::Schema schema() {
  dptab::Schema s;
  s.features.push_back(dptab::FeatureSpec::categorical("Group", {"A", "B"}));
  s.features.push_back(dptab::FeatureSpec::categorical("Label", {"no", "yes"}));
  s.features.push_back(dptab::FeatureSpec::numerical("Score", 0.0, 100.0, 1));
  s.target_feature = "Label";
  s.sensitive_feature = "Group";
  s.validate();
  return s;
}

inline dptab::Table table(std::size_t n, std::uint64_t seed) {
  dptab::Table t;
  t.schema = schema();
  dptab::Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const int g = rng.bernoulli(0.5) ? 0 : 1;
    const int y = rng.bernoulli(g == 0 ? 0.8 : 0.3) ? 1 : 0;
    double score = rng.normal(y ? 60.0 : 40.0, 8.0);
    score = dptab::canonical_number(std::clamp(score, 0.0, 100.0), 1);
    t.rows.push_back(dptab::Record{{dptab::Cell::of_category(g), dptab::Cell::of_category(y),
                                    dptab::Cell::of_number(score)}});
  }
  return t;
}

// Two binary features plus a one-digit number, small enough for exhaustive checks.
inline dptab::Schema tiny_schema() {
  dptab::Schema s;
  s.features.push_back(dptab::FeatureSpec::categorical("Sex", {"Male", "Female"}));
  s.features.push_back(dptab::FeatureSpec::numerical("Age", 0.0, 9.0, 0));
  s.validate();
  return s;
}

inline dptab::ModelConfig small_model() {
  dptab::ModelConfig m;
  m.context_length = 24;
  m.embed_dim = 32;
  m.num_layers = 1;
  m.num_heads = 2;
  m.ffn_dim = 64;
  m.adapter_rank = 0;
  return m;
}

}  // namespace toy

#endif  // DPTAB_TESTS_TOY_HPP_

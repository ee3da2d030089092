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

// Synthetic row generation from a trained model and value-specified quota
// planning for demographic-parity control.

#ifndef DPTAB_SAMPLER_HPP_
#define DPTAB_SAMPLER_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dptab/schema.hpp"
#include "dptab/tokenizer.hpp"
#include "dptab/transformer.hpp"

namespace dptab {

enum class PromptMode { random_init, value_specified };

struct PromptSpec {
  PromptMode mode = PromptMode::random_init;
  std::vector<std::pair<std::string, std::string>> fixed_values;  // (feature, value)
  double temperature = 0.7;
  int max_retries_per_row = 8;

  // Throws InputError.
  void validate(const Schema& schema) const;
};

struct SamplingReport {
  std::size_t rows_requested = 0;
  std::size_t rows_emitted = 0;
  std::size_t attempts = 0;
  std::size_t rows_skipped = 0;
  std::array<std::size_t, kDecodeErrorKinds> decode_failures{};

  double format_compliance() const {
    return attempts == 0 ? 0.0 : static_cast<double>(rows_emitted) / static_cast<double>(attempts);
  }
  void merge(const SamplingReport& other);
  std::string to_json() const;
};

// Prompt token ids: BOS + one feature name + "is" (random_init, the feature
// chosen by `rng`) or BOS + the fixed clauses each followed by ",".
std::vector<TokenId> build_prompt(const PromptSpec& spec, const Vocab& vocab, const Schema& schema, Rng& rng);

// Extends `prompt` until EOS or the context limit.
std::vector<TokenId> generate_ids(const Model& model, std::vector<TokenId> prompt, double temperature, Rng& rng);

struct SampleResult {
  Table table;
  SamplingReport report;
};

// Row i, attempt a draws from Rng::derive(seed, i, a); rows run on up to
// `workers` threads and land in row order. Throws Error when no row decodes.
SampleResult sample_rows(const Model& model, const Vocab& vocab, const Schema& schema, std::size_t n,
                         const PromptSpec& spec, std::uint64_t seed, std::size_t workers = 1);

// Same as sample_rows but never throws for zero rows.
SampleResult try_sample_rows(const Model& model, const Vocab& vocab, const Schema& schema, std::size_t n,
                             const PromptSpec& spec, std::uint64_t seed, std::size_t workers = 1);

// --- demographic-parity quota planning -----------------------------------------

// counts[a] = {#(A=a, Y=0), #(A=a, Y=1)}.
using GroupLabelCounts = std::vector<std::array<double, 2>>;

// max_a p(Y=1|A=a) - min_a p(Y=1|A=a) over groups with at least one row.
double demographic_parity_gap(const GroupLabelCounts& counts);

struct QuotaEntry {
  std::size_t group = 0;
  int label = 0;  // 0 or 1
  std::size_t count = 0;
};

struct QuotaPlan {
  std::vector<QuotaEntry> entries;  // non-zero cells only, (group, label) order
  std::size_t controlled_rows = 0;
  double reference_dpdiff = 0.0;
  double predicted_dpdiff = 0.0;

  // counts[a][y] added by the plan.
  std::vector<std::array<std::size_t, 2>> cells(std::size_t groups) const;
};

// Allocates round(rho * n_total) value-specified rows over (group, label)
// cells so the combined data has the smallest demographic-parity gap, assuming
// the other n_total - m rows follow `reference` (rescaled to that many rows).
// `warm_start` (cells of an earlier plan with fewer rows) seeds the search.
QuotaPlan plan_fairness_quota(const std::vector<std::array<std::size_t, 2>>& reference, double rho,
                              std::size_t n_total,
                              const std::vector<std::array<std::size_t, 2>>* warm_start = nullptr);

// Gap of reference rescaled to n_total - m rows plus `cells`.
double predicted_gap(const std::vector<std::array<std::size_t, 2>>& reference, std::size_t n_total,
                     const std::vector<std::array<std::size_t, 2>>& cells);

struct FairnessPoint {
  double rho = 0.0;
  QuotaPlan plan;
  Table combined;  // uncontrolled rows first, then the value-specified rows
  double data_dpdiff = 0.0;
};

// Controlled-generation sweep over increasing `fractions`. One uncontrolled
// batch of n rows is drawn with `prompt` (random_init); at fraction rho its
// first n - m rows are kept and m = round(rho * n) value-specified rows fixing
// (sensitive, target) are added per the quota plan. Each plan is warm-started
// from the previous one, so the gap never grows along the sweep. Needs the
// schema's sensitive and target features; the positive label is the target's
// last category.
std::vector<FairnessPoint> fairness_sweep(const Model& model, const Vocab& vocab, const Schema& schema, std::size_t n,
                                          const std::vector<double>& fractions, const PromptSpec& prompt,
                                          std::uint64_t seed, std::size_t workers = 1);

}  // namespace dptab

#endif  // DPTAB_SAMPLER_HPP_

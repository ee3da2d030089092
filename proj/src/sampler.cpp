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

#include "dptab/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>

#include "dptab/lm.hpp"
#include "dptab/parallel.hpp"
#include "json.hpp"

namespace dptab {

void PromptSpec::validate(const Schema& schema) const {
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) throw InputError("temperature must be non-negative");
  if (max_retries_per_row < 0) throw InputError("max retries must be non-negative");
  if (mode == PromptMode::random_init) {
    if (!fixed_values.empty()) throw InputError("random-init prompts take no fixed values");
    return;
  }
  if (fixed_values.empty()) throw InputError("value-specified prompts need at least one fixed value");
  if (fixed_values.size() >= schema.size()) throw InputError("fixed values must leave at least one feature free");
  std::vector<bool> seen(schema.size(), false);
  for (const auto& [name, value] : fixed_values) {
    const std::size_t f = schema.index_of(name);
    if (seen[f]) throw InputError("feature \"" + name + "\" is fixed twice");
    seen[f] = true;
    auto cell = parse_value(value, schema.features[f]);
    if (std::holds_alternative<DecodeError>(cell)) {
      throw InputError("fixed value \"" + value + "\" is not valid for feature \"" + name + "\"");
    }
  }
}

void SamplingReport::merge(const SamplingReport& other) {
  rows_requested += other.rows_requested;
  rows_emitted += other.rows_emitted;
  attempts += other.attempts;
  rows_skipped += other.rows_skipped;
  for (std::size_t k = 0; k < kDecodeErrorKinds; ++k) decode_failures[k] += other.decode_failures[k];
}

std::string SamplingReport::to_json() const {
  nlohmann::ordered_json j;
  j["rows_requested"] = rows_requested;
  j["rows_emitted"] = rows_emitted;
  j["rows_skipped"] = rows_skipped;
  j["attempts"] = attempts;
  j["format_compliance"] = format_compliance();
  nlohmann::ordered_json failures;
  for (std::size_t k = 0; k < kDecodeErrorKinds; ++k) {
    failures[std::string(to_string(static_cast<DecodeErrorKind>(k)))] = decode_failures[k];
  }
  j["decode_failures"] = std::move(failures);
  return j.dump(2);
}

std::vector<TokenId> build_prompt(const PromptSpec& spec, const Vocab& vocab, const Schema& schema, Rng& rng) {
  std::vector<TokenId> ids{Vocab::kBos};
  if (spec.mode == PromptMode::random_init) {
    const FeatureSpec& f = schema.features[rng.index(schema.size())];
    ids.push_back(vocab.id(f.name));
    ids.push_back(vocab.is_token());
    return ids;
  }
  std::vector<std::size_t> fixed;
  for (const auto& [name, value] : spec.fixed_values) fixed.push_back(schema.index_of(name));
  Record dummy;
  dummy.cells.resize(schema.size());
  for (std::size_t i = 0; i < fixed.size(); ++i) {
    dummy.cells[fixed[i]] = std::get<Cell>(parse_value(spec.fixed_values[i].second, schema.features[fixed[i]]));
  }
  for (std::size_t f : fixed) {
    const FeatureSpec& spec_f = schema.features[f];
    ids.push_back(vocab.id(spec_f.name));
    ids.push_back(vocab.is_token());
    const std::string value = render_value(dummy.cells[f], spec_f);
    if (spec_f.is_categorical()) {
      ids.push_back(vocab.id(value));
    } else {
      for (char c : value) ids.push_back(vocab.id(std::string_view(&c, 1)));
    }
    ids.push_back(vocab.comma());
  }
  return ids;
}

std::vector<TokenId> generate_ids(const Model& model, std::vector<TokenId> prompt, double temperature, Rng& rng) {
  const std::size_t limit = static_cast<std::size_t>(model.config().context_length);
  while (prompt.size() < limit) {
    const TokenId next = sample_next(model, prompt, temperature, rng);
    prompt.push_back(next);
    if (next == Vocab::kEos) break;
  }
  return prompt;
}

namespace {

struct RowOutcome {
  std::optional<Record> record;
  SamplingReport report;
};

RowOutcome sample_one(const Model& model, const Vocab& vocab, const Schema& schema, const PromptSpec& spec,
                      const std::vector<std::pair<std::size_t, Cell>>& fixed, std::uint64_t seed, std::size_t row) {
  RowOutcome out;
  out.report.rows_requested = 1;
  for (int attempt = 0; attempt <= spec.max_retries_per_row; ++attempt) {
    Rng rng = Rng::derive(seed, row, static_cast<std::uint64_t>(attempt));
    ++out.report.attempts;
    const std::vector<TokenId> ids = generate_ids(model, build_prompt(spec, vocab, schema, rng), spec.temperature, rng);
    auto decoded = decode_text(detokenize(ids, vocab), schema);
    if (auto* error = std::get_if<DecodeError>(&decoded)) {
      ++out.report.decode_failures[static_cast<std::size_t>(error->kind)];
      continue;
    }
    Record record = std::get<Record>(std::move(decoded));
    bool clamped = true;
    for (const auto& [f, cell] : fixed) clamped = clamped && record.cells[f] == cell;
    if (!clamped) {
      ++out.report.decode_failures[static_cast<std::size_t>(DecodeErrorKind::duplicate_feature)];
      continue;
    }
    out.record = std::move(record);
    out.report.rows_emitted = 1;
    return out;
  }
  out.report.rows_skipped = 1;
  return out;
}

}  // namespace

SampleResult try_sample_rows(const Model& model, const Vocab& vocab, const Schema& schema, std::size_t n,
                             const PromptSpec& spec, std::uint64_t seed, std::size_t workers) {
  spec.validate(schema);
  if (static_cast<std::size_t>(model.config().vocab_size) != vocab.size()) {
    throw InputError("model and vocabulary come from different checkpoints");
  }
  std::vector<std::pair<std::size_t, Cell>> fixed;
  for (const auto& [name, value] : spec.fixed_values) {
    const std::size_t f = schema.index_of(name);
    fixed.emplace_back(f, std::get<Cell>(parse_value(value, schema.features[f])));
  }
  std::vector<RowOutcome> outcomes(n);
  parallel_for(n, workers, [&](std::size_t i) { outcomes[i] = sample_one(model, vocab, schema, spec, fixed, seed, i); });
  SampleResult result;
  result.table.schema = schema;
  for (auto& o : outcomes) {
    result.report.merge(o.report);
    if (o.record) result.table.rows.push_back(std::move(*o.record));
  }
  return result;
}

SampleResult sample_rows(const Model& model, const Vocab& vocab, const Schema& schema, std::size_t n,
                         const PromptSpec& spec, std::uint64_t seed, std::size_t workers) {
  SampleResult result = try_sample_rows(model, vocab, schema, n, spec, seed, workers);
  if (n > 0 && result.table.rows.empty()) {
    throw Error("no row decoded after " + std::to_string(result.report.attempts) + " attempts");
  }
  return result;
}

namespace {

// Draws rows until exactly `n` decoded, in rounds of fresh seeds.
class RowStream {
 public:
  RowStream(const Model& model, const Vocab& vocab, const Schema& schema, PromptSpec spec, std::uint64_t seed,
            std::size_t workers)
      : model_(model), vocab_(vocab), schema_(schema), spec_(std::move(spec)), seed_(seed), workers_(workers) {}

  const std::vector<Record>& take(std::size_t n) {
    int empty_rounds = 0;
    while (rows_.size() < n) {
      const std::size_t want = n - rows_.size();
      SampleResult r = try_sample_rows(model_, vocab_, schema_, want, spec_,
                                       Rng::derive(seed_, round_++).next_u64(), workers_);
      if (r.table.rows.empty() && ++empty_rounds >= 3) {
        throw Error("generation produced no valid rows for the requested prompt");
      }
      for (auto& row : r.table.rows) rows_.push_back(std::move(row));
    }
    return rows_;
  }

 private:
  const Model& model_;
  const Vocab& vocab_;
  const Schema& schema_;
  PromptSpec spec_;
  std::uint64_t seed_;
  std::size_t workers_;
  std::uint64_t round_ = 0;
  std::vector<Record> rows_;
};

}  // namespace

std::vector<FairnessPoint> fairness_sweep(const Model& model, const Vocab& vocab, const Schema& schema, std::size_t n,
                                          const std::vector<double>& fractions, const PromptSpec& prompt,
                                          std::uint64_t seed, std::size_t workers) {
  if (!schema.sensitive_feature || schema.target_feature.empty()) {
    throw InputError("fairness sweep needs the schema's sensitive and target features");
  }
  if (n == 0) throw InputError("fairness sweep needs n > 0");
  if (!std::is_sorted(fractions.begin(), fractions.end())) throw InputError("fractions must be increasing");
  const std::size_t a = schema.index_of(*schema.sensitive_feature);
  const std::size_t y = schema.index_of(schema.target_feature);
  const FeatureSpec& a_spec = schema.features[a];
  const FeatureSpec& y_spec = schema.features[y];
  if (!a_spec.is_categorical() || !y_spec.is_categorical()) {
    throw InputError("sensitive and target features must be categorical");
  }
  const int positive = static_cast<int>(y_spec.categories.size()) - 1;
  const std::size_t groups = a_spec.categories.size();

  PromptSpec base = prompt;
  base.mode = PromptMode::random_init;
  base.fixed_values.clear();
  RowStream uncontrolled(model, vocab, schema, base, Rng::derive(seed, 0).next_u64(), workers);
  const std::vector<Record>& pool = uncontrolled.take(n);

  std::vector<std::vector<std::unique_ptr<RowStream>>> cells(groups);
  for (std::size_t g = 0; g < groups; ++g) {
    for (int label = 0; label < 2; ++label) {
      PromptSpec spec = prompt;
      spec.mode = PromptMode::value_specified;
      spec.fixed_values = {{a_spec.name, a_spec.categories[g]},
                           {y_spec.name, y_spec.categories[static_cast<std::size_t>(label ? positive : 0)]}};
      cells[g].push_back(std::make_unique<RowStream>(model, vocab, schema, spec,
                                                     Rng::derive(seed, 1 + g, static_cast<std::uint64_t>(label)).next_u64(),
                                                     workers));
    }
  }
  auto count_rows = [&](std::size_t begin, std::size_t end) {
    std::vector<std::array<std::size_t, 2>> c(groups, {0, 0});
    for (std::size_t i = begin; i < end; ++i) {
      const Record& r = pool[i];
      ++c[static_cast<std::size_t>(r.cells[a].category)][r.cells[y].category == positive ? 1 : 0];
    }
    return c;
  };

  std::vector<FairnessPoint> out;
  std::vector<std::array<std::size_t, 2>> warm(groups, {0, 0});
  std::size_t kept_prev = n;
  for (double rho : fractions) {
    FairnessPoint point;
    point.rho = rho;
    const auto m = static_cast<std::size_t>(std::llround(rho * static_cast<double>(n)));
    const std::size_t kept = n - m;
    const auto reference = count_rows(0, kept);
    const auto removed = count_rows(kept, kept_prev);
    for (std::size_t g = 0; g < groups; ++g) {
      warm[g][0] += removed[g][0];
      warm[g][1] += removed[g][1];
    }
    point.plan = plan_fairness_quota(reference, rho, n, &warm);
    warm = point.plan.cells(groups);
    kept_prev = kept;

    point.combined.schema = schema;
    point.combined.rows.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(kept));
    for (std::size_t g = 0; g < groups; ++g) {
      for (int label = 0; label < 2; ++label) {
        const std::size_t c = warm[g][static_cast<std::size_t>(label)];
        if (c == 0) continue;
        const std::vector<Record>& rows = cells[g][static_cast<std::size_t>(label)]->take(c);
        point.combined.rows.insert(point.combined.rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(c));
      }
    }
    GroupLabelCounts counts(groups, {0.0, 0.0});
    for (const Record& r : point.combined.rows) {
      counts[static_cast<std::size_t>(r.cells[a].category)][r.cells[y].category == positive ? 1 : 0] += 1.0;
    }
    point.data_dpdiff = demographic_parity_gap(counts);
    out.push_back(std::move(point));
  }
  return out;
}

}  // namespace dptab

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

#include "dptab/dp_trainer.hpp"

#include <algorithm>
#include <cmath>

#include "dptab/eval.hpp"
#include "dptab/lm.hpp"
#include "dptab/parallel.hpp"
#include "json.hpp"

namespace dptab {
namespace {

// Independent generator per purpose.
enum Stream : std::uint64_t {
  kRandomTable = 1,
  kStage1Order,
  kStage1Permutation,
  kStage1Dropout,
  kPoisson,
  kStage2Permutation,
  kNoise,
  kProbe,
  kInit,
};

Rng stream(std::uint64_t seed, Stream which, std::uint64_t a = 0, std::uint64_t b = 0) {
  return Rng::derive(seed ^ (static_cast<std::uint64_t>(which) * 0x9E3779B97F4A7C15ULL), a, b);
}

void check_finite(const Model::Vec& g) {
  if (!g.allFinite()) throw Error("non-finite gradient");
}

double norm_of(const Model::Vec& g) { return std::sqrt(g.cast<double>().squaredNorm()); }

struct BatchGrads {
  Eigen::VectorXd sum;
  double loss_sum = 0.0;
  std::vector<double> clipped_norms;
};

// Per-example gradients in chunks of `workers`, optionally clipped, summed in
// example order.
BatchGrads accumulate(const Model& model, std::span<const TokenizedExample> batch, const LossSpec& spec,
                      const NumericTokens& numeric, const TrainableSet& set, std::size_t workers,
                      std::optional<double> clip_norm, std::optional<std::uint64_t> dropout_seed) {
  BatchGrads out;
  out.sum = Eigen::VectorXd::Zero(set.size());
  workers = std::max<std::size_t>(1, workers);
  std::vector<Model::Vec> packed(workers), scratch(workers);
  std::vector<double> losses(workers), norms(workers);
  for (std::size_t begin = 0; begin < batch.size(); begin += workers) {
    const std::size_t n = std::min(workers, batch.size() - begin);
    parallel_for(n, workers, [&](std::size_t j) {
      const std::size_t i = begin + j;
      std::optional<Rng> drop;
      if (dropout_seed && model.config().dropout_prob > 0.0) drop = Rng::derive(*dropout_seed, i);
      try {
        losses[j] = example_loss_and_grad(model, batch[i], spec, numeric, set, packed[j], scratch[j],
                                          drop ? &*drop : nullptr)
                        .total;
      } catch (const Error& e) {
        throw Error("example " + std::to_string(i) + " in batch: " + e.what());
      }
      if (set.empty()) return;
      check_finite(packed[j]);
      if (clip_norm) {
        clip_in_place(packed[j], *clip_norm);
        norms[j] = norm_of(packed[j]);
      }
    });
    for (std::size_t j = 0; j < n; ++j) {
      out.loss_sum += losses[j];
      if (set.empty()) continue;
      out.sum += packed[j].cast<double>();
      if (clip_norm) out.clipped_norms.push_back(norms[j]);
    }
  }
  return out;
}

LossSpec resolved_loss(const TrainConfig& config, const Schema& schema) {
  LossSpec spec = config.loss;
  if (spec.lambda.empty()) spec.lambda = lambda_from_schema(schema, config.lambda_mode, config.lambda_fixed);
  spec.validate();
  return spec;
}

TrainableSet stage1_set(const Model& model) {
  if (model.config().adapter_rank > 0) {
    return TrainableSet::groups(model.layout(), {ParamGroup::embedding, ParamGroup::adapter});
  }
  return TrainableSet::all(model.layout());
}

TrainableSet stage2_set(const Model& model, bool single_stage) {
  if (single_stage) return TrainableSet::all(model.layout());
  if (model.config().adapter_rank > 0) return TrainableSet::groups(model.layout(), {ParamGroup::adapter});
  return TrainableSet::groups(model.layout(), {ParamGroup::base});
}

std::vector<TokenizedExample> tokenize_fixed(const std::vector<Record>& rows, const Schema& schema,
                                             const Vocab& vocab) {
  std::vector<TokenizedExample> out;
  const Permutation identity = identity_permutation(schema.size());
  for (const Record& r : rows) out.push_back(tokenize_record(r, schema, identity, vocab));
  return out;
}

void fill_epoch_probes(EpochStats& stats, const Model& model, const Vocab& vocab, const Schema& schema,
                       const TrainConfig& config, const std::vector<TokenizedExample>& heldout) {
  if (!heldout.empty()) stats.perplexity = perplexity(model, heldout, config.workers);
  if (config.probe_samples == 0) return;
  PromptSpec probe;
  probe.temperature = config.probe_temperature;
  probe.max_retries_per_row = 0;
  const std::uint64_t probe_seed = stream(config.seed, kProbe, static_cast<std::uint64_t>(stats.stage),
                                          static_cast<std::uint64_t>(stats.epoch))
                                       .next_u64();
  stats.compliance =
      try_sample_rows(model, vocab, schema, config.probe_samples, probe, probe_seed, config.workers)
          .report.format_compliance();
}

std::size_t longest_sentence(const Table& table, const Schema& schema, const Vocab& vocab, std::size_t* row) {
  std::size_t longest = 0;
  const Permutation identity = identity_permutation(schema.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    // Length does not depend on the clause order.
    const std::size_t len = tokenize_record(table.rows[r], schema, identity, vocab).size();
    if (len > longest) {
      longest = len;
      if (row) *row = r;
    }
  }
  return longest;
}

}  // namespace

Model::Vec clip(const Model::Vec& g, double clip_norm) {
  Model::Vec out = g;
  clip_in_place(out, clip_norm);
  return out;
}

double clip_in_place(Model::Vec& g, double clip_norm) {
  if (!(clip_norm > 0.0)) throw InputError("clip norm must be positive");
  check_finite(g);
  const double norm = norm_of(g);
  if (norm <= clip_norm) return norm;
  g *= static_cast<float>(clip_norm / norm);
  // float rounding can leave the result a hair above C
  for (int i = 0; i < 8 && norm_of(g) > clip_norm; ++i) g *= 1.0f - 1e-6f;
  return norm;
}

void Adam::step(Model& model, const TrainableSet& set, const Eigen::VectorXd& grad) {
  if (grad.size() != m_.size()) throw Error("optimizer state does not match the trainable set");
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const Eigen::VectorXd delta = -lr_ * (m_ / c1).array() / ((v_ / c2).array().sqrt() + eps_);
  const Model::Vec update = delta.cast<float>();
  set.scatter_add(update, model.params());
}

Eigen::VectorXd noisy_average(Eigen::VectorXd clipped_sum, double clip_norm, double sigma, double expected_batch,
                              Rng& noise_rng) {
  if (!(expected_batch > 0.0)) throw InputError("expected batch size must be positive");
  if (sigma > 0.0) {
    const double sd = sigma * clip_norm;
    for (Eigen::Index i = 0; i < clipped_sum.size(); ++i) clipped_sum[i] += noise_rng.normal(0.0, sd);
  }
  return clipped_sum / expected_batch;
}

StepStats sgd_step(Model& model, std::span<const TokenizedExample> batch, const LossSpec& spec,
                   const NumericTokens& numeric, const TrainableSet& set, Adam& adam, std::size_t workers,
                   std::uint64_t dropout_seed) {
  StepStats stats;
  stats.batch_size = batch.size();
  if (batch.empty()) return stats;
  BatchGrads g = accumulate(model, batch, spec, numeric, set, workers, std::nullopt, dropout_seed);
  stats.mean_loss = g.loss_sum / static_cast<double>(batch.size());
  if (!set.empty()) adam.step(model, set, g.sum / static_cast<double>(batch.size()));
  return stats;
}

StepStats dpsgd_step(Model& model, std::span<const TokenizedExample> batch, const LossSpec& spec,
                     const NumericTokens& numeric, const TrainableSet& set, double clip_norm, double sigma,
                     double expected_batch, Adam& adam, Rng& noise_rng, std::size_t workers) {
  if (!(clip_norm > 0.0)) throw InputError("clip norm must be positive");
  StepStats stats;
  stats.batch_size = batch.size();
  BatchGrads g = accumulate(model, batch, spec, numeric, set, workers, clip_norm, std::nullopt);
  stats.mean_loss = batch.empty() ? 0.0 : g.loss_sum / static_cast<double>(batch.size());
  stats.clipped_norms = std::move(g.clipped_norms);
  if (!set.empty()) adam.step(model, set, noisy_average(std::move(g.sum), clip_norm, sigma, expected_batch, noise_rng));
  return stats;
}

void PrivacySpec::validate() const {
  if (!(clip_norm > 0.0)) throw InputError("clip norm must be positive");
  if (non_private) return;
  if (!(epsilon_target > 0.0)) throw InputError("epsilon must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw InputError("delta must lie in (0, 1)");
  if (noise_multiplier && !(*noise_multiplier > 0.0)) {
    throw InputError("a private run needs a positive noise multiplier (use --non-private for sigma = 0)");
  }
}

void TrainConfig::validate() const {
  for (const StageConfig* s : {&stage1, &stage2}) {
    if (s->epochs < 0 || !(s->learning_rate > 0.0) || s->batch_size == 0) {
      throw InputError("stage epochs must be non-negative, learning rates and batch sizes positive");
    }
  }
  if (stage2.epochs == 0) throw InputError("stage 2 needs at least one epoch");
  privacy.validate();
  loss.validate();
  if (!(probe_temperature >= 0.0)) throw InputError("probe temperature must be non-negative");
}

std::string TrainReport::to_json() const {
  nlohmann::ordered_json j;
  j["privacy"] = non_private ? "NON-PRIVATE" : "DP";
  if (non_private) j["warning"] = "NON-PRIVATE RUN: no noise was added, there is no privacy guarantee";
  j["epsilon_target"] = non_private ? nlohmann::ordered_json("inf") : nlohmann::ordered_json(epsilon_target);
  j["delta"] = delta;
  j["spent_epsilon"] = std::isfinite(spent_epsilon) ? nlohmann::ordered_json(spent_epsilon)
                                                    : nlohmann::ordered_json("inf");
  j["clip_norm"] = clip_norm;
  j["sample_rate"] = sample_rate;
  j["noise_multiplier"] = noise_multiplier;
  j["planned_steps"] = planned_steps;
  j["steps_taken"] = steps_taken;
  j["max_clipped_norm"] = max_clipped_norm;
  j["stopped_early"] = stopped_early;
  if (stopped_early) j["stop_reason"] = stop_reason;
  nlohmann::ordered_json epochs_json = nlohmann::ordered_json::array();
  for (const EpochStats& e : epochs) {
    nlohmann::ordered_json row{{"stage", e.stage}, {"epoch", e.epoch}, {"mean_loss", e.mean_loss}};
    row["perplexity"] = e.perplexity ? nlohmann::ordered_json(*e.perplexity) : nlohmann::ordered_json(nullptr);
    row["format_compliance"] =
        e.compliance ? nlohmann::ordered_json(*e.compliance) : nlohmann::ordered_json(nullptr);
    epochs_json.push_back(std::move(row));
  }
  j["epochs"] = std::move(epochs_json);
  return j.dump(2);
}

TrainResult two_stage_finetune(const Schema& schema, const Table& train, const TrainConfig& config,
                               const std::vector<Record>* heldout_rows, const TrainObserver* observer,
                               const ResumeState* resume) {
  schema.validate();
  config.validate();
  if (train.rows.empty()) throw InputError("training table is empty");
  train.validate();

  TrainResult result;
  result.vocab = build_vocab(schema);
  const Vocab& vocab = result.vocab;
  const NumericTokens& numeric = vocab.numeric();
  const std::vector<TokenizedExample> heldout =
      heldout_rows ? tokenize_fixed(*heldout_rows, schema, vocab) : std::vector<TokenizedExample>{};

  ModelConfig model_config = config.model;
  model_config.vocab_size = static_cast<int>(vocab.size());
  model_config.validate();
  std::size_t long_row = 0;
  const std::size_t longest = longest_sentence(train, schema, vocab, &long_row);
  if (longest > static_cast<std::size_t>(model_config.context_length)) {
    throw InputError("row " + std::to_string(long_row + 1) + " encodes to " + std::to_string(longest) +
                     " tokens, more than the context length " + std::to_string(model_config.context_length));
  }

  TrainReport& report = result.report;
  const PrivacySpec& privacy = config.privacy;
  report.non_private = privacy.non_private;
  report.epsilon_target = privacy.epsilon_target;
  report.delta = privacy.delta;
  report.clip_norm = privacy.clip_norm;

  if (resume) {
    if (!(resume->model.config() == model_config)) throw InputError("checkpoint model does not match the config");
    result.model = resume->model;
    result.ledger = resume->ledger;
  } else {
    result.model = Model::init(model_config, stream(config.seed, kInit).next_u64());
  }
  Model& model = result.model;

  // Stage 1: schema-random rows only, no privacy cost.
  if (!resume && !config.single_stage && config.stage1.epochs > 0) {
    const std::size_t rows = config.random_rows > 0 ? config.random_rows : std::max<std::size_t>(train.size(), 2000);
    Rng table_rng = stream(config.seed, kRandomTable);
    const Table random = generate_random_table(schema, rows, table_rng);
    LossSpec ce;
    ce.kind = LossKind::stage1_ce;
    const TrainableSet set = stage1_set(model);
    Adam adam(set.size(), config.stage1.learning_rate);
    std::size_t step = 0;
    for (int epoch = 0; epoch < config.stage1.epochs; ++epoch) {
      std::vector<std::size_t> order(rows);
      for (std::size_t i = 0; i < rows; ++i) order[i] = i;
      Rng order_rng = stream(config.seed, kStage1Order, static_cast<std::uint64_t>(epoch));
      order_rng.shuffle(order);
      double loss_sum = 0.0;
      for (std::size_t begin = 0; begin < rows; begin += config.stage1.batch_size) {
        const std::size_t end = std::min(rows, begin + config.stage1.batch_size);
        std::vector<TokenizedExample> batch;
        std::vector<Record> fed;
        for (std::size_t k = begin; k < end; ++k) {
          const std::size_t r = order[k];
          Rng perm_rng = stream(config.seed, kStage1Permutation, r, static_cast<std::uint64_t>(epoch));
          batch.push_back(tokenize_record(random.rows[r], schema, random_permutation(schema.size(), perm_rng), vocab));
          if (observer && observer->on_stage1_batch) fed.push_back(random.rows[r]);
        }
        if (observer && observer->on_stage1_batch) observer->on_stage1_batch(fed);
        const std::uint64_t dropout_seed = stream(config.seed, kStage1Dropout, step++).next_u64();
        loss_sum += sgd_step(model, batch, ce, numeric, set, adam, config.workers, dropout_seed).mean_loss *
                    static_cast<double>(batch.size());
      }
      EpochStats stats;
      stats.stage = 1;
      stats.epoch = epoch + 1;
      stats.mean_loss = loss_sum / static_cast<double>(rows);
      fill_epoch_probes(stats, model, vocab, schema, config, heldout);
      report.epochs.push_back(stats);
    }
  }

  // Stage 2: DPSGD on the sensitive rows.
  const std::size_t n = train.size();
  const double expected_batch = static_cast<double>(std::min(config.stage2.batch_size, n));
  const double q = expected_batch / static_cast<double>(n);
  const auto steps = static_cast<std::size_t>(std::max(1.0, std::round(config.stage2.epochs / q)));
  report.sample_rate = q;
  report.planned_steps = steps;

  double sigma = 0.0;
  if (!privacy.non_private) {
    sigma = privacy.noise_multiplier
                ? *privacy.noise_multiplier
                : calibrate_sigma(privacy.epsilon_target, privacy.delta, q, steps,
                                  result.ledger.empty() ? std::vector<double>{} : result.ledger.rdp());
  }
  report.noise_multiplier = sigma;

  LossSpec loss = resolved_loss(config, schema);
  if (config.single_stage) loss.kind = LossKind::stage1_ce;
  const TrainableSet set = stage2_set(model, config.single_stage);
  Adam adam(set.size(), config.stage2.learning_rate);
  const std::uint64_t prior_steps = result.ledger.total_steps();
  Rng poisson = stream(config.seed, kPoisson, prior_steps);
  Rng noise = stream(config.seed, kNoise, prior_steps);

  double epoch_loss = 0.0;
  std::size_t epoch_examples = 0;
  std::size_t current_epoch = 0;
  auto close_epoch = [&](std::size_t epoch) {
    EpochStats stats;
    stats.stage = 2;
    stats.epoch = static_cast<int>(epoch) + 1;
    stats.mean_loss = epoch_examples ? epoch_loss / static_cast<double>(epoch_examples) : 0.0;
    fill_epoch_probes(stats, model, vocab, schema, config, heldout);
    report.epochs.push_back(stats);
    epoch_loss = 0.0;
    epoch_examples = 0;
  };

  for (std::size_t s = 0; s < steps; ++s) {
    const auto epoch = static_cast<std::size_t>(std::floor(static_cast<double>(s) * q));
    if (epoch != current_epoch) {
      close_epoch(current_epoch);
      current_epoch = epoch;
    }
    if (!privacy.non_private) {
      PrivacyLedger trial = result.ledger;
      trial.record(q, sigma, 1);
      if (trial.epsilon(privacy.delta) > privacy.epsilon_target) {
        report.stopped_early = true;
        report.stop_reason = "privacy budget exhausted after " + std::to_string(s) + " of " +
                             std::to_string(steps) + " steps";
        break;
      }
    }
    std::vector<TokenizedExample> batch;
    for (std::size_t r = 0; r < n; ++r) {
      if (!poisson.bernoulli(q)) continue;
      Rng perm_rng = stream(config.seed, kStage2Permutation, r, epoch + prior_steps);
      batch.push_back(tokenize_record(train.rows[r], schema, random_permutation(schema.size(), perm_rng), vocab));
    }
    const StepStats stats = dpsgd_step(model, batch, loss, numeric, set, privacy.clip_norm, sigma, expected_batch,
                                       adam, noise, config.workers);
    result.ledger.record(q, sigma, 1);
    ++report.steps_taken;
    epoch_loss += stats.mean_loss * static_cast<double>(stats.batch_size);
    epoch_examples += stats.batch_size;
    for (double c : stats.clipped_norms) report.max_clipped_norm = std::max(report.max_clipped_norm, c);
    if (observer && observer->on_stage2_step) {
      observer->on_stage2_step(s, stats.clipped_norms,
                               privacy.non_private ? std::numeric_limits<double>::infinity()
                                                   : result.ledger.epsilon(privacy.delta));
    }
  }
  close_epoch(current_epoch);
  report.spent_epsilon = privacy.non_private ? std::numeric_limits<double>::infinity()
                                             : result.ledger.epsilon(privacy.delta);
  return result;
}

}  // namespace dptab

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

// DPSGD with per-example clipping and Gaussian noise, and the two-stage
// fine-tuning driver: format learning on schema-random rows, then private
// training on the sensitive table.

#ifndef DPTAB_DP_TRAINER_HPP_
#define DPTAB_DP_TRAINER_HPP_

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dptab/accountant.hpp"
#include "dptab/losses.hpp"
#include "dptab/rng.hpp"
#include "dptab/sampler.hpp"
#include "dptab/schema.hpp"
#include "dptab/tokenizer.hpp"
#include "dptab/transformer.hpp"

namespace dptab {

// g * min(1, C / ||g||). Throws Error on non-finite entries.
Model::Vec clip(const Model::Vec& g, double clip_norm);
// In place; returns the norm before clipping.
double clip_in_place(Model::Vec& g, double clip_norm);

class Adam {
 public:
  Adam() = default;
  Adam(Eigen::Index size, double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps), m_(Eigen::VectorXd::Zero(size)),
        v_(Eigen::VectorXd::Zero(size)) {}

  // Descends along `grad` (TrainableSet order) on the model's parameters.
  void step(Model& model, const TrainableSet& set, const Eigen::VectorXd& grad);
  long steps() const { return t_; }

 private:
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  Eigen::VectorXd m_, v_;
  long t_ = 0;
};

struct StepStats {
  std::size_t batch_size = 0;
  double mean_loss = 0.0;  // over the examples actually drawn
  std::vector<double> clipped_norms;
};

// Plain minibatch step on the mean loss. With dropout configured, example i
// draws its masks from Rng::derive(dropout_seed, i).
StepStats sgd_step(Model& model, std::span<const TokenizedExample> batch, const LossSpec& spec,
                   const NumericTokens& numeric, const TrainableSet& set, Adam& adam, std::size_t workers = 1,
                   std::uint64_t dropout_seed = 0);

// (clipped_sum + N(0, sigma^2 C^2 I)) / expected_batch; no draws when sigma is 0.
Eigen::VectorXd noisy_average(Eigen::VectorXd clipped_sum, double clip_norm, double sigma, double expected_batch,
                              Rng& noise_rng);

// (sum_i clip(g_i, C) + N(0, sigma^2 C^2 I)) / expected_batch, then Adam. An
// empty batch still takes a noise-only step. No noise is drawn when sigma is 0.
StepStats dpsgd_step(Model& model, std::span<const TokenizedExample> batch, const LossSpec& spec,
                     const NumericTokens& numeric, const TrainableSet& set, double clip_norm, double sigma,
                     double expected_batch, Adam& adam, Rng& noise_rng, std::size_t workers = 1);

struct PrivacySpec {
  double epsilon_target = 1.0;
  double delta = 1e-6;
  double clip_norm = 1.0;
  std::optional<double> noise_multiplier;  // calibrated when unset
  bool non_private = false;                 // sigma = 0, no guarantee

  void validate() const;
};

struct StageConfig {
  int epochs = 5;
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;  // stage 2: expected Poisson batch size
};

struct TrainConfig {
  ModelConfig model;  // vocab_size is filled in from the schema vocabulary
  StageConfig stage1{5, 1e-4, 32};
  StageConfig stage2{2, 5e-4, 64};
  PrivacySpec privacy;
  LossSpec loss;
  LambdaMode lambda_mode = LambdaMode::range;
  double lambda_fixed = 1.0;
  bool single_stage = false;           // skip format learning, train all weights with CE under DPSGD
  std::size_t random_rows = 0;         // 0: max(training rows, 2000)
  std::size_t probe_samples = 100;     // per-epoch compliance probe; 0 disables
  double probe_temperature = 0.7;
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  void validate() const;
};

struct EpochStats {
  int stage = 1;
  int epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> perplexity;
  std::optional<double> compliance;
};

struct TrainReport {
  bool non_private = false;
  double epsilon_target = 0.0;
  double delta = 0.0;
  double clip_norm = 0.0;
  double sample_rate = 0.0;
  double noise_multiplier = 0.0;
  std::size_t planned_steps = 0;
  std::size_t steps_taken = 0;
  double spent_epsilon = 0.0;
  double max_clipped_norm = 0.0;
  bool stopped_early = false;
  std::string stop_reason;
  std::vector<EpochStats> epochs;

  std::string to_json() const;
};

struct TrainObserver {
  // Rows fed to each stage-1 batch.
  std::function<void(const std::vector<Record>&)> on_stage1_batch;
  // After each stage-2 step: step index, post-clip norms, ledger epsilon.
  std::function<void(std::size_t, const std::vector<double>&, double)> on_stage2_step;
};

struct TrainResult {
  Model model;
  Vocab vocab;
  PrivacyLedger ledger;
  TrainReport report;
};

// Continues training from a checkpoint: stage 1 is skipped and the ledger is
// extended, never reset.
struct ResumeState {
  Model model;
  PrivacyLedger ledger;
};

// Throws PrivacyError when the remaining budget cannot cover the run and
// InputError for sentences longer than the context.
TrainResult two_stage_finetune(const Schema& schema, const Table& train, const TrainConfig& config,
                               const std::vector<Record>* heldout = nullptr, const TrainObserver* observer = nullptr,
                               const ResumeState* resume = nullptr);

}  // namespace dptab

#endif  // DPTAB_DP_TRAINER_HPP_

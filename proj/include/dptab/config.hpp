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

// Run configuration: flat "section.key = value" text, comments start with
// '#'. Command-line flags are applied on top with the same keys.

#ifndef DPTAB_CONFIG_HPP_
#define DPTAB_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "dptab/dp_trainer.hpp"
#include "dptab/sampler.hpp"

namespace dptab {

struct EvalSettings {
  std::size_t max_k = 5;
  std::size_t max_subsets = 2000;
  std::size_t bins = 20;
  std::size_t dcr_bins = 50;
  std::size_t folds = 5;
  bool full_grid = false;
};

struct RunConfig {
  std::string data_csv;
  std::string schema_path;
  std::string train_csv;
  std::string test_csv;
  std::string output_dir;
  std::string synthetic_csv;
  std::string checkpoint;
  std::string target;
  std::string sensitive;
  double train_fraction = 0.8;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;
  TrainConfig train;
  PromptSpec prompt;
  std::size_t sample_n = 0;  // 0: size of the training table
  EvalSettings eval;

  // Throws InputError for unknown keys or malformed values.
  void set(std::string_view key, std::string_view value);
  // Every non-path setting as sorted "key=value" lines.
  std::string canonical() const;
  // FNV-1a over canonical(), 16 hex digits.
  std::string hash() const;
  std::uint64_t require_seed() const;
};

// Default configuration: the shipped hyperparameters.
RunConfig default_run_config();

std::map<std::string, std::string> parse_config_text(std::string_view text);
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

}  // namespace dptab

#endif  // DPTAB_CONFIG_HPP_

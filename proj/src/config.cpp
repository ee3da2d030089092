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

#include "dptab/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace dptab {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad(std::string_view key, std::string_view value, std::string_view want) {
  throw InputError("config key " + std::string(key) + ": \"" + std::string(value) + "\" is not " + std::string(want));
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad(key, v, "a number");
  return out;
}

std::uint64_t to_unsigned(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad(key, v, "a non-negative integer");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad(key, v, "a boolean");
}

std::string num(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

struct Entry {
  std::string key;
  bool path = false;  // excluded from the hash
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define DPTAB_STR(KEY, FIELD, PATH)                                                     \
  Entry {                                                                               \
    KEY, PATH, [](RunConfig& c, std::string_view v) { c.FIELD = std::string(v); },      \
        [](const RunConfig& c) { return c.FIELD; }                                      \
  }
#define DPTAB_NUM(KEY, FIELD)                                                                       \
  Entry {                                                                                           \
    KEY, false, [](RunConfig& c, std::string_view v) { c.FIELD = to_double(KEY, v); },              \
        [](const RunConfig& c) { return num(static_cast<double>(c.FIELD)); }                        \
  }
#define DPTAB_INT(KEY, FIELD)                                                                       \
  Entry {                                                                                           \
    KEY, false,                                                                                     \
        [](RunConfig& c, std::string_view v) { c.FIELD = static_cast<decltype(c.FIELD)>(to_unsigned(KEY, v)); }, \
        [](const RunConfig& c) { return std::to_string(c.FIELD); }                                  \
  }
#define DPTAB_BOOL(KEY, FIELD)                                                                      \
  Entry {                                                                                           \
    KEY, false, [](RunConfig& c, std::string_view v) { c.FIELD = to_bool(KEY, v); },                \
        [](const RunConfig& c) { return std::string(c.FIELD ? "true" : "false"); }                 \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      DPTAB_STR("data.csv", data_csv, true),
      DPTAB_STR("data.schema", schema_path, true),
      DPTAB_STR("data.train", train_csv, true),
      DPTAB_STR("data.test", test_csv, true),
      DPTAB_STR("output.dir", output_dir, true),
      DPTAB_STR("data.synthetic", synthetic_csv, true),
      DPTAB_STR("data.checkpoint", checkpoint, true),
      DPTAB_STR("data.target", target, false),
      DPTAB_STR("data.sensitive", sensitive, false),
      DPTAB_NUM("prepare.train_fraction", train_fraction),
      Entry{"seed", false, [](RunConfig& c, std::string_view v) { c.seed = to_unsigned("seed", v); },
            [](const RunConfig& c) { return c.seed ? std::to_string(*c.seed) : std::string("unset"); }},
      Entry{"workers", true, [](RunConfig& c, std::string_view v) { c.workers = to_unsigned("workers", v); },
            [](const RunConfig& c) { return std::to_string(c.workers); }},
      DPTAB_INT("model.context_length", train.model.context_length),
      DPTAB_INT("model.embed_dim", train.model.embed_dim),
      DPTAB_INT("model.num_layers", train.model.num_layers),
      DPTAB_INT("model.num_heads", train.model.num_heads),
      DPTAB_INT("model.ffn_dim", train.model.ffn_dim),
      DPTAB_NUM("model.dropout", train.model.dropout_prob),
      DPTAB_INT("model.adapter_rank", train.model.adapter_rank),
      DPTAB_INT("stage1.epochs", train.stage1.epochs),
      DPTAB_NUM("stage1.learning_rate", train.stage1.learning_rate),
      DPTAB_INT("stage1.batch_size", train.stage1.batch_size),
      DPTAB_INT("stage1.random_rows", train.random_rows),
      DPTAB_INT("stage2.epochs", train.stage2.epochs),
      DPTAB_NUM("stage2.learning_rate", train.stage2.learning_rate),
      DPTAB_INT("stage2.batch_size", train.stage2.batch_size),
      DPTAB_NUM("privacy.epsilon", train.privacy.epsilon_target),
      DPTAB_NUM("privacy.delta", train.privacy.delta),
      DPTAB_NUM("privacy.clip_norm", train.privacy.clip_norm),
      Entry{"privacy.noise_multiplier", false,
            [](RunConfig& c, std::string_view v) {
              if (v == "auto") {
                c.train.privacy.noise_multiplier.reset();
              } else {
                c.train.privacy.noise_multiplier = to_double("privacy.noise_multiplier", v);
              }
            },
            [](const RunConfig& c) {
              return c.train.privacy.noise_multiplier ? num(*c.train.privacy.noise_multiplier) : std::string("auto");
            }},
      DPTAB_BOOL("privacy.non_private", train.privacy.non_private),
      DPTAB_NUM("loss.alpha", train.loss.alpha),
      DPTAB_NUM("loss.beta", train.loss.beta),
      Entry{"loss.lambda_mode", false,
            [](RunConfig& c, std::string_view v) {
              if (v == "range") {
                c.train.lambda_mode = LambdaMode::range;
              } else if (v == "std") {
                c.train.lambda_mode = LambdaMode::uniform_std;
              } else if (v.starts_with("fixed:")) {
                c.train.lambda_mode = LambdaMode::fixed;
                c.train.lambda_fixed = to_double("loss.lambda_mode", v.substr(6));
              } else {
                bad("loss.lambda_mode", v, "range, std or fixed:<value>");
              }
            },
            [](const RunConfig& c) {
              switch (c.train.lambda_mode) {
                case LambdaMode::range:
                  return std::string("range");
                case LambdaMode::uniform_std:
                  return std::string("std");
                case LambdaMode::fixed:
                  break;
              }
              return "fixed:" + num(c.train.lambda_fixed);
            }},
      Entry{"loss.nul_mode", false,
            [](RunConfig& c, std::string_view v) {
              if (v == "soft_digit") {
                c.train.loss.nul_mode = NulMode::soft_digit;
              } else if (v == "reinforce") {
                c.train.loss.nul_mode = NulMode::reinforce;
              } else {
                bad("loss.nul_mode", v, "soft_digit or reinforce");
              }
            },
            [](const RunConfig& c) {
              return std::string(c.train.loss.nul_mode == NulMode::soft_digit ? "soft_digit" : "reinforce");
            }},
      DPTAB_BOOL("train.single_stage", train.single_stage),
      DPTAB_INT("train.probe_samples", train.probe_samples),
      DPTAB_NUM("train.probe_temperature", train.probe_temperature),
      DPTAB_INT("sample.n", sample_n),
      DPTAB_NUM("sample.temperature", prompt.temperature),
      DPTAB_INT("sample.retries", prompt.max_retries_per_row),
      DPTAB_INT("eval.max_k", eval.max_k),
      DPTAB_INT("eval.max_subsets", eval.max_subsets),
      DPTAB_INT("eval.bins", eval.bins),
      DPTAB_INT("eval.dcr_bins", eval.dcr_bins),
      DPTAB_INT("eval.folds", eval.folds),
      DPTAB_BOOL("eval.full_grid", eval.full_grid),
  };
  return table;
}

#undef DPTAB_STR
#undef DPTAB_NUM
#undef DPTAB_INT
#undef DPTAB_BOOL

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  for (const Entry& e : entries()) {
    if (e.key == key) {
      e.set(*this, value);
      return;
    }
  }
  throw InputError("unknown config key \"" + std::string(key) + "\"");
}

std::string RunConfig::canonical() const {
  std::map<std::string, std::string> sorted;
  for (const Entry& e : entries()) {
    if (!e.path) sorted[e.key] = e.get(*this);
  }
  std::string out;
  for (const auto& [k, v] : sorted) out += k + "=" + v + "\n";
  return out;
}

std::string RunConfig::hash() const {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t RunConfig::require_seed() const {
  if (!seed) throw InputError("a seed is required (set seed in the config or pass --seed)");
  return *seed;
}

RunConfig default_run_config() { return RunConfig{}; }

std::map<std::string, std::string> parse_config_text(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const std::size_t hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw InputError("config line " + std::to_string(line_no) + " has no '='");
    }
    out[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
  }
  return out;
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  for (const auto& [k, v] : parse_config_text(buffer.str())) config.set(k, v);
}

}  // namespace dptab

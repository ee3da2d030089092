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

// Binary checkpoint: "DPTABCKP", u32 version, u64 header length, JSON header
// (model config, vocab, schema, privacy ledger, parameter layout, free-form
// metadata), little-endian float32 parameters, u32 crc32 of everything before.

#ifndef DPTAB_CHECKPOINT_HPP_
#define DPTAB_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <string>

#include "dptab/accountant.hpp"
#include "dptab/schema.hpp"
#include "dptab/tokenizer.hpp"
#include "dptab/transformer.hpp"

namespace dptab {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public Error {
 public:
  using Error::Error;
};

struct Checkpoint {
  Model model;
  Vocab vocab;
  Schema schema;
  PrivacyLedger ledger;
  std::string metadata = "{}";  // JSON object, e.g. privacy target and report
};

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace dptab

#endif  // DPTAB_CHECKPOINT_HPP_

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

#include "dptab/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace dptab {
namespace {

using Json = nlohmann::ordered_json;

constexpr char kMagic[8] = {'D', 'P', 'T', 'A', 'B', 'C', 'K', 'P'};

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

template <typename T>
void put(std::string& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.append(bytes, sizeof(T));
}

template <typename T>
T get(const std::string& in, std::size_t& at) {
  if (at + sizeof(T) > in.size()) throw CheckpointError("checkpoint is truncated");
  T value;
  std::memcpy(&value, in.data() + at, sizeof(T));
  at += sizeof(T);
  return value;
}

std::uint32_t crc(const char* data, std::size_t n) {
  uLong c = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    c = crc32(c, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

Json config_json(const ModelConfig& c) {
  return Json{{"vocab_size", c.vocab_size}, {"context_length", c.context_length}, {"embed_dim", c.embed_dim},
              {"num_layers", c.num_layers}, {"num_heads", c.num_heads},           {"ffn_dim", c.ffn_dim},
              {"dropout_prob", c.dropout_prob}, {"adapter_rank", c.adapter_rank}};
}

ModelConfig config_from(const Json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.context_length = j.at("context_length").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.num_layers = j.at("num_layers").get<int>();
  c.num_heads = j.at("num_heads").get<int>();
  c.ffn_dim = j.at("ffn_dim").get<int>();
  c.dropout_prob = j.at("dropout_prob").get<double>();
  c.adapter_rank = j.at("adapter_rank").get<int>();
  c.validate();
  return c;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& config) { return config_json(config).dump(); }

ModelConfig model_config_from_json(const std::string& text) { return config_from(Json::parse(text)); }

std::string serialize_checkpoint(const Checkpoint& ck) {
  const Model& model = ck.model;
  if (static_cast<std::size_t>(model.config().vocab_size) != ck.vocab.size()) {
    throw CheckpointError("model vocab_size does not match the vocabulary");
  }
  Json header;
  header["config"] = config_json(model.config());
  header["vocab"] = ck.vocab.tokens();
  header["schema"] = Json::parse(schema_to_json(ck.schema));
  header["ledger"] = Json::parse(ck.ledger.to_json());
  Json layout = Json::array();
  for (const ParamSlot& s : model.layout().slots()) layout.push_back({s.name, s.rows, s.cols});
  header["layout"] = std::move(layout);
  header["metadata"] = Json::parse(ck.metadata);
  const std::string text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out += text;
  put<std::uint64_t>(out, static_cast<std::uint64_t>(model.num_params()));
  out.append(reinterpret_cast<const char*>(model.params().data()),
             static_cast<std::size_t>(model.num_params()) * sizeof(float));
  put<std::uint32_t>(out, crc(out.data(), out.size()));
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("not a dptab checkpoint");
  }
  std::size_t at = sizeof(kMagic);
  const auto version = get<std::uint32_t>(bytes, at);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  if (bytes.size() < at + sizeof(std::uint32_t)) throw CheckpointError("checkpoint is truncated");
  std::size_t tail = bytes.size() - sizeof(std::uint32_t);
  const auto stored = get<std::uint32_t>(bytes, tail);
  if (stored != crc(bytes.data(), bytes.size() - sizeof(std::uint32_t))) {
    throw CheckpointError("checkpoint checksum mismatch (file is truncated or corrupt)");
  }
  const auto header_len = get<std::uint64_t>(bytes, at);
  if (at + header_len > bytes.size()) throw CheckpointError("checkpoint is truncated");
  Checkpoint ck;
  Json header;
  try {
    header = Json::parse(bytes.substr(at, header_len));
    at += header_len;
    const ModelConfig config = config_from(header.at("config"));
    ck.vocab = Vocab(header.at("vocab").get<std::vector<std::string>>());
    ck.schema = schema_from_json(header.at("schema").dump());
    ck.ledger = PrivacyLedger::from_json(header.at("ledger").dump());
    ck.metadata = header.at("metadata").dump();
    const auto n = get<std::uint64_t>(bytes, at);
    ParamLayout layout(config);
    if (n != static_cast<std::uint64_t>(layout.total())) throw CheckpointError("parameter count mismatch");
    if (at + n * sizeof(float) + sizeof(std::uint32_t) != bytes.size()) {
      throw CheckpointError("checkpoint parameter block has the wrong size");
    }
    Model::Vec params(static_cast<Eigen::Index>(n));
    std::memcpy(params.data(), bytes.data() + at, n * sizeof(float));
    ck.model = Model(config, std::move(params));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
  }
  if (static_cast<std::size_t>(ck.model.config().vocab_size) != ck.vocab.size()) {
    throw CheckpointError("checkpoint vocabulary does not match the model");
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const std::string bytes = serialize_checkpoint(checkpoint);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("cannot write checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return deserialize_checkpoint(buffer.str());
}

}  // namespace dptab

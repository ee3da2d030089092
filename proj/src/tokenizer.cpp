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

#include "dptab/tokenizer.hpp"

#include <cctype>

namespace dptab {
namespace {

constexpr std::string_view kDigits = "0123456789";

bool is_numeric_char_token(const std::string& text) {
  return text.size() == 1 && (std::isdigit(static_cast<unsigned char>(text[0])) || text[0] == '.' ||
                              text[0] == '-');
}

}  // namespace

int NumericTokens::digit_value(TokenId id) const {
  for (int d = 0; d < 10; ++d) {
    if (digit[static_cast<std::size_t>(d)] == id) return d;
  }
  return -1;
}

char NumericTokens::character(TokenId id) const {
  if (int d = digit_value(id); d >= 0) return static_cast<char>('0' + d);
  if (id == point) return '.';
  if (id == minus) return '-';
  return '\0';
}

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 3 || tokens_[kBos] != kBosText || tokens_[kEos] != kEosText ||
      tokens_[kPad] != kPadText) {
    throw Error("vocabulary must start with the reserved tokens");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw Error("vocabulary repeats token \"" + tokens_[i] + "\"");
    }
  }
  is_ = id("is");
  comma_ = id(",");
  for (std::size_t d = 0; d < 10; ++d) numeric_.digit[d] = id(kDigits.substr(d, 1));
  numeric_.point = id(".");
  numeric_.minus = id("-");
}

std::optional<TokenId> Vocab::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocab::id(std::string_view token) const {
  if (auto found = find(token)) return *found;
  throw Error("token \"" + std::string(token) + "\" is not in the vocabulary");
}

Vocab build_vocab(const Schema& schema) {
  schema.validate();
  std::vector<std::string> tokens{std::string(Vocab::kBosText), std::string(Vocab::kEosText),
                                  std::string(Vocab::kPadText), "is", ","};
  for (char d : kDigits) tokens.emplace_back(1, d);
  tokens.emplace_back(".");
  tokens.emplace_back("-");
  std::unordered_map<std::string, bool> present;
  for (const auto& t : tokens) present[t] = true;
  auto add = [&](const std::string& t) {
    if (present.emplace(t, true).second) tokens.push_back(t);
  };
  for (const auto& f : schema.features) add(f.name);
  for (const auto& f : schema.features) {
    for (const auto& c : f.categories) add(c);
  }
  return Vocab(std::move(tokens));
}

TokenizedExample tokenize(std::string_view text, const Vocab& vocab, const Schema& schema) {
  auto decoded = decode_text(text, schema);
  if (auto* error = std::get_if<DecodeError>(&decoded)) {
    throw Error("cannot tokenize \"" + std::string(text) + "\": " +
                std::string(to_string(error->kind)) + " (" + error->subject + ")");
  }
  auto split = split_clauses(text, schema);
  if (auto* error = std::get_if<DecodeError>(&split)) {
    throw Error("cannot tokenize \"" + std::string(text) + "\": " +
                std::string(to_string(error->kind)) + " (" + error->subject + ")");
  }
  TokenizedExample example;
  auto push = [&](TokenId id, bool format) {
    example.ids.push_back(id);
    example.format_mask.push_back(format);
  };
  push(Vocab::kBos, true);
  bool first = true;
  for (const Clause& clause : std::get<std::vector<Clause>>(split)) {
    const FeatureSpec& spec = schema.features[clause.feature];
    if (!first) push(vocab.comma(), true);
    first = false;
    push(vocab.id(spec.name), true);
    push(vocab.is_token(), true);
    auto cell = parse_value(clause.value, spec);
    if (auto* error = std::get_if<DecodeError>(&cell)) {
      throw Error("cannot tokenize value \"" + std::string(clause.value) + "\" of feature \"" +
                  spec.name + "\": " + std::string(to_string(error->kind)));
    }
    if (spec.is_categorical()) {
      push(vocab.id(clause.value), false);
    } else {
      NumericSpan span;
      span.start = example.ids.size();
      for (char c : clause.value) push(vocab.id(std::string_view(&c, 1)), false);
      span.end = example.ids.size() - 1;
      span.value = std::get<Cell>(cell).number;
      span.feature = clause.feature;
      example.numeric_spans.push_back(span);
    }
  }
  push(Vocab::kEos, true);
  return example;
}

TokenizedExample tokenize_record(const Record& record, const Schema& schema,
                                 std::span<const std::size_t> permutation, const Vocab& vocab) {
  return tokenize(encode_record(record, schema, permutation), vocab, schema);
}

std::string detokenize(std::span<const TokenId> ids, const Vocab& vocab) {
  std::string text;
  const std::string* previous = nullptr;
  for (TokenId id : ids) {
    if (id == Vocab::kBos || id == Vocab::kEos || id == Vocab::kPad) continue;
    const std::string& token = vocab.text(id);
    if (previous) {
      bool adjoin = token == "," ||
                    (is_numeric_char_token(*previous) && is_numeric_char_token(token));
      if (!adjoin) text.push_back(' ');
    }
    text += token;
    previous = &token;
  }
  return text;
}

}  // namespace dptab

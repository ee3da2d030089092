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

#ifndef DPTAB_TOKENIZER_HPP_
#define DPTAB_TOKENIZER_HPP_

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dptab/schema.hpp"

namespace dptab {

using TokenId = int;

// Ids of the characters numbers are spelled with. Losses only need this
// mapping, not a whole Vocab.
struct NumericTokens {
  std::array<TokenId, 10> digit{};
  TokenId point = -1;
  TokenId minus = -1;

  // Digit value of `id`, or -1.
  int digit_value(TokenId id) const;
  // The character `id` spells ('0'-'9', '.', '-'), or '\0'.
  char character(TokenId id) const;
};

class Vocab {
 public:
  static constexpr TokenId kBos = 0;
  static constexpr TokenId kEos = 1;
  static constexpr TokenId kPad = 2;
  static constexpr std::string_view kBosText = "<bos>";
  static constexpr std::string_view kEosText = "<eos>";
  static constexpr std::string_view kPadText = "<pad>";

  Vocab() = default;
  // Rebuilds from a serialized token list; the first three must be the
  // reserved tokens.
  explicit Vocab(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& text(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::optional<TokenId> find(std::string_view token) const;
  TokenId id(std::string_view token) const;  // throws Error when absent

  TokenId is_token() const { return is_; }
  TokenId comma() const { return comma_; }
  const NumericTokens& numeric() const { return numeric_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  TokenId is_ = -1;
  TokenId comma_ = -1;
  NumericTokens numeric_;
};

// Reserved tokens, "is", ",", the digits, ".", "-", then one atomic token per
// feature name and per distinct categorical value.
Vocab build_vocab(const Schema& schema);

struct NumericSpan {
  std::size_t start = 0;  // inclusive positions in TokenizedExample::ids
  std::size_t end = 0;
  double value = 0.0;
  std::size_t feature = 0;  // schema index, selects the error scale
};

struct TokenizedExample {
  std::vector<TokenId> ids;         // BOS ... EOS
  std::vector<bool> format_mask;    // true: structural token, false: tabular value token
  std::vector<NumericSpan> numeric_spans;

  std::size_t size() const { return ids.size(); }
};

// Exact tokenization of a sentence produced by encode_record. Throws Error
// when the text does not decode or uses a token missing from `vocab`.
TokenizedExample tokenize(std::string_view text, const Vocab& vocab, const Schema& schema);
TokenizedExample tokenize_record(const Record& record, const Schema& schema,
                                 std::span<const std::size_t> permutation, const Vocab& vocab);

// Joins token texts back into a sentence, skipping reserved tokens. Numeric
// characters adjoin each other, commas attach to the left, everything else is
// space separated.
std::string detokenize(std::span<const TokenId> ids, const Vocab& vocab);

}  // namespace dptab

#endif  // DPTAB_TOKENIZER_HPP_

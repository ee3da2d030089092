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

// Dataset schema, CSV ingestion, splitting, random tables, and the
// "{name} is {value}, ..." text codec.

#ifndef DPTAB_SCHEMA_HPP_
#define DPTAB_SCHEMA_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace dptab {

class Rng;

// Base class of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed user input: schema, CSV contents, config values.
class InputError : public Error {
 public:
  using Error::Error;
};

enum class FeatureKind { categorical, numerical };

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::categorical;
  std::vector<std::string> categories;  // categorical only
  double min = 0.0;                     // numerical only
  double max = 0.0;
  int decimals = 0;

  static FeatureSpec categorical(std::string name, std::vector<std::string> categories);
  static FeatureSpec numerical(std::string name, double min, double max, int decimals);

  bool is_categorical() const { return kind == FeatureKind::categorical; }
  bool is_numerical() const { return kind == FeatureKind::numerical; }
  std::optional<int> category_index(std::string_view value) const;
};

struct Schema {
  std::vector<FeatureSpec> features;
  std::string target_feature;  // empty when unset
  std::optional<std::string> sensitive_feature;

  // Throws InputError describing the first violated invariant.
  void validate() const;

  std::size_t size() const { return features.size(); }
  std::optional<std::size_t> find(std::string_view name) const;
  // Throws InputError for unknown names.
  std::size_t index_of(std::string_view name) const;
  const FeatureSpec& feature(std::string_view name) const { return features[index_of(name)]; }
};

// One table cell. Categorical cells hold an index into FeatureSpec::categories,
// numerical cells a value that is exactly representable with the feature's
// declared number of fractional digits.
struct Cell {
  int category = -1;
  double number = 0.0;

  static Cell of_category(int index) { return Cell{index, 0.0}; }
  static Cell of_number(double value) { return Cell{-1, value}; }
  bool operator==(const Cell&) const = default;
};

// A row; cells[i] belongs to schema feature i.
struct Record {
  std::vector<Cell> cells;
  bool operator==(const Record&) const = default;
};

struct Table {
  Schema schema;
  std::vector<Record> rows;

  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }
  // Throws InputError naming the first offending row and feature.
  void validate() const;
};

// Fixed-point rendering with exactly `decimals` fractional digits.
std::string format_number(double value, int decimals);
// Rounds to `decimals` digits the same way format_number does.
double canonical_number(double value, int decimals);
// Accepts -?[0-9]+(\.[0-9]+)? only. Sets *fraction_digits when given.
std::optional<double> parse_number(std::string_view text, int* fraction_digits = nullptr);
std::string render_value(const Cell& cell, const FeatureSpec& spec);
bool cell_conforms(const Cell& cell, const FeatureSpec& spec);

// --- CSV -------------------------------------------------------------------

Table load_csv(const std::filesystem::path& path, const Schema& schema);
Table read_csv(std::istream& in, const Schema& schema);
// `provenance` (when non-empty) is written as a leading "# ..." comment line;
// readers skip such lines.
void write_csv(std::ostream& out, const Table& table, std::string_view provenance = {});
void save_csv(const std::filesystem::path& path, const Table& table, std::string_view provenance = {});

// Raw header + string cells, used for schema inference.
struct RawCsv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};
RawCsv read_raw_csv(std::istream& in);
RawCsv load_raw_csv(const std::filesystem::path& path);

// Columns whose every cell parses as a number become numerical with range and
// precision taken from the data (precision capped at 6 digits); the rest
// become categorical with sorted categories. An empty `target` selects the
// last column.
Schema infer_schema(const RawCsv& csv, std::string_view target = {},
                    std::optional<std::string> sensitive = std::nullopt);

std::string schema_to_json(const Schema& schema);
Schema schema_from_json(std::string_view text);
Schema load_schema(const std::filesystem::path& path);
void save_schema(const std::filesystem::path& path, const Schema& schema);

// --- Sampling of tables ------------------------------------------------------

// Uniformly shuffled disjoint partition; the first floor(n * train_fraction)
// shuffled rows form the training table.
std::pair<Table, Table> split_train_test(const Table& table, double train_fraction,
                                         std::uint64_t seed);

// Cells drawn independently: categories uniformly, numbers uniformly over the
// multiples of 10^-decimals inside [min, max].
Table generate_random_table(const Schema& schema, std::size_t n, std::uint64_t seed);
Table generate_random_table(const Schema& schema, std::size_t n, Rng& rng);

// --- Text codec ----------------------------------------------------------------

using Permutation = std::vector<std::size_t>;
Permutation identity_permutation(std::size_t n);
Permutation random_permutation(std::size_t n, Rng& rng);

std::string encode_record(const Record& record, const Schema& schema,
                          std::span<const std::size_t> permutation);

enum class DecodeErrorKind {
  missing_feature,
  duplicate_feature,
  unknown_clause,
  invalid_category,
  unparseable_number,
  number_out_of_range,
};
inline constexpr std::size_t kDecodeErrorKinds = 6;
std::string_view to_string(DecodeErrorKind kind);

struct DecodeError {
  DecodeErrorKind kind;
  std::string subject;  // feature name, or the clause text for unknown_clause
  bool operator==(const DecodeError&) const = default;
};

struct Clause {
  std::size_t feature;
  std::string_view value;
};

// Splits "{name} is {value}, ..." into clauses. A ", " only separates clauses
// when followed by a known feature name and " is".
std::variant<std::vector<Clause>, DecodeError> split_clauses(std::string_view text,
                                                             const Schema& schema);
std::variant<Cell, DecodeError> parse_value(std::string_view value, const FeatureSpec& spec);
std::variant<Record, DecodeError> decode_text(std::string_view text, const Schema& schema);

}  // namespace dptab

#endif  // DPTAB_SCHEMA_HPP_

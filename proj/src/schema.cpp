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

#include "dptab/schema.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "dptab/rng.hpp"
#include "json.hpp"

namespace dptab {
namespace {

constexpr int kMaxDecimals = 9;
constexpr int kInferredDecimalsCap = 6;

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string row_feature(std::size_t row, std::string_view feature) {
  return "row " + std::to_string(row) + ", feature \"" + std::string(feature) + "\"";
}

// Splits one CSV line; double-quoted cells may contain commas and "" escapes.
std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.emplace_back(trim(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  cells.emplace_back(trim(cell));
  return cells;
}

std::string csv_escape(std::string_view cell) {
  if (cell.find_first_of(",\"") == std::string_view::npos) return std::string(cell);
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

bool read_data_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line.front() == '#') continue;
    return true;
  }
  return false;
}

double pow10(int decimals) {
  double scale = 1.0;
  for (int i = 0; i < decimals; ++i) scale *= 10.0;
  return scale;
}

// True when `text` at `pos` starts a clause head "{name} is" followed by a
// space or the end of the text. Returns the longest matching feature.
std::optional<std::size_t> clause_head_at(std::string_view text, std::size_t pos,
                                          const Schema& schema) {
  std::optional<std::size_t> best;
  std::size_t best_len = 0;
  for (std::size_t f = 0; f < schema.features.size(); ++f) {
    const std::string& name = schema.features[f].name;
    std::string_view rest = text.substr(pos);
    if (!rest.starts_with(name)) continue;
    rest.remove_prefix(name.size());
    if (!rest.starts_with(" is")) continue;
    rest.remove_prefix(3);
    if (!rest.empty() && rest.front() != ' ') continue;
    if (!best || name.size() > best_len) {
      best = f;
      best_len = name.size();
    }
  }
  return best;
}

// Position of the first ", " at or after `from` that begins a new clause.
std::size_t next_boundary(std::string_view text, std::size_t from, const Schema& schema) {
  std::size_t pos = from;
  while ((pos = text.find(", ", pos)) != std::string_view::npos) {
    if (clause_head_at(text, pos + 2, schema)) return pos;
    ++pos;
  }
  return std::string_view::npos;
}

}  // namespace

// --- FeatureSpec / Schema ------------------------------------------------------

FeatureSpec FeatureSpec::categorical(std::string name, std::vector<std::string> categories) {
  FeatureSpec spec;
  spec.name = std::move(name);
  spec.kind = FeatureKind::categorical;
  spec.categories = std::move(categories);
  return spec;
}

FeatureSpec FeatureSpec::numerical(std::string name, double min, double max, int decimals) {
  FeatureSpec spec;
  spec.name = std::move(name);
  spec.kind = FeatureKind::numerical;
  spec.min = min;
  spec.max = max;
  spec.decimals = decimals;
  return spec;
}

std::optional<int> FeatureSpec::category_index(std::string_view value) const {
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (categories[i] == value) return static_cast<int>(i);
  }
  return std::nullopt;
}

void Schema::validate() const {
  if (features.empty()) throw InputError("schema has no features");
  std::unordered_set<std::string> names;
  for (const auto& f : features) {
    if (f.name.empty()) throw InputError("schema has a feature with an empty name");
    if (trim(f.name) != f.name || f.name.find(',') != std::string::npos ||
        f.name.find('\n') != std::string::npos) {
      throw InputError("feature name \"" + f.name +
                       "\" must not contain commas, newlines, or surrounding spaces");
    }
    if (!names.insert(f.name).second) throw InputError("duplicate feature name \"" + f.name + "\"");
  }
  for (const auto& f : features) {
    if (f.is_categorical()) {
      if (f.categories.empty()) {
        throw InputError("categorical feature \"" + f.name + "\" has no categories");
      }
      std::unordered_set<std::string> seen;
      for (const auto& c : f.categories) {
        if (c.empty() || trim(c) != c || c.find('\n') != std::string::npos) {
          throw InputError("feature \"" + f.name + "\" has an empty or space-padded category");
        }
        if (!seen.insert(c).second) {
          throw InputError("feature \"" + f.name + "\" repeats category \"" + c + "\"");
        }
        // A category must never look like a clause boundary.
        for (std::size_t pos = c.find(", "); pos != std::string::npos; pos = c.find(", ", pos + 1)) {
          std::string probe = c.substr(pos + 2) + " ";
          if (clause_head_at(probe, 0, *this)) {
            throw InputError("category \"" + c + "\" of feature \"" + f.name +
                             "\" collides with the clause delimiter");
          }
        }
      }
    } else {
      if (!f.categories.empty()) {
        throw InputError("numerical feature \"" + f.name + "\" must not list categories");
      }
      if (!std::isfinite(f.min) || !std::isfinite(f.max) || f.min > f.max) {
        throw InputError("numerical feature \"" + f.name + "\" needs finite min <= max");
      }
      if (f.decimals < 0 || f.decimals > kMaxDecimals) {
        throw InputError("numerical feature \"" + f.name + "\" has decimals outside [0, 9]");
      }
      double scale = pow10(f.decimals);
      if (std::ceil(f.min * scale - 1e-9) > std::floor(f.max * scale + 1e-9)) {
        throw InputError("numerical feature \"" + f.name +
                         "\" has no representable value in its range");
      }
    }
  }
  if (!target_feature.empty() && !find(target_feature)) {
    throw InputError("target feature \"" + target_feature + "\" is not in the schema");
  }
  if (sensitive_feature && !find(*sensitive_feature)) {
    throw InputError("sensitive feature \"" + *sensitive_feature + "\" is not in the schema");
  }
}

std::optional<std::size_t> Schema::find(std::string_view name) const {
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t Schema::index_of(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw InputError("unknown feature \"" + std::string(name) + "\"");
}

// --- Values ------------------------------------------------------------------

std::string format_number(double value, int decimals) {
  char buf[64];
  int n = std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
  std::string out(buf, static_cast<std::size_t>(n));
  // "-0.00" renders as "0.00".
  if (out.front() == '-' && out.find_first_not_of("-0.") == std::string::npos) out.erase(0, 1);
  return out;
}

double canonical_number(double value, int decimals) {
  return *parse_number(format_number(value, decimals));
}

std::optional<double> parse_number(std::string_view text, int* fraction_digits) {
  std::size_t i = 0;
  if (i < text.size() && text[i] == '-') ++i;
  std::size_t int_start = i;
  while (i < text.size() && text[i] >= '0' && text[i] <= '9') ++i;
  if (i == int_start) return std::nullopt;
  int frac = 0;
  if (i < text.size() && text[i] == '.') {
    ++i;
    std::size_t frac_start = i;
    while (i < text.size() && text[i] >= '0' && text[i] <= '9') ++i;
    if (i == frac_start) return std::nullopt;
    frac = static_cast<int>(i - frac_start);
  }
  if (i != text.size()) return std::nullopt;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  if (value == 0.0) value = 0.0;  // drop the sign of -0
  if (fraction_digits) *fraction_digits = frac;
  return value;
}

std::string render_value(const Cell& cell, const FeatureSpec& spec) {
  if (spec.is_categorical()) return spec.categories.at(static_cast<std::size_t>(cell.category));
  return format_number(cell.number, spec.decimals);
}

bool cell_conforms(const Cell& cell, const FeatureSpec& spec) {
  if (spec.is_categorical()) {
    return cell.category >= 0 && static_cast<std::size_t>(cell.category) < spec.categories.size();
  }
  return std::isfinite(cell.number) && cell.number >= spec.min && cell.number <= spec.max &&
         canonical_number(cell.number, spec.decimals) == cell.number;
}

void Table::validate() const {
  schema.validate();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].cells.size() != schema.size()) {
      throw InputError("row " + std::to_string(r + 1) + " has " +
                       std::to_string(rows[r].cells.size()) + " cells, schema has " +
                       std::to_string(schema.size()));
    }
    for (std::size_t f = 0; f < schema.size(); ++f) {
      if (!cell_conforms(rows[r].cells[f], schema.features[f])) {
        throw InputError(row_feature(r + 1, schema.features[f].name) +
                         ": value does not conform to the schema");
      }
    }
  }
}

// --- CSV -------------------------------------------------------------------

RawCsv read_raw_csv(std::istream& in) {
  RawCsv csv;
  std::string line;
  if (!read_data_line(in, line)) throw InputError("CSV input is empty");
  csv.header = split_csv_line(line);
  while (read_data_line(in, line)) {
    auto cells = split_csv_line(line);
    if (cells.size() != csv.header.size()) {
      throw InputError("row " + std::to_string(csv.rows.size() + 1) + " has " +
                       std::to_string(cells.size()) + " cells, header has " +
                       std::to_string(csv.header.size()));
    }
    csv.rows.push_back(std::move(cells));
  }
  return csv;
}

RawCsv load_raw_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return read_raw_csv(in);
}

Table read_csv(std::istream& in, const Schema& schema) {
  schema.validate();
  RawCsv raw = read_raw_csv(in);
  std::vector<std::size_t> column_of(schema.size(), raw.header.size());
  for (std::size_t c = 0; c < raw.header.size(); ++c) {
    auto f = schema.find(raw.header[c]);
    if (!f) throw InputError("CSV header has unknown column \"" + raw.header[c] + "\"");
    if (column_of[*f] != raw.header.size()) {
      throw InputError("CSV header repeats column \"" + raw.header[c] + "\"");
    }
    column_of[*f] = c;
  }
  for (std::size_t f = 0; f < schema.size(); ++f) {
    if (column_of[f] == raw.header.size()) {
      throw InputError("CSV header is missing feature \"" + schema.features[f].name + "\"");
    }
  }

  Table table{schema, {}};
  table.rows.reserve(raw.rows.size());
  for (std::size_t r = 0; r < raw.rows.size(); ++r) {
    Record record;
    record.cells.reserve(schema.size());
    for (std::size_t f = 0; f < schema.size(); ++f) {
      const FeatureSpec& spec = schema.features[f];
      const std::string& text = raw.rows[r][column_of[f]];
      if (spec.is_categorical()) {
        auto index = spec.category_index(text);
        if (!index) {
          throw InputError(row_feature(r + 1, spec.name) + ": category \"" + text +
                           "\" is not in the vocabulary");
        }
        record.cells.push_back(Cell::of_category(*index));
      } else {
        auto value = parse_number(text);
        if (!value) {
          throw InputError(row_feature(r + 1, spec.name) + ": cannot parse \"" + text +
                           "\" as a number");
        }
        double v = canonical_number(*value, spec.decimals);
        if (v < spec.min || v > spec.max) {
          throw InputError(row_feature(r + 1, spec.name) + ": " + text + " is outside [" +
                           format_number(spec.min, spec.decimals) + ", " +
                           format_number(spec.max, spec.decimals) + "]");
        }
        record.cells.push_back(Cell::of_number(v));
      }
    }
    table.rows.push_back(std::move(record));
  }
  return table;
}

Table load_csv(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return read_csv(in, schema);
}

void write_csv(std::ostream& out, const Table& table, std::string_view provenance) {
  if (!provenance.empty()) out << "# " << provenance << '\n';
  const Schema& schema = table.schema;
  for (std::size_t f = 0; f < schema.size(); ++f) {
    out << (f ? "," : "") << csv_escape(schema.features[f].name);
  }
  out << '\n';
  for (const Record& row : table.rows) {
    for (std::size_t f = 0; f < schema.size(); ++f) {
      out << (f ? "," : "") << csv_escape(render_value(row.cells[f], schema.features[f]));
    }
    out << '\n';
  }
}

void save_csv(const std::filesystem::path& path, const Table& table, std::string_view provenance) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  write_csv(out, table, provenance);
}

Schema infer_schema(const RawCsv& csv, std::string_view target,
                    std::optional<std::string> sensitive) {
  Schema schema;
  for (std::size_t c = 0; c < csv.header.size(); ++c) {
    bool numeric = !csv.rows.empty();
    int decimals = 0;
    double lo = 0.0, hi = 0.0;
    for (std::size_t r = 0; r < csv.rows.size() && numeric; ++r) {
      int frac = 0;
      auto v = parse_number(csv.rows[r][c], &frac);
      if (!v) {
        numeric = false;
        break;
      }
      decimals = std::max(decimals, std::min(frac, kInferredDecimalsCap));
      lo = r == 0 ? *v : std::min(lo, *v);
      hi = r == 0 ? *v : std::max(hi, *v);
    }
    if (numeric) {
      schema.features.push_back(FeatureSpec::numerical(
          csv.header[c], canonical_number(lo, decimals), canonical_number(hi, decimals), decimals));
    } else {
      std::set<std::string> values;
      for (const auto& row : csv.rows) values.insert(row[c]);
      schema.features.push_back(
          FeatureSpec::categorical(csv.header[c], std::vector<std::string>(values.begin(), values.end())));
    }
  }
  if (!schema.features.empty()) {
    schema.target_feature = target.empty() ? schema.features.back().name : std::string(target);
  }
  schema.sensitive_feature = std::move(sensitive);
  schema.validate();
  return schema;
}

std::string schema_to_json(const Schema& schema) {
  nlohmann::ordered_json doc;
  doc["features"] = nlohmann::ordered_json::array();
  for (const auto& f : schema.features) {
    nlohmann::ordered_json entry;
    entry["name"] = f.name;
    if (f.is_categorical()) {
      entry["kind"] = "categorical";
      entry["categories"] = f.categories;
    } else {
      entry["kind"] = "numerical";
      entry["min"] = f.min;
      entry["max"] = f.max;
      entry["decimals"] = f.decimals;
    }
    doc["features"].push_back(std::move(entry));
  }
  doc["target_feature"] = schema.target_feature;
  if (schema.sensitive_feature) {
    doc["sensitive_feature"] = *schema.sensitive_feature;
  } else {
    doc["sensitive_feature"] = nullptr;
  }
  return doc.dump(2);
}

Schema schema_from_json(std::string_view text) {
  Schema schema;
  try {
    auto doc = nlohmann::json::parse(text);
    for (const auto& entry : doc.at("features")) {
      std::string kind = entry.at("kind").get<std::string>();
      if (kind == "categorical") {
        schema.features.push_back(FeatureSpec::categorical(
            entry.at("name").get<std::string>(), entry.at("categories").get<std::vector<std::string>>()));
      } else if (kind == "numerical") {
        schema.features.push_back(FeatureSpec::numerical(
            entry.at("name").get<std::string>(), entry.at("min").get<double>(),
            entry.at("max").get<double>(), entry.at("decimals").get<int>()));
      } else {
        throw InputError("feature kind must be categorical or numerical, got \"" + kind + "\"");
      }
    }
    if (doc.contains("target_feature") && !doc["target_feature"].is_null()) {
      schema.target_feature = doc["target_feature"].get<std::string>();
    }
    if (doc.contains("sensitive_feature") && !doc["sensitive_feature"].is_null()) {
      schema.sensitive_feature = doc["sensitive_feature"].get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed schema document: ") + e.what());
  }
  schema.validate();
  return schema;
}

Schema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return schema_from_json(buffer.str());
}

void save_schema(const std::filesystem::path& path, const Schema& schema) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << schema_to_json(schema) << '\n';
}

// --- Table sampling ----------------------------------------------------------

std::pair<Table, Table> split_train_test(const Table& table, double train_fraction,
                                         std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw InputError("train fraction must lie strictly between 0 and 1");
  }
  if (table.empty()) throw InputError("cannot split an empty table");
  std::vector<std::size_t> order(table.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(table.size()) * train_fraction));
  Table train{table.schema, {}}, test{table.schema, {}};
  train.rows.reserve(n_train);
  test.rows.reserve(table.size() - n_train);
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? train : test).rows.push_back(table.rows[order[i]]);
  }
  return {std::move(train), std::move(test)};
}

Table generate_random_table(const Schema& schema, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return generate_random_table(schema, n, rng);
}

Table generate_random_table(const Schema& schema, std::size_t n, Rng& rng) {
  schema.validate();
  if (n == 0) throw InputError("random table needs at least one row");
  struct Grid {
    std::int64_t lo, hi;
    double scale;
  };
  std::vector<Grid> grids;
  for (const auto& f : schema.features) {
    double scale = pow10(f.decimals);
    grids.push_back({static_cast<std::int64_t>(std::ceil(f.min * scale - 1e-9)),
                     static_cast<std::int64_t>(std::floor(f.max * scale + 1e-9)), scale});
  }
  Table table{schema, {}};
  table.rows.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    Record record;
    record.cells.reserve(schema.size());
    for (std::size_t f = 0; f < schema.size(); ++f) {
      const FeatureSpec& spec = schema.features[f];
      if (spec.is_categorical()) {
        record.cells.push_back(Cell::of_category(static_cast<int>(rng.index(spec.categories.size()))));
      } else {
        double v = static_cast<double>(rng.integer(grids[f].lo, grids[f].hi)) / grids[f].scale;
        v = std::clamp(canonical_number(v, spec.decimals), spec.min, spec.max);
        record.cells.push_back(Cell::of_number(v));
      }
    }
    table.rows.push_back(std::move(record));
  }
  return table;
}

// --- Text codec ----------------------------------------------------------------

Permutation identity_permutation(std::size_t n) {
  Permutation p(n);
  std::iota(p.begin(), p.end(), 0);
  return p;
}

Permutation random_permutation(std::size_t n, Rng& rng) {
  Permutation p = identity_permutation(n);
  rng.shuffle(p);
  return p;
}

std::string encode_record(const Record& record, const Schema& schema,
                          std::span<const std::size_t> permutation) {
  std::string text;
  for (std::size_t i = 0; i < permutation.size(); ++i) {
    const std::size_t f = permutation[i];
    if (i) text += ", ";
    text += schema.features[f].name;
    text += " is ";
    text += render_value(record.cells[f], schema.features[f]);
  }
  return text;
}

std::string_view to_string(DecodeErrorKind kind) {
  switch (kind) {
    case DecodeErrorKind::missing_feature: return "missing_feature";
    case DecodeErrorKind::duplicate_feature: return "duplicate_feature";
    case DecodeErrorKind::unknown_clause: return "unknown_clause";
    case DecodeErrorKind::invalid_category: return "invalid_category";
    case DecodeErrorKind::unparseable_number: return "unparseable_number";
    case DecodeErrorKind::number_out_of_range: return "number_out_of_range";
  }
  return "unknown";
}

std::variant<std::vector<Clause>, DecodeError> split_clauses(std::string_view text,
                                                             const Schema& schema) {
  std::vector<Clause> clauses;
  std::size_t pos = 0;
  while (true) {
    auto head = clause_head_at(text, pos, schema);
    if (!head) {
      std::size_t end = next_boundary(text, pos, schema);
      return DecodeError{DecodeErrorKind::unknown_clause,
                         std::string(text.substr(pos, end == std::string_view::npos ? end : end - pos))};
    }
    std::size_t value_start = pos + schema.features[*head].name.size() + 3;
    if (value_start < text.size()) ++value_start;  // the space after "is"
    std::size_t end = next_boundary(text, value_start, schema);
    std::size_t value_end = end == std::string_view::npos ? text.size() : end;
    clauses.push_back({*head, text.substr(value_start, value_end - value_start)});
    if (end == std::string_view::npos) break;
    pos = end + 2;
  }
  return clauses;
}

std::variant<Cell, DecodeError> parse_value(std::string_view value, const FeatureSpec& spec) {
  if (spec.is_categorical()) {
    if (auto index = spec.category_index(value)) return Cell::of_category(*index);
    return DecodeError{DecodeErrorKind::invalid_category, spec.name};
  }
  int frac = 0;
  auto number = parse_number(value, &frac);
  if (!number || frac > spec.decimals) return DecodeError{DecodeErrorKind::unparseable_number, spec.name};
  if (*number < spec.min || *number > spec.max) {
    return DecodeError{DecodeErrorKind::number_out_of_range, spec.name};
  }
  return Cell::of_number(*number);
}

std::variant<Record, DecodeError> decode_text(std::string_view text, const Schema& schema) {
  auto split = split_clauses(text, schema);
  if (auto* error = std::get_if<DecodeError>(&split)) return *error;
  const auto& clauses = std::get<std::vector<Clause>>(split);

  Record record;
  record.cells.resize(schema.size());
  std::vector<bool> seen(schema.size(), false);
  for (const Clause& clause : clauses) {
    const FeatureSpec& spec = schema.features[clause.feature];
    if (seen[clause.feature]) return DecodeError{DecodeErrorKind::duplicate_feature, spec.name};
    seen[clause.feature] = true;
    auto cell = parse_value(clause.value, spec);
    if (auto* error = std::get_if<DecodeError>(&cell)) return *error;
    record.cells[clause.feature] = std::get<Cell>(cell);
  }
  for (std::size_t f = 0; f < schema.size(); ++f) {
    if (!seen[f]) return DecodeError{DecodeErrorKind::missing_feature, schema.features[f].name};
  }
  return record;
}

}  // namespace dptab

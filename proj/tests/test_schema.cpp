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

#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "dptab/rng.hpp"
#include "dptab/schema.hpp"
#include "toy.hpp"

using namespace dptab;

namespace {

Schema age_sex() {
  Schema s;
  s.features.push_back(FeatureSpec::numerical("Age", 0, 120, 0));
  s.features.push_back(FeatureSpec::categorical("Sex", {"Male", "Female"}));
  return s;
}

Schema age_education() {
  Schema s;
  s.features.push_back(FeatureSpec::numerical("Age", 0, 120, 0));
  s.features.push_back(FeatureSpec::categorical("Education", {"high school", "college"}));
  return s;
}

}  // namespace

TEST(SchemaTest, RejectsBrokenSchemas) {
  Schema empty;
  EXPECT_THROW(empty.validate(), InputError);
  Schema dup = age_sex();
  dup.features.push_back(FeatureSpec::categorical("Sex", {"x"}));
  EXPECT_THROW(dup.validate(), InputError);
  Schema nocat = age_sex();
  nocat.features[1].categories.clear();
  EXPECT_THROW(nocat.validate(), InputError);
  Schema badrange = age_sex();
  badrange.features[0].min = 5;
  badrange.features[0].max = 1;
  EXPECT_THROW(badrange.validate(), InputError);
  Schema target = age_sex();
  target.target_feature = "Income";
  EXPECT_THROW(target.validate(), InputError);
  EXPECT_NO_THROW(age_sex().validate());
}

TEST(CsvTest, ParsesMatchingRows) {
  std::istringstream in("Age,Sex\n20,Male\n");
  Table t = read_csv(in, age_sex());
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t.rows[0].cells[0].number, 20.0);
  EXPECT_EQ(t.rows[0].cells[1].category, 0);
}

TEST(CsvTest, TypeViolationNamesRowAndFeature) {
  std::istringstream in("Age,Sex\nMale,Male\n");
  try {
    read_csv(in, age_sex());
    FAIL() << "expected a parse error";
  } catch (const InputError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("Age"), std::string::npos) << msg;
  }
}

TEST(CsvTest, UnknownCategoryNamesFeature) {
  std::istringstream in("Age,Sex\n20,Other\n");
  try {
    read_csv(in, age_sex());
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("Sex"), std::string::npos);
  }
}

TEST(CsvTest, WriteReadRoundTripSkipsProvenance) {
  Table t = toy::table(50, 3);
  std::ostringstream out;
  write_csv(out, t, "config_hash=abc, seed=1");
  EXPECT_EQ(out.str().rfind("# config_hash=abc, seed=1\n", 0), 0u);
  std::istringstream in(out.str());
  Table back = read_csv(in, t.schema);
  EXPECT_EQ(back.rows, t.rows);
}

TEST(SplitTest, PartitionsTenRows) {
  Table t = toy::table(10, 1);
  auto [train, test] = split_train_test(t, 0.8, 7);
  EXPECT_EQ(train.size(), 8u);
  EXPECT_EQ(test.size(), 2u);
  std::vector<Record> all = train.rows;
  all.insert(all.end(), test.rows.begin(), test.rows.end());
  auto key = [](const Record& r) { return std::make_tuple(r.cells[0].category, r.cells[1].category, r.cells[2].number); };
  auto less = [&](const Record& a, const Record& b) { return key(a) < key(b); };
  std::vector<Record> orig = t.rows;
  std::sort(all.begin(), all.end(), less);
  std::sort(orig.begin(), orig.end(), less);
  EXPECT_EQ(all, orig);
  auto [train2, test2] = split_train_test(t, 0.8, 7);
  EXPECT_EQ(train2.rows, train.rows);
  EXPECT_EQ(test2.rows, test.rows);
}

TEST(SplitTest, AdultSizedSplitFollowsFloorRule) {
  Table t = toy::table(48842, 2);
  auto [train, test] = split_train_test(t, 0.8, 1);
  // floor(48842 * 0.8) = 39073; the other 9769 rows are held out
  EXPECT_NEAR(static_cast<double>(train.size()), 39074.0, 1.0);
  EXPECT_EQ(train.size() + test.size(), 48842u);
}

TEST(RandomTableTest, CategoriesBalanced) {
  Schema s;
  s.features.push_back(FeatureSpec::categorical("Sex", {"Male", "Female"}));
  for (std::uint64_t seed : {1u, 2u, 99u}) {
    Table t = generate_random_table(s, 10000, seed);
    std::size_t male = 0;
    for (const auto& r : t.rows) male += r.cells[0].category == 0;
    EXPECT_GE(male / 10000.0, 0.45);
    EXPECT_LE(male / 10000.0, 0.55);
  }
}

TEST(RandomTableTest, DegenerateRangeAndFormatting) {
  Schema s;
  s.features.push_back(FeatureSpec::numerical("Five", 5.0, 5.0, 1));
  s.features.push_back(FeatureSpec::numerical("Weight", -2.0, 3.0, 2));
  Table t = generate_random_table(s, 500, 4);
  for (const auto& r : t.rows) {
    EXPECT_EQ(r.cells[0].number, 5.0);
    EXPECT_GE(r.cells[1].number, -2.0);
    EXPECT_LE(r.cells[1].number, 3.0);
    const std::string text = render_value(r.cells[1], s.features[1]);
    EXPECT_EQ(text.size() - text.find('.') - 1, 2u);
    EXPECT_TRUE(cell_conforms(r.cells[1], s.features[1]));
  }
}

TEST(CodecTest, EncodesTemplate) {
  Schema s = age_education();
  Record r{{Cell::of_number(20), Cell::of_category(0)}};
  EXPECT_EQ(encode_record(r, s, identity_permutation(2)), "Age is 20, Education is high school");
  EXPECT_EQ(encode_record(r, s, Permutation{1, 0}), "Education is high school, Age is 20");
  Schema w;
  w.features.push_back(FeatureSpec::numerical("Weight", 0, 10, 2));
  EXPECT_EQ(encode_record(Record{{Cell::of_number(3.5)}}, w, identity_permutation(1)), "Weight is 3.50");
}

TEST(CodecTest, RoundTripsEveryPermutation) {
  Table t = toy::table(200, 5);
  Rng rng(11);
  for (const Record& r : t.rows) {
    const Permutation p = random_permutation(t.schema.size(), rng);
    auto back = decode_text(encode_record(r, t.schema, p), t.schema);
    ASSERT_TRUE(std::holds_alternative<Record>(back));
    EXPECT_EQ(std::get<Record>(back), r);
  }
}

TEST(CodecTest, CommaInsideCategoryIsNotAClauseBreak) {
  Schema s;
  s.features.push_back(FeatureSpec::categorical("Job", {"Sales, retail", "Admin"}));
  s.features.push_back(FeatureSpec::numerical("Age", 0, 99, 0));
  Record r{{Cell::of_category(0), Cell::of_number(30)}};
  auto back = decode_text(encode_record(r, s, Permutation{1, 0}), s);
  ASSERT_TRUE(std::holds_alternative<Record>(back));
  EXPECT_EQ(std::get<Record>(back), r);
}

TEST(CodecTest, DecodeErrors) {
  const Schema s = age_sex();
  auto e1 = decode_text("Age is twenty, Sex is Male", s);
  ASSERT_TRUE(std::holds_alternative<DecodeError>(e1));
  EXPECT_EQ(std::get<DecodeError>(e1), (DecodeError{DecodeErrorKind::unparseable_number, "Age"}));
  auto e2 = decode_text("Age is 20", s);
  ASSERT_TRUE(std::holds_alternative<DecodeError>(e2));
  EXPECT_EQ(std::get<DecodeError>(e2), (DecodeError{DecodeErrorKind::missing_feature, "Sex"}));
  auto e3 = decode_text("Age is 20, Sex is Other", s);
  ASSERT_TRUE(std::holds_alternative<DecodeError>(e3));
  EXPECT_EQ(std::get<DecodeError>(e3).kind, DecodeErrorKind::invalid_category);
  auto e4 = decode_text("Age is 200, Sex is Male", s);
  ASSERT_TRUE(std::holds_alternative<DecodeError>(e4));
  EXPECT_EQ(std::get<DecodeError>(e4).kind, DecodeErrorKind::number_out_of_range);
  auto e5 = decode_text("Age is 20, Age is 21, Sex is Male", s);
  ASSERT_TRUE(std::holds_alternative<DecodeError>(e5));
  EXPECT_EQ(std::get<DecodeError>(e5).kind, DecodeErrorKind::duplicate_feature);
}

TEST(SchemaJsonTest, RoundTrip) {
  Schema s = toy::schema();
  Schema back = schema_from_json(schema_to_json(s));
  EXPECT_EQ(schema_to_json(back), schema_to_json(s));
  EXPECT_EQ(back.target_feature, "Label");
  EXPECT_EQ(back.sensitive_feature, std::optional<std::string>("Group"));
}

#ifdef DPTAB_ADULT_CSV
TEST(InferSchemaTest, AdultHasSevenCategoricalAndSixNumerical) {
  const Schema s = infer_schema(load_raw_csv(DPTAB_ADULT_CSV), "income");
  std::size_t cat = 0, num = 0;
  for (const auto& f : s.features) (f.is_categorical() ? cat : num)++;
  EXPECT_EQ(cat, 7u);
  EXPECT_EQ(num, 6u);
  EXPECT_EQ(s.target_feature, "income");
}
#endif

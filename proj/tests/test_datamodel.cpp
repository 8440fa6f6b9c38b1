#include <gtest/gtest.h>

#include <set>

#include "fixtures.hpp"
#include "vlaudit/datamodel.hpp"

using namespace vlaudit;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::Io;
}

const char* kOneRecord = R"({
  "schema": {"dataset": ["fairface"], "race": ["white"], "gender": ["female"]},
  "records": [{"id": "img/001.png", "dataset": "fairface", "race": "White", "gender": "Female", "age": 34}]
})";

}  // namespace

TEST(Manifest, MinimalSingleRecord) {
  const auto m = parse_manifest(kOneRecord);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].id, "img/001.png");
  EXPECT_EQ(m[0].race, Race::white);
  EXPECT_EQ(m[0].gender, Gender::female);
  EXPECT_DOUBLE_EQ(*m[0].age, 34.0);
  EXPECT_FALSE(m[0].smiling.has_value());
  EXPECT_EQ(m.index_of("img/001.png"), 0u);
  EXPECT_FALSE(m.index_of("nope").has_value());
}

TEST(Manifest, DuplicateIdNamesTheId) {
  const char* text = R"({"records": [
    {"id": "a01", "dataset": "custom", "race": "black", "gender": "male"},
    {"id": "a01", "dataset": "custom", "race": "white", "gender": "male"}]})";
  try {
    parse_manifest(text);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DuplicateId);
    EXPECT_EQ(e.detail(), "a01");
  }
}

TEST(Manifest, RejectsUnknownKeysValuesAndMalformedJson) {
  EXPECT_EQ(code_of([] { parse_manifest(R"({"records": [], "extra": 1})"); }), ErrorCode::UnknownKey);
  EXPECT_EQ(code_of([] { parse_manifest(R"({"records": [{"id":"x","dataset":"custom","race":"latino","gender":"male"}]})"); }),
            ErrorCode::UnknownAttributeValue);
  EXPECT_EQ(code_of([] { parse_manifest(R"({"records": [{"id":"x","dataset":"custom","race":"black","gender":"male","hair":1}]})"); }),
            ErrorCode::UnknownKey);
  EXPECT_EQ(code_of([] { parse_manifest("{\n\"records\": [\n,]}"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_manifest(R"({"records": [{"id":"x","dataset":"custom","race":"black","gender":"male","age":"old"}]})"); }),
            ErrorCode::ParseError);
}

TEST(Manifest, ParseErrorCarriesLineNumber) {
  try {
    parse_manifest("{\n\"records\": [\n,]}", "m.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(e.detail().find("m.json:3"), std::string::npos) << e.detail();
  }
}

TEST(Manifest, UndeclaredValueAgainstSchemaIsRejected) {
  const char* text = R"({"schema": {"race": ["white"]},
    "records": [{"id": "x", "dataset": "custom", "race": "black", "gender": "male"}]})";
  EXPECT_EQ(code_of([&] { parse_manifest(text); }), ErrorCode::UnknownAttributeValue);
  const char* levels = R"({"schema": {"age": [0, 1.1]},
    "records": [{"id": "x", "dataset": "custom", "race": "black", "gender": "male", "age": 0.5}]})";
  EXPECT_EQ(code_of([&] { parse_manifest(levels); }), ErrorCode::UnknownAttributeValue);
}

TEST(Manifest, DatasetSpecificRequirements) {
  const char* cf_missing = R"({"records": [{"id": "x", "dataset": "causalface", "race": "black", "gender": "male", "seed": 1}]})";
  EXPECT_EQ(code_of([&] { parse_manifest(cf_missing); }), ErrorCode::InvalidRecord);
  const char* wild_with_levels =
      R"({"records": [{"id": "x", "dataset": "utkface", "race": "black", "gender": "male", "age": 30, "pose": 1}]})";
  EXPECT_EQ(code_of([&] { parse_manifest(wild_with_levels); }), ErrorCode::InvalidRecord);
}

TEST(Manifest, CategoryTokensAreCanonicalised) {
  EXPECT_EQ(parse_race("  East   Asian "), Race::asian);
  EXPECT_EQ(parse_race("Southeast Asian"), Race::asian);
  EXPECT_EQ(parse_gender("MALE"), Gender::male);
  EXPECT_FALSE(parse_race("indian").has_value());
}

TEST(Manifest, SerializeRoundTrip) {
  const auto data = make_synthetic_causalface({.seeds = 1, .dim = 8});
  const auto text = serialize_manifest(data.manifest);
  const auto back = parse_manifest(text);
  EXPECT_EQ(back, data.manifest);
  EXPECT_EQ(serialize_manifest(back), text);
}

TEST(Manifest, CausalFaceSeedHasSixPrototypesOfThirtyVariants) {
  const auto data = make_synthetic_causalface({.seeds = 1, .dim = 8});
  ASSERT_EQ(data.manifest.size(), 180u);
  const auto groups = group_by(data.manifest, {Attribute::race, Attribute::gender});
  ASSERT_EQ(groups.size(), 6u);
  for (const auto& g : groups) EXPECT_EQ(g.members.size(), 30u) << g.label();
}

TEST(GroupBy, EmptyKeysGiveOneGroup) {
  const auto data = make_synthetic_causalface({.seeds = 2, .dim = 8});
  const auto groups = group_by(data.manifest, {});
  ASSERT_EQ(groups.size(), 1u);
  EXPECT_EQ(groups[0].members.size(), data.manifest.size());
  EXPECT_EQ(groups[0].label(), "all");
}

TEST(GroupBy, RaceGroupsPartitionTheRecords) {
  const auto data = make_synthetic_causalface({.seeds = 2, .dim = 8});
  const auto groups = group_by(data.manifest, {Attribute::race});
  ASSERT_EQ(groups.size(), 3u);
  std::set<std::size_t> seen;
  std::size_t total = 0;
  for (const auto& g : groups) {
    total += g.members.size();
    seen.insert(g.members.begin(), g.members.end());
    EXPECT_TRUE(std::is_sorted(g.members.begin(), g.members.end()));
  }
  EXPECT_EQ(total, data.manifest.size());
  EXPECT_EQ(seen.size(), data.manifest.size());
}

TEST(GroupBy, DeclaredButEmptyGroupsArePresent) {
  auto schema = fixtures::cf_schema();
  std::vector<ImageRecord> recs = {fixtures::cf_record("a", 0, Race::white, Gender::male)};
  DatasetManifest m(schema, recs);
  const auto groups = group_by(m, {Attribute::race});
  ASSERT_EQ(groups.size(), 3u);
  std::size_t empty = 0;
  for (const auto& g : groups) empty += g.members.empty();
  EXPECT_EQ(empty, 2u);
}

TEST(GroupBy, AgeBinsAndMinimumAge) {
  const char* text = R"({"records": [
    {"id": "a", "dataset": "fairface", "race": "black", "gender": "male", "age": 19},
    {"id": "b", "dataset": "fairface", "race": "black", "gender": "male", "age": 20},
    {"id": "c", "dataset": "fairface", "race": "black", "gender": "male", "age": 29.5},
    {"id": "d", "dataset": "fairface", "race": "black", "gender": "male", "age": 41}]})";
  const auto m = parse_manifest(text);
  const auto kept = filter_min_age(m, 20);
  EXPECT_EQ(kept, (std::vector<std::size_t>{1, 2, 3}));
  const auto groups = group_by(m, {Attribute::age_bin}, kept);
  ASSERT_EQ(groups.size(), 2u);
  EXPECT_EQ(groups[0].members, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(groups[1].members, (std::vector<std::size_t>{3}));
}

TEST(Prompts, FillAndNeutralForms) {
  EXPECT_EQ(fill_template("A <adjective> person.", "warm"), "A warm person.");
  EXPECT_EQ(neutral_prompt("A <adjective> person."), "A person.");
  EXPECT_EQ(neutral_prompt("A photo of a <adjective> person."), "A photo of a person.");
  EXPECT_EQ(fill_template("A photo of a <adjective> person.", "intelligent", true), "A photo of an intelligent person.");
  EXPECT_EQ(fill_template("A photo of a <adjective> person.", "intelligent", false), "A photo of a intelligent person.");
  EXPECT_EQ(code_of([] { fill_template("no placeholder", "warm"); }), ErrorCode::MissingPlaceholder);
  EXPECT_EQ(code_of([] { neutral_prompt("no placeholder"); }), ErrorCode::MissingPlaceholder);
}

TEST(Prompts, ExpansionCounts) {
  const auto t = default_templates();
  ASSERT_EQ(t.templates.size(), 4u);
  const auto scm = expand_prompts(default_scm_lexicon(), t);
  EXPECT_EQ(scm.adjective_prompts.size(), 48u);
  EXPECT_EQ(scm.neutral.size(), 4u);
  EXPECT_EQ(scm.unique_texts().size(), 52u);
  const auto abc = expand_prompts(default_abc_lexicon(), t);
  EXPECT_EQ(abc.adjective_prompts.size(), 128u);
  EXPECT_EQ(abc.unique_texts().size(), 132u);
}

TEST(Lexicon, DefaultsHaveExpectedShape) {
  const auto scm = default_scm_lexicon();
  const auto abc = default_abc_lexicon();
  EXPECT_EQ(scm.dimensions.size(), 2u);
  EXPECT_EQ(scm.adjective_count(), 12u);
  EXPECT_EQ(abc.dimensions.size(), 6u);
  EXPECT_EQ(abc.adjective_count(), 32u);
  EXPECT_NO_THROW(validate(scm));
  EXPECT_NO_THROW(validate(abc));
}

TEST(Lexicon, JsonRoundTripAndValidation) {
  const auto abc = default_abc_lexicon();
  EXPECT_EQ(lexicon_from_json(to_json(abc)), abc);
  auto j = to_json(abc);
  j["dimensions"][0]["adjectives"].push_back("Loud");
  EXPECT_EQ(code_of([&] { lexicon_from_json(j); }), ErrorCode::InvalidArgument);
  j = to_json(abc);
  j["dimensions"][1]["name"] = j["dimensions"][0]["name"];
  EXPECT_EQ(code_of([&] { lexicon_from_json(j); }), ErrorCode::DuplicateId);
  j = to_json(abc);
  j["colour"] = "red";
  EXPECT_EQ(code_of([&] { lexicon_from_json(j); }), ErrorCode::UnknownKey);
}

TEST(Templates, ValidationAndRoundTrip) {
  const auto t = default_templates();
  EXPECT_EQ(templates_from_json(to_json(t)), t);
  EXPECT_EQ(code_of([] { validate(PromptTemplateSet{}); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { validate(PromptTemplateSet{{"A person."}}); }), ErrorCode::MissingPlaceholder);
  EXPECT_EQ(code_of([] { validate(PromptTemplateSet{{"<adjective> and <adjective>"}}); }), ErrorCode::InvalidArgument);
}

TEST(PromptList, ParsesLinesAndRejectsBadInput) {
  EXPECT_EQ(parse_prompt_list("A warm person.\r\nA person.\n"),
            (std::vector<std::string>{"A warm person.", "A person."}));
  EXPECT_EQ(parse_prompt_list("last line without newline"), (std::vector<std::string>{"last line without newline"}));
  EXPECT_EQ(code_of([] { parse_prompt_list(""); }), ErrorCode::EmptySample);
  EXPECT_EQ(code_of([] { parse_prompt_list("a\na\n"); }), ErrorCode::DuplicateId);
  EXPECT_EQ(code_of([] { parse_prompt_list("a\n\nb\n"); }), ErrorCode::ParseError);
}

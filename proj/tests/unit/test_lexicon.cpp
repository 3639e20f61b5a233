#include "cbx/error.hpp"
#include "cbx/lexicon.hpp"
#include "test_support.hpp"

#include <json.hpp>

using namespace cbx;

TEST(Lexicon, DefaultSchemaShape) {
  const auto& lex = default_lexicon();
  EXPECT_EQ(lex.labels().size(), 6u);
  EXPECT_EQ(lex.size(), 17u);
  EXPECT_EQ(lex.labels().front(), "Healthy");
  for (const auto& label : lex.labels()) EXPECT_FALSE(lex.concepts_in_group(label).empty()) << label;
  EXPECT_EQ(lex.concepts_in_group("Lung Cancer").size(), 5u);
  const auto v = validate_lexicon(lex);
  for (const auto& e : v) EXPECT_NE(e.severity, Severity::kError) << e.concept_id << ": " << e.rule;
}

TEST(Lexicon, IndexLookup) {
  const auto& lex = default_lexicon();
  ASSERT_TRUE(lex.index_of("mass").has_value());
  EXPECT_EQ(lex.concept_at(*lex.index_of("mass")).display_name, "Mass");
  EXPECT_FALSE(lex.index_of("zebra").has_value());
  EXPECT_THROW(lex.require_index("zebra"), NotFoundError);
  EXPECT_EQ(lex.require_label("Cardiomegaly"), 4u);
  EXPECT_THROW(lex.require_label("Flu"), Error);
}

TEST(Lexicon, IdIsContentHashAndSurvivesRoundTrip) {
  test::TempDir dir;
  const auto& lex = default_lexicon();
  save_lexicon(lex, dir / "lex.json");
  const auto back = load_lexicon(dir / "lex.json");
  EXPECT_EQ(back.id(), lex.id());
  EXPECT_EQ(back.size(), lex.size());

  auto j = nlohmann::json::parse(lex.to_json_text());
  j["concepts"][0]["phrases"].push_back("no acute findings");
  EXPECT_NE(parse_lexicon(j.dump()).id(), lex.id());
}

TEST(Lexicon, ResolveDefaultAndPath) {
  EXPECT_EQ(resolve_lexicon("default").id(), default_lexicon().id());
  EXPECT_EQ(resolve_lexicon(default_lexicon_path().string()).id(), default_lexicon().id());
  EXPECT_THROW(resolve_lexicon("/nonexistent/lexicon.json"), Error);
}

TEST(Lexicon, RejectsMalformedInput) {
  EXPECT_THROW(parse_lexicon("{not json"), Error);
  EXPECT_THROW(parse_lexicon(R"({"labels": ["A"]})"), Error);
  // Concept pointing at an unknown label group.
  EXPECT_THROW(parse_lexicon(R"({"labels": ["A", "B"], "concepts": [
      {"id": "x", "display_name": "X", "label_group": "C", "phrases": ["x"]},
      {"id": "y", "display_name": "Y", "label_group": "B", "phrases": ["y"]}]})"),
               Error);
}

TEST(Lexicon, ValidationFlagsDuplicatesAndEmptyPhrases) {
  const ConceptLexicon lex({"A", "B"}, {{"x", "X", "A", {"shared"}}, {"x", "X2", "B", {"shared"}}, {"z", "Z", "B", {}}});
  const auto v = validate_lexicon(lex);
  std::size_t errors = 0;
  for (const auto& e : v) errors += e.severity == Severity::kError;
  EXPECT_GE(errors, 2u);
}

TEST(Lexicon, CrossConceptPhraseIsOnlyAWarning) {
  const auto lex = parse_lexicon(R"({"labels": ["A", "B"], "concepts": [
      {"id": "x", "display_name": "X", "label_group": "A", "phrases": ["mass"]},
      {"id": "y", "display_name": "Y", "label_group": "B", "phrases": ["mass", "lump"]}]})");
  const auto v = validate_lexicon(lex);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].severity, Severity::kWarning);
  EXPECT_EQ(v[0].concept_id, "y");
  EXPECT_NE(v[0].rule.find("'mass'"), std::string::npos);
}

TEST(Lexicon, SmallCustomLexiconWorks) {
  const auto lex = parse_lexicon(R"({"labels": ["Normal", "Sick"], "concepts": [
      {"id": "clear", "display_name": "Clear", "label_group": "Normal", "phrases": ["clear"]},
      {"id": "spot", "display_name": "Spot", "label_group": "Sick", "phrases": ["spot", "dark spot"]}]})");
  EXPECT_EQ(lex.size(), 2u);
  EXPECT_EQ(lex.concepts_in_group("Sick"), std::vector<std::size_t>{1});
  EXPECT_FALSE(lex.id().empty());
}

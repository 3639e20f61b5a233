#include "cbx/error.hpp"
#include "cbx/lexicon.hpp"
#include "cbx/report.hpp"
#include "cbx/rng.hpp"
#include "cbx/synthgen.hpp"
#include "cbx/util.hpp"
#include "test_support.hpp"

#include <json.hpp>

#include <fstream>

using namespace cbx;

namespace {

std::set<std::string> positives(const ConceptVector& v) {
  std::set<std::string> out;
  const auto& lex = default_lexicon();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v.values[i]) out.insert(lex.concept_at(i).id);
  }
  return out;
}

std::set<std::string> extract_ids(const std::string& report) {
  return positives(extract_concepts(segment_report(report), default_lexicon()).vector);
}

}  // namespace

// ---- segmentation ------------------------------------------------------------

struct Layout {
  const char* text;
  const char* findings;
  const char* impression;
};

void PrintTo(const Layout& l, std::ostream* os) { *os << ::testing::PrintToString(std::string(l.text)); }

class HeaderLayouts : public ::testing::TestWithParam<Layout> {};

TEST_P(HeaderLayouts, SplitsFindingsAndImpression) {
  const auto& p = GetParam();
  const auto doc = segment_report(p.text);
  EXPECT_EQ(doc.section(kFindings), p.findings);
  EXPECT_EQ(doc.section(kImpression), p.impression);
}

INSTANTIATE_TEST_SUITE_P(
    Reports, HeaderLayouts,
    ::testing::Values(
        Layout{"FINDINGS: Mass seen.\nIMPRESSION: Cancer.", "Mass seen.", "Cancer."},
        Layout{"FINDINGS:\nMass seen.\n\nIMPRESSION:\nCancer.", "Mass seen.", "Cancer."},
        Layout{"Findings: a.\nImpression: b.", "a.", "b."},
        Layout{"findings: a.\nimpression: b.", "a.", "b."},
        Layout{"FINDINGS : a.\nIMPRESSION : b.", "a.", "b."},
        Layout{"FINDINGS\na.\nIMPRESSION\nb.", "a.", "b."},
        Layout{"IMPRESSION: b.\nFINDINGS: a.", "a.", "b."},
        Layout{"FINAL REPORT\nINDICATION: cough.\nFINDINGS: a.\nIMPRESSION: b.", "a.", "b."},
        Layout{"EXAMINATION: chest.\nFINDINGS: a.\nIMPRESSION: b.\nRECOMMENDATION: follow up.", "a.", "b."},
        Layout{"FINDINGS: a.\nCOMPARISON: none.\nIMPRESSION: b.", "a.", "b."},
        Layout{"CLINICAL HISTORY: smoker.\nFINDINGS: a.", "a.", ""},
        Layout{"IMPRESSION: b.", "", "b."},
        Layout{"HISTORY: x.\nTECHNIQUE: PA.\nFINDINGS: a.\nIMPRESSION: b.", "a.", "b."},
        Layout{"FINDINGS: a.\nFINDINGS: c.\nIMPRESSION: b.", "a.\n\nc.", "b."},
        Layout{"FINDINGS:\n\nIMPRESSION: b.", "", "b."},
        Layout{"REASON FOR EXAM: pain.\nFINDINGS: a.\nNOTIFICATION: called.", "a.", ""},
        Layout{"FINDINGS: The findings are stable.\nIMPRESSION: No change.", "The findings are stable.", "No change."},
        Layout{"  FINDINGS:   a.  \n  IMPRESSION:   b.  ", "a.", "b."},
        Layout{"CLINICAL INFORMATION: fever.\nFINDINGS: a.\nIMPRESSION: b.", "a.", "b."},
        Layout{"Findings\n  a.\nImpression\n  b.", "a.", "b."}),
    [](const auto& info) { return "Layout" + std::to_string(info.index); });

TEST(Segment, HeaderlessReportBecomesFindings) {
  const auto doc = segment_report("Small left effusion.");
  EXPECT_TRUE(doc.headerless);
  EXPECT_EQ(doc.section(kFindings), "Small left effusion.");
  EXPECT_EQ(doc.section(kImpression), "");
}

TEST(Segment, EmptyReport) {
  const auto doc = segment_report("");
  EXPECT_TRUE(doc.headerless);
  EXPECT_EQ(doc.section(kFindings), "");
  EXPECT_TRUE(extract_concepts(doc, default_lexicon()).mentions.empty());
}

TEST(Segment, HeaderWordInsideProseIsNotAHeader) {
  const auto doc = segment_report("FINDINGS: Prior findings were reviewed.\nIMPRESSION: b.");
  EXPECT_EQ(doc.section(kFindings), "Prior findings were reviewed.");
}

TEST(Segment, OtherSectionsAreIgnoredForExtraction) {
  EXPECT_TRUE(extract_ids("INDICATION: Evaluate for pneumonia.\nFINDINGS: Lungs are clear.").count("unremarkable"));
  EXPECT_FALSE(extract_ids("INDICATION: Evaluate for pneumonia.\nFINDINGS: Lungs are clear.").count("infection"));
}

// ---- normalization -------------------------------------------------------------

TEST(Normalize, SentencesAndTokens) {
  const auto s = normalize_sentences("Heart size is 1.5 cm. Small EFFUSION, left!");
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].index, 0u);
  EXPECT_NE(s[0].text.find("1.5"), std::string::npos);
  EXPECT_EQ(s[1].text, "small effusion left");
}

TEST(Normalize, PhraseTokens) {
  EXPECT_EQ(normalize_phrase("Pleural  Effusion"), (std::vector<std::string>{"pleural", "effusion"}));
}

// ---- negation --------------------------------------------------------------------

TEST(Negation, TriggerWindow) {
  const NegationDetector d;
  EXPECT_TRUE(d.is_negated(split_whitespace("no effusion"), 1));
  EXPECT_TRUE(d.is_negated(split_whitespace("no a b c d e f effusion"), 7));    // gap 6
  EXPECT_FALSE(d.is_negated(split_whitespace("no a b c d e f g effusion"), 8));  // gap 7
  EXPECT_FALSE(d.is_negated(split_whitespace("effusion"), 0));
}

TEST(Negation, ScopeBreakerStopsScope) {
  const NegationDetector d;
  EXPECT_FALSE(d.is_negated(split_whitespace("no mass but effusion"), 3));
  EXPECT_TRUE(d.is_negated(split_whitespace("no mass but effusion"), 1));
}

TEST(Negation, PostTriggers) {
  const NegationDetector d;
  EXPECT_TRUE(d.is_negated(split_whitespace("the opacity has resolved"), 1, 2));
  EXPECT_FALSE(d.is_negated(split_whitespace("the opacity but infection has resolved"), 1, 2));
}

TEST(Negation, CharRangeInterface) {
  EXPECT_TRUE(detect_negation("there is no pleural effusion", {12, 28}));
  EXPECT_FALSE(detect_negation("there is a pleural effusion", {11, 27}));
  EXPECT_THROW(detect_negation("short", {3, 10}), DimensionError);
}

TEST(Negation, ConfigLoading) {
  test::TempDir dir;
  write_text_file(dir / "neg.json", R"(["denies"])");
  const auto cfg = NegationConfig::load(dir / "neg.json");
  EXPECT_EQ(cfg.triggers, std::vector<std::string>{"denies"});
  write_text_file(dir / "bad.json", R"({"window": 3})");
  EXPECT_THROW(NegationConfig::load(dir / "bad.json"), SchemaError);
  write_text_file(dir / "broken.json", "{");
  EXPECT_THROW(NegationConfig::load(dir / "broken.json"), SchemaError);
}

TEST(Negation, CustomTableChangesBehaviour) {
  NegationConfig cfg;
  cfg.triggers = {"absent"};
  const ConceptExtractor ex(default_lexicon(), {}, cfg);
  const auto r = ex.extract(segment_report("FINDINGS: No effusion."));
  EXPECT_EQ(positives(r.vector), std::set<std::string>{"effusion"});
}

// Hand-labelled sentences: negated concepts must never be set, affirmed ones must.
TEST(Negation, HandLabelledSuite) {
  std::ifstream in(test::test_data("negation_suite.jsonl"));
  ASSERT_TRUE(in) << "missing negation suite";
  std::string line;
  std::size_t n = 0, violations = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const auto got = extract_ids("FINDINGS: " + j["text"].get<std::string>());
    for (const auto& id : j["negated"]) {
      if (got.count(id.get<std::string>())) {
        ++violations;
        ADD_FAILURE() << "negated '" << id << "' set in: " << j["text"];
      }
    }
    for (const auto& id : j["affirmed"]) EXPECT_TRUE(got.count(id.get<std::string>())) << id << " in " << j["text"];
    ++n;
  }
  EXPECT_EQ(n, 50u);
  EXPECT_EQ(violations, 0u);
}

// ---- extraction --------------------------------------------------------------------

TEST(Extract, PaperStyleExamples) {
  EXPECT_EQ(extract_ids("FINDINGS: There is a large mass lesion with irregular hilum."),
            (std::set<std::string>{"mass", "irregular_hilum"}));
  EXPECT_EQ(extract_ids("FINDINGS: No pleural effusion. Enlarged heart."), std::set<std::string>{"enlarged_heart"});
  EXPECT_TRUE(extract_ids("FINDINGS: The weather is nice.").empty());
}

TEST(Extract, MentionSpansPointIntoNormalizedSentence) {
  const auto r = extract_concepts(segment_report("FINDINGS: Small left pleural effusion."), default_lexicon());
  ASSERT_FALSE(r.mentions.empty());
  const auto& sentences = r.sentences.at(std::string(kFindings));
  for (const auto& m : r.mentions) {
    const auto& text = sentences.at(m.sentence_index).text;
    EXPECT_EQ(text.substr(m.char_range.begin, m.char_range.end - m.char_range.begin), m.phrase);
  }
}

TEST(Extract, DuplicateMentionsAreIdempotent) {
  EXPECT_EQ(extract_ids("FINDINGS: Effusion. Effusion. Effusions."), std::set<std::string>{"effusion"});
}

TEST(Extract, SynthCorpusIsRecoveredExactly) {
  SynthSpec spec;
  spec.n_cases = 1000;
  spec.seed = 2024;
  spec.image_size = 32;
  spec.negation_rate = 0.3;
  const auto& lex = default_lexicon();
  const ConceptExtractor ex(lex);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < spec.n_cases; ++i) {
    const auto c = generate_case(spec, i, lex);
    const auto got = ex.extract(segment_report(c.report)).vector;
    for (std::size_t k = 0; k < lex.size(); ++k) {
      tp += got.values[k] && c.concepts.values[k];
      fp += got.values[k] && !c.concepts.values[k];
      fn += !got.values[k] && c.concepts.values[k];
    }
  }
  EXPECT_GT(tp, 0u);
  EXPECT_EQ(fp, 0u);
  EXPECT_EQ(fn, 0u);
}

// Adding a phrase to a concept never turns that concept off.
TEST(Extract, AddingPhrasesIsMonotone) {
  SynthSpec spec;
  spec.seed = 77;
  spec.image_size = 32;
  const auto& lex = default_lexicon();
  Rng rng(78);
  for (std::size_t i = 0; i < 200; ++i) {
    const auto c = generate_case(spec, i, lex);
    const auto doc = segment_report(c.report);
    const auto before = extract_concepts(doc, lex).vector;
    // Donor phrases: words from the report itself and phrases of other concepts.
    auto words = split_whitespace(to_lower(c.report));
    std::vector<ConceptDef> concepts = lex.concepts();
    const std::size_t k = rng.below(concepts.size());
    for (int extra = 0; extra < 3; ++extra) {
      std::string w = words[rng.below(words.size())];
      w.erase(std::remove_if(w.begin(), w.end(), [](char ch) { return !std::isalnum(static_cast<unsigned char>(ch)); }),
              w.end());
      const auto& donor = concepts[rng.below(concepts.size())].phrases;
      for (const std::string& p : {w, donor[rng.below(donor.size())]}) {
        if (!p.empty() && std::find(concepts[k].phrases.begin(), concepts[k].phrases.end(), p) ==
                              concepts[k].phrases.end()) {
          concepts[k].phrases.push_back(p);
        }
      }
    }
    const ConceptLexicon grown(lex.labels(), concepts);
    const auto after = extract_concepts(doc, grown).vector;
    if (before.values[k]) EXPECT_EQ(after.values[k], 1) << c.report << "\nconcept " << concepts[k].id;
  }
}

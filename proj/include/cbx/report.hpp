#pragma once

#include "cbx/concepts.hpp"
#include "cbx/corpus.hpp"
#include "cbx/lexicon.hpp"

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace cbx {

inline constexpr std::string_view kFindings = "FINDINGS";
inline constexpr std::string_view kImpression = "IMPRESSION";

struct ReportDocument {
  std::string raw_text;
  // Always holds FINDINGS and IMPRESSION keys; absent sections are empty.
  std::map<std::string, std::string, std::less<>> sections;
  // Set when neither header was found and the whole text became FINDINGS.
  bool headerless = false;

  const std::string& section(std::string_view name) const;
};

ReportDocument segment_report(std::string_view raw_text);

struct NormalizeOptions {
  std::vector<std::string> stop_tokens = default_stop_tokens();

  static std::vector<std::string> default_stop_tokens();
};

struct NormalizedSentence {
  std::size_t index = 0;  // position among the source sentences
  std::string text;       // lowercased tokens joined by single spaces
};

// Splits on sentence terminators, ignoring decimal points inside numbers.
std::vector<std::string> split_sentences(std::string_view text);

// Lowercases, strips punctuation (keeping intra-word hyphens and decimal
// points), drops stop tokens. Sentences that normalize to nothing are
// omitted but keep their slot in the index numbering.
std::vector<NormalizedSentence> normalize_sentences(std::string_view section_text,
                                                    const NormalizeOptions& opts = {});

// Token sequence of a phrase under the same normalization as sentences.
std::vector<std::string> normalize_phrase(std::string_view phrase,
                                          const NormalizeOptions& opts = {});

struct CharRange {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
  bool operator==(const CharRange&) const = default;
};

struct NegationConfig {
  std::vector<std::string> triggers;
  std::vector<std::string> post_triggers;  // follow the phrase, e.g. "has resolved"
  std::vector<std::string> scope_breakers;
  std::size_t window = 6;

  static NegationConfig defaults();
  // Accepts either a plain JSON list of triggers or an object with
  // "triggers", "scope_breakers" and "window".
  static NegationConfig load(const std::filesystem::path& path);
};

// NegEx-style detector: a phrase is negated when a trigger ends at most
// `window` tokens before it in the same sentence and no scope breaker sits
// between the trigger and the phrase.
class NegationDetector {
 public:
  explicit NegationDetector(NegationConfig cfg = NegationConfig::defaults());

  bool is_negated(std::string_view sentence, CharRange phrase) const;
  // phrase_end defaults to phrase_begin + 1.
  bool is_negated(const std::vector<std::string>& tokens, std::size_t phrase_begin,
                  std::size_t phrase_end = 0) const;

  const NegationConfig& config() const { return cfg_; }

 private:
  NegationConfig cfg_;
  std::vector<std::vector<std::string>> trigger_tokens_;
  std::vector<std::vector<std::string>> post_trigger_tokens_;
};

bool detect_negation(std::string_view sentence, CharRange phrase);

struct MentionSpan {
  std::string concept_id;
  std::string phrase;    // normalized phrase text that matched
  std::string section;
  std::size_t sentence_index = 0;
  CharRange char_range;  // within the normalized sentence
  bool negated = false;
};

struct ExtractionResult {
  ConceptVector vector;
  std::vector<MentionSpan> mentions;
  // Normalized sentences per section, for span auditing.
  std::map<std::string, std::vector<NormalizedSentence>, std::less<>> sentences;
};

// Compiled phrase matcher for one lexicon. Immutable and thread-safe.
class ConceptExtractor {
 public:
  explicit ConceptExtractor(const ConceptLexicon& lex, NormalizeOptions norm = {},
                            NegationConfig negation = NegationConfig::defaults());

  ExtractionResult extract(const ReportDocument& report) const;
  const ConceptLexicon& lexicon() const { return lex_; }

 private:
  struct CompiledPhrase {
    std::size_t concept_index;
    std::vector<std::string> tokens;
    std::string text;
  };

  ConceptLexicon lex_;
  NormalizeOptions norm_;
  NegationDetector negation_;
  std::vector<CompiledPhrase> phrases_;
};

ExtractionResult extract_concepts(const ReportDocument& report, const ConceptLexicon& lex);

struct FlaggedRecord {
  std::string case_id;
  std::string reason;
};

struct AnnotationResult {
  std::vector<CaseRecord> records;    // annotated, in manifest order
  std::vector<FlaggedRecord> flagged;  // skipped records
  std::vector<std::size_t> concept_counts;  // positives per concept
};

// Reads each record's report (relative to `base`) and attaches its
// ConceptVector. Unreadable reports are flagged and skipped; more than 10%
// skipped throws Error.
AnnotationResult annotate_corpus(const std::vector<CaseRecord>& records,
                                 const std::filesystem::path& base,
                                 const ConceptExtractor& extractor);

}  // namespace cbx

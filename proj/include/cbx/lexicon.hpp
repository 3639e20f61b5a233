#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cbx {

struct ConceptDef {
  std::string id;
  std::string display_name;
  std::string label_group;
  std::vector<std::string> phrases;  // lowercase trigger phrases
};

// The expert vocabulary. Concept order is canonical: the position of a
// concept here is its index in every ConceptVector and ConceptScores.
class ConceptLexicon {
 public:
  ConceptLexicon() = default;
  ConceptLexicon(std::vector<std::string> labels, std::vector<ConceptDef> concepts);

  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<ConceptDef>& concepts() const { return concepts_; }
  std::size_t size() const { return concepts_.size(); }
  const ConceptDef& concept_at(std::size_t i) const { return concepts_.at(i); }

  std::optional<std::size_t> index_of(std::string_view concept_id) const;
  std::optional<std::size_t> label_index(std::string_view label) const;
  // Throws NotFoundError for unknown ids/labels.
  std::size_t require_index(std::string_view concept_id) const;
  std::size_t require_label(std::string_view label) const;

  // Concept indices belonging to one label group, in canonical order.
  std::vector<std::size_t> concepts_in_group(std::string_view label) const;

  // Stable identifier derived from the canonical serialization.
  const std::string& id() const { return id_; }

  // Canonical JSON text (two-space indent, trailing newline).
  std::string to_json_text() const;

 private:
  std::vector<std::string> labels_;
  std::vector<ConceptDef> concepts_;
  std::string id_;
};

enum class Severity { kError, kWarning };

struct LexiconViolation {
  std::string concept_id;  // empty for lexicon-level rules
  std::string rule;
  Severity severity = Severity::kError;
};

std::vector<LexiconViolation> validate_lexicon(const ConceptLexicon& lex);

// Parses the lexicon document; throws SchemaError naming the offending
// concept when any error-severity rule fails. Warnings are not fatal.
ConceptLexicon parse_lexicon(std::string_view json_text);
ConceptLexicon load_lexicon(const std::filesystem::path& path);
void save_lexicon(const ConceptLexicon& lex, const std::filesystem::path& path);

// The shipped 17-concept / 6-label starter lexicon.
std::filesystem::path default_lexicon_path();
const ConceptLexicon& default_lexicon();

// "default" resolves to the bundled lexicon, anything else is a path.
ConceptLexicon resolve_lexicon(std::string_view spec);

}  // namespace cbx

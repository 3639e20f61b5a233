#include "cbx/lexicon.hpp"

#include "cbx/error.hpp"
#include "cbx/hash.hpp"
#include "cbx/util.hpp"

#include <json.hpp>

#include <map>
#include <set>

namespace cbx {

using nlohmann::ordered_json;

ConceptLexicon::ConceptLexicon(std::vector<std::string> labels,
                               std::vector<ConceptDef> concepts)
    : labels_(std::move(labels)), concepts_(std::move(concepts)) {
  id_ = sha256_hex(to_json_text()).substr(0, 16);
}

std::optional<std::size_t> ConceptLexicon::index_of(std::string_view concept_id) const {
  for (std::size_t i = 0; i < concepts_.size(); ++i) {
    if (concepts_[i].id == concept_id) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> ConceptLexicon::label_index(std::string_view label) const {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == label) return i;
  }
  return std::nullopt;
}

std::size_t ConceptLexicon::require_index(std::string_view concept_id) const {
  if (auto i = index_of(concept_id)) return *i;
  throw NotFoundError("unknown concept id: " + std::string(concept_id));
}

std::size_t ConceptLexicon::require_label(std::string_view label) const {
  if (auto i = label_index(label)) return *i;
  throw NotFoundError("unknown label: " + std::string(label));
}

std::vector<std::size_t> ConceptLexicon::concepts_in_group(std::string_view label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < concepts_.size(); ++i) {
    if (concepts_[i].label_group == label) out.push_back(i);
  }
  return out;
}

std::string ConceptLexicon::to_json_text() const {
  ordered_json doc;
  doc["labels"] = labels_;
  ordered_json arr = ordered_json::array();
  for (const auto& c : concepts_) {
    ordered_json jc;
    jc["id"] = c.id;
    jc["display_name"] = c.display_name;
    jc["label_group"] = c.label_group;
    jc["phrases"] = c.phrases;
    arr.push_back(std::move(jc));
  }
  doc["concepts"] = std::move(arr);
  return doc.dump(2) + "\n";
}

std::vector<LexiconViolation> validate_lexicon(const ConceptLexicon& lex) {
  std::vector<LexiconViolation> out;
  if (lex.labels().empty()) out.push_back({"", "no labels declared", Severity::kError});
  std::set<std::string> seen_labels;
  for (const auto& l : lex.labels()) {
    if (!seen_labels.insert(l).second) {
      out.push_back({"", "duplicate label '" + l + "'", Severity::kError});
    }
  }

  std::set<std::string> seen_ids;
  std::map<std::string, std::string> phrase_owner;
  for (const auto& c : lex.concepts()) {
    if (c.id.empty()) out.push_back({c.id, "empty concept id", Severity::kError});
    if (!seen_ids.insert(c.id).second) {
      out.push_back({c.id, "duplicate concept id", Severity::kError});
    }
    if (!seen_labels.contains(c.label_group)) {
      out.push_back({c.id, "unknown label group '" + c.label_group + "'", Severity::kError});
    }
    if (c.phrases.empty()) out.push_back({c.id, "empty phrase list", Severity::kError});
    std::set<std::string> own;
    for (const auto& p : c.phrases) {
      if (trim(p).empty()) out.push_back({c.id, "blank phrase", Severity::kError});
      if (p != to_lower(p)) {
        out.push_back({c.id, "phrase not lowercase: '" + p + "'", Severity::kError});
      }
      if (!own.insert(p).second) {
        out.push_back({c.id, "duplicate phrase '" + p + "'", Severity::kError});
        continue;
      }
      auto [it, inserted] = phrase_owner.emplace(p, c.id);
      if (!inserted) {
        out.push_back({c.id, "phrase '" + p + "' also used by concept '" + it->second + "'",
                       Severity::kWarning});
      }
    }
  }
  return out;
}

namespace {

std::string require_string(const ordered_json& obj, const char* field,
                           const std::string& where) {
  if (!obj.contains(field)) throw SchemaError(where + ": missing field '" + field + "'");
  if (!obj[field].is_string()) throw SchemaError(where + ": field '" + field + "' must be a string");
  return obj[field].get<std::string>();
}

}  // namespace

ConceptLexicon parse_lexicon(std::string_view json_text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("lexicon is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw SchemaError("lexicon: top level must be an object");
  if (!doc.contains("labels") || !doc["labels"].is_array()) {
    throw SchemaError("lexicon: missing array field 'labels'");
  }
  if (!doc.contains("concepts") || !doc["concepts"].is_array()) {
    throw SchemaError("lexicon: missing array field 'concepts'");
  }
  std::vector<std::string> labels;
  for (const auto& l : doc["labels"]) {
    if (!l.is_string()) throw SchemaError("lexicon: labels must be strings");
    labels.push_back(l.get<std::string>());
  }

  std::vector<ConceptDef> concepts;
  std::size_t position = 0;
  for (const auto& jc : doc["concepts"]) {
    std::string where = "concept #" + std::to_string(position++);
    if (!jc.is_object()) throw SchemaError(where + ": must be an object");
    ConceptDef c;
    c.id = require_string(jc, "id", where);
    where = "concept '" + c.id + "'";
    c.display_name = require_string(jc, "display_name", where);
    c.label_group = require_string(jc, "label_group", where);
    if (!jc.contains("phrases") || !jc["phrases"].is_array()) {
      throw SchemaError(where + ": missing array field 'phrases'");
    }
    for (const auto& p : jc["phrases"]) {
      if (!p.is_string()) throw SchemaError(where + ": phrases must be strings");
      c.phrases.push_back(p.get<std::string>());
    }
    concepts.push_back(std::move(c));
  }

  ConceptLexicon lex(std::move(labels), std::move(concepts));
  for (const auto& v : validate_lexicon(lex)) {
    if (v.severity == Severity::kError) {
      throw SchemaError(v.concept_id.empty() ? "lexicon: " + v.rule
                                             : "concept '" + v.concept_id + "': " + v.rule);
    }
  }
  return lex;
}

ConceptLexicon load_lexicon(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("lexicon file not found: " + path.string());
  return parse_lexicon(read_text_file(path));
}

void save_lexicon(const ConceptLexicon& lex, const std::filesystem::path& path) {
  write_text_file(path, lex.to_json_text());
}

std::filesystem::path default_lexicon_path() { return data_dir() / "lexicon.json"; }

const ConceptLexicon& default_lexicon() {
  static const ConceptLexicon lex = load_lexicon(default_lexicon_path());
  return lex;
}

ConceptLexicon resolve_lexicon(std::string_view spec) {
  if (spec.empty() || spec == "default") return default_lexicon();
  return load_lexicon(std::filesystem::path(spec));
}

}  // namespace cbx

#include "cbx/report.hpp"

#include "cbx/error.hpp"
#include "cbx/parallel.hpp"
#include "cbx/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cctype>

namespace cbx {

namespace {

// Headers recognised as section boundaries. Only FINDINGS and IMPRESSION
// are kept; the rest just terminate the preceding section.
constexpr std::array<std::string_view, 17> kHeaders = {
    "findings",         "impression",     "indication",     "clinical history",
    "history",          "comparison",     "comparisons",    "technique",
    "examination",      "exam",           "reason for exam", "reason for examination",
    "recommendation",   "recommendations", "notification",   "final report",
    "clinical information"};

struct HeaderHit {
  std::size_t begin;       // start of the header word
  std::size_t body_begin;  // first character after the header (and colon)
  std::string_view name;
};

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::vector<HeaderHit> find_headers(std::string_view raw) {
  const std::string lower = to_lower(raw);
  std::vector<HeaderHit> hits;
  for (std::string_view name : kHeaders) {
    std::size_t pos = 0;
    while ((pos = lower.find(name, pos)) != std::string::npos) {
      const std::size_t end = pos + name.size();
      const bool left_ok = pos == 0 || !is_word_char(lower[pos - 1]);
      const bool right_ok = end == lower.size() || !is_word_char(lower[end]);
      if (left_ok && right_ok) {
        std::size_t k = end;
        while (k < lower.size() && (lower[k] == ' ' || lower[k] == '\t')) ++k;
        if (k < lower.size() && lower[k] == ':') {
          hits.push_back({pos, k + 1, name});
        } else {
          // Bare header: must stand alone on its line.
          std::size_t line_start = pos;
          while (line_start > 0 && lower[line_start - 1] != '\n') --line_start;
          const bool alone_left = trim(lower.substr(line_start, pos - line_start)).empty();
          const bool alone_right = k == lower.size() || lower[k] == '\n' || lower[k] == '\r';
          if (alone_left && alone_right) hits.push_back({pos, k, name});
        }
      }
      pos = end;
    }
  }
  // Earliest first; at equal start, the longest name wins.
  std::sort(hits.begin(), hits.end(), [](const HeaderHit& a, const HeaderHit& b) {
    if (a.begin != b.begin) return a.begin < b.begin;
    return a.name.size() > b.name.size();
  });
  std::vector<HeaderHit> kept;
  std::size_t covered = 0;
  for (const auto& h : hits) {
    if (!kept.empty() && h.begin < covered) continue;
    kept.push_back(h);
    covered = h.body_begin;
  }
  return kept;
}

}  // namespace

const std::string& ReportDocument::section(std::string_view name) const {
  static const std::string empty;
  auto it = sections.find(name);
  return it == sections.end() ? empty : it->second;
}

ReportDocument segment_report(std::string_view raw_text) {
  ReportDocument doc;
  doc.raw_text = std::string(raw_text);
  doc.sections[std::string(kFindings)] = "";
  doc.sections[std::string(kImpression)] = "";

  const auto headers = find_headers(raw_text);
  bool any = false;
  for (std::size_t i = 0; i < headers.size(); ++i) {
    const auto& h = headers[i];
    if (h.name != "findings" && h.name != "impression") continue;
    any = true;
    const std::size_t stop = i + 1 < headers.size() ? headers[i + 1].begin : raw_text.size();
    std::string body = trim(raw_text.substr(h.body_begin, stop - h.body_begin));
    auto& slot = doc.sections[h.name == "findings" ? std::string(kFindings)
                                                   : std::string(kImpression)];
    if (body.empty()) continue;
    if (!slot.empty()) slot += "\n\n";
    slot += body;
  }
  if (!any) {
    doc.sections[std::string(kFindings)] = trim(raw_text);
    doc.headerless = true;
  }
  return doc;
}

std::vector<std::string> NormalizeOptions::default_stop_tokens() {
  // De-identification and dictation residue; function words are kept.
  return {"dr", "am", "pm", "xxxx"};
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    std::string t = trim(cur);
    if (!t.empty()) out.push_back(std::move(t));
    cur.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '.' && i > 0 && i + 1 < text.size() &&
        std::isdigit(static_cast<unsigned char>(text[i - 1])) &&
        std::isdigit(static_cast<unsigned char>(text[i + 1]))) {
      cur.push_back(c);
      continue;
    }
    if (c == '.' || c == '!' || c == '?') {
      flush();
      continue;
    }
    if (c == '\n') {
      // A blank line ends a paragraph and therefore a sentence.
      std::size_t j = i + 1;
      while (j < text.size() && (text[j] == ' ' || text[j] == '\t' || text[j] == '\r')) ++j;
      if (j < text.size() && text[j] == '\n') {
        flush();
        i = j;
        continue;
      }
      cur.push_back(' ');
      continue;
    }
    cur.push_back(c);
  }
  flush();
  return out;
}

namespace {

std::vector<std::string> normalize_tokens(std::string_view s, const NormalizeOptions& opts) {
  std::string cleaned;
  cleaned.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    const bool prev_alnum = i > 0 && std::isalnum(static_cast<unsigned char>(s[i - 1]));
    const bool next_alnum = i + 1 < s.size() && std::isalnum(static_cast<unsigned char>(s[i + 1]));
    if (std::isalnum(c)) {
      cleaned.push_back(static_cast<char>(std::tolower(c)));
    } else if (c == '-' && prev_alnum && next_alnum) {
      cleaned.push_back('-');
    } else if (c == '.' && i > 0 && std::isdigit(static_cast<unsigned char>(s[i - 1])) &&
               i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1]))) {
      cleaned.push_back('.');
    } else if (c == '\'' && prev_alnum && next_alnum) {
      // possessive/contraction apostrophes are dropped without splitting
    } else if (c >= 0x80) {
      cleaned.push_back(static_cast<char>(c));  // keep UTF-8 bytes intact
    } else {
      cleaned.push_back(' ');
    }
  }
  std::vector<std::string> tokens;
  for (auto& tok : split_whitespace(cleaned)) {
    if (std::find(opts.stop_tokens.begin(), opts.stop_tokens.end(), tok) !=
        opts.stop_tokens.end()) {
      continue;
    }
    tokens.push_back(std::move(tok));
  }
  return tokens;
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

// Start offset of each token in the space-joined sentence.
std::vector<std::size_t> token_offsets(const std::vector<std::string>& tokens) {
  std::vector<std::size_t> offsets;
  offsets.reserve(tokens.size());
  std::size_t pos = 0;
  for (const auto& t : tokens) {
    offsets.push_back(pos);
    pos += t.size() + 1;
  }
  return offsets;
}

}  // namespace

std::vector<NormalizedSentence> normalize_sentences(std::string_view section_text,
                                                    const NormalizeOptions& opts) {
  std::vector<NormalizedSentence> out;
  const auto raw = split_sentences(section_text);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto tokens = normalize_tokens(raw[i], opts);
    if (tokens.empty()) continue;
    out.push_back({i, join(tokens)});
  }
  return out;
}

std::vector<std::string> normalize_phrase(std::string_view phrase, const NormalizeOptions& opts) {
  return normalize_tokens(phrase, opts);
}

NegationConfig NegationConfig::defaults() {
  static const NegationConfig cfg = load(data_dir() / "negation.json");
  return cfg;
}

NegationConfig NegationConfig::load(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("negation table " + path.string() + ": " + e.what());
  }
  NegationConfig cfg;
  auto read_list = [&](const nlohmann::json& arr, std::vector<std::string>& dst,
                       const char* what) {
    if (!arr.is_array()) throw SchemaError(std::string("negation table: '") + what + "' must be a list");
    for (const auto& v : arr) {
      if (!v.is_string()) throw SchemaError(std::string("negation table: '") + what + "' entries must be strings");
      dst.push_back(to_lower(v.get<std::string>()));
    }
  };
  if (doc.is_array()) {
    read_list(doc, cfg.triggers, "triggers");
    cfg.scope_breakers = {"but", "however", "although"};
    return cfg;
  }
  if (!doc.is_object() || !doc.contains("triggers")) {
    throw SchemaError("negation table: expected a list or an object with 'triggers'");
  }
  read_list(doc["triggers"], cfg.triggers, "triggers");
  if (doc.contains("post_triggers")) read_list(doc["post_triggers"], cfg.post_triggers, "post_triggers");
  if (doc.contains("scope_breakers")) read_list(doc["scope_breakers"], cfg.scope_breakers, "scope_breakers");
  if (doc.contains("window")) cfg.window = doc["window"].get<std::size_t>();
  return cfg;
}

NegationDetector::NegationDetector(NegationConfig cfg) : cfg_(std::move(cfg)) {
  for (const auto& t : cfg_.triggers) {
    auto toks = split_whitespace(t);
    if (!toks.empty()) trigger_tokens_.push_back(std::move(toks));
  }
  for (const auto& t : cfg_.post_triggers) {
    auto toks = split_whitespace(t);
    if (!toks.empty()) post_trigger_tokens_.push_back(std::move(toks));
  }
}

bool NegationDetector::is_negated(const std::vector<std::string>& tokens, std::size_t phrase_begin,
                                  std::size_t phrase_end) const {
  if (phrase_end <= phrase_begin) phrase_end = phrase_begin + 1;
  const auto is_breaker = [&](const std::string& tok) {
    return std::find(cfg_.scope_breakers.begin(), cfg_.scope_breakers.end(), tok) !=
           cfg_.scope_breakers.end();
  };
  // Walk backwards from the phrase; stop at a breaker or past the window.
  for (std::size_t gap = 0; gap <= cfg_.window && gap < phrase_begin + 1; ++gap) {
    const std::size_t end = phrase_begin - gap;  // trigger must end here (exclusive)
    for (const auto& trig : trigger_tokens_) {
      if (trig.size() > end) continue;
      const std::size_t start = end - trig.size();
      if (std::equal(trig.begin(), trig.end(), tokens.begin() + static_cast<std::ptrdiff_t>(start))) {
        return true;
      }
    }
    if (end == 0) break;
    if (is_breaker(tokens[end - 1])) break;
  }
  // Post-phrase triggers, same window and breakers.
  for (std::size_t gap = 0; gap <= cfg_.window && phrase_end + gap < tokens.size(); ++gap) {
    const std::size_t start = phrase_end + gap;
    for (const auto& trig : post_trigger_tokens_) {
      if (start + trig.size() > tokens.size()) continue;
      if (std::equal(trig.begin(), trig.end(), tokens.begin() + static_cast<std::ptrdiff_t>(start))) {
        return true;
      }
    }
    if (is_breaker(tokens[start])) break;
  }
  return false;
}

bool NegationDetector::is_negated(std::string_view sentence, CharRange phrase) const {
  if (phrase.begin >= phrase.end || phrase.end > sentence.size()) {
    throw DimensionError("phrase range outside sentence");
  }
  // Index of the token containing phrase.begin.
  std::size_t tok = 0;
  bool in_token = false;
  for (std::size_t i = 0; i < phrase.begin; ++i) {
    const bool space = std::isspace(static_cast<unsigned char>(sentence[i])) != 0;
    if (!space && !in_token) {
      in_token = true;
    } else if (space && in_token) {
      in_token = false;
      ++tok;
    }
  }
  const std::size_t len = split_whitespace(sentence.substr(phrase.begin, phrase.end - phrase.begin)).size();
  return is_negated(split_whitespace(sentence), tok, tok + std::max<std::size_t>(len, 1));
}

bool detect_negation(std::string_view sentence, CharRange phrase) {
  static const NegationDetector detector;
  return detector.is_negated(sentence, phrase);
}

ConceptExtractor::ConceptExtractor(const ConceptLexicon& lex, NormalizeOptions norm,
                                   NegationConfig negation)
    : lex_(lex), norm_(std::move(norm)), negation_(std::move(negation)) {
  for (std::size_t c = 0; c < lex_.size(); ++c) {
    for (const auto& p : lex_.concept_at(c).phrases) {
      auto toks = normalize_phrase(p, norm_);
      if (toks.empty()) continue;
      std::string text = join(toks);
      phrases_.push_back({c, std::move(toks), std::move(text)});
    }
  }
}

ExtractionResult ConceptExtractor::extract(const ReportDocument& report) const {
  ExtractionResult res;
  res.vector.lexicon_id = lex_.id();
  res.vector.values.assign(lex_.size(), 0);
  for (std::string_view section : {kFindings, kImpression}) {
    auto sentences = normalize_sentences(report.section(section), norm_);
    for (const auto& s : sentences) {
      const auto tokens = split_whitespace(s.text);
      const auto offsets = token_offsets(tokens);
      for (const auto& ph : phrases_) {
        const std::size_t n = ph.tokens.size();
        if (n > tokens.size()) continue;
        for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
          if (!std::equal(ph.tokens.begin(), ph.tokens.end(),
                          tokens.begin() + static_cast<std::ptrdiff_t>(i))) {
            continue;
          }
          MentionSpan span;
          span.concept_id = lex_.concept_at(ph.concept_index).id;
          span.phrase = ph.text;
          span.section = std::string(section);
          span.sentence_index = s.index;
          span.char_range = {offsets[i], offsets[i + n - 1] + tokens[i + n - 1].size()};
          span.negated = negation_.is_negated(tokens, i, i + n);
          if (!span.negated) res.vector.values[ph.concept_index] = 1;
          res.mentions.push_back(std::move(span));
        }
      }
    }
    res.sentences[std::string(section)] = std::move(sentences);
  }
  std::stable_sort(res.mentions.begin(), res.mentions.end(),
                   [](const MentionSpan& a, const MentionSpan& b) {
                     if (a.section != b.section) return a.section < b.section;
                     if (a.sentence_index != b.sentence_index) return a.sentence_index < b.sentence_index;
                     return a.char_range.begin < b.char_range.begin;
                   });
  return res;
}

ExtractionResult extract_concepts(const ReportDocument& report, const ConceptLexicon& lex) {
  return ConceptExtractor(lex).extract(report);
}

AnnotationResult annotate_corpus(const std::vector<CaseRecord>& records,
                                 const std::filesystem::path& base,
                                 const ConceptExtractor& extractor) {
  std::vector<std::optional<ConceptVector>> vectors(records.size());
  std::vector<std::string> errors(records.size());
  parallel_for(records.size(), [&](std::size_t i) {
    try {
      const auto text = read_text_file(resolve_path(base, records[i].report_path));
      vectors[i] = extractor.extract(segment_report(text)).vector;
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  AnnotationResult res;
  res.concept_counts.assign(extractor.lexicon().size(), 0);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!vectors[i]) {
      res.flagged.push_back({records[i].case_id, errors[i]});
      continue;
    }
    CaseRecord rec = records[i];
    for (std::size_t c = 0; c < vectors[i]->size(); ++c) res.concept_counts[c] += vectors[i]->values[c];
    rec.concept_vector = std::move(*vectors[i]);
    res.records.push_back(std::move(rec));
  }
  if (res.flagged.size() * 10 > records.size()) {
    throw Error("annotation skipped " + std::to_string(res.flagged.size()) + " of " +
                std::to_string(records.size()) + " records (limit 10%)");
  }
  return res;
}

}  // namespace cbx

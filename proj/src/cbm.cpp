#include "cbx/cbm.hpp"

#include "cbx/error.hpp"

#include <algorithm>
#include <numeric>

namespace cbx {

using nlohmann::ordered_json;

ordered_json LabelPrediction::to_json(const std::vector<std::string>& labels) const {
  ordered_json j;
  j["label"] = label;
  ordered_json cs = ordered_json::object();
  for (std::size_t i = 0; i < class_scores.size() && i < labels.size(); ++i) cs[labels[i]] = class_scores[i];
  j["class_scores"] = cs;
  j["head_kind"] = to_string(head_kind);
  j["low_confidence"] = low_confidence;
  return j;
}

LabelPrediction predict_label(const LabelHead& head, const ConceptScores& scores) {
  if (!scores.lexicon_id.empty() && !head.lexicon_id().empty() && scores.lexicon_id != head.lexicon_id()) {
    throw SchemaError("lexicon mismatch: head uses " + head.lexicon_id() + ", scores use " + scores.lexicon_id);
  }
  LabelPrediction p;
  p.class_scores = head.class_scores(scores.values);
  p.head_kind = head.kind();
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.class_scores.size(); ++i) {
    if (p.class_scores[i] > p.class_scores[best]) best = i;
  }
  p.label_index = best;
  p.label = head.labels().at(best);
  double second = -1.0;
  for (std::size_t i = 0; i < p.class_scores.size(); ++i) {
    if (i != best) second = std::max(second, p.class_scores[i]);
  }
  const bool any_concept = std::any_of(scores.values.begin(), scores.values.end(), [](double v) { return v >= 0.5; });
  p.low_confidence = (p.class_scores[best] - second) < kLowConfidenceMargin || !any_concept;
  return p;
}

ordered_json Explanation::to_json() const {
  ordered_json j;
  j["case_id"] = case_id;
  ordered_json arr = ordered_json::array();
  for (const auto& [id, s] : top_concepts) arr.push_back({{"concept_id", id}, {"score", s}});
  j["top_concepts"] = arr;
  return j;
}

Explanation explain_top2(const ConceptScores& scores, const ConceptLexicon& lex, std::string case_id) {
  if (scores.size() != lex.size()) {
    throw DimensionError("explanation needs " + std::to_string(lex.size()) + " scores, got " +
                         std::to_string(scores.size()));
  }
  if (lex.size() < 2) throw SchemaError("explanation needs at least 2 concepts");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + 2, idx.end(), [&](std::size_t a, std::size_t b) {
    if (scores.values[a] != scores.values[b]) return scores.values[a] > scores.values[b];
    return a < b;
  });
  Explanation e;
  e.case_id = std::move(case_id);
  for (int k = 0; k < 2; ++k) e.top_concepts.emplace_back(lex.concept_at(idx[k]).id, scores.values[idx[k]]);
  return e;
}

InterventionResult intervene(const LabelHead& head, const ConceptScores& scores, const ConceptLexicon& lex,
                             const std::map<std::string, int>& overrides) {
  if (scores.size() != lex.size()) throw DimensionError("score vector length does not match the lexicon");
  InterventionResult r;
  r.scores = scores;
  for (const auto& [id, value] : overrides) {
    const std::size_t i = lex.require_index(id);
    if (value != 0 && value != 1) {
      throw SchemaError("override for '" + id + "' must be 0 or 1, got " + std::to_string(value));
    }
    r.scores.values[i] = static_cast<double>(value);
  }
  r.prediction = predict_label(head, r.scores);
  return r;
}

}  // namespace cbx

#pragma once

#include "cbx/concepts.hpp"
#include "cbx/label_head.hpp"
#include "cbx/lexicon.hpp"

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace cbx {

// A prediction is low-confidence when the two best class scores are within
// this margin, or when no concept score reaches 0.5.
inline constexpr double kLowConfidenceMargin = 0.1;

struct LabelPrediction {
  std::string label;
  std::size_t label_index = 0;
  std::vector<double> class_scores;  // lexicon label order
  HeadKind head_kind = HeadKind::kDT;
  bool low_confidence = false;

  nlohmann::ordered_json to_json(const std::vector<std::string>& labels) const;
};

// argmax of class scores; ties go to the earlier label.
LabelPrediction predict_label(const LabelHead& head, const ConceptScores& scores);

struct Explanation {
  std::string case_id;
  std::vector<std::pair<std::string, double>> top_concepts;  // exactly 2, descending

  nlohmann::ordered_json to_json() const;
};

// Two highest scores, descending; equal scores keep lexicon order.
Explanation explain_top2(const ConceptScores& scores, const ConceptLexicon& lex, std::string case_id = {});

struct InterventionResult {
  ConceptScores scores;  // with overrides applied
  LabelPrediction prediction;
};

// Replaces overridden concepts by exact 0/1 values and recomputes the label.
// Throws NotFoundError for unknown concept ids, SchemaError for values
// other than 0 or 1.
InterventionResult intervene(const LabelHead& head, const ConceptScores& scores, const ConceptLexicon& lex,
                             const std::map<std::string, int>& overrides);

}  // namespace cbx

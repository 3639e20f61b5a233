#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cbx {

// Binary concept presence, indexed by lexicon order.
struct ConceptVector {
  std::vector<std::uint8_t> values;
  std::string lexicon_id;

  std::size_t size() const { return values.size(); }
  bool operator==(const ConceptVector&) const = default;
};

// Per-concept confidence in [0, 1], indexed by lexicon order.
struct ConceptScores {
  std::vector<double> values;
  std::string lexicon_id;

  std::size_t size() const { return values.size(); }
  bool operator==(const ConceptScores&) const = default;
};

inline ConceptScores to_scores(const ConceptVector& v) {
  ConceptScores s;
  s.lexicon_id = v.lexicon_id;
  s.values.assign(v.values.begin(), v.values.end());
  return s;
}

}  // namespace cbx

#pragma once

#include "cbx/corpus.hpp"
#include "cbx/lexicon.hpp"
#include "cbx/saliency.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace cbx {

// ---- Saliency agreement ---------------------------------------------------

// |top(A,n) ∩ top(B,n)| / k. Throws DimensionError on unequal sizes.
double pairwise_overlap(const SaliencyMap& a, const SaliencyMap& b, double n_percent);

inline const std::vector<double>& default_overlap_grid() {
  static const std::vector<double> grid{1, 2, 5, 10, 15, 20, 30, 50};
  return grid;
}

struct CurvePoint {
  double n = 0.0;
  double value = 0.0;
};

// technique -> case_id -> map
using TechniqueMaps = std::map<std::string, std::map<std::string, SaliencyMap>>;

struct OverlapCurves {
  std::map<std::pair<std::string, std::string>, std::vector<CurvePoint>> curves;  // technique pairs, a < b
  std::size_t cases_used = 0;
  std::size_t cases_skipped = 0;  // missing at least one technique

  nlohmann::ordered_json to_json() const;
  std::string to_csv() const;  // technique_a,technique_b,n,value
};

// Mean pairwise overlap per technique pair and n over cases that have every
// technique. Throws Error when more than 10% of cases are skipped.
OverlapCurves overlap_curve(const TechniqueMaps& maps, const std::vector<double>& grid = default_overlap_grid());

// Curve for one pair of map sets keyed by case id.
std::vector<CurvePoint> overlap_curve_pair(const std::map<std::string, SaliencyMap>& a,
                                           const std::map<std::string, SaliencyMap>& b,
                                           const std::vector<double>& grid, std::size_t* skipped = nullptr);

// |top(map,n) ∩ ∪bboxes| / |∪bboxes|. Boxes are clipped to the map.
double bbox_capture(const SaliencyMap& map, const std::vector<BBoxAnnotation>& bboxes, double n_percent);

// ---- Classification metrics -------------------------------------------------

struct PRF {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

PRF prf_from_counts(double tp, double fp, double fn);
// Harmonic mean of precision and recall; 0 when both are 0.
double f1_of(double precision, double recall);

using ConceptSet = std::set<std::string>;

// Micro-averaged over (case, concept) pairs. With a lexicon, every id must
// belong to it (SchemaError otherwise).
PRF concept_set_prf(const std::vector<ConceptSet>& predicted, const std::vector<ConceptSet>& truth,
                    const ConceptLexicon* lex = nullptr);

struct LabelReport {
  std::vector<std::string> labels;
  std::vector<PRF> per_class;
  std::vector<std::size_t> support;  // ground-truth count per class
  PRF macro;
  std::vector<std::string> warnings;

  nlohmann::ordered_json to_json() const;
};

// One-vs-rest per class; macro = unweighted mean over all schema labels.
LabelReport label_prf(const std::vector<std::string>& predicted, const std::vector<std::string>& truth,
                      const std::vector<std::string>& labels);

// ---- Expert scores ---------------------------------------------------------------

struct ExpertScore {
  std::string record_id;
  std::string case_id;
  std::string technique;
  std::string rater_id;
  int score = 0;
  std::int64_t timestamp = 0;  // milliseconds since the epoch
  std::string notes;

  nlohmann::ordered_json to_json() const;
  static ExpertScore from_json(const nlohmann::json& j);
};

// "cancerous" for Lung Cancer, "healthy" for Healthy, otherwise "other".
std::string cohort_of_label(std::string_view label);

struct ExpertAggregate {
  // technique -> cohort -> counts of scores 0..3
  std::map<std::string, std::map<std::string, std::array<std::size_t, 4>>> histograms;
  std::size_t effective = 0;
  std::size_t superseded = 0;
  std::size_t rejected = 0;
  std::vector<std::string> warnings;

  std::size_t total(const std::string& technique) const;
  nlohmann::ordered_json to_json() const;
  std::string to_csv() const;  // technique,cohort,score,count
  bool operator==(const ExpertAggregate& o) const {
    return histograms == o.histograms && effective == o.effective && superseded == o.superseded &&
           rejected == o.rejected;
  }
};

// Latest timestamp wins per (case, technique, rater); equal timestamps keep
// the later entry. Scores outside 0..3 are rejected.
ExpertAggregate aggregate_expert_scores(const std::vector<ExpertScore>& log,
                                        const std::function<std::string(const std::string&)>& cohort_of_case);

// ---- Result documents ---------------------------------------------------------------

struct Provenance {
  std::map<std::string, std::string> model_hashes;
  std::string lexicon_id;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;  // name -> sha256

  nlohmann::ordered_json to_json() const;
};

// {"metric", "parameters", "values", "provenance"}; no timestamps, so equal
// inputs give byte-identical documents.
nlohmann::ordered_json metric_document(const std::string& metric, nlohmann::ordered_json parameters,
                                       nlohmann::ordered_json values, const Provenance& provenance);

nlohmann::ordered_json prf_json(const PRF& p);

}  // namespace cbx

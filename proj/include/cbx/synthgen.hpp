#pragma once

#include "cbx/concepts.hpp"
#include "cbx/corpus.hpp"
#include "cbx/image.hpp"
#include "cbx/lexicon.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cbx {

struct SynthSpec {
  std::size_t n_cases = 100;
  std::size_t image_size = 64;
  // Probabilities over the lexicon labels, in lexicon label order.
  std::vector<double> label_mix = default_label_mix();
  double negation_rate = 0.3;
  // Fraction of Lung Cancer cases rendered as a solitary mass.
  double solitary_mass_rate = 0.2;
  std::uint64_t seed = 0;

  // Healthy and Cardiomegaly render a single concept, so they are kept
  // rarer than the two-concept pathologies.
  static std::vector<double> default_label_mix() { return {0.12, 0.25, 0.20, 0.20, 0.08, 0.15}; }
};

// Minimum |mean(bbox) - mean(surrounding ring)| of every rendered finding.
inline constexpr double kFindingContrastMargin = 0.1;

struct SynthCase {
  std::string case_id;
  std::string label;
  ConceptVector concepts;
  std::vector<BBoxAnnotation> bboxes;
  ImageTensor image;
  ImageTensor background;  // same anatomy and noise, no findings
  std::string report;
};

// Pure function of (spec.seed, index); the lexicon supplies report
// phrases, and must contain the 17 default concept ids.
SynthCase generate_case(const SynthSpec& spec, std::size_t index, const ConceptLexicon& lex);

// Writes images/, reports/, manifest.jsonl and truth.jsonl under out_dir.
// Returns the manifest path.
std::filesystem::path generate_corpus(const SynthSpec& spec, const std::filesystem::path& out_dir,
                                      const ConceptLexicon& lex = default_lexicon());

struct TruthRecord {
  std::string case_id;
  std::string label;
  ConceptVector concepts;
  std::vector<BBoxAnnotation> bboxes;
};

std::vector<TruthRecord> load_truth(const std::filesystem::path& path);

}  // namespace cbx

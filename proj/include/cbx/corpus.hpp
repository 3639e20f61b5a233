#pragma once

#include "cbx/concepts.hpp"
#include "cbx/image.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace cbx {

struct BBoxAnnotation {
  std::string label;
  std::string concept_id;  // finding that produced the box, when known
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open pixel box in preprocessed space

  long area() const { return static_cast<long>(x1 - x0) * (y1 - y0); }
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  bool operator==(const BBoxAnnotation&) const = default;
};

enum class Split { kTrain, kVal, kTest };

std::string_view to_string(Split s);
Split parse_split(std::string_view s);

struct CaseRecord {
  std::string case_id;
  std::string image_path;   // relative paths resolve against the manifest directory
  std::string report_path;
  std::string label;
  std::optional<ConceptVector> concept_vector;
  std::optional<std::vector<BBoxAnnotation>> bboxes;
  std::optional<Split> split;

  bool operator==(const CaseRecord&) const = default;
};

nlohmann::ordered_json record_to_json(const CaseRecord& rec);
// `line` is only used for error messages.
CaseRecord record_from_json(const nlohmann::json& j, std::size_t line);

// JSON Lines; blank lines are ignored. Throws ParseError with the line
// number on malformed input and SchemaError naming duplicate case ids.
std::vector<CaseRecord> load_manifest(const std::filesystem::path& path);
std::vector<CaseRecord> parse_manifest(std::string_view text);
void save_manifest(const std::vector<CaseRecord>& records, const std::filesystem::path& path);
std::string manifest_text(const std::vector<CaseRecord>& records);

std::filesystem::path resolve_path(const std::filesystem::path& base, const std::string& p);

// Reads and preprocesses the record's image.
ImageTensor load_case_image(const CaseRecord& rec, const std::filesystem::path& base,
                            const PreprocessOptions& opts);

// ---- One-Sided Selection -------------------------------------------------

struct OssResult {
  std::vector<std::size_t> kept;                  // indices into the input, ascending
  std::vector<std::size_t> removed_condensation;  // majority dropped by 1-NN condensation
  std::vector<std::size_t> removed_tomek;         // majority members of Tomek links
  std::vector<std::string> warnings;
};

// Core OSS on feature vectors; `labels[i]` is the class of features[i].
// Minority = every class except `majority`. Deterministic given `seed`.
OssResult one_sided_selection(const std::vector<std::vector<double>>& features,
                              const std::vector<std::string>& labels,
                              std::string_view majority, std::uint64_t seed);

using Featurizer = std::function<std::vector<double>(const CaseRecord&)>;

// Record-level OSS: returns the retained subset in input order.
std::vector<CaseRecord> one_sided_selection(const std::vector<CaseRecord>& records,
                                            const Featurizer& featurize,
                                            std::string_view majority_label, std::uint64_t seed,
                                            std::vector<std::string>* warnings = nullptr);

// Flattened 32x32 downsampling of the preprocessed image.
Featurizer default_featurizer(std::filesystem::path base, PreprocessOptions opts = {});

std::string majority_label(const std::vector<CaseRecord>& records);

// ---- Splitting -----------------------------------------------------------

struct SplitRatios {
  int train = 80, val = 10, test = 10;
};

// Stratified by label. Per-label split sizes are within 1 of the exact
// ratio and the global sizes are the rounded global targets.
std::vector<CaseRecord> split_dataset(std::vector<CaseRecord> records, SplitRatios ratios,
                                      std::uint64_t seed);

std::vector<CaseRecord> filter_split(const std::vector<CaseRecord>& records, Split s);

}  // namespace cbx

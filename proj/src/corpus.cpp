#include "cbx/corpus.hpp"

#include "cbx/error.hpp"
#include "cbx/parallel.hpp"
#include "cbx/rng.hpp"
#include "cbx/util.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace cbx {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw SchemaError("unknown split '" + std::string(s) + "'");
}

ordered_json record_to_json(const CaseRecord& rec) {
  ordered_json j;
  j["case_id"] = rec.case_id;
  j["image_path"] = rec.image_path;
  j["report_path"] = rec.report_path;
  j["label"] = rec.label;
  if (rec.bboxes) {
    ordered_json arr = ordered_json::array();
    for (const auto& b : *rec.bboxes) {
      ordered_json jb;
      jb["label"] = b.label;
      if (!b.concept_id.empty()) jb["concept"] = b.concept_id;
      jb["x0"] = b.x0;
      jb["y0"] = b.y0;
      jb["x1"] = b.x1;
      jb["y1"] = b.y1;
      arr.push_back(std::move(jb));
    }
    j["bboxes"] = std::move(arr);
  }
  if (rec.concept_vector) {
    j["concepts"] = rec.concept_vector->values;
    j["lexicon_id"] = rec.concept_vector->lexicon_id;
  }
  if (rec.split) j["split"] = std::string(to_string(*rec.split));
  return j;
}

CaseRecord record_from_json(const json& j, std::size_t line) {
  const std::string where = "manifest line " + std::to_string(line);
  if (!j.is_object()) throw ParseError(where + ": expected a JSON object");
  auto str = [&](const char* field) {
    if (!j.contains(field) || !j[field].is_string()) {
      throw ParseError(where + ": missing string field '" + field + "'");
    }
    return j[field].get<std::string>();
  };
  CaseRecord rec;
  rec.case_id = str("case_id");
  rec.image_path = str("image_path");
  rec.report_path = str("report_path");
  rec.label = str("label");
  try {
    if (j.contains("bboxes") && !j["bboxes"].is_null()) {
      std::vector<BBoxAnnotation> boxes;
      for (const auto& jb : j.at("bboxes")) {
        BBoxAnnotation b;
        b.label = jb.value("label", rec.label);
        b.concept_id = jb.value("concept", std::string{});
        b.x0 = jb.at("x0").get<int>();
        b.y0 = jb.at("y0").get<int>();
        b.x1 = jb.at("x1").get<int>();
        b.y1 = jb.at("y1").get<int>();
        if (!(b.x0 >= 0 && b.x0 < b.x1 && b.y0 >= 0 && b.y0 < b.y1)) {
          throw ParseError(where + ": degenerate bbox");
        }
        boxes.push_back(std::move(b));
      }
      rec.bboxes = std::move(boxes);
    }
    if (j.contains("concepts")) {
      ConceptVector v;
      for (const auto& x : j.at("concepts")) {
        const int bit = x.get<int>();
        if (bit != 0 && bit != 1) throw ParseError(where + ": concept values must be 0 or 1");
        v.values.push_back(static_cast<std::uint8_t>(bit));
      }
      v.lexicon_id = j.value("lexicon_id", std::string{});
      rec.concept_vector = std::move(v);
    }
    if (j.contains("split")) rec.split = parse_split(j.at("split").get<std::string>());
  } catch (const json::exception& e) {
    throw ParseError(where + ": " + e.what());
  } catch (const SchemaError& e) {
    throw ParseError(where + ": " + e.what());
  }
  return rec;
}

std::vector<CaseRecord> parse_manifest(std::string_view text) {
  std::vector<CaseRecord> out;
  std::set<std::string> ids;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string line = trim(text.substr(pos, nl - pos));
    ++line_no;
    pos = nl + 1;
    if (line.empty()) {
      if (nl == text.size()) break;
      continue;
    }
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    CaseRecord rec = record_from_json(j, line_no);
    if (!ids.insert(rec.case_id).second) {
      throw SchemaError("duplicate case_id '" + rec.case_id + "' at manifest line " +
                        std::to_string(line_no));
    }
    out.push_back(std::move(rec));
    if (nl == text.size()) break;
  }
  return out;
}

std::vector<CaseRecord> load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_text_file(path));
}

std::string manifest_text(const std::vector<CaseRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += record_to_json(r).dump();
    out.push_back('\n');
  }
  return out;
}

void save_manifest(const std::vector<CaseRecord>& records, const std::filesystem::path& path) {
  write_text_file(path, manifest_text(records));
}

std::filesystem::path resolve_path(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

ImageTensor load_case_image(const CaseRecord& rec, const std::filesystem::path& base,
                            const PreprocessOptions& opts) {
  return preprocess_image(read_png(resolve_path(base, rec.image_path)), opts);
}

// ---- OSS ------------------------------------------------------------------

namespace {

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// Nearest neighbour of `query` among `pool` (excluding `query` itself);
// ties resolve to the lowest input index.
std::size_t nearest(const std::vector<std::vector<double>>& features,
                    const std::vector<std::size_t>& pool, std::size_t query) {
  std::size_t best = std::numeric_limits<std::size_t>::max();
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t p : pool) {
    if (p == query) continue;
    const double d = squared_distance(features[query], features[p]);
    if (d < best_d || (d == best_d && p < best)) {
      best_d = d;
      best = p;
    }
  }
  return best;
}

}  // namespace

OssResult one_sided_selection(const std::vector<std::vector<double>>& features,
                              const std::vector<std::string>& labels,
                              std::string_view majority, std::uint64_t seed) {
  if (features.size() != labels.size()) throw DimensionError("OSS: features/labels length mismatch");
  for (const auto& f : features) {
    if (f.size() != features.front().size()) throw DimensionError("OSS: ragged feature vectors");
  }
  OssResult res;
  std::vector<std::size_t> majority_idx, minority_idx;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    (labels[i] == majority ? majority_idx : minority_idx).push_back(i);
  }
  const std::set<std::string> classes(labels.begin(), labels.end());
  if (classes.size() < 2 || majority_idx.empty() || minority_idx.empty()) {
    res.kept.resize(labels.size());
    std::iota(res.kept.begin(), res.kept.end(), std::size_t{0});
    res.warnings.push_back(majority_idx.empty() ? "OSS: majority class empty; input returned unchanged"
                                                : "OSS: single-class input returned unchanged");
    return res;
  }

  // (a) seed set: all minority plus one random majority sample.
  Rng rng(seed);
  const std::size_t anchor = majority_idx[rng.below(majority_idx.size())];
  std::vector<std::size_t> store = minority_idx;
  store.push_back(anchor);
  std::sort(store.begin(), store.end());

  // (b) 1-NN condensation: keep majority samples the seed set misclassifies.
  std::vector<std::size_t> extracted{anchor};
  std::vector<std::uint8_t> misclassified(majority_idx.size(), 0);
  parallel_for(majority_idx.size(), [&](std::size_t k) {
    const std::size_t i = majority_idx[k];
    if (i == anchor) return;
    const std::size_t nn = nearest(features, store, i);
    misclassified[k] = labels[nn] != majority;
  });
  for (std::size_t k = 0; k < majority_idx.size(); ++k) {
    const std::size_t i = majority_idx[k];
    if (i == anchor) continue;
    if (misclassified[k]) {
      extracted.push_back(i);
    } else {
      res.removed_condensation.push_back(i);
    }
  }

  std::vector<std::size_t> condensed = minority_idx;
  condensed.insert(condensed.end(), extracted.begin(), extracted.end());
  std::sort(condensed.begin(), condensed.end());

  // (c) Tomek links among the condensed set: mutual nearest neighbours of
  // different classes; the majority member is removed.
  std::vector<std::size_t> nn_of(condensed.size());
  parallel_for(condensed.size(), [&](std::size_t k) {
    nn_of[k] = nearest(features, condensed, condensed[k]);
  });
  std::map<std::size_t, std::size_t> pos;
  for (std::size_t k = 0; k < condensed.size(); ++k) pos[condensed[k]] = k;
  std::set<std::size_t> tomek;
  for (std::size_t k = 0; k < condensed.size(); ++k) {
    const std::size_t i = condensed[k];
    const std::size_t j = nn_of[k];
    if (j == std::numeric_limits<std::size_t>::max()) continue;
    if (nn_of[pos.at(j)] != i) continue;
    if (labels[i] == labels[j]) continue;
    if (labels[i] == majority) tomek.insert(i);
    if (labels[j] == majority) tomek.insert(j);
  }
  res.removed_tomek.assign(tomek.begin(), tomek.end());
  for (std::size_t i : condensed) {
    if (!tomek.contains(i)) res.kept.push_back(i);
  }
  std::sort(res.removed_condensation.begin(), res.removed_condensation.end());
  return res;
}

std::vector<CaseRecord> one_sided_selection(const std::vector<CaseRecord>& records,
                                            const Featurizer& featurize,
                                            std::string_view majority_label, std::uint64_t seed,
                                            std::vector<std::string>* warnings) {
  std::vector<std::vector<double>> features(records.size());
  std::vector<std::string> labels(records.size());
  parallel_for(records.size(), [&](std::size_t i) { features[i] = featurize(records[i]); });
  for (std::size_t i = 0; i < records.size(); ++i) labels[i] = records[i].label;
  const OssResult res = one_sided_selection(features, labels, majority_label, seed);
  if (warnings) warnings->insert(warnings->end(), res.warnings.begin(), res.warnings.end());
  std::vector<CaseRecord> out;
  out.reserve(res.kept.size());
  for (std::size_t i : res.kept) out.push_back(records[i]);
  return out;
}

Featurizer default_featurizer(std::filesystem::path base, PreprocessOptions opts) {
  return [base = std::move(base), opts](const CaseRecord& rec) {
    return downsample_features(load_case_image(rec, base, opts), 32);
  };
}

std::string majority_label(const std::vector<CaseRecord>& records) {
  std::map<std::string, std::size_t> counts;
  for (const auto& r : records) ++counts[r.label];
  std::string best;
  std::size_t best_n = 0;
  for (const auto& [label, n] : counts) {
    if (n > best_n) {
      best = label;
      best_n = n;
    }
  }
  return best;
}

// ---- Splitting ------------------------------------------------------------

std::vector<CaseRecord> split_dataset(std::vector<CaseRecord> records, SplitRatios ratios,
                                      std::uint64_t seed) {
  const std::array<int, 3> ratio{ratios.train, ratios.val, ratios.test};
  if (ratio[0] < 0 || ratio[1] < 0 || ratio[2] < 0 || ratio[0] + ratio[1] + ratio[2] != 100) {
    throw SchemaError("split ratios must be non-negative and sum to 100");
  }
  std::map<std::string, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < records.size(); ++i) by_label[records[i].label].push_back(i);
  for (const auto& [label, idx] : by_label) {
    if (idx.size() < 3) {
      throw SchemaError("label '" + label + "' has " + std::to_string(idx.size()) +
                        " records; at least 3 are needed to split");
    }
  }

  // Per-label floors, then distribute the leftover units so that global
  // totals hit the rounded targets while each cell moves by at most one.
  const std::size_t n_total = records.size();
  std::array<long, 3> global_target{};
  {
    long assigned = 0;
    for (int s = 0; s < 2; ++s) {
      global_target[s] = std::lround(static_cast<double>(n_total) * ratio[s] / 100.0);
      assigned += global_target[s];
    }
    global_target[2] = static_cast<long>(n_total) - assigned;
  }

  struct Cell {
    std::array<long, 3> count{};
    std::array<double, 3> frac{};
    long extra = 0;
  };
  std::vector<std::string> label_order;
  std::vector<Cell> cells;
  std::array<long, 3> demand = global_target;
  for (const auto& [label, idx] : by_label) {
    Cell c;
    long used = 0;
    for (int s = 0; s < 3; ++s) {
      const double exact = static_cast<double>(idx.size()) * ratio[s] / 100.0;
      c.count[s] = static_cast<long>(std::floor(exact));
      c.frac[s] = exact - std::floor(exact);
      used += c.count[s];
      demand[s] -= c.count[s];
    }
    c.extra = static_cast<long>(idx.size()) - used;
    label_order.push_back(label);
    cells.push_back(c);
  }
  // Labels with the most leftover units first; each takes its extras from
  // the splits with the largest remaining demand (fraction breaks ties).
  std::vector<std::size_t> order(cells.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return cells[a].extra > cells[b].extra; });
  for (std::size_t li : order) {
    Cell& c = cells[li];
    std::array<int, 3> splits{0, 1, 2};
    std::stable_sort(splits.begin(), splits.end(), [&](int a, int b) {
      if (demand[a] != demand[b]) return demand[a] > demand[b];
      return c.frac[a] > c.frac[b];
    });
    for (long e = 0; e < c.extra; ++e) {
      const int s = splits[static_cast<std::size_t>(e)];
      ++c.count[s];
      --demand[s];
    }
  }

  Rng rng(seed);
  for (std::size_t li = 0; li < label_order.size(); ++li) {
    auto idx = by_label[label_order[li]];
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return records[a].case_id < records[b].case_id;
    });
    rng.shuffle(idx);
    std::size_t k = 0;
    for (int s = 0; s < 3; ++s) {
      for (long n = 0; n < cells[li].count[s]; ++n) {
        records[idx[k++]].split = static_cast<Split>(s);
      }
    }
  }
  return records;
}

std::vector<CaseRecord> filter_split(const std::vector<CaseRecord>& records, Split s) {
  std::vector<CaseRecord> out;
  for (const auto& r : records) {
    if (r.split && *r.split == s) out.push_back(r);
  }
  return out;
}

}  // namespace cbx

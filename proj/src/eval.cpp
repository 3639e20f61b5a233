#include "cbx/eval.hpp"

#include "cbx/error.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <tuple>

namespace cbx {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

double pairwise_overlap(const SaliencyMap& a, const SaliencyMap& b, double n_percent) {
  if (a.height != b.height || a.width != b.width) {
    throw DimensionError("overlap needs equal map sizes, got " + std::to_string(a.height) + "x" +
                         std::to_string(a.width) + " and " + std::to_string(b.height) + "x" + std::to_string(b.width));
  }
  const std::size_t k = mask_size(a.size(), n_percent);
  const auto ma = top_fraction_mask(a, n_percent);
  const auto mb = top_fraction_mask(b, n_percent);
  std::size_t both = 0;
  for (std::size_t i = 0; i < ma.size(); ++i) both += ma[i] && mb[i];
  return static_cast<double>(both) / static_cast<double>(k);
}

std::vector<CurvePoint> overlap_curve_pair(const std::map<std::string, SaliencyMap>& a,
                                           const std::map<std::string, SaliencyMap>& b,
                                           const std::vector<double>& grid, std::size_t* skipped) {
  std::vector<const SaliencyMap*> pa, pb;
  std::size_t miss = 0;
  std::set<std::string> ids;
  for (const auto& [id, m] : a) ids.insert(id);
  for (const auto& [id, m] : b) ids.insert(id);
  for (const auto& id : ids) {
    auto ia = a.find(id);
    auto ib = b.find(id);
    if (ia == a.end() || ib == b.end()) {
      ++miss;
      continue;
    }
    pa.push_back(&ia->second);
    pb.push_back(&ib->second);
  }
  if (skipped) *skipped = miss;
  std::vector<CurvePoint> out;
  for (double n : grid) {
    double sum = 0.0;
    for (std::size_t i = 0; i < pa.size(); ++i) sum += pairwise_overlap(*pa[i], *pb[i], n);
    out.push_back({n, pa.empty() ? 0.0 : sum / static_cast<double>(pa.size())});
  }
  return out;
}

OverlapCurves overlap_curve(const TechniqueMaps& maps, const std::vector<double>& grid) {
  OverlapCurves res;
  std::set<std::string> all_cases;
  for (const auto& [tech, cases] : maps) {
    for (const auto& [id, m] : cases) all_cases.insert(id);
  }
  TechniqueMaps complete;
  for (const auto& id : all_cases) {
    const bool has_all = std::all_of(maps.begin(), maps.end(), [&](const auto& t) { return t.second.count(id) > 0; });
    if (!has_all) {
      ++res.cases_skipped;
      continue;
    }
    ++res.cases_used;
    for (const auto& [tech, cases] : maps) complete[tech].emplace(id, cases.at(id));
  }
  if (res.cases_skipped * 10 > all_cases.size()) {
    throw Error("overlap curve: " + std::to_string(res.cases_skipped) + " of " + std::to_string(all_cases.size()) +
                " cases lack a map for some technique");
  }
  for (auto ia = maps.begin(); ia != maps.end(); ++ia) {
    for (auto ib = std::next(ia); ib != maps.end(); ++ib) {
      res.curves[{ia->first, ib->first}] = overlap_curve_pair(complete[ia->first], complete[ib->first], grid);
    }
  }
  return res;
}

ordered_json OverlapCurves::to_json() const {
  ordered_json arr = ordered_json::array();
  for (const auto& [pair, pts] : curves) {
    ordered_json c;
    c["technique_a"] = pair.first;
    c["technique_b"] = pair.second;
    ordered_json p = ordered_json::array();
    for (const auto& pt : pts) p.push_back({{"n", pt.n}, {"value", pt.value}});
    c["points"] = p;
    arr.push_back(c);
  }
  ordered_json j;
  j["cases_used"] = cases_used;
  j["cases_skipped"] = cases_skipped;
  j["curves"] = arr;
  return j;
}

std::string OverlapCurves::to_csv() const {
  std::string out = "technique_a,technique_b,n,value\n";
  for (const auto& [pair, pts] : curves) {
    for (const auto& pt : pts) out += pair.first + "," + pair.second + "," + fmt(pt.n) + "," + fmt(pt.value) + "\n";
  }
  return out;
}

double bbox_capture(const SaliencyMap& map, const std::vector<BBoxAnnotation>& bboxes, double n_percent) {
  if (bboxes.empty()) throw SchemaError("bbox_capture needs at least one bounding box");
  std::vector<std::uint8_t> in_box(map.size(), 0);
  for (const auto& b : bboxes) {
    const int y0 = std::max(0, b.y0), x0 = std::max(0, b.x0);
    const int y1 = std::min(static_cast<int>(map.height), b.y1), x1 = std::min(static_cast<int>(map.width), b.x1);
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) in_box[static_cast<std::size_t>(y) * map.width + static_cast<std::size_t>(x)] = 1;
    }
  }
  const auto mask = top_fraction_mask(map, n_percent);
  std::size_t area = 0, hit = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    area += in_box[i];
    hit += in_box[i] && mask[i];
  }
  if (area == 0) throw DimensionError("bounding boxes lie outside the map");
  return static_cast<double>(hit) / static_cast<double>(area);
}

double f1_of(double precision, double recall) {
  return precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

PRF prf_from_counts(double tp, double fp, double fn) {
  PRF p;
  p.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  p.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  p.f1 = f1_of(p.precision, p.recall);
  return p;
}

PRF concept_set_prf(const std::vector<ConceptSet>& predicted, const std::vector<ConceptSet>& truth,
                    const ConceptLexicon* lex) {
  if (predicted.size() != truth.size()) {
    throw DimensionError("concept PRF: " + std::to_string(predicted.size()) + " predictions for " +
                         std::to_string(truth.size()) + " cases");
  }
  if (lex) {
    for (const auto* sets : {&predicted, &truth}) {
      for (const auto& s : *sets) {
        for (const auto& id : s) {
          if (!lex->index_of(id)) throw SchemaError("concept '" + id + "' is not in lexicon " + lex->id());
        }
      }
    }
  }
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    for (const auto& c : predicted[i]) (truth[i].count(c) ? tp : fp) += 1;
    for (const auto& c : truth[i]) fn += predicted[i].count(c) ? 0 : 1;
  }
  return prf_from_counts(tp, fp, fn);
}

LabelReport label_prf(const std::vector<std::string>& predicted, const std::vector<std::string>& truth,
                      const std::vector<std::string>& labels) {
  if (predicted.size() != truth.size()) {
    throw DimensionError("label PRF: " + std::to_string(predicted.size()) + " predictions for " +
                         std::to_string(truth.size()) + " cases");
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < labels.size(); ++i) index[labels[i]] = i;
  const std::size_t C = labels.size();
  std::vector<double> tp(C, 0), fp(C, 0), fn(C, 0);
  LabelReport r;
  r.labels = labels;
  r.support.assign(C, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    auto ip = index.find(predicted[i]);
    auto it = index.find(truth[i]);
    if (ip == index.end()) throw SchemaError("predicted label '" + predicted[i] + "' is not in the schema");
    if (it == index.end()) throw SchemaError("true label '" + truth[i] + "' is not in the schema");
    ++r.support[it->second];
    if (ip->second == it->second) {
      tp[it->second] += 1;
    } else {
      fp[ip->second] += 1;
      fn[it->second] += 1;
    }
  }
  double sp = 0, sr = 0, sf = 0;
  for (std::size_t c = 0; c < C; ++c) {
    PRF p = prf_from_counts(tp[c], fp[c], fn[c]);
    if (r.support[c] == 0) {
      r.warnings.push_back("class '" + labels[c] + "' has no ground-truth cases; scored as 0");
      p = PRF{};
    }
    r.per_class.push_back(p);
    sp += p.precision;
    sr += p.recall;
    sf += p.f1;
  }
  if (C > 0) r.macro = {sp / static_cast<double>(C), sr / static_cast<double>(C), sf / static_cast<double>(C)};
  return r;
}

ordered_json prf_json(const PRF& p) {
  ordered_json j;
  j["precision"] = p.precision;
  j["recall"] = p.recall;
  j["f1"] = p.f1;
  return j;
}

ordered_json LabelReport::to_json() const {
  ordered_json per = ordered_json::object();
  for (std::size_t c = 0; c < labels.size(); ++c) {
    ordered_json e = prf_json(per_class[c]);
    e["support"] = support[c];
    per[labels[c]] = e;
  }
  ordered_json j;
  j["per_class"] = per;
  j["macro"] = prf_json(macro);
  j["warnings"] = warnings;
  return j;
}

ordered_json ExpertScore::to_json() const {
  ordered_json j;
  j["record_id"] = record_id;
  j["case_id"] = case_id;
  j["technique"] = technique;
  j["rater_id"] = rater_id;
  j["score"] = score;
  j["timestamp"] = timestamp;
  j["notes"] = notes;
  return j;
}

ExpertScore ExpertScore::from_json(const json& j) {
  ExpertScore s;
  try {
    s.record_id = j.value("record_id", "");
    s.case_id = j.at("case_id").get<std::string>();
    s.technique = j.at("technique").get<std::string>();
    s.rater_id = j.value("rater_id", "");
    if (!j.at("score").is_number_integer()) throw SchemaError("score must be an integer");
    s.score = j.at("score").get<int>();
    s.timestamp = j.value("timestamp", std::int64_t{0});
    s.notes = j.value("notes", "");
  } catch (const json::exception& e) {
    throw SchemaError(std::string("expert score: ") + e.what());
  }
  return s;
}

std::string cohort_of_label(std::string_view label) {
  if (label == "Lung Cancer") return "cancerous";
  if (label == "Healthy") return "healthy";
  return "other";
}

std::size_t ExpertAggregate::total(const std::string& technique) const {
  auto it = histograms.find(technique);
  if (it == histograms.end()) return 0;
  std::size_t n = 0;
  for (const auto& [cohort, h] : it->second) {
    for (std::size_t c : h) n += c;
  }
  return n;
}

ExpertAggregate aggregate_expert_scores(const std::vector<ExpertScore>& log,
                                        const std::function<std::string(const std::string&)>& cohort_of_case) {
  ExpertAggregate agg;
  // key -> (timestamp, position) of the effective entry
  std::map<std::tuple<std::string, std::string, std::string>, std::size_t> latest;
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& s = log[i];
    if (s.score < 0 || s.score > 3) {
      ++agg.rejected;
      agg.warnings.push_back("rejected score " + std::to_string(s.score) + " for case " + s.case_id);
      continue;
    }
    const auto key = std::make_tuple(s.case_id, s.technique, s.rater_id);
    auto it = latest.find(key);
    if (it == latest.end()) {
      latest.emplace(key, i);
    } else {
      ++agg.superseded;
      if (s.timestamp >= log[it->second].timestamp) it->second = i;
    }
  }
  for (const auto& [key, i] : latest) {
    const auto& s = log[i];
    auto& h = agg.histograms[s.technique][cohort_of_case(s.case_id)];
    ++h[static_cast<std::size_t>(s.score)];
    ++agg.effective;
  }
  return agg;
}

ordered_json ExpertAggregate::to_json() const {
  ordered_json techs = ordered_json::object();
  for (const auto& [tech, cohorts] : histograms) {
    ordered_json c = ordered_json::object();
    for (const auto& [cohort, h] : cohorts) c[cohort] = h;
    techs[tech] = c;
  }
  ordered_json j;
  j["histograms"] = techs;
  j["effective"] = effective;
  j["superseded"] = superseded;
  j["rejected"] = rejected;
  return j;
}

std::string ExpertAggregate::to_csv() const {
  std::string out = "technique,cohort,score,count\n";
  for (const auto& [tech, cohorts] : histograms) {
    for (const auto& [cohort, h] : cohorts) {
      for (std::size_t s = 0; s < 4; ++s) {
        out += tech + "," + cohort + "," + std::to_string(s) + "," + std::to_string(h[s]) + "\n";
      }
    }
  }
  return out;
}

ordered_json Provenance::to_json() const {
  ordered_json j;
  ordered_json mh = ordered_json::object();
  for (const auto& [k, v] : model_hashes) mh[k] = v;
  j["model_hashes"] = mh;
  j["lexicon_id"] = lexicon_id;
  j["seed"] = seed;
  ordered_json in = ordered_json::object();
  for (const auto& [k, v] : inputs) in[k] = v;
  j["inputs"] = in;
  return j;
}

ordered_json metric_document(const std::string& metric, ordered_json parameters, ordered_json values,
                             const Provenance& provenance) {
  ordered_json j;
  j["metric"] = metric;
  j["parameters"] = std::move(parameters);
  j["values"] = std::move(values);
  j["provenance"] = provenance.to_json();
  return j;
}

}  // namespace cbx

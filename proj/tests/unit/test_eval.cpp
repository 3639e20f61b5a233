#include "cbx/error.hpp"
#include "cbx/eval.hpp"
#include "cbx/lexicon.hpp"
#include "cbx/rng.hpp"
#include "test_support.hpp"

using namespace cbx;

namespace {

SaliencyMap random_map(std::size_t h, std::size_t w, Rng& rng, int levels) {
  SaliencyMap m(h, w);
  for (auto& v : m.values) v = std::floor(rng.uniform() * levels) / levels;
  return m;
}

// Top-k pixel set by a full sort on (value desc, index asc).
std::set<std::size_t> top_set(const SaliencyMap& m, std::size_t k) {
  std::vector<std::size_t> idx(m.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return m.values[a] != m.values[b] ? m.values[a] > m.values[b] : a < b;
  });
  return {idx.begin(), idx.begin() + static_cast<long>(k)};
}

std::size_t oracle_k(std::size_t pixels, double n) {
  const double exact = n / 100.0 * static_cast<double>(pixels);
  std::size_t k = static_cast<std::size_t>(std::floor(exact));
  if (exact - static_cast<double>(k) >= 0.5) ++k;
  return std::max<std::size_t>(k, 1);
}

}  // namespace

TEST(PairwiseOverlap, MatchesSetIntersectionOracle) {
  Rng rng(21);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t h = 3 + rng.below(10), w = 3 + rng.below(10);
    const auto a = random_map(h, w, rng, 1 + static_cast<int>(rng.below(6)));
    const auto b = random_map(h, w, rng, 1 + static_cast<int>(rng.below(6)));
    const double n = default_overlap_grid()[rng.below(default_overlap_grid().size())];
    const std::size_t k = oracle_k(h * w, n);
    const auto sa = top_set(a, k), sb = top_set(b, k);
    std::size_t both = 0;
    for (auto i : sa) both += sb.count(i);
    EXPECT_NEAR(pairwise_overlap(a, b, n), static_cast<double>(both) / static_cast<double>(k), 1e-12);
  }
}

TEST(PairwiseOverlap, IdentityAndSymmetry) {
  Rng rng(22);
  const auto a = random_map(12, 12, rng, 100), b = random_map(12, 12, rng, 100);
  for (double n : default_overlap_grid()) {
    EXPECT_EQ(pairwise_overlap(a, a, n), 1.0);
    EXPECT_EQ(pairwise_overlap(a, b, n), pairwise_overlap(b, a, n));
  }
  EXPECT_THROW(pairwise_overlap(a, SaliencyMap(12, 11), 5), DimensionError);
}

TEST(PairwiseOverlap, DisjointHotspots) {
  SaliencyMap a(10, 10), b(10, 10);
  for (std::size_t i = 0; i < 10; ++i) a.values[i] = 1.0, b.values[90 + i] = 1.0;
  EXPECT_EQ(pairwise_overlap(a, b, 10), 0.0);
  EXPECT_EQ(pairwise_overlap(a, b, 100), 1.0);
}

TEST(BboxCapture, MatchesPixelCountingOracle) {
  Rng rng(23);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t h = 4 + rng.below(12), w = 4 + rng.below(12);
    const auto m = random_map(h, w, rng, 1 + static_cast<int>(rng.below(8)));
    std::vector<BBoxAnnotation> boxes;
    const std::size_t nb = 1 + rng.below(3);
    for (std::size_t i = 0; i < nb; ++i) {
      BBoxAnnotation b;
      b.x0 = static_cast<int>(rng.below(w)) - 2;
      b.y0 = static_cast<int>(rng.below(h)) - 2;
      b.x1 = b.x0 + 3 + static_cast<int>(rng.below(6));
      b.y1 = b.y0 + 3 + static_cast<int>(rng.below(6));
      boxes.push_back(b);
    }
    const double n = 1 + rng.uniform() * 99;
    const auto top = top_set(m, oracle_k(h * w, n));
    std::size_t area = 0, hit = 0;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        bool in = false;
        for (const auto& b : boxes) in |= b.contains(static_cast<int>(x), static_cast<int>(y));
        area += in;
        hit += in && top.count(y * w + x);
      }
    }
    if (area == 0) {
      EXPECT_THROW(bbox_capture(m, boxes, n), DimensionError);
    } else {
      EXPECT_NEAR(bbox_capture(m, boxes, n), static_cast<double>(hit) / static_cast<double>(area), 1e-12);
    }
  }
}

TEST(BboxCapture, MonotoneInMaskFraction) {
  Rng rng(24);
  const auto m = random_map(20, 20, rng, 50);
  const std::vector<BBoxAnnotation> boxes{{"Lung Cancer", "mass", 3, 4, 9, 11}};
  double prev = 0;
  for (double n : default_overlap_grid()) {
    const double c = bbox_capture(m, boxes, n);
    EXPECT_GE(c, prev);
    prev = c;
  }
  EXPECT_EQ(bbox_capture(m, boxes, 100), 1.0);
  EXPECT_THROW(bbox_capture(m, {}, 5), SchemaError);
}

TEST(OverlapCurve, AveragesOverSharedCasesAndSkips) {
  Rng rng(25);
  TechniqueMaps maps;
  for (int c = 0; c < 20; ++c) {
    const std::string id = "c" + std::to_string(c);
    maps["gradcam"][id] = random_map(8, 8, rng, 10);
    if (c != 7) maps["occlusion"][id] = random_map(8, 8, rng, 10);
  }
  const auto curves = overlap_curve(maps, {5, 50});
  EXPECT_EQ(curves.cases_used, 19u);
  EXPECT_EQ(curves.cases_skipped, 1u);
  const auto& pts = curves.curves.at({"gradcam", "occlusion"});
  ASSERT_EQ(pts.size(), 2u);
  double sum = 0;
  for (int c = 0; c < 20; ++c) {
    if (c == 7) continue;
    const std::string id = "c" + std::to_string(c);
    sum += pairwise_overlap(maps["gradcam"][id], maps["occlusion"][id], 50);
  }
  EXPECT_NEAR(pts[1].value, sum / 19, 1e-12);
  EXPECT_NE(curves.to_csv().find("gradcam,occlusion,50"), std::string::npos);
}

TEST(OverlapCurve, TooManySkippedCasesIsAnError) {
  Rng rng(26);
  TechniqueMaps maps;
  for (int c = 0; c < 10; ++c) {
    maps["a"]["c" + std::to_string(c)] = random_map(4, 4, rng, 4);
    if (c < 8) maps["b"]["c" + std::to_string(c)] = random_map(4, 4, rng, 4);
  }
  EXPECT_THROW(overlap_curve(maps), Error);
}

TEST(Prf, CountsAndHarmonicMean) {
  const auto p = prf_from_counts(3, 1, 2);
  EXPECT_DOUBLE_EQ(p.precision, 0.75);
  EXPECT_DOUBLE_EQ(p.recall, 0.6);
  EXPECT_DOUBLE_EQ(p.f1, 2 * 0.75 * 0.6 / 1.35);
  const auto z = prf_from_counts(0, 0, 0);
  EXPECT_EQ(z.f1, 0.0);
  EXPECT_EQ(f1_of(0, 0), 0.0);
}

TEST(ConceptSetPrf, MatchesPairwiseOracle) {
  const auto& lex = default_lexicon();
  Rng rng(27);
  for (int t = 0; t < 1000; ++t) {
    std::vector<ConceptSet> pred(1 + rng.below(8)), truth(pred.size());
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      for (std::size_t k = 0; k < lex.size(); ++k) {
        const bool p = rng.uniform() < 0.2, g = rng.uniform() < 0.2;
        if (p) pred[i].insert(lex.concept_at(k).id);
        if (g) truth[i].insert(lex.concept_at(k).id);
        tp += p && g;
        fp += p && !g;
        fn += !p && g;
      }
    }
    const auto r = concept_set_prf(pred, truth, &lex);
    const double P = tp + fp ? tp / (tp + fp) : 0, R = tp + fn ? tp / (tp + fn) : 0;
    EXPECT_NEAR(r.precision, P, 1e-12);
    EXPECT_NEAR(r.recall, R, 1e-12);
    EXPECT_NEAR(r.f1, P + R ? 2 * P * R / (P + R) : 0, 1e-12);
  }
}

TEST(ConceptSetPrf, ValidatesInputs) {
  const auto& lex = default_lexicon();
  EXPECT_THROW(concept_set_prf({{"mass"}}, {}, &lex), DimensionError);
  EXPECT_THROW(concept_set_prf({{"zebra"}}, {{"mass"}}, &lex), SchemaError);
  EXPECT_NO_THROW(concept_set_prf({{"zebra"}}, {{"mass"}}));
}

TEST(LabelPrf, WorkedExample) {
  const std::vector<std::string> labels{"A", "B", "C"};
  const auto r = label_prf({"A", "A", "B", "C", "C"}, {"A", "B", "B", "C", "A"}, labels);
  // A: tp1 fp1 fn1; B: tp1 fp0 fn1; C: tp1 fp1 fn0
  EXPECT_DOUBLE_EQ(r.per_class[0].f1, 0.5);
  EXPECT_DOUBLE_EQ(r.per_class[1].precision, 1.0);
  EXPECT_DOUBLE_EQ(r.per_class[1].recall, 0.5);
  EXPECT_DOUBLE_EQ(r.per_class[2].recall, 1.0);
  EXPECT_DOUBLE_EQ(r.macro.precision, (0.5 + 1.0 + 0.5) / 3);
  EXPECT_EQ(r.support, (std::vector<std::size_t>{2, 2, 1}));
  EXPECT_TRUE(r.warnings.empty());
}

TEST(LabelPrf, AbsentClassScoresZeroWithWarning) {
  const auto r = label_prf({"A", "B"}, {"A", "B"}, {"A", "B", "C"});
  EXPECT_EQ(r.per_class[2].f1, 0.0);
  EXPECT_NEAR(r.macro.f1, 2.0 / 3.0, 1e-12);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("'C'"), std::string::npos);
  EXPECT_THROW(label_prf({"A"}, {"Z"}, {"A"}), SchemaError);
  EXPECT_THROW(label_prf({"A"}, {}, {"A"}), DimensionError);
}

TEST(LabelPrf, MacroMatchesOneVsRestOracle) {
  const std::vector<std::string> labels{"a", "b", "c", "d"};
  Rng rng(28);
  for (int t = 0; t < 1000; ++t) {
    std::vector<std::string> p(5 + rng.below(30)), g(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = labels[rng.below(4)];
      g[i] = labels[rng.below(4)];
    }
    double macro = 0;
    for (const auto& c : labels) {
      double tp = 0, fp = 0, fn = 0, sup = 0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        tp += p[i] == c && g[i] == c;
        fp += p[i] == c && g[i] != c;
        fn += p[i] != c && g[i] == c;
        sup += g[i] == c;
      }
      const double P = tp + fp ? tp / (tp + fp) : 0, R = tp + fn ? tp / (tp + fn) : 0;
      macro += sup && P + R ? 2 * P * R / (P + R) : 0;
    }
    EXPECT_NEAR(label_prf(p, g, labels).macro.f1, macro / 4, 1e-12);
  }
}

TEST(ExpertScores, CohortMapping) {
  EXPECT_EQ(cohort_of_label("Lung Cancer"), "cancerous");
  EXPECT_EQ(cohort_of_label("Healthy"), "healthy");
  EXPECT_EQ(cohort_of_label("Pneumonia"), "other");
}

TEST(ExpertScores, LatestWinsAndOutOfRangeRejected) {
  auto s = [](std::string c, std::string t, std::string r, int score, std::int64_t ts) {
    ExpertScore e;
    e.case_id = std::move(c);
    e.technique = std::move(t);
    e.rater_id = std::move(r);
    e.score = score;
    e.timestamp = ts;
    return e;
  };
  const std::vector<ExpertScore> log{
      s("c1", "gradcam", "r1", 1, 100), s("c1", "gradcam", "r1", 3, 200),  // later timestamp wins
      s("c1", "gradcam", "r1", 0, 150),                                    // older, superseded
      s("c2", "gradcam", "r1", 2, 100), s("c2", "gradcam", "r1", 1, 100),  // tie keeps later entry
      s("c1", "gradcam", "r2", 2, 50),  s("c3", "occlusion", "r1", 4, 10), s("c3", "occlusion", "r1", -1, 10)};
  const auto cohort = [](const std::string& id) { return id == "c2" ? std::string("healthy") : std::string("cancerous"); };
  const auto agg = aggregate_expert_scores(log, cohort);
  EXPECT_EQ(agg.rejected, 2u);
  EXPECT_EQ(agg.superseded, 3u);
  EXPECT_EQ(agg.effective, 3u);
  EXPECT_EQ(agg.histograms.at("gradcam").at("cancerous"), (std::array<std::size_t, 4>{0, 0, 1, 1}));
  EXPECT_EQ(agg.histograms.at("gradcam").at("healthy"), (std::array<std::size_t, 4>{0, 1, 0, 0}));
  EXPECT_EQ(agg.total("gradcam"), 3u);
  EXPECT_EQ(agg.total("occlusion"), 0u);
  EXPECT_EQ(agg.warnings.size(), 2u);
}

TEST(ExpertScores, AggregationIsOrderIndependentForDistinctTimestamps) {
  Rng rng(29);
  std::vector<ExpertScore> log;
  for (int i = 0; i < 200; ++i) {
    ExpertScore e;
    e.case_id = "c" + std::to_string(rng.below(10));
    e.technique = rng.uniform() < 0.5 ? "gradcam" : "occlusion";
    e.rater_id = "r" + std::to_string(rng.below(3));
    e.score = static_cast<int>(rng.below(4));
    e.timestamp = i;
    log.push_back(e);
  }
  const auto cohort = [](const std::string& id) { return id < "c5" ? std::string("cancerous") : std::string("other"); };
  const auto a = aggregate_expert_scores(log, cohort);
  rng.shuffle(log);
  EXPECT_EQ(aggregate_expert_scores(log, cohort), a);
}

TEST(ExpertScores, JsonRoundTripAndSchema) {
  ExpertScore e;
  e.record_id = "r-1";
  e.case_id = "c";
  e.technique = "gradcam";
  e.rater_id = "dr";
  e.score = 2;
  e.timestamp = 1700000000000;
  e.notes = "ok";
  const auto back = ExpertScore::from_json(nlohmann::json::parse(e.to_json().dump()));
  EXPECT_EQ(back.to_json(), e.to_json());
  EXPECT_THROW(ExpertScore::from_json(nlohmann::json{{"case_id", "c"}, {"technique", "t"}, {"score", "2"}}),
               SchemaError);
  EXPECT_THROW(ExpertScore::from_json(nlohmann::json{{"technique", "t"}, {"score", 2}}), SchemaError);
}

TEST(MetricDocument, DeterministicAndStructured) {
  Provenance p;
  p.model_hashes["concept"] = "abc";
  p.lexicon_id = "lex";
  p.seed = 7;
  p.inputs["manifest"] = "00ff";
  const auto a = metric_document("overlap", {{"grid", {1, 2}}}, {{"x", 0.5}}, p);
  const auto b = metric_document("overlap", {{"grid", {1, 2}}}, {{"x", 0.5}}, p);
  EXPECT_EQ(a.dump(), b.dump());
  std::vector<std::string> keys;
  for (const auto& [k, v] : a.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"metric", "parameters", "values", "provenance"}));
  EXPECT_EQ(a["provenance"]["seed"], 7);
}

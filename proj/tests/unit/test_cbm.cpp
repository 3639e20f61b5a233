#include "cbx/cbm.hpp"
#include "cbx/error.hpp"
#include "cbx/lexicon.hpp"
#include "cbx/rng.hpp"
#include "cbx/synthgen.hpp"
#include "test_support.hpp"

using namespace cbx;

namespace {

LabelHeadPtr lookup_tree() {
  const auto& lex = default_lexicon();
  SynthSpec spec;
  spec.image_size = 32;
  HeadTrainingData d;
  d.labels = lex.labels();
  d.lexicon_id = lex.id();
  for (std::size_t i = 0; i < 800; ++i) {
    const auto c = generate_case(spec, i, lex);
    d.x.emplace_back(c.concepts.values.begin(), c.concepts.values.end());
    d.y.push_back(lex.require_label(c.label));
  }
  return train_label_head(d, HeadKind::kDT);
}

ConceptScores scores_with(std::map<std::string, double> on) {
  const auto& lex = default_lexicon();
  ConceptScores s;
  s.lexicon_id = lex.id();
  s.values.assign(lex.size(), 0.0);
  for (const auto& [id, v] : on) s.values[lex.require_index(id)] = v;
  return s;
}

}  // namespace

TEST(PredictLabel, HilarMassIsLungCancer) {
  const auto head = lookup_tree();
  const auto p = predict_label(*head, scores_with({{"mass", 0.9}, {"irregular_hilum", 0.8}}));
  EXPECT_EQ(p.label, "Lung Cancer");
  EXPECT_EQ(p.head_kind, HeadKind::kDT);
  EXPECT_EQ(p.class_scores.size(), 6u);
  EXPECT_FALSE(p.low_confidence);
}

TEST(PredictLabel, AllZeroScoresAreLowConfidenceAndDeterministic) {
  const auto head = lookup_tree();
  const auto a = predict_label(*head, scores_with({}));
  const auto b = predict_label(*head, scores_with({}));
  EXPECT_TRUE(a.low_confidence);
  EXPECT_EQ(a.label, b.label);
  EXPECT_EQ(a.class_scores, b.class_scores);
}

TEST(PredictLabel, LexiconMismatchRaises) {
  const auto head = lookup_tree();
  auto s = scores_with({{"mass", 1.0}});
  s.lexicon_id = "another";
  EXPECT_THROW(predict_label(*head, s), Error);
  s = scores_with({});
  s.values.pop_back();
  EXPECT_THROW(predict_label(*head, s), DimensionError);
}

TEST(Explain, TopTwoDescending) {
  const auto e = explain_top2(scores_with({{"mass", 0.9}, {"irregular_hilum", 0.8}, {"nodule", 0.3}}),
                              default_lexicon(), "c1");
  ASSERT_EQ(e.top_concepts.size(), 2u);
  EXPECT_EQ(e.top_concepts[0].first, "mass");
  EXPECT_EQ(e.top_concepts[1].first, "irregular_hilum");
  EXPECT_EQ(e.case_id, "c1");
  EXPECT_EQ(e.to_json()["top_concepts"].size(), 2u);
}

TEST(Explain, TiesGoToLexiconOrder) {
  auto s = scores_with({});
  for (auto& v : s.values) v = 0.5;
  const auto e = explain_top2(s, default_lexicon());
  EXPECT_EQ(e.top_concepts[0].first, "unremarkable");
  EXPECT_EQ(e.top_concepts[1].first, "mass");
}

TEST(Explain, MatchesFullSortOracle) {
  const auto& lex = default_lexicon();
  Rng rng(12);
  for (int t = 0; t < 500; ++t) {
    auto s = scores_with({});
    for (auto& v : s.values) v = std::round(rng.uniform() * 8) / 8;  // coarse grid forces ties
    std::vector<std::size_t> idx(lex.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return s.values[a] != s.values[b] ? s.values[a] > s.values[b] : a < b;
    });
    const auto e = explain_top2(s, lex);
    EXPECT_EQ(e.top_concepts[0].first, lex.concept_at(idx[0]).id);
    EXPECT_EQ(e.top_concepts[1].first, lex.concept_at(idx[1]).id);
    EXPECT_EQ(e.top_concepts[0].second, s.values[idx[0]]);
  }
}

TEST(Explain, PermutationEquivariant) {
  const auto& lex = default_lexicon();
  Rng rng(13);
  for (int t = 0; t < 100; ++t) {
    std::vector<std::size_t> perm(lex.size());
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<ConceptDef> concepts;
    auto s = scores_with({});
    for (auto& v : s.values) v = rng.uniform();
    ConceptScores ps;
    for (std::size_t i : perm) {
      concepts.push_back(lex.concept_at(i));
      ps.values.push_back(s.values[i]);
    }
    const ConceptLexicon permuted(lex.labels(), concepts);
    ps.lexicon_id = permuted.id();
    EXPECT_EQ(explain_top2(ps, permuted).top_concepts, explain_top2(s, lex).top_concepts);
  }
}

TEST(Intervene, EmptyOverridesAreIdentity) {
  const auto head = lookup_tree();
  const auto s = scores_with({{"effusion", 0.8}, {"fluid", 0.7}});
  const auto r = intervene(*head, s, default_lexicon(), {});
  EXPECT_EQ(r.scores, s);
  EXPECT_EQ(r.prediction.label, predict_label(*head, s).label);
}

TEST(Intervene, CancerToHealthy) {
  const auto head = lookup_tree();
  const auto s = scores_with({{"mass", 0.95}, {"nodule", 0.9}});
  ASSERT_EQ(predict_label(*head, s).label, "Lung Cancer");
  const auto r = intervene(*head, s, default_lexicon(), {{"mass", 0}, {"nodule", 0}, {"unremarkable", 1}});
  EXPECT_EQ(r.prediction.label, "Healthy");
  EXPECT_EQ(r.scores.values[default_lexicon().require_index("unremarkable")], 1.0);
  EXPECT_EQ(s.values[default_lexicon().require_index("mass")], 0.95);  // input untouched
}

TEST(Intervene, RejectsUnknownConceptsAndNonBinaryValues) {
  const auto head = lookup_tree();
  EXPECT_THROW(intervene(*head, scores_with({}), default_lexicon(), {{"zebra", 1}}), NotFoundError);
  EXPECT_THROW(intervene(*head, scores_with({}), default_lexicon(), {{"mass", 2}}), SchemaError);
}

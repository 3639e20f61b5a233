#include "cbx/concept_model.hpp"
#include "cbx/error.hpp"
#include "cbx/lexicon.hpp"
#include "cbx/synthgen.hpp"
#include "test_support.hpp"

#include <cstdlib>

using namespace cbx;

namespace {

std::vector<ConceptExample> examples(std::size_t n, std::size_t offset = 0) {
  SynthSpec spec;
  spec.seed = 11;
  spec.image_size = 32;
  std::vector<ConceptExample> out;
  for (std::size_t i = offset; i < offset + n; ++i) {
    auto c = generate_case(spec, i, default_lexicon());
    out.push_back({std::move(c.image), std::move(c.concepts)});
  }
  return out;
}

TrainConfig tiny(std::size_t epochs) {
  TrainConfig cfg;
  cfg.width = 4;
  cfg.epochs = epochs;
  cfg.batch_size = 16;
  cfg.patience = 0;
  cfg.seed = 5;
  return cfg;
}

class ThreadsEnv {
 public:
  explicit ThreadsEnv(const char* n) {
    if (const char* v = std::getenv("CBX_THREADS")) old_ = v;
    setenv("CBX_THREADS", n, 1);
  }
  ~ThreadsEnv() { old_.empty() ? unsetenv("CBX_THREADS") : setenv("CBX_THREADS", old_.c_str(), 1); }

 private:
  std::string old_;
};

}  // namespace

TEST(TrainConfig, ValidatesAndRoundTrips) {
  TrainConfig cfg = tiny(3);
  cfg.backbone = Backbone::kInception;
  const auto back = TrainConfig::from_json(nlohmann::json::parse(cfg.to_json().dump()));
  EXPECT_EQ(back.to_json(), cfg.to_json());
  using Mutation = std::function<void(TrainConfig&)>;
  for (const Mutation& bad : std::vector<Mutation>{[](TrainConfig& c) { c.batch_size = 0; }, [](TrainConfig& c) { c.learning_rate = -1; },
                   [](TrainConfig& c) { c.epochs = 0; }, [](TrainConfig& c) { c.width = 0; }}) {
    TrainConfig c = tiny(1);
    bad(c);
    EXPECT_THROW(c.validate(), Error);
  }
  EXPECT_EQ(parse_backbone("inception"), Backbone::kInception);
  EXPECT_THROW(parse_backbone("resnet"), Error);
}

TEST(ConceptTraining, LossFallsOnASmallSet) {
  const auto train = examples(64);
  std::vector<EpochLog> seen;
  const auto model = train_concept_predictor(train, {}, tiny(6), default_lexicon(),
                                             [&](const EpochLog& e) { seen.push_back(e); });
  ASSERT_EQ(seen.size(), 6u);
  EXPECT_LT(seen.back().train_loss, seen.front().train_loss);
  EXPECT_TRUE(std::isnan(seen.front().val_f1));
  EXPECT_EQ(model.history().size(), 6u);
  EXPECT_EQ(model.concept_ids().size(), default_lexicon().size());
}

TEST(ConceptTraining, SameSeedSameModelAcrossThreadCounts) {
  const auto train = examples(40), val = examples(10, 40);
  std::string h1, h2;
  {
    ThreadsEnv env("1");
    h1 = train_concept_predictor(train, val, tiny(2), default_lexicon()).hash();
  }
  {
    ThreadsEnv env("3");
    h2 = train_concept_predictor(train, val, tiny(2), default_lexicon()).hash();
  }
  EXPECT_EQ(h1, h2);
  auto other = tiny(2);
  other.seed = 6;
  EXPECT_NE(train_concept_predictor(train, val, other, default_lexicon()).hash(), h1);
}

TEST(ConceptTraining, RejectsBadInputs) {
  EXPECT_THROW(train_concept_predictor({}, {}, tiny(1), default_lexicon()), Error);
  auto train = examples(4);
  train[2].concepts.values.pop_back();
  EXPECT_THROW(train_concept_predictor(train, {}, tiny(1), default_lexicon()), DimensionError);
  train = examples(4);
  train[1].image = ImageTensor(40, 40);
  EXPECT_THROW(train_concept_predictor(train, {}, tiny(1), default_lexicon()), DimensionError);
}

TEST(ConceptModelArtifact, SerializationRoundTrip) {
  test::TempDir dir;
  const auto model = train_concept_predictor(examples(20), {}, tiny(1), default_lexicon());
  model.save(dir / "m.cbxm");
  const auto back = ConceptModel::load(dir / "m.cbxm");
  EXPECT_EQ(back.hash(), model.hash());
  EXPECT_EQ(back.serialize(), model.serialize());
  const auto img = examples(1, 100)[0].image;
  EXPECT_EQ(predict_concepts(back, img).values, predict_concepts(model, img).values);
}

TEST(ConceptModelArtifact, RejectsCorruptBytes) {
  const auto model = train_concept_predictor(examples(8), {}, tiny(1), default_lexicon());
  auto bytes = model.serialize();
  EXPECT_THROW(ConceptModel::deserialize({bytes.begin(), bytes.begin() + 10}), Error);
  bytes[0] ^= 0xff;
  EXPECT_THROW(ConceptModel::deserialize(bytes), Error);
  EXPECT_THROW(ConceptModel::load("/nonexistent/model.cbxm"), Error);
}

TEST(PredictConcepts, ScoresAreProbabilitiesAndChecked) {
  const auto model = train_concept_predictor(examples(8), {}, tiny(1), default_lexicon());
  for (const auto& ex : examples(5, 50)) {
    const auto s = predict_concepts(model, ex.image, default_lexicon().id());
    ASSERT_EQ(s.size(), default_lexicon().size());
    for (double v : s.values) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  EXPECT_THROW(predict_concepts(model, ImageTensor(16, 16)), DimensionError);
  EXPECT_THROW(predict_concepts(model, examples(1)[0].image, "other-lexicon"), Error);
}

TEST(ConceptModel, ParameterCountIsChecked) {
  EXPECT_THROW(ConceptModel(tiny(1), 32, "x", {"a", "b"}, std::vector<float>(3), 0.5, {}), SchemaError);
}

TEST(ThresholdedMicroF1, HalfThreshold) {
  ConceptScores a{{0.9, 0.2, 0.6}, "l"}, b{{0.1, 0.7, 0.49}, "l"};
  ConceptVector ta{{1, 0, 0}, "l"}, tb{{0, 1, 1}, "l"};
  // tp: a0, b1; fp: a2; fn: b2
  EXPECT_NEAR(thresholded_micro_f1({a, b}, {ta, tb}), 2.0 / 3.0, 1e-12);
  b.values[2] = 0.5;  // the threshold itself counts as positive
  EXPECT_NEAR(thresholded_micro_f1({a, b}, {ta, tb}), 6.0 / 7.0, 1e-12);
  EXPECT_EQ(thresholded_micro_f1({}, {}), 0.0);
}

#include "cbx/error.hpp"
#include "cbx/service.hpp"
#include "cbx/synthgen.hpp"
#include "test_support.hpp"

#include <httplib.h>

#include <cstdlib>
#include <thread>

using namespace cbx;
using nlohmann::json;

namespace {

struct Fixture {
  test::TempDir dir;
  std::filesystem::path manifest;
  std::vector<CaseRecord> records;
  std::shared_ptr<const ConceptModel> model;
  LabelHeadPtr head;

  Fixture() {
    SynthSpec spec;
    spec.n_cases = 30;
    spec.image_size = 32;
    spec.seed = 3;
    manifest = generate_corpus(spec, dir / "corpus");
    records = load_manifest(manifest);
    TrainConfig cfg;
    cfg.width = 4;
    const auto net = build_backbone(cfg, 32, default_lexicon().size());
    std::vector<float> params;
    Rng rng(1);
    net.init(params, rng);
    std::vector<std::string> ids;
    for (const auto& c : default_lexicon().concepts()) ids.push_back(c.id);
    model = std::make_shared<const ConceptModel>(cfg, 32, default_lexicon().id(), ids,
                                                 params, 0.4, std::vector<EpochLog>{});
    HeadTrainingData d;
    d.labels = default_lexicon().labels();
    d.lexicon_id = default_lexicon().id();
    for (std::size_t i = 0; i < 300; ++i) {
      const auto c = generate_case(spec, 1000 + i, default_lexicon());
      d.x.emplace_back(c.concepts.values.begin(), c.concepts.values.end());
      d.y.push_back(default_lexicon().require_label(c.label));
    }
    head = train_label_head(d, HeadKind::kDT);
  }

  std::unique_ptr<ReviewService> service(bool unblind = false, std::size_t page_size = 20) const {
    return std::make_unique<ReviewService>(records, manifest.parent_path(), default_lexicon(), model, head,
                                           dir / "scores.jsonl", unblind, page_size);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

std::size_t count_label(const std::vector<CaseRecord>& recs, const std::string& label) {
  return static_cast<std::size_t>(
      std::count_if(recs.begin(), recs.end(), [&](const CaseRecord& r) { return r.label == label; }));
}

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override { std::filesystem::remove(fixture().dir / "scores.jsonl"); }
};

}  // namespace

TEST_F(ServiceTest, ListsCasesWithPaging) {
  const auto svc = fixture().service(false, 7);
  const auto r = svc->list_cases("", "", "");
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["total"], 30);
  EXPECT_EQ(r.body["pages"], 5);
  EXPECT_EQ(r.body["items"].size(), 7u);
  EXPECT_FALSE(r.body["items"][0].contains("ground_truth_label"));
  EXPECT_EQ(svc->list_cases("", "", "5").body["items"].size(), 2u);
  EXPECT_EQ(svc->list_cases("", "", "9").body["items"].size(), 0u);
  EXPECT_EQ(svc->list_cases("", "", "1", "30").body["items"].size(), 30u);
  // Sorted by case id across pages.
  std::vector<std::string> ids;
  for (int p = 1; p <= 5; ++p) {
    const auto page = svc->list_cases("all", "all", std::to_string(p));
    for (const auto& it : page.body["items"]) ids.push_back(it["case_id"]);
  }
  EXPECT_TRUE(std::is_sorted(ids.begin(), ids.end()));
  EXPECT_EQ(ids.size(), 30u);
}

TEST_F(ServiceTest, CohortFilterMatchesLabels) {
  const auto svc = fixture().service(true, 100);
  const auto& recs = fixture().records;
  EXPECT_EQ(svc->list_cases("cancerous", "", "").body["total"], count_label(recs, "Lung Cancer"));
  EXPECT_EQ(svc->list_cases("healthy", "", "").body["total"], count_label(recs, "Healthy"));
  EXPECT_EQ(svc->list_cases("other", "", "").body["total"],
            30 - count_label(recs, "Lung Cancer") - count_label(recs, "Healthy"));
  const auto cancerous = svc->list_cases("cancerous", "", "");
  for (const auto& it : cancerous.body["items"]) {
    EXPECT_EQ(it["ground_truth_label"], "Lung Cancer");
  }
}

TEST_F(ServiceTest, RejectsBadQueries) {
  const auto svc = fixture().service();
  for (const auto& r : {svc->list_cases("zebra", "", ""), svc->list_cases("", "done", ""),
                        svc->list_cases("", "", "0"), svc->list_cases("", "", "-1"), svc->list_cases("", "", "x"),
                        svc->list_cases("", "", "1", "0")}) {
    EXPECT_EQ(r.status, 400);
    EXPECT_TRUE(r.body.contains("code"));
    EXPECT_TRUE(r.body.contains("message"));
  }
}

TEST_F(ServiceTest, CaseDetailIsCachedAndBlinded) {
  const auto svc = fixture().service();
  const std::string id = fixture().records[3].case_id;
  const auto a = svc->get_case(id);
  ASSERT_EQ(a.status, 200) << a.text();
  EXPECT_EQ(a.body["concept_scores"].size(), default_lexicon().size());
  EXPECT_EQ(a.body["explanation"]["top_concepts"].size(), 2u);
  EXPECT_TRUE(a.body["prediction"].contains("label"));
  EXPECT_EQ(a.body["status"], "unscored");
  EXPECT_FALSE(a.body.contains("ground_truth_label"));
  EXPECT_EQ(svc->get_case(id).text(), a.text());
  EXPECT_EQ(svc->cache_size(), 1u);
  EXPECT_EQ(svc->get_case("nope").status, 404);
  EXPECT_EQ(fixture().service(true)->get_case(id).body["ground_truth_label"], fixture().records[3].label);
}

TEST_F(ServiceTest, ScoresAreValidatedAndStored) {
  const auto svc = fixture().service();
  const std::string id = fixture().records[0].case_id;
  EXPECT_EQ(svc->post_score(id, "{not json", "").status, 400);
  EXPECT_EQ(svc->post_score(id, "[1]", "").status, 400);
  EXPECT_EQ(svc->post_score(id, R"({"score":4})", "").body["code"], "invalid_score");
  EXPECT_EQ(svc->post_score(id, R"({"score":"2"})", "").status, 400);
  EXPECT_EQ(svc->post_score(id, R"({"score":1.5})", "").status, 400);
  EXPECT_EQ(svc->post_score(id, R"({"score":2,"technique":""})", "").status, 400);
  EXPECT_EQ(svc->post_score("nope", R"({"score":2})", "").status, 404);
  EXPECT_EQ(svc->score_log().size(), 0u);

  const auto ok = svc->post_score(id, R"({"score":3,"notes":"clear"})", "dr-x");
  ASSERT_EQ(ok.status, 201);
  EXPECT_EQ(ok.body["rater_id"], "dr-x");
  EXPECT_EQ(ok.body["technique"], "xpertxai");
  EXPECT_EQ(ok.body["notes"], "clear");
  EXPECT_EQ(svc->post_score(id, R"({"score":0,"rater_id":"dr-y","technique":"gradcam"})", "dr-x").body["rater_id"],
            "dr-y");
  EXPECT_EQ(svc->post_score(id, R"({"score":1})", "").body["rater_id"], "anonymous");
  EXPECT_EQ(svc->get_case(id).body["status"], "scored");
  EXPECT_EQ(svc->list_cases("", "scored", "").body["total"], 1);
  EXPECT_EQ(svc->list_cases("", "unscored", "").body["total"], 29);

  const auto agg = svc->expert_scores();
  EXPECT_EQ(agg.body["effective"], 3);
  EXPECT_EQ(agg.body["totals"]["xpertxai"], 2);
  EXPECT_EQ(agg.body["totals"]["gradcam"], 1);
}

TEST_F(ServiceTest, InterventionMatchesLibraryCall) {
  const auto svc = fixture().service();
  const std::string id = fixture().records[5].case_id;
  EXPECT_EQ(svc->post_intervene(id, R"({"overrides":{"zebra":1}})").body["code"], "unknown_concept");
  EXPECT_EQ(svc->post_intervene(id, R"({"overrides":{"mass":2}})").status, 400);
  EXPECT_EQ(svc->post_intervene(id, R"({"overrides":[1]})").status, 400);
  EXPECT_EQ(svc->post_intervene(id, "{").status, 400);
  EXPECT_EQ(svc->post_intervene("nope", "{}").status, 404);

  const auto same = svc->post_intervene(id, "");
  ASSERT_EQ(same.status, 200);
  EXPECT_EQ(same.body["pre"]["prediction"], same.body["post"]["prediction"]);

  std::map<std::string, int> overrides;
  for (const auto& c : default_lexicon().concepts()) overrides[c.id] = 0;
  overrides["mass"] = overrides["irregular_hilum"] = 1;
  const auto r = svc->post_intervene(id, json{{"overrides", overrides}}.dump());
  ASSERT_EQ(r.status, 200);
  const auto detail = svc->get_case(id);
  ConceptScores s;
  s.lexicon_id = default_lexicon().id();
  for (const auto& c : detail.body["concept_scores"]) s.values.push_back(c["score"]);
  const auto expect = intervene(*fixture().head, s, default_lexicon(), overrides);
  EXPECT_EQ(r.body["post"]["prediction"]["label"], expect.prediction.label);
  EXPECT_EQ(r.body["post"]["prediction"]["label"], "Lung Cancer");
}

TEST_F(ServiceTest, ServesPngImages) {
  const auto svc = fixture().service();
  const auto r = svc->image(fixture().records[0].case_id);
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.content_type, "image/png");
  EXPECT_EQ(r.raw.substr(1, 3), "PNG");
  EXPECT_EQ(svc->image("nope").status, 404);
}

TEST_F(ServiceTest, MissingImageIsAServerError) {
  auto recs = fixture().records;
  recs[0].image_path = "images/missing.png";
  ReviewService svc(recs, fixture().manifest.parent_path(), default_lexicon(), fixture().model, fixture().head,
                    fixture().dir / "scores.jsonl");
  EXPECT_EQ(svc.get_case(recs[0].case_id).status, 500);
  EXPECT_EQ(svc.image(recs[0].case_id).status, 500);
}

TEST_F(ServiceTest, ConstructionChecksArtifacts) {
  const auto& f = fixture();
  EXPECT_THROW(ReviewService(f.records, f.dir.path(), default_lexicon(), nullptr, f.head, f.dir / "s.jsonl"),
               SchemaError);
  const ConceptLexicon other(default_lexicon().labels(), {default_lexicon().concept_at(0)});
  EXPECT_THROW(ReviewService(f.records, f.dir.path(), other, f.model, f.head, f.dir / "s.jsonl"), Error);
  ServiceConfig cfg;
  EXPECT_THROW(ReviewService::from_config(cfg), SchemaError);
}

TEST(ServiceConfig, EnvironmentOverridesDefaults) {
  setenv(kEnvPort, "9123", 1);
  setenv(kEnvUnblind, "true", 1);
  setenv(kEnvScoreLog, "/tmp/x.jsonl", 1);
  ServiceConfig cfg;
  cfg.apply_env();
  EXPECT_EQ(cfg.port, 9123);
  EXPECT_TRUE(cfg.unblind);
  EXPECT_EQ(cfg.score_log, "/tmp/x.jsonl");
  EXPECT_EQ(cfg.host, "127.0.0.1");
  setenv(kEnvPort, "eighty", 1);
  EXPECT_THROW(cfg.apply_env(), SchemaError);
  unsetenv(kEnvPort);
  unsetenv(kEnvUnblind);
  unsetenv(kEnvScoreLog);
}

TEST_F(ServiceTest, HttpRoundTripAndConcurrentScores) {
  auto svc = fixture().service();
  HttpFrontend http(*svc);
  const int port = http.start("127.0.0.1", 0);
  httplib::Client cli("127.0.0.1", port);

  auto list = cli.Get("/cases?cohort=all&page=1&page_size=5");
  ASSERT_TRUE(list);
  EXPECT_EQ(list->status, 200);
  EXPECT_EQ(json::parse(list->body)["items"].size(), 5u);
  EXPECT_EQ(list->get_header_value("Access-Control-Allow-Origin"), "*");

  const std::string id = fixture().records[2].case_id;
  auto detail = cli.Get("/cases/" + id);
  ASSERT_TRUE(detail);
  EXPECT_EQ(detail->status, 200);
  auto img = cli.Get("/images/" + id);
  ASSERT_TRUE(img);
  EXPECT_EQ(img->get_header_value("Content-Type"), "image/png");
  auto missing = cli.Get("/no/such/route");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  EXPECT_EQ(json::parse(missing->body)["code"], "not_found");
  auto bad = cli.Post("/cases/" + id + "/score", R"({"score":9})", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  auto iv = cli.Post("/cases/" + id + "/intervene", R"({"overrides":{"mass":1}})", "application/json");
  ASSERT_TRUE(iv);
  EXPECT_EQ(iv->status, 200);

  constexpr int kThreads = 6, kEach = 10;
  std::vector<std::thread> pool;
  std::atomic<int> created{0};
  for (int t = 0; t < kThreads; ++t) {
    pool.emplace_back([&, t] {
      httplib::Client c("127.0.0.1", port);
      httplib::Headers h{{"X-Rater-Id", "rater" + std::to_string(t)}};
      for (int i = 0; i < kEach; ++i) {
        const auto& rec = fixture().records[static_cast<std::size_t>(i)];
        auto res = c.Post("/cases/" + rec.case_id + "/score", h, json{{"score", (t + i) % 4}}.dump(),
                          "application/json");
        if (res && res->status == 201) ++created;
      }
    });
  }
  for (auto& th : pool) th.join();
  EXPECT_EQ(created.load(), kThreads * kEach);
  auto agg = cli.Get("/metrics/expert-scores");
  ASSERT_TRUE(agg);
  EXPECT_EQ(json::parse(agg->body)["effective"], kThreads * kEach);
  http.stop();

  // Every acknowledged score survives a restart.
  const auto reopened = fixture().service();
  EXPECT_EQ(reopened->score_log().size(), static_cast<std::size_t>(kThreads * kEach));
  EXPECT_TRUE(reopened->score_log().replay_warnings().empty());
}

#include "cbx/corpus.hpp"
#include "cbx/util.hpp"
#include "test_support.hpp"

#include <json.hpp>

#include <array>
#include <cstdio>
#include <sys/wait.h>

using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

Run run_cli(const std::string& args) {
  const std::string cmd = std::string(CBX_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

// One small corpus taken through every stage, shared by the tests below.
class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new cbx::test::TempDir();
    corpus_ = dir_->path() / "corpus";
    annotated_ = corpus_ / "annotated.jsonl";
    for (const std::string& step :
         {"synth-gen --n 60 --image-size 32 --seed 4 --out " + q(corpus_),
          "extract --manifest " + q(corpus_ / "manifest.jsonl") + " --truth " + q(corpus_ / "truth.jsonl"),
          "train-concepts --manifest " + q(annotated_) + " --epochs 2 --width 4 --image-size 32",
          "train-labels --manifest " + q(annotated_) + " --head all"}) {
      const auto r = run_cli(step);
      setup_log_ += "$ cbx " + step + "\n" + r.output;
      if (r.code != 0) setup_ok_ = false;
    }
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  void SetUp() override { ASSERT_TRUE(setup_ok_) << setup_log_; }

  static std::string first_case() { return cbx::load_manifest(annotated_).front().case_id; }

  static inline cbx::test::TempDir* dir_ = nullptr;
  static inline std::filesystem::path corpus_, annotated_;
  static inline bool setup_ok_ = true;
  static inline std::string setup_log_;
};

}  // namespace

TEST(Cli, MissingSubcommandIsUsageError) {
  const auto r = run_cli("");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("error:"), std::string::npos);
  EXPECT_NE(r.output.find("synth-gen"), std::string::npos);
}

TEST(Cli, HelpAndVersionSucceed) {
  EXPECT_EQ(run_cli("--help").code, 0);
  EXPECT_EQ(run_cli("evaluate --help").code, 0);
  EXPECT_EQ(run_cli("--version").code, 0);
}

TEST(Cli, BadFlagValuesAreUsageErrors) {
  cbx::test::TempDir dir;
  EXPECT_EQ(run_cli("synth-gen --n many --out " + q(dir / "c")).code, 2);
  EXPECT_EQ(run_cli("synth-gen --n 5").code, 2);  // --out is required
  EXPECT_EQ(run_cli("evaluate bogus").code, 2);
}

TEST(Cli, RuntimeFailuresExitOneWithMessage) {
  const auto r = run_cli("extract --manifest /nonexistent/manifest.jsonl");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("error:"), std::string::npos);
  EXPECT_NE(r.output.find("/nonexistent/manifest.jsonl"), std::string::npos);
}

TEST(Cli, SynthGenIsReproducible) {
  cbx::test::TempDir dir;
  ASSERT_EQ(run_cli("synth-gen --n 8 --image-size 32 --seed 9 --out " + q(dir / "a")).code, 0);
  ASSERT_EQ(run_cli("synth-gen --n 8 --image-size 32 --seed 9 --out " + q(dir / "b")).code, 0);
  EXPECT_EQ(cbx::read_text_file(dir / "a/manifest.jsonl"), cbx::read_text_file(dir / "b/manifest.jsonl"));
  EXPECT_EQ(cbx::read_text_file(dir / "a/truth.jsonl"), cbx::read_text_file(dir / "b/truth.jsonl"));
  const std::string run = cbx::read_text_file(dir / "a/run-synth-gen.json");
  ASSERT_EQ(run_cli("synth-gen --n 8 --image-size 32 --seed 9 --out " + q(dir / "a")).code, 0);
  EXPECT_EQ(cbx::read_text_file(dir / "a/run-synth-gen.json"), run);
}

TEST(Cli, ConfigFileSuppliesFlagsAndCommandLineWins) {
  cbx::test::TempDir dir;
  cbx::write_text_file(dir / "cfg.json", json{{"synth-gen", {{"n", 6}, {"image-size", 32}, {"seed", 2}}}}.dump());
  ASSERT_EQ(run_cli("--config " + q(dir / "cfg.json") + " synth-gen --out " + q(dir / "a")).code, 0);
  EXPECT_EQ(cbx::load_manifest(dir / "a/manifest.jsonl").size(), 6u);
  ASSERT_EQ(run_cli("--config " + q(dir / "cfg.json") + " synth-gen --n 3 --out " + q(dir / "b")).code, 0);
  EXPECT_EQ(cbx::load_manifest(dir / "b/manifest.jsonl").size(), 3u);
  cbx::write_text_file(dir / "bad.json", "{nope");
  EXPECT_NE(run_cli("--config " + q(dir / "bad.json") + " synth-gen --out " + q(dir / "c")).code, 0);
}

TEST_F(CliPipeline, ExtractionMatchesTruth) {
  const auto m = json::parse(cbx::read_text_file(corpus_ / "extract_metrics.json"));
  EXPECT_EQ(m["values"]["concept_prf_vs_truth"]["f1"], 1.0) << m.dump(2);
  for (const auto& r : cbx::load_manifest(annotated_)) {
    EXPECT_TRUE(r.concept_vector.has_value());
    EXPECT_TRUE(r.split.has_value());
  }
}

TEST_F(CliPipeline, TrainingWritesArtifacts) {
  for (const char* f : {"concept_model.cbxm", "concept_model.cbxm.history.json", "run-train-concepts.json",
                        "heads/label_head_dt.json", "heads/label_head_svm.json", "heads/label_head_mlp.json",
                        "heads/heads_report.json", "heads/heads_report.csv", "heads/heads_report.md",
                        "heads/dt_tree.txt"}) {
    EXPECT_TRUE(std::filesystem::exists(corpus_ / f)) << f;
  }
}

TEST_F(CliPipeline, EvaluateWritesMetricDocuments) {
  ASSERT_EQ(run_cli("evaluate concepts --manifest " + q(annotated_)).code, 0);
  const auto c = json::parse(cbx::read_text_file(corpus_ / "metrics/concepts.json"));
  EXPECT_EQ(c["metric"], "concept_capture");
  EXPECT_TRUE(c["values"].contains("top_k_capture"));
  const auto r = run_cli("evaluate labels --manifest " + q(annotated_) + " --head svm");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(std::filesystem::exists(corpus_ / "metrics/labels_svm.json"));
  const auto s = run_cli("evaluate saliency --manifest " + q(annotated_) + " --max-cases 4 --patch 8 --stride 8");
  ASSERT_EQ(s.code, 0) << s.output;
  for (const char* f : {"overlap.json", "overlap.csv", "overlap.svg", "bbox_capture.json", "bbox_capture.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(corpus_ / "metrics/saliency" / f)) << f;
  }
}

TEST_F(CliPipeline, ExplainPrintsTopTwoAsJson) {
  const auto r = run_cli("explain --case " + first_case() + " --manifest " + q(annotated_) + " --json");
  ASSERT_EQ(r.code, 0) << r.output;
  const auto j = json::parse(r.output);
  EXPECT_EQ(j["top_concepts"].size(), 2u);
  EXPECT_TRUE(j["prediction"].contains("label"));
  const auto missing = run_cli("explain --case no_such_case --manifest " + q(annotated_));
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.output.find("no_such_case"), std::string::npos);
}

TEST_F(CliPipeline, ExpertScoreAggregation) {
  const auto id = first_case();
  std::string log;
  for (int s : {1, 2, 3}) {
    log += json{{"record_id", "s" + std::to_string(s)}, {"case_id", id}, {"technique", "gradcam"},
                {"rater_id", "r" + std::to_string(s)}, {"score", s}, {"timestamp", 1000 + s}}
               .dump() +
           "\n";
  }
  cbx::write_text_file(dir_->path() / "scores.jsonl", log);
  const auto out = dir_->path() / "expert";
  const auto r = run_cli("evaluate expert --score-log " + q(dir_->path() / "scores.jsonl") + " --manifest " +
                     q(annotated_) + " --out " + q(out));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto j = json::parse(cbx::read_text_file(out / "expert_scores.json"));
  EXPECT_EQ(j["values"]["effective"], 3) << j.dump(2);
}

TEST_F(CliPipeline, MissingModelNamesTheFix) {
  cbx::test::TempDir other;
  std::filesystem::copy_file(annotated_, other / "annotated.jsonl");
  const auto r = run_cli("evaluate concepts --manifest " + q(other / "annotated.jsonl"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("train-concepts"), std::string::npos);
}

#pragma once

#include "cbx/cbm.hpp"
#include "cbx/concept_model.hpp"
#include "cbx/corpus.hpp"
#include "cbx/label_head.hpp"
#include "cbx/lexicon.hpp"
#include "cbx/score_log.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

namespace httplib {
class Server;
}

namespace cbx {

// Environment variables read by ServiceConfig::from_env.
inline constexpr const char* kEnvPort = "CBX_PORT";
inline constexpr const char* kEnvHost = "CBX_HOST";
inline constexpr const char* kEnvManifest = "CBX_MANIFEST";
inline constexpr const char* kEnvConceptModel = "CBX_CONCEPT_MODEL";
inline constexpr const char* kEnvLabelHead = "CBX_LABEL_HEAD";
inline constexpr const char* kEnvScoreLog = "CBX_SCORE_LOG";
inline constexpr const char* kEnvLexicon = "CBX_LEXICON";
inline constexpr const char* kEnvUnblind = "CBX_UNBLIND";

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path manifest;
  std::filesystem::path concept_model;
  std::filesystem::path label_head;
  std::filesystem::path score_log = "scores.jsonl";
  std::string lexicon = "default";
  bool unblind = false;
  std::size_t page_size = 20;
  std::string default_technique = "xpertxai";

  // Fields whose environment variable is set are overwritten.
  void apply_env();
};

struct Response {
  int status = 200;
  nlohmann::ordered_json body;
  std::string content_type = "application/json";
  std::string raw;  // non-JSON payloads (PNG)

  std::string text() const;
};

Response error_response(int status, const std::string& code, const std::string& message,
                        const std::string& detail = {});

// Transport-independent request handlers over one loaded pipeline.
// Concurrent calls are safe; score writes go through the ScoreLog writer.
class ReviewService {
 public:
  ReviewService(std::vector<CaseRecord> records, std::filesystem::path base, ConceptLexicon lex,
                std::shared_ptr<const ConceptModel> model, LabelHeadPtr head, std::filesystem::path score_log,
                bool unblind = false, std::size_t page_size = 20, std::string default_technique = "xpertxai");
  static std::unique_ptr<ReviewService> from_config(const ServiceConfig& cfg);

  Response list_cases(const std::string& cohort, const std::string& status, const std::string& page,
                      const std::string& page_size = {}) const;
  Response get_case(const std::string& case_id);
  Response post_score(const std::string& case_id, const std::string& body, const std::string& rater_header);
  Response post_intervene(const std::string& case_id, const std::string& body);
  Response expert_scores() const;
  Response image(const std::string& case_id) const;

  const ScoreLog& score_log() const { return *log_; }
  ExpertAggregate aggregate() const;
  std::size_t cache_size() const;

 private:
  struct Computed {
    ConceptScores scores;
    LabelPrediction prediction;
    Explanation explanation;
  };

  const CaseRecord* find(const std::string& case_id) const;
  std::shared_ptr<const Computed> compute(const CaseRecord& rec);
  std::string status_of(const std::string& case_id, const std::vector<ExpertScore>& log) const;
  nlohmann::ordered_json scores_json(const ConceptScores& s) const;

  std::vector<CaseRecord> records_;  // sorted by case_id
  std::map<std::string, std::size_t, std::less<>> index_;
  std::filesystem::path base_;
  ConceptLexicon lex_;
  std::shared_ptr<const ConceptModel> model_;
  LabelHeadPtr head_;
  std::string model_hash_;
  std::unique_ptr<ScoreLog> log_;
  bool unblind_;
  std::size_t page_size_;
  std::string default_technique_;

  mutable std::mutex cache_mu_;
  std::map<std::pair<std::string, std::string>, std::shared_ptr<const Computed>> cache_;
};

// cpp-httplib binding of the handlers.
class HttpFrontend {
 public:
  explicit HttpFrontend(ReviewService& service);
  ~HttpFrontend();

  // Binds and serves on a background thread; port 0 picks a free port.
  // Returns the bound port.
  int start(const std::string& host, int port);
  // Blocks until stop() is called from elsewhere.
  void serve_forever(const std::string& host, int port);
  void stop();

 private:
  void install_routes();

  ReviewService& service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace cbx

#include "cbx/service.hpp"

#include "cbx/error.hpp"
#include "cbx/util.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>

#include <httplib.h>

namespace cbx {

using nlohmann::json;
using nlohmann::ordered_json;

void ServiceConfig::apply_env() {
  auto env = [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
  };
  if (auto v = env(kEnvHost)) host = *v;
  if (auto v = env(kEnvPort)) {
    try {
      port = std::stoi(*v);
    } catch (const std::exception&) {
      throw SchemaError(std::string(kEnvPort) + " is not a port number: " + *v);
    }
  }
  if (auto v = env(kEnvManifest)) manifest = *v;
  if (auto v = env(kEnvConceptModel)) concept_model = *v;
  if (auto v = env(kEnvLabelHead)) label_head = *v;
  if (auto v = env(kEnvScoreLog)) score_log = *v;
  if (auto v = env(kEnvLexicon)) lexicon = *v;
  if (auto v = env(kEnvUnblind)) unblind = *v == "1" || to_lower(*v) == "true";
}

std::string Response::text() const { return raw.empty() ? body.dump() : raw; }

Response error_response(int status, const std::string& code, const std::string& message, const std::string& detail) {
  Response r;
  r.status = status;
  r.body["code"] = code;
  r.body["message"] = message;
  r.body["detail"] = detail;
  return r;
}

ReviewService::ReviewService(std::vector<CaseRecord> records, std::filesystem::path base, ConceptLexicon lex,
                             std::shared_ptr<const ConceptModel> model, LabelHeadPtr head,
                             std::filesystem::path score_log, bool unblind, std::size_t page_size,
                             std::string default_technique)
    : records_(std::move(records)),
      base_(std::move(base)),
      lex_(std::move(lex)),
      model_(std::move(model)),
      head_(std::move(head)),
      unblind_(unblind),
      page_size_(page_size == 0 ? 20 : page_size),
      default_technique_(std::move(default_technique)) {
  if (!model_ || !head_) throw SchemaError("review service needs a concept model and a label head");
  if (model_->lexicon_id() != lex_.id()) {
    throw SchemaError("concept model lexicon " + model_->lexicon_id() + " differs from " + lex_.id());
  }
  if (head_->input_size() != lex_.size()) throw DimensionError("label head input size does not match the lexicon");
  std::sort(records_.begin(), records_.end(),
            [](const CaseRecord& a, const CaseRecord& b) { return a.case_id < b.case_id; });
  for (std::size_t i = 0; i < records_.size(); ++i) index_.emplace(records_[i].case_id, i);
  model_hash_ = model_->hash() + ":" + head_->hash();
  log_ = std::make_unique<ScoreLog>(std::move(score_log));
}

std::unique_ptr<ReviewService> ReviewService::from_config(const ServiceConfig& cfg) {
  if (cfg.manifest.empty()) throw SchemaError("service needs a manifest path");
  if (cfg.concept_model.empty()) throw SchemaError("service needs a concept model path");
  if (cfg.label_head.empty()) throw SchemaError("service needs a label head path");
  auto records = load_manifest(cfg.manifest);
  auto model = std::make_shared<const ConceptModel>(ConceptModel::load(cfg.concept_model));
  auto head = load_label_head(cfg.label_head);
  return std::make_unique<ReviewService>(std::move(records), cfg.manifest.parent_path(), resolve_lexicon(cfg.lexicon),
                                         std::move(model), std::move(head), cfg.score_log, cfg.unblind,
                                         cfg.page_size, cfg.default_technique);
}

const CaseRecord* ReviewService::find(const std::string& case_id) const {
  auto it = index_.find(case_id);
  return it == index_.end() ? nullptr : &records_[it->second];
}

std::string ReviewService::status_of(const std::string& case_id, const std::vector<ExpertScore>& log) const {
  for (const auto& s : log) {
    if (s.case_id == case_id && s.score >= 0 && s.score <= 3) return "scored";
  }
  return "unscored";
}

Response ReviewService::list_cases(const std::string& cohort, const std::string& status, const std::string& page,
                                   const std::string& page_size) const {
  static const std::set<std::string> cohorts{"", "all", "cancerous", "healthy", "other"};
  static const std::set<std::string> statuses{"", "all", "scored", "unscored"};
  if (!cohorts.count(cohort)) {
    return error_response(400, "invalid_filter", "unknown cohort '" + cohort + "'",
                          "expected cancerous, healthy, other or all");
  }
  if (!statuses.count(status)) {
    return error_response(400, "invalid_filter", "unknown status '" + status + "'", "expected scored, unscored or all");
  }
  auto parse_positive = [](const std::string& s, std::size_t fallback) -> std::optional<std::size_t> {
    if (s.empty()) return fallback;
    if (!std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; }) || s.size() > 9) {
      return std::nullopt;
    }
    const std::size_t v = std::stoul(s);
    if (v == 0) return std::nullopt;
    return v;
  };
  const auto pg = parse_positive(page, 1);
  if (!pg) return error_response(400, "invalid_page", "page must be a positive integer", page);
  const auto ps = parse_positive(page_size, page_size_);
  if (!ps) return error_response(400, "invalid_page", "page_size must be a positive integer", page_size);

  std::set<std::string> scored;
  for (const auto& s : log_->records()) {
    if (s.score >= 0 && s.score <= 3) scored.insert(s.case_id);
  }
  std::vector<const CaseRecord*> hits;
  for (const auto& r : records_) {
    const std::string c = cohort_of_label(r.label);
    if (!cohort.empty() && cohort != "all" && c != cohort) continue;
    const bool is_scored = scored.count(r.case_id) > 0;
    if (status == "scored" && !is_scored) continue;
    if (status == "unscored" && is_scored) continue;
    hits.push_back(&r);
  }
  const std::size_t total = hits.size();
  const std::size_t pages = (total + *ps - 1) / *ps;
  ordered_json items = ordered_json::array();
  for (std::size_t i = (*pg - 1) * *ps; i < std::min(total, *pg * *ps); ++i) {
    const CaseRecord& r = *hits[i];
    ordered_json it;
    it["case_id"] = r.case_id;
    it["cohort"] = cohort_of_label(r.label);
    it["status"] = scored.count(r.case_id) ? "scored" : "unscored";
    it["image_url"] = "/images/" + r.case_id;
    if (unblind_) it["ground_truth_label"] = r.label;
    items.push_back(it);
  }
  Response resp;
  resp.body["page"] = *pg;
  resp.body["page_size"] = *ps;
  resp.body["total"] = total;
  resp.body["pages"] = pages;
  resp.body["items"] = items;
  return resp;
}

std::shared_ptr<const ReviewService::Computed> ReviewService::compute(const CaseRecord& rec) {
  const auto key = std::make_pair(model_hash_, rec.case_id);
  {
    std::lock_guard lock(cache_mu_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
  }
  PreprocessOptions opts;
  opts.target_size = model_->image_size();
  const ImageTensor img = load_case_image(rec, base_, opts);
  auto c = std::make_shared<Computed>();
  c->scores = predict_concepts(*model_, img, lex_.id());
  c->prediction = predict_label(*head_, c->scores);
  c->explanation = explain_top2(c->scores, lex_, rec.case_id);
  std::lock_guard lock(cache_mu_);
  return cache_.emplace(key, std::move(c)).first->second;
}

std::size_t ReviewService::cache_size() const {
  std::lock_guard lock(cache_mu_);
  return cache_.size();
}

ordered_json ReviewService::scores_json(const ConceptScores& s) const {
  ordered_json arr = ordered_json::array();
  for (std::size_t i = 0; i < s.size(); ++i) {
    ordered_json e;
    e["concept_id"] = lex_.concept_at(i).id;
    e["display_name"] = lex_.concept_at(i).display_name;
    e["score"] = s.values[i];
    arr.push_back(e);
  }
  return arr;
}

Response ReviewService::get_case(const std::string& case_id) {
  const CaseRecord* rec = find(case_id);
  if (!rec) return error_response(404, "not_found", "unknown case '" + case_id + "'");
  std::shared_ptr<const Computed> c;
  try {
    c = compute(*rec);
  } catch (const std::exception& e) {
    return error_response(500, "inference_failed", "could not score case '" + case_id + "'", e.what());
  }
  Response r;
  r.body["case_id"] = rec->case_id;
  r.body["image_url"] = "/images/" + rec->case_id;
  r.body["prediction"] = c->prediction.to_json(head_->labels());
  r.body["concept_scores"] = scores_json(c->scores);
  r.body["explanation"] = c->explanation.to_json();
  r.body["status"] = status_of(rec->case_id, log_->records());
  r.body["lexicon_id"] = lex_.id();
  if (unblind_) r.body["ground_truth_label"] = rec->label;
  return r;
}

Response ReviewService::post_score(const std::string& case_id, const std::string& body,
                                   const std::string& rater_header) {
  const CaseRecord* rec = find(case_id);
  if (!rec) return error_response(404, "not_found", "unknown case '" + case_id + "'");
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    return error_response(400, "invalid_json", "request body is not JSON", e.what());
  }
  if (!j.is_object()) return error_response(400, "invalid_json", "request body must be a JSON object");
  if (!j.contains("score") || !j["score"].is_number_integer()) {
    return error_response(400, "invalid_score", "score must be an integer between 0 and 3");
  }
  const auto score = j["score"].get<std::int64_t>();
  if (score < 0 || score > 3) {
    return error_response(400, "invalid_score", "score must be between 0 and 3", std::to_string(score));
  }
  ExpertScore s;
  s.case_id = case_id;
  s.score = static_cast<int>(score);
  s.technique = default_technique_;
  if (j.contains("technique")) {
    if (!j["technique"].is_string() || j["technique"].get<std::string>().empty()) {
      return error_response(400, "invalid_technique", "technique must be a non-empty string");
    }
    s.technique = j["technique"].get<std::string>();
  }
  if (j.contains("rater_id") && j["rater_id"].is_string()) s.rater_id = j["rater_id"].get<std::string>();
  if (s.rater_id.empty()) s.rater_id = rater_header.empty() ? "anonymous" : rater_header;
  if (j.contains("notes") && j["notes"].is_string()) s.notes = j["notes"].get<std::string>();
  try {
    s = log_->append(std::move(s));
  } catch (const std::exception& e) {
    return error_response(500, "write_failed", "score could not be stored", e.what());
  }
  Response r;
  r.status = 201;
  r.body = s.to_json();
  return r;
}

Response ReviewService::post_intervene(const std::string& case_id, const std::string& body) {
  const CaseRecord* rec = find(case_id);
  if (!rec) return error_response(404, "not_found", "unknown case '" + case_id + "'");
  json j;
  try {
    j = body.empty() ? json::object() : json::parse(body);
  } catch (const json::parse_error& e) {
    return error_response(400, "invalid_json", "request body is not JSON", e.what());
  }
  std::map<std::string, int> overrides;
  const json ov = j.is_object() ? j.value("overrides", json::object()) : json();
  if (!ov.is_object()) return error_response(400, "invalid_overrides", "overrides must be an object");
  for (const auto& [id, v] : ov.items()) {
    if (!lex_.index_of(id)) return error_response(400, "unknown_concept", "unknown concept id '" + id + "'");
    if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1)) {
      return error_response(400, "invalid_overrides", "override for '" + id + "' must be 0 or 1");
    }
    overrides[id] = v.get<int>();
  }
  std::shared_ptr<const Computed> c;
  try {
    c = compute(*rec);
  } catch (const std::exception& e) {
    return error_response(500, "inference_failed", "could not score case '" + case_id + "'", e.what());
  }
  const InterventionResult after = intervene(*head_, c->scores, lex_, overrides);
  Response r;
  r.body["case_id"] = case_id;
  ordered_json ovj = ordered_json::object();
  for (const auto& [id, v] : overrides) ovj[id] = v;
  r.body["overrides"] = ovj;
  r.body["pre"] = {{"prediction", c->prediction.to_json(head_->labels())},
                   {"explanation", c->explanation.to_json()}};
  r.body["post"] = {{"prediction", after.prediction.to_json(head_->labels())},
                    {"explanation", explain_top2(after.scores, lex_, case_id).to_json()},
                    {"concept_scores", scores_json(after.scores)}};
  return r;
}

ExpertAggregate ReviewService::aggregate() const {
  return aggregate_expert_scores(log_->records(), [this](const std::string& id) {
    const CaseRecord* r = find(id);
    return r ? cohort_of_label(r->label) : std::string("unknown");
  });
}

Response ReviewService::expert_scores() const {
  const ExpertAggregate agg = aggregate();
  Response r;
  r.body = agg.to_json();
  ordered_json totals = ordered_json::object();
  for (const auto& [tech, h] : agg.histograms) totals[tech] = agg.total(tech);
  r.body["totals"] = totals;
  return r;
}

Response ReviewService::image(const std::string& case_id) const {
  const CaseRecord* rec = find(case_id);
  if (!rec) return error_response(404, "not_found", "unknown case '" + case_id + "'");
  try {
    PreprocessOptions opts;
    opts.target_size = model_->image_size();
    const auto bytes = encode_png(load_case_image(*rec, base_, opts));
    Response r;
    r.content_type = "image/png";
    r.raw.assign(bytes.begin(), bytes.end());
    return r;
  } catch (const std::exception& e) {
    return error_response(500, "image_unavailable", "could not load image for '" + case_id + "'", e.what());
  }
}

// ---- HTTP -----------------------------------------------------------------------

HttpFrontend::HttpFrontend(ReviewService& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

HttpFrontend::~HttpFrontend() { stop(); }

void HttpFrontend::install_routes() {
  auto send = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.text(), r.content_type);
  };
  server_->set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type, X-Rater-Id"}});
  server_->Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  server_->Get("/cases", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.list_cases(req.get_param_value("cohort"), req.get_param_value("status"),
                                  req.get_param_value("page"), req.get_param_value("page_size")));
  });
  server_->Get(R"(/cases/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.get_case(req.matches[1]));
  });
  server_->Post(R"(/cases/([^/]+)/score)", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.post_score(req.matches[1], req.body, req.get_header_value("X-Rater-Id")));
  });
  server_->Post(R"(/cases/([^/]+)/intervene)", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.post_intervene(req.matches[1], req.body));
  });
  server_->Get("/metrics/expert-scores", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, service_.expert_scores());
  });
  server_->Get(R"(/images/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.image(req.matches[1]));
  });
  server_->set_error_handler([send](const httplib::Request& req, httplib::Response& res) {
    if (res.status == 404 && res.body.empty()) send(res, error_response(404, "not_found", "no route for " + req.path));
  });
  server_->set_exception_handler([send](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "unknown error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    send(res, error_response(500, "internal", "unhandled error", what));
  });
}

int HttpFrontend::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void HttpFrontend::serve_forever(const std::string& host, int port) {
  if (!server_->listen(host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
}

void HttpFrontend::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace cbx

#include "cbx/concept_model.hpp"

#include "cbx/error.hpp"
#include "cbx/hash.hpp"
#include "cbx/parallel.hpp"
#include "cbx/rng.hpp"
#include "cbx/util.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace cbx {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr char kMagic[4] = {'C', 'B', 'X', 'M'};
constexpr std::uint32_t kFormatVersion = 1;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T take(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw SchemaError("concept model artifact is truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::string to_string(Backbone b) { return b == Backbone::kSmall ? "small" : "inception"; }

Backbone parse_backbone(std::string_view s) {
  const std::string v = to_lower(s);
  if (v == "small" || v == "compact") return Backbone::kSmall;
  if (v == "inception" || v == "paper") return Backbone::kInception;
  throw SchemaError("unknown backbone '" + std::string(s) + "' (expected small or inception)");
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw SchemaError("batch_size must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw SchemaError("learning_rate must be positive");
  if (epochs == 0) throw SchemaError("epochs must be positive");
  if (width == 0) throw SchemaError("width must be positive");
}

ordered_json TrainConfig::to_json() const {
  ordered_json j;
  j["backbone"] = to_string(backbone);
  j["batch_size"] = batch_size;
  j["learning_rate"] = learning_rate;
  j["epochs"] = epochs;
  j["patience"] = patience;
  j["width"] = width;
  j["seed"] = seed;
  return j;
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  try {
    if (j.contains("backbone")) c.backbone = parse_backbone(j.at("backbone").get<std::string>());
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<std::size_t>();
    if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<std::size_t>();
    if (j.contains("patience")) c.patience = j.at("patience").get<std::size_t>();
    if (j.contains("width")) c.width = j.at("width").get<std::size_t>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

nn::Network build_backbone(const TrainConfig& cfg, std::size_t image_size, std::size_t outputs) {
  return cfg.backbone == Backbone::kSmall ? nn::make_compact_cnn(image_size, outputs, cfg.width)
                                          : nn::make_inception(image_size, outputs, cfg.width);
}

ConceptModel::ConceptModel(TrainConfig cfg, std::size_t image_size, std::string lexicon_id,
                           std::vector<std::string> concept_ids, std::vector<float> params,
                           double mean_intensity, std::vector<EpochLog> history)
    : cfg_(cfg),
      image_size_(image_size),
      lexicon_id_(std::move(lexicon_id)),
      concept_ids_(std::move(concept_ids)),
      net_(build_backbone(cfg, image_size, concept_ids_.size())),
      params_(std::move(params)),
      mean_intensity_(mean_intensity),
      history_(std::move(history)) {
  if (params_.size() != net_.param_count()) {
    throw SchemaError("concept model expects " + std::to_string(net_.param_count()) + " parameters, got " +
                      std::to_string(params_.size()));
  }
}

nn::Tensor ConceptModel::to_input(const ImageTensor& image) const {
  if (image.height != image_size_ || image.width != image_size_) {
    throw DimensionError("concept model expects " + std::to_string(image_size_) + "x" + std::to_string(image_size_) +
                         " images, got " + std::to_string(image.height) + "x" + std::to_string(image.width));
  }
  nn::Tensor t({1, image_size_, image_size_});
  const auto m = static_cast<float>(mean_intensity_);
  std::transform(image.pixels.begin(), image.pixels.end(), t.data.begin(), [m](float v) { return v - m; });
  return t;
}

std::vector<double> ConceptModel::logits(const ImageTensor& image) const {
  nn::Network::Pass pass;
  net_.forward(params_, to_input(image), pass);
  return {pass.logits.data.begin(), pass.logits.data.end()};
}

std::vector<std::uint8_t> ConceptModel::serialize() const {
  ordered_json meta;
  meta["kind"] = "concept_model";
  meta["format_version"] = kFormatVersion;
  meta["config"] = cfg_.to_json();
  meta["image_size"] = image_size_;
  meta["lexicon_id"] = lexicon_id_;
  meta["concept_ids"] = concept_ids_;
  meta["mean_intensity"] = mean_intensity_;
  ordered_json hist = ordered_json::array();
  for (const auto& h : history_) {
    ordered_json e;
    e["epoch"] = h.epoch;
    e["train_loss"] = h.train_loss;
    if (std::isfinite(h.val_f1)) e["val_f1"] = h.val_f1;
    else e["val_f1"] = nullptr;
    hist.push_back(e);
  }
  meta["history"] = hist;
  meta["param_count"] = params_.size();
  const std::string text = meta.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  put<std::uint64_t>(out, params_.size());
  const auto* p = reinterpret_cast<const std::uint8_t*>(params_.data());
  out.insert(out.end(), p, p + params_.size() * sizeof(float));
  return out;
}

ConceptModel ConceptModel::deserialize(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw SchemaError("not a concept model artifact (bad magic)");
  }
  std::size_t pos = 4;
  const auto version = take<std::uint32_t>(bytes, pos);
  if (version != kFormatVersion) {
    throw SchemaError("unsupported concept model format version " + std::to_string(version));
  }
  const auto meta_len = take<std::uint64_t>(bytes, pos);
  if (pos + meta_len > bytes.size()) throw SchemaError("concept model artifact is truncated");
  json meta;
  try {
    meta = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                       bytes.begin() + static_cast<std::ptrdiff_t>(pos + meta_len));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("concept model metadata: ") + e.what());
  }
  pos += meta_len;
  const auto n = take<std::uint64_t>(bytes, pos);
  if (pos + n * sizeof(float) != bytes.size()) throw SchemaError("concept model weight block has the wrong size");
  std::vector<float> params(n);
  std::memcpy(params.data(), bytes.data() + pos, n * sizeof(float));

  std::vector<EpochLog> hist;
  for (const auto& e : meta.value("history", json::array())) {
    EpochLog h;
    h.epoch = e.at("epoch").get<std::size_t>();
    h.train_loss = e.at("train_loss").get<double>();
    h.val_f1 = e.at("val_f1").is_null() ? std::numeric_limits<double>::quiet_NaN() : e.at("val_f1").get<double>();
    hist.push_back(h);
  }
  try {
    return ConceptModel(TrainConfig::from_json(meta.at("config")), meta.at("image_size").get<std::size_t>(),
                        meta.at("lexicon_id").get<std::string>(),
                        meta.at("concept_ids").get<std::vector<std::string>>(), std::move(params),
                        meta.at("mean_intensity").get<double>(), std::move(hist));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("concept model metadata: ") + e.what());
  }
}

void ConceptModel::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  write_text_file(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

ConceptModel ConceptModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open concept model " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

std::string ConceptModel::hash() const {
  const auto bytes = serialize();
  return sha256_hex(std::span<const unsigned char>(bytes.data(), bytes.size()));
}

ConceptScores predict_concepts(const ConceptModel& model, const ImageTensor& image, std::string_view lexicon_id) {
  if (!lexicon_id.empty() && lexicon_id != model.lexicon_id()) {
    throw SchemaError("lexicon mismatch: model was trained on " + model.lexicon_id() + ", caller uses " +
                      std::string(lexicon_id));
  }
  const auto z = model.logits(image);
  ConceptScores s;
  s.lexicon_id = model.lexicon_id();
  s.values.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) s.values[i] = sigmoid(z[i]);
  return s;
}

double thresholded_micro_f1(const std::vector<ConceptScores>& scores, const std::vector<ConceptVector>& truth) {
  if (scores.size() != truth.size()) throw DimensionError("score and truth counts differ");
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i].size() != truth[i].size()) throw DimensionError("score and truth lengths differ");
    for (std::size_t k = 0; k < truth[i].size(); ++k) {
      const bool p = scores[i].values[k] >= 0.5;
      const bool t = truth[i].values[k] != 0;
      tp += p && t;
      fp += p && !t;
      fn += !p && t;
    }
  }
  return tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
}

ConceptModel train_concept_predictor(const std::vector<ConceptExample>& train, const std::vector<ConceptExample>& val,
                                     const TrainConfig& cfg, const ConceptLexicon& lex,
                                     const EpochCallback& on_epoch) {
  cfg.validate();
  if (train.empty()) throw TrainingError("no training examples");
  const std::size_t size = train.front().image.height;
  const std::size_t K = lex.size();
  std::set<std::vector<std::uint8_t>> patterns;
  auto check = [&](const ConceptExample& ex, const char* which) {
    if (ex.image.height != size || ex.image.width != size) {
      throw DimensionError(std::string(which) + " image " + ex.image.source + " is " + std::to_string(ex.image.height) +
                           "x" + std::to_string(ex.image.width) + ", expected " + std::to_string(size) + "x" +
                           std::to_string(size));
    }
    if (ex.concepts.size() != K) throw DimensionError("concept vector length does not match the lexicon");
    if (!ex.concepts.lexicon_id.empty() && ex.concepts.lexicon_id != lex.id()) {
      throw SchemaError("concept vector lexicon " + ex.concepts.lexicon_id + " differs from " + lex.id());
    }
  };
  for (const auto& ex : train) {
    check(ex, "training");
    patterns.insert(ex.concepts.values);
  }
  for (const auto& ex : val) check(ex, "validation");
  if (patterns.size() < 2) throw TrainingError("training data needs at least 2 distinct concept patterns");

  std::vector<std::string> ids;
  for (const auto& c : lex.concepts()) ids.push_back(c.id);

  const nn::Network net = build_backbone(cfg, size, K);
  std::vector<float> params;
  {
    Rng init_rng(derive_seed(cfg.seed, "concept-init"));
    net.init(params, init_rng);
  }
  double mean = 0.0;
  for (const auto& ex : train) {
    mean += std::accumulate(ex.image.pixels.begin(), ex.image.pixels.end(), 0.0) / static_cast<double>(ex.image.size());
  }
  mean /= static_cast<double>(train.size());

  std::vector<nn::Tensor> inputs(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    inputs[i].reset({1, size, size});
    const auto m = static_cast<float>(mean);
    std::transform(train[i].image.pixels.begin(), train[i].image.pixels.end(), inputs[i].data.begin(),
                   [m](float v) { return v - m; });
  }

  const std::size_t P = params.size();
  const std::size_t B = std::min(cfg.batch_size, train.size());
  std::vector<nn::Network::Pass> passes(B);
  std::vector<std::vector<float>> grads(B, std::vector<float>(P));
  std::vector<double> losses(B);
  std::vector<float> total(P);
  nn::Adam adam(P, cfg.learning_rate);
  Rng order_rng(derive_seed(cfg.seed, "concept-order"));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<float> best = params;
  double best_f1 = -1.0;
  std::size_t since_best = 0;
  std::vector<EpochLog> history;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += B) {
      const std::size_t nb = std::min(B, order.size() - start);
      const double scale = 1.0 / static_cast<double>(K * nb);
      parallel_for(nb, [&](std::size_t s) {
        const std::size_t idx = order[start + s];
        auto& pass = passes[s];
        net.forward(params, inputs[idx], pass);
        nn::Tensor g(pass.logits.shape);
        double loss = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          const double z = pass.logits.data[k];
          const double y = train[idx].concepts.values[k];
          loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
          g.data[k] = static_cast<float>((sigmoid(z) - y) * scale);
        }
        losses[s] = loss / static_cast<double>(K);
        std::fill(grads[s].begin(), grads[s].end(), 0.0f);
        net.backward(params, inputs[idx], pass, g, grads[s]);
      });
      std::fill(total.begin(), total.end(), 0.0f);
      for (std::size_t s = 0; s < nb; ++s) {
        epoch_loss += losses[s];
        for (std::size_t p = 0; p < P; ++p) total[p] += grads[s][p];
        if (!std::isfinite(losses[s])) {
          double norm = 0.0;
          for (float w : params) norm += static_cast<double>(w) * w;
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", case " +
                              train[order[start + s]].image.source + " (learning rate " +
                              std::to_string(cfg.learning_rate) + ", weight norm " + std::to_string(std::sqrt(norm)) +
                              ")");
        }
      }
      adam.step(params, total);
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_loss / static_cast<double>(train.size());
    log.val_f1 = std::numeric_limits<double>::quiet_NaN();
    if (!val.empty()) {
      const ConceptModel probe(cfg, size, lex.id(), ids, params, mean, {});
      std::vector<ConceptScores> scores(val.size());
      std::vector<ConceptVector> truth(val.size());
      parallel_for(val.size(), [&](std::size_t i) { scores[i] = predict_concepts(probe, val[i].image); });
      for (std::size_t i = 0; i < val.size(); ++i) truth[i] = val[i].concepts;
      log.val_f1 = thresholded_micro_f1(scores, truth);
    }
    history.push_back(log);
    if (on_epoch) on_epoch(log);

    if (val.empty()) {
      best = params;
      continue;
    }
    if (log.val_f1 > best_f1) {
      best_f1 = log.val_f1;
      best = params;
      since_best = 0;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      break;
    }
  }
  return ConceptModel(cfg, size, lex.id(), std::move(ids), std::move(best), mean, std::move(history));
}

}  // namespace cbx

#pragma once

#include "cbx/concepts.hpp"
#include "cbx/image.hpp"
#include "cbx/lexicon.hpp"
#include "cbx/nn.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

namespace cbx {

enum class Backbone { kSmall, kInception };

std::string to_string(Backbone b);
Backbone parse_backbone(std::string_view s);  // "small" | "inception"

struct TrainConfig {
  Backbone backbone = Backbone::kSmall;
  std::size_t batch_size = 64;
  double learning_rate = 0.005;
  std::size_t epochs = 25;
  std::size_t patience = 5;  // early stop on validation concept F1; 0 disables
  std::size_t width = 8;     // channels of the first conv layer
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_f1 = 0.0;  // micro F1 of thresholded scores; NaN without validation data
};

struct ConceptExample {
  ImageTensor image;
  ConceptVector concepts;
};

// Trained multi-label concept predictor. Immutable after construction, so
// concurrent predictions are safe.
class ConceptModel {
 public:
  ConceptModel() = default;
  ConceptModel(TrainConfig cfg, std::size_t image_size, std::string lexicon_id,
               std::vector<std::string> concept_ids, std::vector<float> params, double mean_intensity,
               std::vector<EpochLog> history);

  const TrainConfig& config() const { return cfg_; }
  std::size_t image_size() const { return image_size_; }
  const std::string& lexicon_id() const { return lexicon_id_; }
  const std::vector<std::string>& concept_ids() const { return concept_ids_; }
  const nn::Network& network() const { return net_; }
  std::span<const float> params() const { return params_; }
  double mean_intensity() const { return mean_intensity_; }
  const std::vector<EpochLog>& history() const { return history_; }

  // Raw logits for one image; throws DimensionError on size mismatch.
  std::vector<double> logits(const ImageTensor& image) const;
  nn::Tensor to_input(const ImageTensor& image) const;

  std::vector<std::uint8_t> serialize() const;
  static ConceptModel deserialize(const std::vector<std::uint8_t>& bytes);
  void save(const std::filesystem::path& path) const;
  static ConceptModel load(const std::filesystem::path& path);
  // SHA-256 of the serialized artifact.
  std::string hash() const;

 private:
  TrainConfig cfg_;
  std::size_t image_size_ = 0;
  std::string lexicon_id_;
  std::vector<std::string> concept_ids_;
  nn::Network net_;
  std::vector<float> params_;
  double mean_intensity_ = 0.0;
  std::vector<EpochLog> history_;
};

nn::Network build_backbone(const TrainConfig& cfg, std::size_t image_size, std::size_t outputs);

using EpochCallback = std::function<void(const EpochLog&)>;

// Mean per-concept binary cross-entropy, Adam. Keeps the parameters of the
// best validation epoch. Aborts with TrainingError on a non-finite loss.
ConceptModel train_concept_predictor(const std::vector<ConceptExample>& train,
                                     const std::vector<ConceptExample>& val, const TrainConfig& cfg,
                                     const ConceptLexicon& lex, const EpochCallback& on_epoch = {});

// Sigmoid scores in [0, 1]. Throws DimensionError on image size mismatch
// and SchemaError if `lexicon_id` is given and differs from the model's.
ConceptScores predict_concepts(const ConceptModel& model, const ImageTensor& image,
                               std::string_view lexicon_id = {});

// Micro F1 of scores thresholded at 0.5 against binary truth.
double thresholded_micro_f1(const std::vector<ConceptScores>& scores,
                            const std::vector<ConceptVector>& truth);

}  // namespace cbx

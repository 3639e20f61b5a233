#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace cbx {

enum class HeadKind { kDT, kSVM, kMLP };

std::string to_string(HeadKind k);  // "DT" | "SVM" | "MLP"
HeadKind parse_head_kind(std::string_view s);  // case-insensitive

struct HeadConfig {
  std::size_t max_depth = 12;       // DT
  std::size_t min_samples_split = 2;
  double svm_c = 1.0;               // SVM soft-margin constant
  std::size_t svm_iterations = 500;
  std::size_t mlp_hidden = 32;      // MLP
  std::size_t mlp_epochs = 400;
  double mlp_learning_rate = 0.01;
  std::uint64_t seed = 0;

  nlohmann::ordered_json to_json() const;
  static HeadConfig from_json(const nlohmann::json& j);
};

// Concept-to-label classifier. Immutable once trained.
class LabelHead {
 public:
  virtual ~LabelHead() = default;
  virtual HeadKind kind() const = 0;
  // Per-label scores in lexicon label order; non-negative, summing to 1.
  virtual std::vector<double> class_scores(std::span<const double> x) const = 0;

  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t input_size() const { return input_size_; }
  const std::string& lexicon_id() const { return lexicon_id_; }
  const HeadConfig& config() const { return cfg_; }

  nlohmann::ordered_json to_json() const;
  void save(const std::filesystem::path& path) const;
  std::string hash() const;  // SHA-256 of the serialized artifact

 protected:
  LabelHead(std::vector<std::string> labels, std::size_t input_size, std::string lexicon_id, HeadConfig cfg)
      : labels_(std::move(labels)), input_size_(input_size), lexicon_id_(std::move(lexicon_id)), cfg_(cfg) {}
  virtual nlohmann::ordered_json model_json() const = 0;
  void check_input(std::span<const double> x) const;

 private:
  std::vector<std::string> labels_;
  std::size_t input_size_;
  std::string lexicon_id_;
  HeadConfig cfg_;
};

using LabelHeadPtr = std::shared_ptr<const LabelHead>;

struct HeadTrainingData {
  std::vector<std::vector<double>> x;  // concept vectors
  std::vector<std::size_t> y;          // indices into labels
  std::vector<std::string> labels;     // full label schema
  std::string lexicon_id;
};

// Throws TrainingError with fewer than 2 distinct classes and
// DimensionError on ragged inputs.
LabelHeadPtr train_label_head(const HeadTrainingData& data, HeadKind kind, const HeadConfig& cfg = {});

LabelHeadPtr label_head_from_json(const nlohmann::json& j);
LabelHeadPtr load_label_head(const std::filesystem::path& path);

// CART with Gini impurity. Split candidates are scanned in a seeded feature
// order; the first strictly best candidate wins.
class DecisionTreeHead final : public LabelHead {
 public:
  struct Node {
    int feature = -1;  // -1 for leaves
    double threshold = 0.0;
    int left = -1, right = -1;        // x[feature] <= threshold goes left
    std::vector<double> proportions;  // leaf class proportions
    std::size_t samples = 0;
  };

  DecisionTreeHead(std::vector<std::string> labels, std::size_t input_size, std::string lexicon_id,
                   HeadConfig cfg, std::vector<Node> nodes);
  static std::shared_ptr<DecisionTreeHead> fit(const HeadTrainingData& data, const HeadConfig& cfg);

  HeadKind kind() const override { return HeadKind::kDT; }
  std::vector<double> class_scores(std::span<const double> x) const override;

  const std::vector<Node>& nodes() const { return nodes_; }
  std::set<std::size_t> used_features() const;
  std::size_t depth() const;
  // Indented if/else listing for audit.
  std::string to_text(const std::vector<std::string>& feature_names = {}) const;

 protected:
  nlohmann::ordered_json model_json() const override;

 private:
  std::vector<Node> nodes_;
};

// One-vs-rest linear SVM (L2-regularized hinge loss, dual coordinate
// descent) with per-class Platt scaling; scores are the normalized
// calibrated probabilities.
class SvmHead final : public LabelHead {
 public:
  struct ClassModel {
    std::vector<double> w;
    double b = 0.0;
    double platt_a = -1.0, platt_b = 0.0;  // p = 1 / (1 + exp(a f + b))
  };

  SvmHead(std::vector<std::string> labels, std::size_t input_size, std::string lexicon_id, HeadConfig cfg,
          std::vector<ClassModel> models);
  static std::shared_ptr<SvmHead> fit(const HeadTrainingData& data, const HeadConfig& cfg);

  HeadKind kind() const override { return HeadKind::kSVM; }
  std::vector<double> class_scores(std::span<const double> x) const override;
  const std::vector<ClassModel>& models() const { return models_; }

 protected:
  nlohmann::ordered_json model_json() const override;

 private:
  std::vector<ClassModel> models_;
};

// One hidden ReLU layer, softmax output, full-batch Adam on cross-entropy.
class MlpHead final : public LabelHead {
 public:
  MlpHead(std::vector<std::string> labels, std::size_t input_size, std::string lexicon_id, HeadConfig cfg,
          std::vector<double> w1, std::vector<double> b1, std::vector<double> w2, std::vector<double> b2);
  static std::shared_ptr<MlpHead> fit(const HeadTrainingData& data, const HeadConfig& cfg);

  HeadKind kind() const override { return HeadKind::kMLP; }
  std::vector<double> class_scores(std::span<const double> x) const override;

 protected:
  nlohmann::ordered_json model_json() const override;

 private:
  std::size_t hidden_;
  std::vector<double> w1_, b1_, w2_, b2_;  // w1: hidden x input, w2: classes x hidden
};

}  // namespace cbx

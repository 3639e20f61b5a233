#include "cbx/label_head.hpp"

#include "cbx/error.hpp"
#include "cbx/hash.hpp"
#include "cbx/rng.hpp"
#include "cbx/util.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>

namespace cbx {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr int kHeadFormatVersion = 1;

void validate_data(const HeadTrainingData& d) {
  if (d.x.size() != d.y.size()) throw DimensionError("label head: feature and label counts differ");
  if (d.x.empty()) throw TrainingError("label head: no training data");
  const std::size_t dim = d.x.front().size();
  for (const auto& row : d.x) {
    if (row.size() != dim) throw DimensionError("label head: concept vectors have inconsistent lengths");
  }
  std::vector<bool> seen(d.labels.size(), false);
  for (std::size_t y : d.y) {
    if (y >= d.labels.size()) throw SchemaError("label head: label index out of range");
    seen[y] = true;
  }
  if (std::count(seen.begin(), seen.end(), true) < 2) {
    throw TrainingError("label head: training data has fewer than 2 classes");
  }
}

std::vector<double> normalized(std::vector<double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  if (!(s > 0.0) || !std::isfinite(s)) {
    std::fill(v.begin(), v.end(), 1.0 / static_cast<double>(v.size()));
    return v;
  }
  for (double& x : v) x /= s;
  return v;
}

class AdamD {
 public:
  explicit AdamD(std::size_t n, double lr) : lr_(lr), m_(n, 0.0), v_(n, 0.0) {}
  void step(std::vector<double>& p, const std::vector<double>& g, std::size_t offset) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      const std::size_t k = offset + i;
      m_[k] = 0.9 * m_[k] + 0.1 * g[i];
      v_[k] = 0.999 * v_[k] + 0.001 * g[i] * g[i];
      const double mh = m_[k] / (1.0 - std::pow(0.9, static_cast<double>(t_)));
      const double vh = v_[k] / (1.0 - std::pow(0.999, static_cast<double>(t_)));
      p[i] -= lr_ * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  void tick() { ++t_; }

 private:
  double lr_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace

std::string to_string(HeadKind k) {
  switch (k) {
    case HeadKind::kDT: return "DT";
    case HeadKind::kSVM: return "SVM";
    case HeadKind::kMLP: return "MLP";
  }
  return "DT";
}

HeadKind parse_head_kind(std::string_view s) {
  const std::string v = to_lower(s);
  if (v == "dt") return HeadKind::kDT;
  if (v == "svm") return HeadKind::kSVM;
  if (v == "mlp") return HeadKind::kMLP;
  throw SchemaError("unknown head kind '" + std::string(s) + "' (expected dt, svm or mlp)");
}

ordered_json HeadConfig::to_json() const {
  ordered_json j;
  j["max_depth"] = max_depth;
  j["min_samples_split"] = min_samples_split;
  j["svm_c"] = svm_c;
  j["svm_iterations"] = svm_iterations;
  j["mlp_hidden"] = mlp_hidden;
  j["mlp_epochs"] = mlp_epochs;
  j["mlp_learning_rate"] = mlp_learning_rate;
  j["seed"] = seed;
  return j;
}

HeadConfig HeadConfig::from_json(const json& j) {
  HeadConfig c;
  try {
    c.max_depth = j.value("max_depth", c.max_depth);
    c.min_samples_split = j.value("min_samples_split", c.min_samples_split);
    c.svm_c = j.value("svm_c", c.svm_c);
    c.svm_iterations = j.value("svm_iterations", c.svm_iterations);
    c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
    c.mlp_epochs = j.value("mlp_epochs", c.mlp_epochs);
    c.mlp_learning_rate = j.value("mlp_learning_rate", c.mlp_learning_rate);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("head config: ") + e.what());
  }
  if (c.max_depth == 0 || c.mlp_hidden == 0 || !(c.svm_c > 0.0) || !(c.mlp_learning_rate > 0.0)) {
    throw SchemaError("head config: hyperparameters must be positive");
  }
  return c;
}

void LabelHead::check_input(std::span<const double> x) const {
  if (x.size() != input_size_) {
    throw DimensionError("label head expects " + std::to_string(input_size_) + " concept scores, got " +
                         std::to_string(x.size()));
  }
}

ordered_json LabelHead::to_json() const {
  ordered_json j;
  j["format"] = "cbx-label-head";
  j["format_version"] = kHeadFormatVersion;
  j["kind"] = to_string(kind());
  j["labels"] = labels_;
  j["input_size"] = input_size_;
  j["lexicon_id"] = lexicon_id_;
  j["config"] = cfg_.to_json();
  j["model"] = model_json();
  return j;
}

void LabelHead::save(const std::filesystem::path& path) const { write_text_file(path, to_json().dump(1) + "\n"); }

std::string LabelHead::hash() const { return sha256_hex(to_json().dump()); }

LabelHeadPtr train_label_head(const HeadTrainingData& data, HeadKind kind, const HeadConfig& cfg) {
  validate_data(data);
  switch (kind) {
    case HeadKind::kDT: return DecisionTreeHead::fit(data, cfg);
    case HeadKind::kSVM: return SvmHead::fit(data, cfg);
    case HeadKind::kMLP: return MlpHead::fit(data, cfg);
  }
  throw SchemaError("unknown head kind");
}

// ---- Decision tree ------------------------------------------------------

DecisionTreeHead::DecisionTreeHead(std::vector<std::string> labels, std::size_t input_size, std::string lexicon_id,
                                   HeadConfig cfg, std::vector<Node> nodes)
    : LabelHead(std::move(labels), input_size, std::move(lexicon_id), cfg), nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw SchemaError("decision tree has no nodes");
  for (const auto& n : nodes_) {
    if (n.feature >= 0) {
      if (static_cast<std::size_t>(n.feature) >= this->input_size() || n.left < 0 || n.right < 0 ||
          static_cast<std::size_t>(std::max(n.left, n.right)) >= nodes_.size()) {
        throw SchemaError("decision tree node is malformed");
      }
    } else if (n.proportions.size() != this->labels().size()) {
      throw SchemaError("decision tree leaf has the wrong number of class proportions");
    }
  }
}

std::shared_ptr<DecisionTreeHead> DecisionTreeHead::fit(const HeadTrainingData& data, const HeadConfig& cfg) {
  validate_data(data);
  const std::size_t dim = data.x.front().size();
  const std::size_t C = data.labels.size();
  std::vector<std::size_t> feature_order(dim);
  std::iota(feature_order.begin(), feature_order.end(), 0);
  Rng rng(derive_seed(cfg.seed, "dt-features"));
  rng.shuffle(feature_order);

  auto gini = [&](const std::vector<double>& counts, double total) {
    if (total <= 0) return 0.0;
    double s = 1.0;
    for (double c : counts) s -= (c / total) * (c / total);
    return s;
  };

  std::vector<Node> nodes;
  std::function<int(std::vector<std::size_t>, std::size_t)> build = [&](std::vector<std::size_t> idx,
                                                                         std::size_t depth) -> int {
    const int id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    std::vector<double> counts(C, 0.0);
    for (std::size_t i : idx) counts[data.y[i]] += 1.0;
    const double n = static_cast<double>(idx.size());
    {
      Node& node = nodes[static_cast<std::size_t>(id)];
      node.samples = idx.size();
      node.proportions.resize(C);
      for (std::size_t c = 0; c < C; ++c) node.proportions[c] = counts[c] / n;
    }
    const bool pure = std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0; }) <= 1;
    if (pure || depth >= cfg.max_depth || idx.size() < cfg.min_samples_split) return id;

    double best_imp = std::numeric_limits<double>::infinity();
    int best_f = -1;
    double best_t = 0.0;
    for (std::size_t f : feature_order) {
      std::vector<double> vals;
      vals.reserve(idx.size());
      for (std::size_t i : idx) vals.push_back(data.x[i][f]);
      std::sort(vals.begin(), vals.end());
      vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
      for (std::size_t v = 0; v + 1 < vals.size(); ++v) {
        const double t = 0.5 * (vals[v] + vals[v + 1]);
        std::vector<double> lc(C, 0.0), rc(C, 0.0);
        double ln = 0, rn = 0;
        for (std::size_t i : idx) {
          if (data.x[i][f] <= t) {
            lc[data.y[i]] += 1;
            ln += 1;
          } else {
            rc[data.y[i]] += 1;
            rn += 1;
          }
        }
        const double imp = (ln * gini(lc, ln) + rn * gini(rc, rn)) / n;
        if (imp < best_imp - 1e-12) {
          best_imp = imp;
          best_f = static_cast<int>(f);
          best_t = t;
        }
      }
    }
    if (best_f < 0) return id;  // every sample identical

    std::vector<std::size_t> li, ri;
    for (std::size_t i : idx) (data.x[i][static_cast<std::size_t>(best_f)] <= best_t ? li : ri).push_back(i);
    const int l = build(std::move(li), depth + 1);
    const int r = build(std::move(ri), depth + 1);
    Node& node = nodes[static_cast<std::size_t>(id)];
    node.feature = best_f;
    node.threshold = best_t;
    node.left = l;
    node.right = r;
    return id;
  };
  std::vector<std::size_t> all(data.x.size());
  std::iota(all.begin(), all.end(), 0);
  build(all, 0);
  return std::make_shared<DecisionTreeHead>(data.labels, dim, data.lexicon_id, cfg, std::move(nodes));
}

std::vector<double> DecisionTreeHead::class_scores(std::span<const double> x) const {
  check_input(x);
  std::size_t i = 0;
  while (nodes_[i].feature >= 0) {
    const Node& n = nodes_[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes_[i].proportions;
}

std::set<std::size_t> DecisionTreeHead::used_features() const {
  std::set<std::size_t> out;
  for (const auto& n : nodes_) {
    if (n.feature >= 0) out.insert(static_cast<std::size_t>(n.feature));
  }
  return out;
}

std::size_t DecisionTreeHead::depth() const {
  std::function<std::size_t(std::size_t)> d = [&](std::size_t i) -> std::size_t {
    const Node& n = nodes_[i];
    if (n.feature < 0) return 0;
    return 1 + std::max(d(static_cast<std::size_t>(n.left)), d(static_cast<std::size_t>(n.right)));
  };
  return d(0);
}

std::string DecisionTreeHead::to_text(const std::vector<std::string>& feature_names) const {
  std::ostringstream out;
  auto name = [&](int f) {
    const auto k = static_cast<std::size_t>(f);
    return k < feature_names.size() ? feature_names[k] : "x[" + std::to_string(f) + "]";
  };
  std::function<void(std::size_t, std::size_t)> walk = [&](std::size_t i, std::size_t indent) {
    const Node& n = nodes_[i];
    const std::string pad(indent * 2, ' ');
    if (n.feature < 0) {
      const auto best = static_cast<std::size_t>(
          std::max_element(n.proportions.begin(), n.proportions.end()) - n.proportions.begin());
      out << pad << "-> " << labels()[best] << " (n=" << n.samples << ", p=" << n.proportions[best] << ")\n";
      return;
    }
    out << pad << "if " << name(n.feature) << " <= " << n.threshold << ":\n";
    walk(static_cast<std::size_t>(n.left), indent + 1);
    out << pad << "else:\n";
    walk(static_cast<std::size_t>(n.right), indent + 1);
  };
  walk(0, 0);
  return out.str();
}

ordered_json DecisionTreeHead::model_json() const {
  ordered_json arr = ordered_json::array();
  for (const auto& n : nodes_) {
    ordered_json j;
    j["feature"] = n.feature;
    j["threshold"] = n.threshold;
    j["left"] = n.left;
    j["right"] = n.right;
    j["samples"] = n.samples;
    j["proportions"] = n.proportions;
    arr.push_back(j);
  }
  ordered_json m;
  m["nodes"] = arr;
  return m;
}

// ---- Linear SVM -----------------------------------------------------------

namespace {

// Platt's sigmoid fit with the regularized targets of Lin, Lin & Weng.
std::pair<double, double> fit_platt(const std::vector<double>& f, const std::vector<int>& y) {
  double prior1 = 0, prior0 = 0;
  for (int v : y) (v > 0 ? prior1 : prior0) += 1;
  const double hi = (prior1 + 1.0) / (prior1 + 2.0), lo = 1.0 / (prior0 + 2.0);
  std::vector<double> t(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) t[i] = y[i] > 0 ? hi : lo;
  double A = 0.0, B = std::log((prior0 + 1.0) / (prior1 + 1.0));
  auto objective = [&](double a, double b) {
    double v = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double z = f[i] * a + b;
      v += z >= 0 ? t[i] * z + std::log1p(std::exp(-z)) : (t[i] - 1.0) * z + std::log1p(std::exp(z));
    }
    return v;
  };
  double fval = objective(A, B);
  for (int it = 0; it < 100; ++it) {
    double h11 = 1e-12, h22 = 1e-12, h21 = 0, g1 = 0, g2 = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double z = f[i] * A + B;
      double p, q;
      if (z >= 0) {
        p = std::exp(-z) / (1.0 + std::exp(-z));
        q = 1.0 / (1.0 + std::exp(-z));
      } else {
        p = 1.0 / (1.0 + std::exp(z));
        q = std::exp(z) / (1.0 + std::exp(z));
      }
      const double d2 = p * q;
      h11 += f[i] * f[i] * d2;
      h22 += d2;
      h21 += f[i] * d2;
      const double d1 = t[i] - p;
      g1 += f[i] * d1;
      g2 += d1;
    }
    if (std::abs(g1) < 1e-5 && std::abs(g2) < 1e-5) break;
    const double det = h11 * h22 - h21 * h21;
    const double dA = -(h22 * g1 - h21 * g2) / det, dB = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * dA + g2 * dB;
    double step = 1.0;
    while (step >= 1e-10) {
      const double na = A + step * dA, nb = B + step * dB;
      const double nf = objective(na, nb);
      if (nf < fval + 1e-4 * step * gd) {
        A = na;
        B = nb;
        fval = nf;
        break;
      }
      step /= 2.0;
    }
    if (step < 1e-10) break;
  }
  return {A, B};
}

}  // namespace

SvmHead::SvmHead(std::vector<std::string> labels, std::size_t input_size, std::string lexicon_id, HeadConfig cfg,
                 std::vector<ClassModel> models)
    : LabelHead(std::move(labels), input_size, std::move(lexicon_id), cfg), models_(std::move(models)) {
  if (models_.size() != this->labels().size()) throw SchemaError("svm head needs one model per label");
  for (const auto& m : models_) {
    if (m.w.size() != this->input_size()) throw SchemaError("svm weight vector has the wrong length");
  }
}

std::shared_ptr<SvmHead> SvmHead::fit(const HeadTrainingData& data, const HeadConfig& cfg) {
  validate_data(data);
  const std::size_t n = data.x.size(), dim = data.x.front().size();
  std::vector<double> qii(n);
  for (std::size_t i = 0; i < n; ++i) {
    qii[i] = 1.0;  // bias feature
    for (double v : data.x[i]) qii[i] += v * v;
  }
  std::vector<ClassModel> models;
  for (std::size_t c = 0; c < data.labels.size(); ++c) {
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = data.y[i] == c ? 1 : -1;
    std::vector<double> w(dim + 1, 0.0), alpha(n, 0.0);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(cfg.seed, "svm-class:" + std::to_string(c)));
    for (std::size_t it = 0; it < cfg.svm_iterations; ++it) {
      rng.shuffle(order);
      double pg_max = -std::numeric_limits<double>::infinity(), pg_min = std::numeric_limits<double>::infinity();
      for (std::size_t i : order) {
        double wx = w[dim];
        for (std::size_t k = 0; k < dim; ++k) wx += w[k] * data.x[i][k];
        const double g = y[i] * wx - 1.0;
        double pg = g;
        if (alpha[i] == 0.0) pg = std::min(g, 0.0);
        else if (alpha[i] == cfg.svm_c) pg = std::max(g, 0.0);
        pg_max = std::max(pg_max, pg);
        pg_min = std::min(pg_min, pg);
        if (std::abs(pg) > 1e-12) {
          const double old = alpha[i];
          alpha[i] = std::min(std::max(alpha[i] - g / qii[i], 0.0), cfg.svm_c);
          const double delta = (alpha[i] - old) * y[i];
          for (std::size_t k = 0; k < dim; ++k) w[k] += delta * data.x[i][k];
          w[dim] += delta;
        }
      }
      if (pg_max - pg_min < 1e-6) break;
    }
    ClassModel m;
    m.b = w[dim];
    w.pop_back();
    m.w = std::move(w);
    std::vector<double> f(n);
    for (std::size_t i = 0; i < n; ++i) {
      f[i] = m.b;
      for (std::size_t k = 0; k < dim; ++k) f[i] += m.w[k] * data.x[i][k];
    }
    std::tie(m.platt_a, m.platt_b) = fit_platt(f, y);
    models.push_back(std::move(m));
  }
  return std::make_shared<SvmHead>(data.labels, dim, data.lexicon_id, cfg, std::move(models));
}

std::vector<double> SvmHead::class_scores(std::span<const double> x) const {
  check_input(x);
  std::vector<double> p(models_.size());
  for (std::size_t c = 0; c < models_.size(); ++c) {
    const auto& m = models_[c];
    double f = m.b;
    for (std::size_t k = 0; k < x.size(); ++k) f += m.w[k] * x[k];
    p[c] = 1.0 / (1.0 + std::exp(m.platt_a * f + m.platt_b));
  }
  return normalized(std::move(p));
}

ordered_json SvmHead::model_json() const {
  ordered_json arr = ordered_json::array();
  for (const auto& m : models_) {
    ordered_json j;
    j["w"] = m.w;
    j["b"] = m.b;
    j["platt_a"] = m.platt_a;
    j["platt_b"] = m.platt_b;
    arr.push_back(j);
  }
  ordered_json out;
  out["classes"] = arr;
  return out;
}

// ---- MLP ------------------------------------------------------------------

MlpHead::MlpHead(std::vector<std::string> labels, std::size_t input_size, std::string lexicon_id, HeadConfig cfg,
                 std::vector<double> w1, std::vector<double> b1, std::vector<double> w2, std::vector<double> b2)
    : LabelHead(std::move(labels), input_size, std::move(lexicon_id), cfg),
      hidden_(b1.size()),
      w1_(std::move(w1)),
      b1_(std::move(b1)),
      w2_(std::move(w2)),
      b2_(std::move(b2)) {
  const std::size_t C = this->labels().size();
  if (w1_.size() != hidden_ * this->input_size() || w2_.size() != C * hidden_ || b2_.size() != C) {
    throw SchemaError("mlp head weights have inconsistent shapes");
  }
}

namespace {

void mlp_forward(const std::vector<double>& w1, const std::vector<double>& b1, const std::vector<double>& w2,
                 const std::vector<double>& b2, std::span<const double> x, std::vector<double>& h,
                 std::vector<double>& p) {
  const std::size_t H = b1.size(), C = b2.size(), D = x.size();
  h.assign(H, 0.0);
  for (std::size_t j = 0; j < H; ++j) {
    double a = b1[j];
    for (std::size_t k = 0; k < D; ++k) a += w1[j * D + k] * x[k];
    h[j] = a > 0.0 ? a : 0.0;
  }
  p.assign(C, 0.0);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < C; ++c) {
    double a = b2[c];
    for (std::size_t j = 0; j < H; ++j) a += w2[c * H + j] * h[j];
    p[c] = a;
    mx = std::max(mx, a);
  }
  double s = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    s += v;
  }
  for (double& v : p) v /= s;
}

}  // namespace

std::shared_ptr<MlpHead> MlpHead::fit(const HeadTrainingData& data, const HeadConfig& cfg) {
  validate_data(data);
  const std::size_t n = data.x.size(), D = data.x.front().size(), H = cfg.mlp_hidden, C = data.labels.size();
  Rng rng(derive_seed(cfg.seed, "mlp-init"));
  std::vector<double> w1(H * D), b1(H, 0.0), w2(C * H), b2(C, 0.0);
  for (double& v : w1) v = rng.normal(0.0, std::sqrt(2.0 / static_cast<double>(D)));
  for (double& v : w2) v = rng.normal(0.0, std::sqrt(1.0 / static_cast<double>(H)));

  AdamD adam(w1.size() + b1.size() + w2.size() + b2.size(), cfg.mlp_learning_rate);
  std::vector<double> gw1(w1.size()), gb1(H), gw2(w2.size()), gb2(C), h, p, dh(H);
  for (std::size_t epoch = 0; epoch < cfg.mlp_epochs; ++epoch) {
    std::fill(gw1.begin(), gw1.end(), 0.0);
    std::fill(gb1.begin(), gb1.end(), 0.0);
    std::fill(gw2.begin(), gw2.end(), 0.0);
    std::fill(gb2.begin(), gb2.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      mlp_forward(w1, b1, w2, b2, data.x[i], h, p);
      std::fill(dh.begin(), dh.end(), 0.0);
      for (std::size_t c = 0; c < C; ++c) {
        const double d = (p[c] - (data.y[i] == c ? 1.0 : 0.0)) / static_cast<double>(n);
        gb2[c] += d;
        for (std::size_t j = 0; j < H; ++j) {
          gw2[c * H + j] += d * h[j];
          dh[j] += d * w2[c * H + j];
        }
      }
      for (std::size_t j = 0; j < H; ++j) {
        if (h[j] <= 0.0) continue;
        gb1[j] += dh[j];
        for (std::size_t k = 0; k < D; ++k) gw1[j * D + k] += dh[j] * data.x[i][k];
      }
    }
    adam.tick();
    adam.step(w1, gw1, 0);
    adam.step(b1, gb1, w1.size());
    adam.step(w2, gw2, w1.size() + b1.size());
    adam.step(b2, gb2, w1.size() + b1.size() + w2.size());
  }
  return std::make_shared<MlpHead>(data.labels, D, data.lexicon_id, cfg, std::move(w1), std::move(b1),
                                   std::move(w2), std::move(b2));
}

std::vector<double> MlpHead::class_scores(std::span<const double> x) const {
  check_input(x);
  std::vector<double> h, p;
  mlp_forward(w1_, b1_, w2_, b2_, x, h, p);
  return p;
}

ordered_json MlpHead::model_json() const {
  ordered_json j;
  j["hidden"] = hidden_;
  j["w1"] = w1_;
  j["b1"] = b1_;
  j["w2"] = w2_;
  j["b2"] = b2_;
  return j;
}

// ---- Loading --------------------------------------------------------------

LabelHeadPtr label_head_from_json(const json& j) {
  try {
    if (j.value("format", "") != "cbx-label-head") throw SchemaError("not a label head artifact");
    if (j.at("format_version").get<int>() != kHeadFormatVersion) {
      throw SchemaError("unsupported label head format version");
    }
    const HeadKind kind = parse_head_kind(j.at("kind").get<std::string>());
    auto labels = j.at("labels").get<std::vector<std::string>>();
    const auto input_size = j.at("input_size").get<std::size_t>();
    auto lexicon_id = j.at("lexicon_id").get<std::string>();
    const HeadConfig cfg = HeadConfig::from_json(j.at("config"));
    const json& m = j.at("model");
    switch (kind) {
      case HeadKind::kDT: {
        std::vector<DecisionTreeHead::Node> nodes;
        for (const auto& jn : m.at("nodes")) {
          DecisionTreeHead::Node n;
          n.feature = jn.at("feature").get<int>();
          n.threshold = jn.at("threshold").get<double>();
          n.left = jn.at("left").get<int>();
          n.right = jn.at("right").get<int>();
          n.samples = jn.at("samples").get<std::size_t>();
          n.proportions = jn.at("proportions").get<std::vector<double>>();
          nodes.push_back(std::move(n));
        }
        return std::make_shared<DecisionTreeHead>(std::move(labels), input_size, std::move(lexicon_id), cfg,
                                                  std::move(nodes));
      }
      case HeadKind::kSVM: {
        std::vector<SvmHead::ClassModel> models;
        for (const auto& jc : m.at("classes")) {
          SvmHead::ClassModel c;
          c.w = jc.at("w").get<std::vector<double>>();
          c.b = jc.at("b").get<double>();
          c.platt_a = jc.at("platt_a").get<double>();
          c.platt_b = jc.at("platt_b").get<double>();
          models.push_back(std::move(c));
        }
        return std::make_shared<SvmHead>(std::move(labels), input_size, std::move(lexicon_id), cfg,
                                         std::move(models));
      }
      case HeadKind::kMLP:
        return std::make_shared<MlpHead>(std::move(labels), input_size, std::move(lexicon_id), cfg,
                                         m.at("w1").get<std::vector<double>>(), m.at("b1").get<std::vector<double>>(),
                                         m.at("w2").get<std::vector<double>>(), m.at("b2").get<std::vector<double>>());
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("label head artifact: ") + e.what());
  }
  throw SchemaError("unknown head kind");
}

LabelHeadPtr load_label_head(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError("label head " + path.string() + ": " + e.what());
  }
  return label_head_from_json(j);
}

}  // namespace cbx

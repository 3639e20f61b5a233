// cbx: command-line entry point for the concept-bottleneck workbench.

#include "cbx/cbm.hpp"
#include "cbx/concept_model.hpp"
#include "cbx/corpus.hpp"
#include "cbx/error.hpp"
#include "cbx/eval.hpp"
#include "cbx/hash.hpp"
#include "cbx/label_head.hpp"
#include "cbx/lexicon.hpp"
#include "cbx/parallel.hpp"
#include "cbx/plot.hpp"
#include "cbx/report.hpp"
#include "cbx/run_manifest.hpp"
#include "cbx/saliency.hpp"
#include "cbx/score_log.hpp"
#include "cbx/service.hpp"
#include "cbx/synthgen.hpp"
#include "cbx/util.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace cbx;

namespace {

void info(const std::string& msg) { std::cerr << "[cbx] " << msg << "\n"; }

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& s, const char* what) {
  std::vector<double> out;
  for (const auto& tok : split_list(s)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw SchemaError(std::string(what) + ": '" + tok + "' is not a number");
    }
  }
  return out;
}

void write_json(const fs::path& path, const ordered_json& j) { write_text_file(path, j.dump(2) + "\n"); }

fs::path manifest_dir(const fs::path& manifest) {
  return manifest.has_parent_path() ? manifest.parent_path() : fs::path(".");
}

std::vector<CaseRecord> load_annotated(const fs::path& manifest) {
  auto records = load_manifest(manifest);
  for (const auto& r : records) {
    if (!r.concept_vector) {
      throw SchemaError("case " + r.case_id + " has no concept vector; run `cbx extract` on " + manifest.string() +
                        " first");
    }
  }
  return records;
}

std::vector<CaseRecord> select_split(const std::vector<CaseRecord>& records, const std::string& split) {
  if (split == "all") return records;
  const Split s = parse_split(split);
  for (const auto& r : records) {
    if (!r.split) throw SchemaError("case " + r.case_id + " has no split assignment; run `cbx extract` first");
  }
  return filter_split(records, s);
}

std::vector<ImageTensor> load_images(const std::vector<CaseRecord>& records, const fs::path& base,
                                     std::size_t image_size) {
  PreprocessOptions opts;
  opts.target_size = image_size;
  std::vector<ImageTensor> out(records.size());
  parallel_for(records.size(), [&](std::size_t i) { out[i] = load_case_image(records[i], base, opts); });
  return out;
}

ConceptSet concept_set(const ConceptVector& v, const ConceptLexicon& lex) {
  ConceptSet s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v.values[i]) s.insert(lex.concept_at(i).id);
  }
  return s;
}

// Defaults to concept_model.cbxm beside the manifest, where train-concepts writes it.
ConceptModel load_concept_model(const std::string& path, const fs::path& manifest) {
  const fs::path p = path.empty() ? manifest_dir(manifest) / "concept_model.cbxm" : fs::path(path);
  if (!fs::exists(p)) {
    throw IoError("concept model " + p.string() + " does not exist; run `cbx train-concepts` first");
  }
  return ConceptModel::load(p);
}

// --head accepts a kind (resolved inside heads_dir) or an artifact path.
fs::path resolve_head_path(const std::string& head, const fs::path& heads_dir) {
  std::string kind = to_lower(head);
  if (kind == "dt" || kind == "svm" || kind == "mlp") return heads_dir / ("label_head_" + kind + ".json");
  return head;
}

LabelHeadPtr load_head(const std::string& head, const fs::path& heads_dir) {
  const fs::path p = resolve_head_path(head, heads_dir);
  if (!fs::exists(p)) {
    throw IoError("label head " + p.string() + " does not exist; run `cbx train-labels` first");
  }
  return load_label_head(p);
}

void check_lexicon(const ConceptLexicon& lex, const std::string& model_lexicon_id, const char* what) {
  if (model_lexicon_id != lex.id()) {
    throw SchemaError(std::string(what) + " was trained on lexicon " + model_lexicon_id + " but --lexicon resolves to " +
                      lex.id());
  }
}

HeadTrainingData head_data(const std::vector<CaseRecord>& records, const ConceptLexicon& lex) {
  HeadTrainingData d;
  d.labels = lex.labels();
  d.lexicon_id = lex.id();
  for (const auto& r : records) {
    d.x.emplace_back(r.concept_vector->values.begin(), r.concept_vector->values.end());
    d.y.push_back(lex.require_label(r.label));
  }
  return d;
}

std::vector<CaseRecord> apply_oss(const std::vector<CaseRecord>& train, const fs::path& base, std::uint64_t seed,
                                  std::size_t image_size, RunManifest& run) {
  const std::string majority = majority_label(train);
  std::vector<std::string> warnings;
  PreprocessOptions opts;
  opts.target_size = image_size;
  auto kept = one_sided_selection(train, default_featurizer(base, opts), majority, derive_seed(seed, "oss"), &warnings);
  for (const auto& w : warnings) info("oss: " + w);
  info("oss: kept " + std::to_string(kept.size()) + " of " + std::to_string(train.size()) + " training cases (majority " +
       majority + ")");
  run.config["oss_kept"] = kept.size();
  return kept;
}

// Inserts `--key value` pairs from the JSON config for keys not given on
// the command line. Layout: {"<subcommand>": {"flag-name": value}}.
std::vector<std::string> merge_config(std::vector<std::string> args) {
  std::string config_path;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config_path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (config_path.empty()) return rest;
  json cfg;
  try {
    cfg = json::parse(read_text_file(config_path));
  } catch (const json::parse_error& e) {
    throw ParseError("config " + config_path + ": " + e.what());
  }
  if (!cfg.is_object()) throw SchemaError("config " + config_path + " must be a JSON object");
  // Subcommand path = leading non-flag tokens.
  std::size_t pos = 0;
  std::string key;
  const json* section = &cfg;
  while (pos < rest.size() && rest[pos].rfind("-", 0) != 0) {
    key = rest[pos];
    if (section->contains(key) && (*section)[key].is_object()) section = &(*section)[key];
    ++pos;
  }
  std::vector<std::string> extra;
  for (const auto& [name, value] : section->items()) {
    if (value.is_object()) continue;
    const std::string flag = "--" + name;
    const bool given = std::any_of(rest.begin(), rest.end(),
                                   [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
    if (given) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) extra.push_back(flag);
      continue;
    }
    extra.push_back(flag);
    if (value.is_array()) {
      std::string joined;
      for (const auto& v : value) joined += (joined.empty() ? "" : ",") + (v.is_string() ? v.get<std::string>() : v.dump());
      extra.push_back(joined);
    } else {
      extra.push_back(value.is_string() ? value.get<std::string>() : value.dump());
    }
  }
  rest.insert(rest.begin() + static_cast<std::ptrdiff_t>(pos), extra.begin(), extra.end());
  return rest;
}

// ---- synth-gen -------------------------------------------------------------

struct SynthArgs {
  std::size_t n = 100;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t image_size = 64;
  double negation_rate = 0.3;
  double solitary_mass_rate = 0.2;
  std::string label_mix;
  std::string lexicon = "default";
};

int run_synth(const SynthArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  const ConceptLexicon lex = resolve_lexicon(a.lexicon);
  SynthSpec spec;
  spec.n_cases = a.n;
  spec.seed = a.seed;
  spec.image_size = a.image_size;
  spec.negation_rate = a.negation_rate;
  spec.solitary_mass_rate = a.solitary_mass_rate;
  if (!a.label_mix.empty()) spec.label_mix = parse_doubles(a.label_mix, "--label-mix");
  const fs::path manifest = generate_corpus(spec, a.out, lex);

  RunManifest run;
  run.command = "synth-gen";
  run.config = {{"n", a.n},
                {"image_size", a.image_size},
                {"negation_rate", a.negation_rate},
                {"solitary_mass_rate", a.solitary_mass_rate},
                {"label_mix", spec.label_mix},
                {"lexicon", a.lexicon},
                {"lexicon_id", lex.id()}};
  run.seeds["seed"] = a.seed;
  run.outputs = {manifest.string(), (fs::path(a.out) / "truth.jsonl").string(), (fs::path(a.out) / "images").string(),
                 (fs::path(a.out) / "reports").string()};
  run.write(a.out);
  info("generated " + std::to_string(a.n) + " cases in " + fixed(seconds_since(t0), 1) + " s");
  std::cout << manifest.string() << "\n";
  return 0;
}

// ---- extract ---------------------------------------------------------------

struct ExtractArgs {
  std::string manifest;
  std::string lexicon = "default";
  std::string negation;
  std::string out;
  std::string truth;
  std::string split = "80,10,10";
  std::uint64_t seed = 0;
};

int run_extract(const ExtractArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  const ConceptLexicon lex = resolve_lexicon(a.lexicon);
  const NegationConfig neg = a.negation.empty() ? NegationConfig::defaults() : NegationConfig::load(a.negation);
  const ConceptExtractor extractor(lex, NormalizeOptions{}, neg);
  const fs::path manifest = a.manifest;
  const fs::path dir = manifest_dir(manifest);
  const auto records = load_manifest(manifest);
  AnnotationResult ann = annotate_corpus(records, dir, extractor);
  for (const auto& f : ann.flagged) info("skipped " + f.case_id + ": " + f.reason);

  const auto ratios = parse_doubles(a.split, "--split");
  if (ratios.size() != 3) throw SchemaError("--split needs three percentages, e.g. 80,10,10");
  SplitRatios sr{static_cast<int>(ratios[0]), static_cast<int>(ratios[1]), static_cast<int>(ratios[2])};
  std::vector<CaseRecord> annotated = split_dataset(ann.records, sr, derive_seed(a.seed, "split"));
  const double elapsed = seconds_since(t0);

  const fs::path out = a.out.empty() ? dir / "annotated.jsonl" : fs::path(a.out);
  save_manifest(annotated, out);

  ordered_json values;
  values["cases"] = records.size();
  values["annotated"] = annotated.size();
  values["flagged"] = ann.flagged.size();
  ordered_json counts = ordered_json::object();
  for (std::size_t i = 0; i < lex.size(); ++i) counts[lex.concept_at(i).id] = ann.concept_counts[i];
  values["concept_counts"] = counts;

  Provenance prov;
  prov.lexicon_id = lex.id();
  prov.seed = a.seed;
  prov.inputs["manifest"] = sha256_file(manifest);

  fs::path truth_path = a.truth;
  if (truth_path.empty() && fs::exists(dir / "truth.jsonl")) truth_path = dir / "truth.jsonl";
  if (!truth_path.empty()) {
    const auto truth = load_truth(truth_path);
    std::map<std::string, const TruthRecord*> by_id;
    for (const auto& t : truth) by_id[t.case_id] = &t;
    std::vector<ConceptSet> pred, gt;
    for (const auto& r : ann.records) {
      auto it = by_id.find(r.case_id);
      if (it == by_id.end()) continue;
      pred.push_back(concept_set(*r.concept_vector, lex));
      gt.push_back(concept_set(it->second->concepts, lex));
    }
    const PRF p = concept_set_prf(pred, gt, &lex);
    values["truth_cases"] = pred.size();
    values["concept_prf_vs_truth"] = prf_json(p);
    prov.inputs["truth"] = sha256_file(truth_path);
    std::cout << "concept F1 vs truth: " << fixed(p.f1) << " (precision " << fixed(p.precision) << ", recall "
              << fixed(p.recall) << ", " << pred.size() << " cases)\n";
  }
  const fs::path metrics = out.parent_path() / "extract_metrics.json";
  ordered_json params = {{"split", a.split}, {"negation_window", neg.window}};
  write_json(metrics, metric_document("concept_extraction", params, values, prov));

  RunManifest run;
  run.command = "extract";
  run.config = {{"manifest", a.manifest}, {"lexicon", a.lexicon}, {"negation", a.negation}, {"split", a.split},
                {"lexicon_id", lex.id()}};
  run.seeds["seed"] = a.seed;
  run.add_input(manifest);
  if (!truth_path.empty()) run.add_input(truth_path);
  run.outputs = {out.string(), metrics.string()};
  run.write(out.parent_path());
  info("annotated " + std::to_string(annotated.size()) + " reports in " + fixed(elapsed, 2) + " s -> " + out.string());
  return 0;
}

// ---- train-concepts --------------------------------------------------------

struct TrainConceptArgs {
  std::string manifest;
  std::string out;
  std::string lexicon = "default";
  std::string backbone = "small";
  std::size_t epochs = 25;
  std::size_t batch_size = 64;
  double lr = 0.005;
  std::size_t width = 8;
  std::size_t patience = 5;
  std::size_t image_size = 64;
  std::uint64_t seed = 0;
  bool oss = false;
};

int run_train_concepts(const TrainConceptArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  const ConceptLexicon lex = resolve_lexicon(a.lexicon);
  const fs::path manifest = a.manifest;
  const fs::path dir = manifest_dir(manifest);
  const auto records = load_annotated(manifest);
  RunManifest run;
  run.command = "train-concepts";

  auto train = select_split(records, "train");
  const auto val = select_split(records, "val");
  if (a.oss) train = apply_oss(train, dir, a.seed, a.image_size, run);

  TrainConfig cfg;
  cfg.backbone = parse_backbone(a.backbone);
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch_size;
  cfg.learning_rate = a.lr;
  cfg.width = a.width;
  cfg.patience = a.patience;
  cfg.seed = derive_seed(a.seed, "train-concepts");
  cfg.validate();

  auto to_examples = [&](const std::vector<CaseRecord>& rs) {
    const auto imgs = load_images(rs, dir, a.image_size);
    std::vector<ConceptExample> ex(rs.size());
    for (std::size_t i = 0; i < rs.size(); ++i) ex[i] = {imgs[i], *rs[i].concept_vector};
    return ex;
  };
  const auto train_ex = to_examples(train);
  const auto val_ex = to_examples(val);
  info("training on " + std::to_string(train_ex.size()) + " cases, validating on " + std::to_string(val_ex.size()));

  const ConceptModel model = train_concept_predictor(train_ex, val_ex, cfg, lex, [](const EpochLog& e) {
    info("epoch " + std::to_string(e.epoch) + " loss " + fixed(e.train_loss, 5) +
         (std::isfinite(e.val_f1) ? " val_f1 " + fixed(e.val_f1) : std::string()));
  });
  const fs::path out = a.out.empty() ? dir / "concept_model.cbxm" : fs::path(a.out);
  model.save(out);

  ordered_json hist = ordered_json::array();
  for (const auto& e : model.history()) {
    hist.push_back({{"epoch", e.epoch},
                    {"train_loss", e.train_loss},
                    {"val_f1", std::isfinite(e.val_f1) ? json(e.val_f1) : json(nullptr)}});
  }
  fs::path hist_path = out;
  hist_path += ".history.json";
  write_json(hist_path, hist);

  run.config.update(ordered_json{{"manifest", a.manifest},
                                 {"lexicon", a.lexicon},
                                 {"lexicon_id", lex.id()},
                                 {"train_config", cfg.to_json()},
                                 {"image_size", a.image_size},
                                 {"oss", a.oss}});
  run.seeds["seed"] = a.seed;
  run.seeds["train-concepts"] = cfg.seed;
  run.add_input(manifest);
  run.outputs = {out.string(), hist_path.string()};
  run.write(out.parent_path());
  info("concept model " + model.hash().substr(0, 16) + " written to " + out.string() + " (" +
       fixed(seconds_since(t0), 1) + " s)");
  return 0;
}

// ---- train-labels ----------------------------------------------------------

struct TrainLabelArgs {
  std::string manifest;
  std::string head = "all";
  std::string out_dir;
  std::string lexicon = "default";
  std::string concept_model;
  std::string eval_split = "test";
  std::size_t max_depth = 12;
  std::uint64_t seed = 0;
  bool oss = false;
};

int run_train_labels(const TrainLabelArgs& a) {
  const ConceptLexicon lex = resolve_lexicon(a.lexicon);
  const fs::path manifest = a.manifest;
  const fs::path dir = manifest_dir(manifest);
  const fs::path out_dir = a.out_dir.empty() ? dir / "heads" : fs::path(a.out_dir);
  const auto records = load_annotated(manifest);
  RunManifest run;
  run.command = "train-labels";

  std::vector<HeadKind> kinds;
  if (to_lower(a.head) == "all") {
    kinds = {HeadKind::kDT, HeadKind::kSVM, HeadKind::kMLP};
  } else {
    kinds = {parse_head_kind(a.head)};
  }
  auto train = select_split(records, "train");
  if (a.oss) train = apply_oss(train, dir, a.seed, 64, run);
  const auto eval_records = select_split(records, a.eval_split);

  HeadConfig hc;
  hc.max_depth = a.max_depth;
  hc.seed = derive_seed(a.seed, "train-labels");
  const HeadTrainingData data = head_data(train, lex);

  // Evaluation inputs: predicted concept scores when a concept model is
  // given (full pipeline), otherwise the report-derived concept vectors.
  std::vector<ConceptScores> eval_scores(eval_records.size());
  Provenance prov;
  prov.lexicon_id = lex.id();
  prov.seed = a.seed;
  prov.inputs["manifest"] = sha256_file(manifest);
  std::string input_kind = "report_concepts";
  if (!a.concept_model.empty()) {
    const ConceptModel model = load_concept_model(a.concept_model, a.manifest);
    check_lexicon(lex, model.lexicon_id(), "concept model");
    const auto imgs = load_images(eval_records, dir, model.image_size());
    parallel_for(imgs.size(), [&](std::size_t i) { eval_scores[i] = predict_concepts(model, imgs[i], lex.id()); });
    prov.model_hashes["concept_model"] = model.hash();
    input_kind = "predicted_scores";
  } else {
    for (std::size_t i = 0; i < eval_records.size(); ++i) eval_scores[i] = to_scores(*eval_records[i].concept_vector);
  }
  std::vector<std::string> truth;
  for (const auto& r : eval_records) truth.push_back(r.label);

  ordered_json heads = ordered_json::object();
  std::string csv = "head,precision,recall,f1\n";
  std::string md = "| Head | Precision | Recall | F1 |\n|---|---|---|---|\n";
  for (HeadKind k : kinds) {
    const auto head = train_label_head(data, k, hc);
    const std::string name = to_lower(to_string(k));
    const fs::path path = out_dir / ("label_head_" + name + ".json");
    head->save(path);
    run.outputs.push_back(path.string());
    if (k == HeadKind::kDT) {
      std::vector<std::string> names;
      for (const auto& c : lex.concepts()) names.push_back(c.id);
      const fs::path tree = out_dir / "dt_tree.txt";
      write_text_file(tree, static_cast<const DecisionTreeHead&>(*head).to_text(names));
      run.outputs.push_back(tree.string());
    }
    std::vector<std::string> pred;
    std::size_t train_correct = 0;
    for (std::size_t i = 0; i < data.x.size(); ++i) {
      ConceptScores s;
      s.values = data.x[i];
      train_correct += predict_label(*head, s).label_index == data.y[i];
    }
    for (const auto& s : eval_scores) pred.push_back(predict_label(*head, s).label);
    const LabelReport rep = label_prf(pred, truth, lex.labels());
    ordered_json e = rep.to_json();
    e["train_accuracy"] = static_cast<double>(train_correct) / static_cast<double>(data.x.size());
    e["artifact"] = path.filename().string();  // beside this report
    heads[to_string(k)] = e;
    prov.model_hashes[to_string(k)] = head->hash();
    csv += to_string(k) + "," + fixed(rep.macro.precision) + "," + fixed(rep.macro.recall) + "," + fixed(rep.macro.f1) +
           "\n";
    md += "| " + to_string(k) + " | " + fixed(rep.macro.precision, 3) + " | " + fixed(rep.macro.recall, 3) + " | " +
          fixed(rep.macro.f1, 3) + " |\n";
    info(to_string(k) + ": macro P " + fixed(rep.macro.precision) + " R " + fixed(rep.macro.recall) + " F1 " +
         fixed(rep.macro.f1) + " on " + std::to_string(truth.size()) + " " + a.eval_split + " cases");
  }
  ordered_json params = {{"eval_split", a.eval_split}, {"inputs", input_kind}, {"averaging", "macro"},
                         {"head_config", hc.to_json()}};
  const fs::path report = out_dir / "heads_report.json";
  write_json(report, metric_document("label_head_comparison", params, {{"heads", heads}}, prov));
  write_text_file(out_dir / "heads_report.csv", csv);
  write_text_file(out_dir / "heads_report.md", md);
  std::cout << md;

  run.config = {{"manifest", a.manifest}, {"head", a.head}, {"lexicon", a.lexicon}, {"lexicon_id", lex.id()},
                {"concept_model", a.concept_model}, {"eval_split", a.eval_split}, {"head_config", hc.to_json()},
                {"oss", a.oss}};
  run.seeds["seed"] = a.seed;
  run.seeds["train-labels"] = hc.seed;
  run.add_input(manifest);
  if (!a.concept_model.empty()) run.add_input(a.concept_model);
  run.outputs.push_back(report.string());
  run.outputs.push_back((out_dir / "heads_report.csv").string());
  run.outputs.push_back((out_dir / "heads_report.md").string());
  run.write(out_dir);
  return 0;
}

// ---- evaluate ----------------------------------------------------------------

struct EvalArgs {
  std::string manifest;
  std::string concept_model;
  std::string head = "dt";
  std::string heads_dir;
  std::string lexicon = "default";
  std::string split = "test";
  std::string out;
  std::size_t k = 2;
  std::uint64_t seed = 0;
  // saliency
  std::string techniques = "gradcam,occlusion";
  std::vector<std::string> imports;
  std::string grid;
  std::size_t max_cases = 50;
  std::size_t patch = 8;
  std::size_t stride = 4;
  std::string target_concept;
  // expert
  std::string score_log;
};

fs::path default_metrics_dir(const EvalArgs& a) {
  return a.out.empty() ? manifest_dir(a.manifest) / "metrics" : fs::path(a.out);
}

int run_eval_concepts(const EvalArgs& a) {
  const ConceptLexicon lex = resolve_lexicon(a.lexicon);
  if (a.manifest.empty()) throw SchemaError("--manifest is required");
  const fs::path dir = manifest_dir(a.manifest);
  const ConceptModel model = load_concept_model(a.concept_model, a.manifest);
  check_lexicon(lex, model.lexicon_id(), "concept model");
  const auto records = select_split(load_annotated(a.manifest), a.split);
  const auto imgs = load_images(records, dir, model.image_size());
  std::vector<ConceptScores> scores(records.size());
  parallel_for(records.size(), [&](std::size_t i) { scores[i] = predict_concepts(model, imgs[i], lex.id()); });

  std::vector<ConceptSet> pred, gt;
  std::vector<ConceptVector> truth;
  for (std::size_t i = 0; i < records.size(); ++i) {
    ConceptSet top;
    if (a.k == 2) {
      for (const auto& [id, s] : explain_top2(scores[i], lex).top_concepts) top.insert(id);
    } else {
      std::vector<std::size_t> idx(lex.size());
      std::iota(idx.begin(), idx.end(), 0);
      std::stable_sort(idx.begin(), idx.end(),
                       [&](std::size_t x, std::size_t y) { return scores[i].values[x] > scores[i].values[y]; });
      for (std::size_t j = 0; j < std::min(a.k, idx.size()); ++j) top.insert(lex.concept_at(idx[j]).id);
    }
    pred.push_back(top);
    gt.push_back(concept_set(*records[i].concept_vector, lex));
    truth.push_back(*records[i].concept_vector);
  }
  const PRF p = concept_set_prf(pred, gt, &lex);
  Provenance prov;
  prov.lexicon_id = lex.id();
  prov.seed = a.seed;
  prov.model_hashes["concept_model"] = model.hash();
  prov.inputs["manifest"] = sha256_file(a.manifest);
  ordered_json values = {{"cases", records.size()},
                         {"top_k_capture", prf_json(p)},
                         {"thresholded_micro_f1", thresholded_micro_f1(scores, truth)}};
  ordered_json params = {{"split", a.split}, {"k", a.k}, {"averaging", "micro"}, {"threshold", 0.5}};
  const fs::path out = default_metrics_dir(a) / "concepts.json";
  write_json(out, metric_document("concept_capture", params, values, prov));
  std::cout << "top-" << a.k << " concept capture on " << records.size() << " " << a.split << " cases: P "
            << fixed(p.precision) << " R " << fixed(p.recall) << " F1 " << fixed(p.f1) << "\n";

  RunManifest run;
  run.command = "evaluate concepts";
  run.config = {{"manifest", a.manifest}, {"concept_model", a.concept_model}, {"split", a.split}, {"k", a.k},
                {"lexicon_id", lex.id()}};
  run.seeds["seed"] = a.seed;
  run.add_input(a.manifest);
  run.add_input(a.concept_model);
  run.outputs = {out.string()};
  run.write(out.parent_path());
  return 0;
}

int run_eval_labels(const EvalArgs& a) {
  const ConceptLexicon lex = resolve_lexicon(a.lexicon);
  if (a.manifest.empty()) throw SchemaError("--manifest is required");
  const fs::path dir = manifest_dir(a.manifest);
  const fs::path heads_dir = a.heads_dir.empty() ? dir / "heads" : fs::path(a.heads_dir);
  const auto head = load_head(a.head, heads_dir);
  const ConceptModel model = load_concept_model(a.concept_model, a.manifest);
  check_lexicon(lex, model.lexicon_id(), "concept model");
  check_lexicon(lex, head->lexicon_id(), "label head");
  const auto records = select_split(load_annotated(a.manifest), a.split);
  const auto imgs = load_images(records, dir, model.image_size());
  std::vector<std::string> pred(records.size()), truth;
  std::vector<std::uint8_t> low(records.size());
  parallel_for(records.size(), [&](std::size_t i) {
    const auto lp = predict_label(*head, predict_concepts(model, imgs[i], lex.id()));
    pred[i] = lp.label;
    low[i] = lp.low_confidence;
  });
  for (const auto& r : records) truth.push_back(r.label);
  const LabelReport rep = label_prf(pred, truth, lex.labels());
  for (const auto& w : rep.warnings) info(w);
  Provenance prov;
  prov.lexicon_id = lex.id();
  prov.seed = a.seed;
  prov.model_hashes["concept_model"] = model.hash();
  prov.model_hashes["label_head"] = head->hash();
  prov.inputs["manifest"] = sha256_file(a.manifest);
  ordered_json values = rep.to_json();
  values["cases"] = records.size();
  values["low_confidence"] = std::count(low.begin(), low.end(), 1);
  ordered_json params = {{"split", a.split}, {"head", to_string(head->kind())}, {"averaging", "macro"}};
  const fs::path out = default_metrics_dir(a) / ("labels_" + to_lower(to_string(head->kind())) + ".json");
  write_json(out, metric_document("label_classification", params, values, prov));
  std::cout << to_string(head->kind()) << " label classification on " << records.size() << " " << a.split
            << " cases: macro P " << fixed(rep.macro.precision) << " R " << fixed(rep.macro.recall) << " F1 "
            << fixed(rep.macro.f1) << "\n";

  RunManifest run;
  run.command = "evaluate labels";
  run.config = {{"manifest", a.manifest}, {"concept_model", a.concept_model}, {"head", a.head},
                {"split", a.split}, {"lexicon_id", lex.id()}};
  run.seeds["seed"] = a.seed;
  run.add_input(a.manifest);
  run.add_input(a.concept_model);
  run.add_input(resolve_head_path(a.head, heads_dir));
  run.outputs = {out.string()};
  run.write(out.parent_path());
  return 0;
}

int run_eval_saliency(const EvalArgs& a) {
  const ConceptLexicon lex = resolve_lexicon(a.lexicon);
  if (a.manifest.empty()) throw SchemaError("--manifest is required");
  const fs::path dir = manifest_dir(a.manifest);
  const ConceptModel model = load_concept_model(a.concept_model, a.manifest);
  check_lexicon(lex, model.lexicon_id(), "concept model");
  std::vector<CaseRecord> records;
  if (!a.target_concept.empty()) lex.require_index(a.target_concept);
  for (auto r : select_split(load_annotated(a.manifest), a.split)) {
    if (!r.bboxes || r.bboxes->empty()) continue;
    if (!a.target_concept.empty()) {
      // Keep only the boxes of the requested finding.
      std::erase_if(*r.bboxes, [&](const BBoxAnnotation& b) { return b.concept_id != a.target_concept; });
      if (r.bboxes->empty()) continue;
    }
    records.push_back(r);
    if (records.size() >= a.max_cases) break;
  }
  if (records.empty()) throw Error("no cases with bounding boxes in split " + a.split);
  const std::vector<double> grid = a.grid.empty() ? default_overlap_grid() : parse_doubles(a.grid, "--grid");
  const auto imgs = load_images(records, dir, model.image_size());

  TechniqueMaps maps;
  const auto techniques = split_list(a.techniques);
  std::vector<double> inside_wins;
  for (const auto& tech : techniques) {
    if (tech != "gradcam" && tech != "occlusion") throw SchemaError("unknown saliency technique '" + tech + "'");
    std::vector<SaliencyMap> out(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& box = records[i].bboxes->front();
      const std::size_t target =
          box.concept_id.empty() ? lex.concepts_in_group(box.label).front() : lex.require_index(box.concept_id);
      out[i] = tech == "gradcam" ? gradient_cam(model, imgs[i], target)
                                 : occlusion_saliency(model, imgs[i], target, a.patch, a.stride);
      out[i].case_id = records[i].case_id;
    }
    for (std::size_t i = 0; i < records.size(); ++i) maps[tech].emplace(records[i].case_id, std::move(out[i]));
  }
  for (const auto& spec : a.imports) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw SchemaError("--import expects name=directory, got '" + spec + "'");
    const std::string name = spec.substr(0, eq);
    const fs::path idir = spec.substr(eq + 1);
    for (std::size_t i = 0; i < records.size(); ++i) {
      const fs::path p = idir / (records[i].case_id + ".csv");
      if (!fs::exists(p)) continue;  // counted as missing by overlap_curve
      auto m = import_saliency(p, model.image_size(), model.image_size());
      m.technique = name;
      m.case_id = records[i].case_id;
      maps[name].emplace(records[i].case_id, std::move(m));
    }
  }

  const fs::path out_dir = a.out.empty() ? dir / "metrics" / "saliency" : fs::path(a.out);
  Provenance prov;
  prov.lexicon_id = lex.id();
  prov.seed = a.seed;
  prov.model_hashes["concept_model"] = model.hash();
  prov.inputs["manifest"] = sha256_file(a.manifest);

  ordered_json params = {{"split", a.split}, {"grid", grid}, {"patch", a.patch}, {"stride", a.stride},
                         {"concept", a.target_concept}, {"cases", records.size()}};
  std::vector<Series> overlap_series;
  if (maps.size() >= 2) {
    const OverlapCurves curves = overlap_curve(maps, grid);
    write_json(out_dir / "overlap.json", metric_document("saliency_overlap", params, curves.to_json(), prov));
    write_text_file(out_dir / "overlap.csv", curves.to_csv());
    for (const auto& [pair, pts] : curves.curves) {
      Series s{pair.first + " vs " + pair.second, {}};
      for (const auto& p : pts) s.points.emplace_back(p.n, p.value);
      overlap_series.push_back(s);
    }
    write_text_file(out_dir / "overlap.svg",
                    svg_line_chart("Mean pixel overlap between techniques", "top n%", "overlap", overlap_series));
  }

  ordered_json capture = ordered_json::object();
  std::string csv = "technique,n,capture\n";
  std::vector<Series> capture_series;
  for (const auto& [tech, cases] : maps) {
    Series s{tech, {}};
    ordered_json pts = ordered_json::array();
    for (double n : grid) {
      double sum = 0;
      std::size_t cnt = 0;
      for (const auto& r : records) {
        auto it = cases.find(r.case_id);
        if (it == cases.end()) continue;
        sum += bbox_capture(it->second, *r.bboxes, n);
        ++cnt;
      }
      const double mean = cnt ? sum / static_cast<double>(cnt) : 0.0;
      pts.push_back({{"n", n}, {"value", mean}});
      s.points.emplace_back(n, mean);
      csv += tech + "," + fixed(n, 2) + "," + fixed(mean, 6) + "\n";
    }
    capture[tech] = pts;
    capture_series.push_back(s);
  }
  ordered_json values = {{"capture", capture}};
  if (maps.count("gradcam")) {
    std::size_t wins = 0;
    for (const auto& r : records) {
      const auto& m = maps["gradcam"].at(r.case_id);
      double in = 0, out = 0;
      std::size_t nin = 0, nout = 0;
      for (std::size_t y = 0; y < m.height; ++y) {
        for (std::size_t x = 0; x < m.width; ++x) {
          const bool inside = std::any_of(r.bboxes->begin(), r.bboxes->end(), [&](const BBoxAnnotation& b) {
            return b.contains(static_cast<int>(x), static_cast<int>(y));
          });
          (inside ? in : out) += m.at(y, x);
          ++(inside ? nin : nout);
        }
      }
      wins += nin && nout && in / static_cast<double>(nin) > out / static_cast<double>(nout);
    }
    values["gradcam_inside_gt_outside"] = static_cast<double>(wins) / static_cast<double>(records.size());
  }
  write_json(out_dir / "bbox_capture.json", metric_document("bbox_capture", params, values, prov));
  write_text_file(out_dir / "bbox_capture.csv", csv);
  write_text_file(out_dir / "bbox_capture.svg",
                  svg_line_chart("Bounding-box pixels captured in the top n%", "top n%", "capture", capture_series));
  std::cout << "saliency evaluated on " << records.size() << " cases -> " << out_dir.string() << "\n";

  RunManifest run;
  run.command = "evaluate saliency";
  run.config = {{"manifest", a.manifest}, {"concept_model", a.concept_model}, {"split", a.split},
                {"techniques", a.techniques}, {"imports", a.imports}, {"grid", grid}, {"max_cases", a.max_cases},
                {"patch", a.patch}, {"stride", a.stride}};
  run.seeds["seed"] = a.seed;
  run.add_input(a.manifest);
  run.add_input(a.concept_model);
  for (const char* f : {"overlap.json", "overlap.csv", "overlap.svg", "bbox_capture.json", "bbox_capture.csv",
                        "bbox_capture.svg"}) {
    if (fs::exists(out_dir / f)) run.outputs.push_back((out_dir / f).string());
  }
  run.write(out_dir);
  return 0;
}

int run_eval_expert(const EvalArgs& a) {
  if (a.score_log.empty()) throw SchemaError("--score-log is required");
  if (!fs::exists(a.score_log)) throw IoError("score log " + a.score_log + " does not exist");
  std::map<std::string, std::string> cohort;
  if (!a.manifest.empty()) {
    for (const auto& r : load_manifest(a.manifest)) cohort[r.case_id] = cohort_of_label(r.label);
  }
  std::vector<std::string> warnings;
  const auto log = ScoreLog::read(a.score_log, &warnings);
  for (const auto& w : warnings) info(w);
  const ExpertAggregate agg = aggregate_expert_scores(log, [&](const std::string& id) {
    auto it = cohort.find(id);
    return it == cohort.end() ? std::string("unknown") : it->second;
  });
  for (const auto& w : agg.warnings) info(w);
  const fs::path out_dir = a.out.empty() ? fs::path(a.score_log).parent_path() / "metrics" : fs::path(a.out);
  Provenance prov;
  prov.seed = a.seed;
  prov.inputs["score_log"] = sha256_file(a.score_log);
  if (!a.manifest.empty()) prov.inputs["manifest"] = sha256_file(a.manifest);
  ordered_json values = agg.to_json();
  ordered_json totals = ordered_json::object();
  for (const auto& [tech, h] : agg.histograms) totals[tech] = agg.total(tech);
  values["totals"] = totals;
  write_json(out_dir / "expert_scores.json", metric_document("expert_scores", ordered_json::object(), values, prov));
  write_text_file(out_dir / "expert_scores.csv", agg.to_csv());

  std::vector<std::string> series;
  std::vector<BarGroup> groups;
  for (const auto& [tech, cohorts] : agg.histograms) {
    for (const auto& [c, h] : cohorts) {
      const std::string name = tech + "/" + c;
      series.push_back(name);
    }
  }
  for (int s = 0; s < 4; ++s) {
    BarGroup g{"score " + std::to_string(s), {}};
    for (const auto& [tech, cohorts] : agg.histograms) {
      for (const auto& [c, h] : cohorts) g.values.push_back(static_cast<double>(h[static_cast<std::size_t>(s)]));
    }
    groups.push_back(g);
  }
  write_text_file(out_dir / "expert_scores.svg", svg_bar_chart("Expert explanation scores", series, groups));
  std::cout << agg.to_csv();

  RunManifest run;
  run.command = "evaluate expert";
  run.config = {{"score_log", a.score_log}, {"manifest", a.manifest}};
  run.add_input(a.score_log);
  if (!a.manifest.empty()) run.add_input(a.manifest);
  run.outputs = {(out_dir / "expert_scores.json").string(), (out_dir / "expert_scores.csv").string(),
                 (out_dir / "expert_scores.svg").string()};
  run.write(out_dir);
  return 0;
}

// ---- explain -----------------------------------------------------------------

struct ExplainArgs {
  std::string case_id;
  std::string manifest;
  std::string concept_model;
  std::string head = "dt";
  std::string heads_dir;
  std::string lexicon = "default";
  bool as_json = false;
};

int run_explain(const ExplainArgs& a) {
  const ConceptLexicon lex = resolve_lexicon(a.lexicon);
  if (a.manifest.empty()) throw SchemaError("--manifest is required");
  const fs::path dir = manifest_dir(a.manifest);
  const auto records = load_manifest(a.manifest);
  auto it = std::find_if(records.begin(), records.end(), [&](const CaseRecord& r) { return r.case_id == a.case_id; });
  if (it == records.end()) throw NotFoundError("case '" + a.case_id + "' is not in " + a.manifest);
  const ConceptModel model = load_concept_model(a.concept_model, a.manifest);
  check_lexicon(lex, model.lexicon_id(), "concept model");
  const fs::path heads_dir = a.heads_dir.empty() ? dir / "heads" : fs::path(a.heads_dir);
  PreprocessOptions opts;
  opts.target_size = model.image_size();
  const ConceptScores scores = predict_concepts(model, load_case_image(*it, dir, opts), lex.id());
  const Explanation e = explain_top2(scores, lex, a.case_id);
  std::optional<LabelPrediction> lp;
  LabelHeadPtr head;
  if (fs::exists(resolve_head_path(a.head, heads_dir))) {
    head = load_head(a.head, heads_dir);
    lp = predict_label(*head, scores);
  }
  if (a.as_json) {
    ordered_json j = e.to_json();
    if (lp) j["prediction"] = lp->to_json(head->labels());
    std::cout << j.dump(2) << "\n";
  } else {
    for (const auto& [id, s] : e.top_concepts) {
      std::cout << lex.concept_at(lex.require_index(id)).display_name << "\t" << fixed(s) << "\n";
    }
    if (lp) {
      std::cout << "label\t" << lp->label << " (" << to_string(lp->head_kind) << ")"
                << (lp->low_confidence ? " low-confidence" : "") << "\n";
    }
  }
  RunManifest run;
  run.command = "explain";
  run.config = {{"case", a.case_id}, {"manifest", a.manifest}, {"concept_model", a.concept_model}, {"head", a.head}};
  run.add_input(a.manifest);
  run.add_input(a.concept_model);
  run.write(dir);
  return 0;
}

// ---- serve -------------------------------------------------------------------

int run_serve(ServiceConfig cfg, const std::set<std::string>& given) {
  ServiceConfig env_cfg = cfg;
  env_cfg.apply_env();
  // Flags beat environment variables.
  if (!given.count("host")) cfg.host = env_cfg.host;
  if (!given.count("port")) cfg.port = env_cfg.port;
  if (!given.count("manifest")) cfg.manifest = env_cfg.manifest;
  if (!given.count("concept-model")) cfg.concept_model = env_cfg.concept_model;
  if (!given.count("head")) cfg.label_head = env_cfg.label_head;
  if (!given.count("score-log")) cfg.score_log = env_cfg.score_log;
  if (!given.count("lexicon")) cfg.lexicon = env_cfg.lexicon;
  if (!given.count("unblind")) cfg.unblind = env_cfg.unblind;
  if (!cfg.manifest.empty() && cfg.concept_model.empty()) {
    cfg.concept_model = manifest_dir(cfg.manifest) / "concept_model.cbxm";
  }
  if (cfg.label_head.empty()) cfg.label_head = "dt";
  if (!cfg.manifest.empty()) {
    cfg.label_head = resolve_head_path(cfg.label_head.string(), manifest_dir(cfg.manifest) / "heads");
  }
  auto service = ReviewService::from_config(cfg);
  for (const auto& w : service->score_log().replay_warnings()) info(w);
  RunManifest run;
  run.command = "serve";
  run.config = {{"host", cfg.host}, {"port", cfg.port}, {"manifest", cfg.manifest.string()},
                {"concept_model", cfg.concept_model.string()}, {"label_head", cfg.label_head.string()},
                {"score_log", cfg.score_log.string()}, {"unblind", cfg.unblind}};
  run.add_input(cfg.manifest);
  run.add_input(cfg.concept_model);
  run.add_input(cfg.label_head);
  run.outputs = {cfg.score_log.string()};
  run.write(cfg.score_log.has_parent_path() ? cfg.score_log.parent_path() : fs::path("."));
  HttpFrontend http(*service);
  info("serving " + std::to_string(service->score_log().size()) + " stored scores on http://" + cfg.host + ":" +
       std::to_string(cfg.port));
  http.serve_forever(cfg.host, cfg.port);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concept-bottleneck workbench for chest X-ray explanations"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);
  app.footer("Options may also come from --config FILE.json, laid out as {\"<subcommand>\": {\"flag\": value}};\n"
             "flags given on the command line win.");
  std::string config_unused;
  app.add_option("--config", config_unused, "JSON config file");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth-gen", "Generate a synthetic corpus with ground truth");
  c_synth->add_option("--n", synth.n, "Number of cases")->capture_default_str();
  c_synth->add_option("--seed", synth.seed, "Seed")->capture_default_str();
  c_synth->add_option("--out", synth.out, "Output directory")->required();
  c_synth->add_option("--image-size", synth.image_size, "Image side length")->capture_default_str();
  c_synth->add_option("--negation-rate", synth.negation_rate, "Share of reports with negated decoys")
      ->capture_default_str();
  c_synth->add_option("--solitary-mass-rate", synth.solitary_mass_rate, "Share of cancer cases with a lone mass")
      ->capture_default_str();
  c_synth->add_option("--label-mix", synth.label_mix, "Comma-separated label probabilities (lexicon order)");
  c_synth->add_option("--lexicon", synth.lexicon, "Lexicon path or 'default'")->capture_default_str();

  ExtractArgs ext;
  auto* c_ext = app.add_subcommand("extract", "Annotate reports with concept vectors and assign splits");
  c_ext->add_option("--manifest", ext.manifest, "Input manifest (JSON Lines)")->required();
  c_ext->add_option("--lexicon", ext.lexicon, "Lexicon path or 'default'")->capture_default_str();
  c_ext->add_option("--negation", ext.negation, "Negation trigger table (JSON)");
  c_ext->add_option("--out", ext.out, "Annotated manifest path (default: annotated.jsonl beside input)");
  c_ext->add_option("--truth", ext.truth, "Ground truth to score against (default: truth.jsonl if present)");
  c_ext->add_option("--split", ext.split, "train,val,test percentages")->capture_default_str();
  c_ext->add_option("--seed", ext.seed, "Split seed")->capture_default_str();

  TrainConceptArgs tc;
  auto* c_tc = app.add_subcommand("train-concepts", "Train the image-to-concept predictor");
  c_tc->add_option("--manifest", tc.manifest, "Annotated manifest")->required();
  c_tc->add_option("--out", tc.out, "Model artifact path (default: concept_model.cbxm beside manifest)");
  c_tc->add_option("--lexicon", tc.lexicon, "Lexicon path or 'default'")->capture_default_str();
  c_tc->add_option("--backbone", tc.backbone, "small | inception")->capture_default_str();
  c_tc->add_option("--epochs", tc.epochs, "Maximum epochs")->capture_default_str();
  c_tc->add_option("--batch-size", tc.batch_size, "Batch size")->capture_default_str();
  c_tc->add_option("--lr", tc.lr, "Adam learning rate")->capture_default_str();
  c_tc->add_option("--width", tc.width, "Channels in the first conv layer")->capture_default_str();
  c_tc->add_option("--patience", tc.patience, "Early-stopping patience (0 disables)")->capture_default_str();
  c_tc->add_option("--image-size", tc.image_size, "Preprocessed image side length")->capture_default_str();
  c_tc->add_option("--seed", tc.seed, "Seed")->capture_default_str();
  c_tc->add_flag("--oss", tc.oss, "Apply One-Sided Selection to the training split");

  TrainLabelArgs tl;
  auto* c_tl = app.add_subcommand("train-labels", "Train concept-to-label heads and compare them");
  c_tl->add_option("--manifest", tl.manifest, "Annotated manifest")->required();
  c_tl->add_option("--head", tl.head, "dt | svm | mlp | all")->capture_default_str();
  c_tl->add_option("--out-dir", tl.out_dir, "Output directory (default: heads/ beside manifest)");
  c_tl->add_option("--lexicon", tl.lexicon, "Lexicon path or 'default'")->capture_default_str();
  c_tl->add_option("--concept-model", tl.concept_model, "Evaluate on predicted concept scores from this model");
  c_tl->add_option("--eval-split", tl.eval_split, "Split used for the comparison report")->capture_default_str();
  c_tl->add_option("--max-depth", tl.max_depth, "Decision tree depth cap")->capture_default_str();
  c_tl->add_option("--seed", tl.seed, "Seed")->capture_default_str();
  c_tl->add_flag("--oss", tl.oss, "Apply One-Sided Selection to the training split");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "Compute metrics");
  c_eval->require_subcommand(1);
  auto add_common = [&](CLI::App* c, bool needs_model) {
    c->add_option("--manifest", ev.manifest, "Annotated manifest");
    if (needs_model) c->add_option("--concept-model", ev.concept_model, "Concept model (default: concept_model.cbxm beside the manifest)");
    c->add_option("--lexicon", ev.lexicon, "Lexicon path or 'default'")->capture_default_str();
    c->add_option("--split", ev.split, "train | val | test | all")->capture_default_str();
    c->add_option("--out", ev.out, "Output directory (default: metrics/ beside manifest)");
    c->add_option("--seed", ev.seed, "Seed recorded in provenance")->capture_default_str();
  };
  auto* e_con = c_eval->add_subcommand("concepts", "Top-k concept capture against report concepts");
  add_common(e_con, true);
  e_con->add_option("--k", ev.k, "Explanation size")->capture_default_str();
  auto* e_lab = c_eval->add_subcommand("labels", "Label classification of the full pipeline");
  add_common(e_lab, true);
  e_lab->add_option("--head", ev.head, "dt | svm | mlp or an artifact path")->capture_default_str();
  e_lab->add_option("--heads-dir", ev.heads_dir, "Directory holding label heads");
  auto* e_sal = c_eval->add_subcommand("saliency", "Saliency agreement and bounding-box capture");
  add_common(e_sal, true);
  e_sal->add_option("--techniques", ev.techniques, "Built-in techniques")->capture_default_str();
  e_sal->add_option("--import", ev.imports, "name=directory of <case_id>.csv maps (repeatable)");
  e_sal->add_option("--grid", ev.grid, "Comma-separated top-n% grid");
  e_sal->add_option("--max-cases", ev.max_cases, "Cases evaluated")->capture_default_str();
  e_sal->add_option("--concept", ev.target_concept, "Only cases with a box for this concept id");
  e_sal->add_option("--patch", ev.patch, "Occlusion patch size")->capture_default_str();
  e_sal->add_option("--stride", ev.stride, "Occlusion stride")->capture_default_str();
  auto* e_exp = c_eval->add_subcommand("expert", "Aggregate expert scores per technique and cohort");
  e_exp->add_option("--score-log", ev.score_log, "Score log (JSON Lines)")->required();
  e_exp->add_option("--manifest", ev.manifest, "Manifest providing cohorts");
  e_exp->add_option("--out", ev.out, "Output directory");

  ExplainArgs ex;
  auto* c_explain = app.add_subcommand("explain", "Print the two highest-scoring concepts for a case");
  c_explain->add_option("--case", ex.case_id, "Case id")->required();
  c_explain->add_option("--manifest", ex.manifest, "Manifest")->required();
  c_explain->add_option("--concept-model", ex.concept_model, "Concept model (default: concept_model.cbxm beside the manifest)");
  c_explain->add_option("--head", ex.head, "dt | svm | mlp or an artifact path")->capture_default_str();
  c_explain->add_option("--heads-dir", ex.heads_dir, "Directory holding label heads");
  c_explain->add_option("--lexicon", ex.lexicon, "Lexicon path or 'default'")->capture_default_str();
  c_explain->add_flag("--json", ex.as_json, "Emit JSON");

  ServiceConfig sc;
  std::string sc_manifest, sc_model, sc_head, sc_log = sc.score_log.string();
  auto* c_serve = app.add_subcommand("serve", "Run the review HTTP service");
  c_serve->add_option("--host", sc.host, "Bind address (env CBX_HOST)")->capture_default_str();
  c_serve->add_option("--port", sc.port, "Port (env CBX_PORT)")->capture_default_str();
  c_serve->add_option("--manifest", sc_manifest, "Manifest (env CBX_MANIFEST)");
  c_serve->add_option("--concept-model", sc_model, "Concept model, default beside the manifest (env CBX_CONCEPT_MODEL)");
  c_serve->add_option("--head", sc_head, "Label head kind or path, default dt (env CBX_LABEL_HEAD)");
  c_serve->add_option("--score-log", sc_log, "Score log path (env CBX_SCORE_LOG)")->capture_default_str();
  c_serve->add_option("--lexicon", sc.lexicon, "Lexicon (env CBX_LEXICON)")->capture_default_str();
  c_serve->add_flag("--unblind", sc.unblind, "Expose ground-truth labels (env CBX_UNBLIND)");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = merge_config(std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (c_synth->parsed()) return run_synth(synth);
    if (c_ext->parsed()) return run_extract(ext);
    if (c_tc->parsed()) return run_train_concepts(tc);
    if (c_tl->parsed()) return run_train_labels(tl);
    if (e_con->parsed()) return run_eval_concepts(ev);
    if (e_lab->parsed()) return run_eval_labels(ev);
    if (e_sal->parsed()) return run_eval_saliency(ev);
    if (e_exp->parsed()) return run_eval_expert(ev);
    if (c_explain->parsed()) return run_explain(ex);
    if (c_serve->parsed()) {
      sc.manifest = sc_manifest;
      sc.concept_model = sc_model;
      sc.label_head = sc_head;
      sc.score_log = sc_log;
      std::set<std::string> given;
      for (const char* name : {"host", "port", "manifest", "concept-model", "head", "score-log", "lexicon", "unblind"}) {
        if (c_serve->count(std::string("--") + name) > 0) given.insert(name);
      }
      return run_serve(sc, given);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

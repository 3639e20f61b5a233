#include "cbx/synthgen.hpp"

#include "cbx/error.hpp"
#include "cbx/parallel.hpp"
#include "cbx/rng.hpp"
#include "cbx/util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>

namespace cbx {

namespace {

// All geometry is in unit coordinates (x right, y down, both in [0, 1]).
struct Lung {
  double cx, cy, rx, ry;
  bool inside(double x, double y) const {
    const double dx = (x - cx) / rx, dy = (y - cy) / ry;
    return dx * dx + dy * dy <= 1.0;
  }
  // Lower boundary of the ellipse at column x (or cy when outside).
  double bottom(double x) const {
    const double dx = (x - cx) / rx;
    if (std::abs(dx) >= 1.0) return cy;
    return cy + ry * std::sqrt(1.0 - dx * dx);
  }
  // +1 towards the outer chest wall.
  double lateral_sign() const { return cx < 0.5 ? -1.0 : 1.0; }
};

struct Canvas {
  std::size_t n;
  std::vector<double> px;
  explicit Canvas(std::size_t size) : n(size), px(size * size, 0.0) {}
  double ux(std::size_t x) const { return (static_cast<double>(x) + 0.5) / static_cast<double>(n); }
};

// Accumulates one finding as a per-pixel delta; the bbox is the tight box
// around every pixel the finding touches.
struct Finding {
  std::string concept_id;
  std::vector<double> delta;
  explicit Finding(std::string id, std::size_t n) : concept_id(std::move(id)), delta(n * n, 0.0) {}
};

using Shape = std::function<double(double x, double y)>;  // returns delta at a point

void paint(Finding& f, std::size_t n, const Shape& shape) {
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double ux = (static_cast<double>(x) + 0.5) / static_cast<double>(n);
      const double uy = (static_cast<double>(y) + 0.5) / static_cast<double>(n);
      const double d = shape(ux, uy);
      if (d != 0.0) f.delta[y * n + x] += d;
    }
  }
}

double disc(double x, double y, double cx, double cy, double r) {
  const double d = std::hypot(x - cx, y - cy);
  return d <= r ? 1.0 : 0.0;
}

struct Scene {
  Lung right;  // patient right = image left
  Lung left;
  double heart_cx, heart_cy, heart_rx, heart_ry;
  const Lung& lung(int side) const { return side == 0 ? right : left; }
};

Finding render_finding(const std::string& id, const Scene& sc, int side, std::size_t n, Rng& rng) {
  Finding f(id, n);
  const Lung& L = sc.lung(side);
  const double lat = L.lateral_sign();
  if (id == "mass") {
    const double cx = L.cx + rng.uniform(-0.04, 0.04), cy = rng.uniform(0.38, 0.52);
    const double r = rng.uniform(0.08, 0.095);
    paint(f, n, [&](double x, double y) { return 0.42 * disc(x, y, cx, cy, r); });
  } else if (id == "nodule") {
    const double cx = L.cx + rng.uniform(-0.05, 0.05), cy = rng.uniform(0.26, 0.58);
    paint(f, n, [&](double x, double y) { return 0.45 * disc(x, y, cx, cy, 0.035); });
  } else if (id == "irregular_hilum") {
    const double hx = L.cx - lat * 0.09, hy = 0.46 + rng.uniform(-0.02, 0.02);
    paint(f, n, [&](double x, double y) {
      const double v = std::max({disc(x, y, hx, hy, 0.04), disc(x, y, hx - lat * 0.03, hy - 0.035, 0.03),
                                 disc(x, y, hx - lat * 0.025, hy + 0.04, 0.03)});
      return 0.38 * v;
    });
  } else if (id == "adenopathy") {
    const double ax = side == 0 ? 0.425 : 0.575;
    const double y0 = rng.uniform(0.18, 0.22);
    paint(f, n, [&](double x, double y) {
      double v = 0.0;
      for (int k = 0; k < 3; ++k) v = std::max(v, disc(x, y, ax, y0 + 0.06 * k, 0.024));
      return 0.4 * v;
    });
  } else if (id == "irregular_parenchyma") {
    const double cx = L.cx + rng.uniform(-0.03, 0.03), cy = rng.uniform(0.5, 0.58), half = 0.09;
    paint(f, n, [&](double x, double y) {
      if (std::abs(x - cx) > half || std::abs(y - cy) > half) return 0.0;
      const double gx = std::fmod(x - cx + half, 0.05), gy = std::fmod(y - cy + half, 0.05);
      return (gx < 0.018 || gy < 0.018) ? 0.36 : 0.0;
    });
  } else if (id == "pneumonitis") {
    const double cx = L.cx + rng.uniform(-0.03, 0.03), cy = rng.uniform(0.36, 0.5);
    paint(f, n, [&](double x, double y) {
      const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      const double v = 0.34 * std::exp(-d2 / (2 * 0.055 * 0.055));
      return v > 0.05 && L.inside(x, y) ? v : 0.0;
    });
  } else if (id == "consolidation") {
    const double cx = L.cx + rng.uniform(-0.03, 0.03), cy = rng.uniform(0.56, 0.62);
    paint(f, n, [&](double x, double y) {
      return (std::abs(x - cx) <= 0.09 && std::abs(y - cy) <= 0.065) ? 0.42 : 0.0;
    });
  } else if (id == "infection") {
    const double cx = L.cx + rng.uniform(-0.03, 0.03), cy = rng.uniform(0.34, 0.5);
    const std::uint64_t salt = rng.next();
    paint(f, n, [&, salt](double x, double y) {
      if (std::abs(x - cx) > 0.08 || std::abs(y - cy) > 0.08) return 0.0;
      // Deterministic speckle keyed by the pixel cell.
      const auto cell = static_cast<std::uint64_t>(std::floor(x * 200) * 1000 + std::floor(y * 200));
      std::uint64_t h = (cell + salt) * 0x9e3779b97f4a7c15ULL;
      h ^= h >> 29;
      return (h & 1) ? 0.45 : 0.0;
    });
  } else if (id == "opacities") {
    const double cx = L.cx + rng.uniform(-0.02, 0.02), cy = rng.uniform(0.26, 0.32);
    paint(f, n, [&](double x, double y) {
      const double dx = (x - cx) / 0.12, dy = (y - cy) / 0.035;
      return dx * dx + dy * dy <= 1.0 ? 0.36 : 0.0;
    });
  } else if (id == "effusion") {
    // Basal wedge rising towards the chest wall.
    const double base = rng.uniform(0.68, 0.71);
    paint(f, n, [&](double x, double y) {
      if (!L.inside(x, y)) return 0.0;
      const double t = std::clamp(0.5 + lat * (x - L.cx) / (2 * L.rx), 0.0, 1.0);
      return y > base - 0.14 * t ? 0.42 : 0.0;
    });
  } else if (id == "fluid") {
    // Flat air-fluid level: dark air band over a bright fluid layer.
    const double level = rng.uniform(0.66, 0.7);
    paint(f, n, [&](double x, double y) {
      if (!L.inside(x, y)) return 0.0;
      if (y >= level) return 0.42;
      if (y >= level - 0.04) return -0.12;
      return 0.0;
    });
  } else if (id == "costophrenic_angle") {
    const double corner_x = L.cx + lat * L.rx * 0.72;
    const double corner_y = L.bottom(corner_x);
    paint(f, n, [&](double x, double y) {
      const double dx = lat * (x - corner_x), dy = corner_y - y;
      return (dx > -0.09 && dy > -0.02 && dy < 0.11 && dx + 0.09 > dy) ? 0.45 : 0.0;
    });
  } else if (id == "meniscus_sign") {
    const double cx = L.cx + rng.uniform(-0.02, 0.02);
    paint(f, n, [&](double x, double y) {
      if (!L.inside(x, y)) return 0.0;
      const bool in_a = disc(x, y, cx, 0.86, 0.22) > 0, in_b = disc(x, y, cx, 0.93, 0.22) > 0;
      return (in_a && !in_b) ? 0.42 : 0.0;
    });
  } else if (id == "enlarged_heart") {
    // Widened silhouette; the delta covers the enlarged ellipse.
    paint(f, n, [&](double x, double y) {
      const double dx = (x - sc.heart_cx) / 0.22, dy = (y - sc.heart_cy) / 0.145;
      return dx * dx + dy * dy <= 1.0 ? 1.0 : 0.0;
    });
  } else if (id == "absent_lung_markings") {
    const double cut = rng.uniform(0.3, 0.34);
    paint(f, n, [&](double x, double y) {
      return (L.inside(x, y) && y < cut && lat * (x - L.cx) > -0.06) ? 1.0 : 0.0;
    });
  } else if (id == "irregular_diaphragm") {
    const double phase = rng.uniform(0.0, 2 * M_PI);
    paint(f, n, [&](double x, double y) {
      if (std::abs(x - L.cx) > L.rx * 0.9) return 0.0;
      const double wave = L.bottom(x) - 0.035 + 0.025 * std::sin(2 * M_PI * x / 0.07 + phase);
      return std::abs(y - wave) < 0.02 ? 0.45 : 0.0;
    });
  } else {
    throw SchemaError("synthgen has no renderer for concept '" + id + "'");
  }
  return f;
}

// Background anatomy with normal lung markings.
Canvas render_anatomy(const Scene& sc, std::size_t n, double brightness) {
  Canvas cv(n);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double ux = cv.ux(x), uy = cv.ux(y);
      double v = 0.42 + 0.06 * uy;
      for (int side = 0; side < 2; ++side) {
        const Lung& L = sc.lung(side);
        if (L.inside(ux, uy)) {
          const double marks = std::sin(2 * M_PI * (7 * ux + 11 * uy)) > 0.55 ? 0.06 : 0.0;
          v = 0.17 + marks;
        }
      }
      if (std::abs(ux - 0.5) < 0.055 && uy < 0.62) v = 0.6;  // mediastinum
      const double hx = (ux - sc.heart_cx) / sc.heart_rx, hy = (uy - sc.heart_cy) / sc.heart_ry;
      if (hx * hx + hy * hy <= 1.0) v = 0.66;
      cv.px[y * n + x] = v * brightness;
    }
  }
  return cv;
}

std::vector<std::size_t> pick_concepts(const std::string& label, const ConceptLexicon& lex,
                                       const SynthSpec& spec, Rng& rng) {
  const auto group = lex.concepts_in_group(label);
  if (group.empty()) throw SchemaError("label '" + label + "' has no concepts");
  if (group.size() <= 2) return group;
  if (auto mass = lex.index_of("mass");
      mass && lex.concept_at(*mass).label_group == label && rng.bernoulli(spec.solitary_mass_rate)) {
    return {*mass};
  }
  std::vector<std::size_t> pool = group;
  rng.shuffle(pool);
  std::vector<std::size_t> chosen(pool.begin(), pool.begin() + 2);
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

const std::string& pick(const std::vector<std::string>& v, Rng& rng) { return v[rng.below(v.size())]; }

std::string positive_sentence(const ConceptDef& c, const std::string& side_word, Rng& rng) {
  const std::string& p = pick(c.phrases, rng);
  if (c.label_group == "Healthy") {
    static const std::vector<std::string> forms = {"{P}.", "The study is {p}.", "Overall {p}."};
    std::string t = pick(forms, rng);
    auto pos = t.find("{P}");
    if (pos != std::string::npos) return t.replace(pos, 3, capitalize(p));
    pos = t.find("{p}");
    return t.replace(pos, 3, p);
  }
  static const std::vector<std::string> forms = {
      "There is {p} in the {s} lung.", "{P} is seen on the {s}.", "Findings are consistent with {p}.",
      "Possible {p}.", "Cannot exclude {p}.", "Interval development of {s} {p}.", "{P} is noted.",
      "{S} {p} is present."};
  std::string t = pick(forms, rng);
  auto sub = [&](const std::string& key, const std::string& val) {
    const auto pos = t.find(key);
    if (pos != std::string::npos) t.replace(pos, key.size(), val);
  };
  sub("{P}", capitalize(p));
  sub("{p}", p);
  sub("{S}", capitalize(side_word));
  sub("{s}", side_word);
  return t;
}

std::string negated_sentence(const std::vector<const ConceptDef*>& decoys, Rng& rng) {
  static const std::vector<std::string> single = {"No {p}.", "There is no {p}.", "No evidence of {p}.",
                                                  "Without {p}.", "Negative for {p}.", "No signs of {p}.",
                                                  "Resolved {p}."};
  if (decoys.size() >= 2) {
    return "No " + pick(decoys[0]->phrases, rng) + " or " + pick(decoys[1]->phrases, rng) + ".";
  }
  std::string t = pick(single, rng);
  const auto pos = t.find("{p}");
  return t.replace(pos, 3, pick(decoys[0]->phrases, rng));
}

const std::vector<std::string>& fillers() {
  static const std::vector<std::string> f = {"The osseous structures are intact.", "The trachea is midline.",
                                             "Mediastinal contours are stable.", "Soft tissues are within expected limits.",
                                             "Lines and tubes are absent."};
  return f;
}

}  // namespace

SynthCase generate_case(const SynthSpec& spec, std::size_t index, const ConceptLexicon& lex) {
  if (spec.label_mix.size() != lex.labels().size()) {
    throw SchemaError("label_mix has " + std::to_string(spec.label_mix.size()) + " entries; lexicon has " +
                      std::to_string(lex.labels().size()) + " labels");
  }
  Rng rng(derive_seed(spec.seed, "synth-case:" + std::to_string(index)));
  SynthCase sc;
  char id[32];
  std::snprintf(id, sizeof id, "case_%05zu", index);
  sc.case_id = id;
  sc.label = lex.labels()[rng.categorical(spec.label_mix)];

  const auto chosen = pick_concepts(sc.label, lex, spec, rng);
  sc.concepts.lexicon_id = lex.id();
  sc.concepts.values.assign(lex.size(), 0);
  for (auto c : chosen) sc.concepts.values[c] = 1;

  Scene scene;
  const double jx = rng.uniform(-0.015, 0.015), jy = rng.uniform(-0.015, 0.015);
  scene.right = {0.30 + jx, 0.47 + jy, 0.16, 0.31};
  scene.left = {0.70 + jx, 0.47 + jy, 0.16, 0.31};
  scene.heart_cx = 0.53 + jx;
  scene.heart_cy = 0.66 + jy;
  scene.heart_rx = 0.13;
  scene.heart_ry = 0.11;

  const std::size_t n = spec.image_size;
  Canvas cv = render_anatomy(scene, n, rng.uniform(0.95, 1.05));
  const Canvas anatomy = cv;

  // Two lateral findings go to opposite lungs so they do not overlap.
  int next_side = static_cast<int>(rng.below(2));
  std::vector<std::string> side_words;
  for (auto c : chosen) {
    const std::string& cid = lex.concept_at(c).id;
    if (cid == "unremarkable") continue;
    const int side = next_side;
    next_side = 1 - next_side;
    side_words.push_back(side == 0 ? "right" : "left");
    Finding f = render_finding(cid, scene, side, n, rng);
    BBoxAnnotation box{sc.label, cid, static_cast<int>(n), static_cast<int>(n), -1, -1};
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        const double d = f.delta[y * n + x];
        if (d == 0.0) continue;
        double& v = cv.px[y * n + x];
        if (cid == "enlarged_heart") {
          v = std::max(v, 0.66);
        } else if (cid == "absent_lung_markings") {
          v = 0.03;
        } else {
          v += d;
        }
        box.x0 = std::min(box.x0, static_cast<int>(x));
        box.y0 = std::min(box.y0, static_cast<int>(y));
        box.x1 = std::max(box.x1, static_cast<int>(x) + 1);
        box.y1 = std::max(box.y1, static_cast<int>(y) + 1);
      }
    }
    if (box.x1 > box.x0) sc.bboxes.push_back(box);
  }

  sc.image = ImageTensor(n, n);
  sc.background = ImageTensor(n, n);
  for (std::size_t i = 0; i < n * n; ++i) {
    const double noise = rng.normal(0.0, 0.02);
    sc.image.pixels[i] = static_cast<float>(std::clamp(cv.px[i] + noise, 0.0, 1.0));
    sc.background.pixels[i] = static_cast<float>(std::clamp(anatomy.px[i] + noise, 0.0, 1.0));
  }

  // Report: optional indication, FINDINGS with positives and fillers,
  // IMPRESSION restating one finding, optional negated final paragraph.
  std::string findings;
  auto append = [](std::string& dst, const std::string& s) {
    if (!dst.empty()) dst += ' ';
    dst += s;
  };
  std::vector<std::string> positives;
  for (std::size_t k = 0; k < chosen.size(); ++k) {
    const std::string side = k < side_words.size() ? side_words[k] : "right";
    positives.push_back(positive_sentence(lex.concept_at(chosen[k]), side, rng));
  }
  append(findings, pick(fillers(), rng));
  for (const auto& s : positives) append(findings, s);
  if (rng.bernoulli(0.5)) append(findings, pick(fillers(), rng));

  std::string decoy_paragraph;
  if (rng.bernoulli(spec.negation_rate)) {
    std::vector<const ConceptDef*> pool;
    for (std::size_t c = 0; c < lex.size(); ++c) {
      if (!sc.concepts.values[c] && lex.concept_at(c).label_group != "Healthy") pool.push_back(&lex.concept_at(c));
    }
    rng.shuffle(pool);
    const std::size_t k = std::min<std::size_t>(pool.size(), 1 + rng.below(2));
    pool.resize(k);
    if (!pool.empty()) decoy_paragraph = negated_sentence(pool, rng);
  }

  std::string report = "FINAL REPORT\n";
  if (rng.bernoulli(0.3)) {
    static const std::vector<std::string> indications = {"Cough.", "Shortness of breath.", "Evaluate for pneumonia.",
                                                         "Chest pain.", "Smoker, evaluate for mass."};
    report += "INDICATION: " + pick(indications, rng) + "\n\n";
  }
  report += "FINDINGS:\n" + findings + "\n";
  if (!decoy_paragraph.empty()) report += "\n" + decoy_paragraph + "\n";
  report += "\nIMPRESSION:\n" + positives[rng.below(positives.size())] + "\n";
  sc.report = std::move(report);
  return sc;
}

std::filesystem::path generate_corpus(const SynthSpec& spec, const std::filesystem::path& out_dir,
                                      const ConceptLexicon& lex) {
  double total = 0.0;
  for (double p : spec.label_mix) {
    if (p < 0.0) throw SchemaError("label_mix entries must be non-negative");
    total += p;
  }
  if (total <= 0.0) throw SchemaError("label_mix assigns zero probability to every label");
  if (std::abs(total - 1.0) > 1e-6) throw SchemaError("label_mix must sum to 1");
  if (spec.negation_rate < 0.0 || spec.negation_rate > 1.0) throw SchemaError("negation_rate must be in [0,1]");
  if (spec.image_size < 32) throw SchemaError("image_size must be at least 32");

  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  std::filesystem::create_directories(out_dir / "reports", ec);
  if (ec || !std::filesystem::is_directory(out_dir)) throw IoError("cannot create " + out_dir.string());

  std::vector<CaseRecord> records(spec.n_cases);
  std::vector<std::string> truth_lines(spec.n_cases);
  parallel_for(spec.n_cases, [&](std::size_t i) {
    SynthCase sc = generate_case(spec, i, lex);
    const std::string image_rel = "images/" + sc.case_id + ".png";
    const std::string report_rel = "reports/" + sc.case_id + ".txt";
    write_png(out_dir / image_rel, sc.image);
    write_text_file(out_dir / report_rel, sc.report);
    CaseRecord rec;
    rec.case_id = sc.case_id;
    rec.image_path = image_rel;
    rec.report_path = report_rel;
    rec.label = sc.label;
    rec.bboxes = sc.bboxes;
    records[i] = rec;

    nlohmann::ordered_json t;
    t["case_id"] = sc.case_id;
    t["label"] = sc.label;
    t["concepts"] = sc.concepts.values;
    t["lexicon_id"] = sc.concepts.lexicon_id;
    t["bboxes"] = record_to_json(rec)["bboxes"];
    truth_lines[i] = t.dump();
  });

  const auto manifest = out_dir / "manifest.jsonl";
  save_manifest(records, manifest);
  std::string truth;
  for (const auto& l : truth_lines) truth += l + "\n";
  write_text_file(out_dir / "truth.jsonl", truth);
  return manifest;
}

std::vector<TruthRecord> load_truth(const std::filesystem::path& path) {
  std::vector<TruthRecord> out;
  const std::string text = read_text_file(path);
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    const std::string line = trim(std::string_view(text).substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      TruthRecord t;
      t.case_id = j.at("case_id").get<std::string>();
      t.label = j.at("label").get<std::string>();
      t.concepts.values = j.at("concepts").get<std::vector<std::uint8_t>>();
      t.concepts.lexicon_id = j.value("lexicon_id", std::string{});
      nlohmann::json rec = {{"case_id", t.case_id}, {"image_path", ""}, {"report_path", ""},
                            {"label", t.label},     {"bboxes", j.value("bboxes", nlohmann::json::array())}};
      t.bboxes = *record_from_json(rec, line_no).bboxes;
      out.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("truth line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace cbx

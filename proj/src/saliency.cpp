#include "cbx/saliency.hpp"

#include "cbx/error.hpp"
#include "cbx/parallel.hpp"
#include "cbx/util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <sstream>

namespace cbx {

void max_normalize(SaliencyMap& map) {
  double mx = 0.0;
  for (double v : map.values) mx = std::max(mx, v);
  if (!(mx > 0.0)) {
    std::fill(map.values.begin(), map.values.end(), 0.0);
    return;
  }
  for (double& v : map.values) v = std::max(0.0, v / mx);
}

namespace {

SaliencyMap cam_from_input(const nn::Network& net, std::span<const float> params, const nn::Tensor& input,
                           std::size_t target) {
  if (!net.has_conv_features()) throw SchemaError("gradient_cam needs a model with convolutional features");
  if (target >= net.output_size()) {
    throw DimensionError("target index " + std::to_string(target) + " outside " + std::to_string(net.output_size()) +
                         " outputs");
  }
  const ImageTensor image(input.shape.h, input.shape.w);
  nn::Network::Pass pass;
  net.forward(params, input, pass);
  nn::Tensor onehot(pass.logits.shape);
  onehot.data[target] = 1.0f;
  const nn::Tensor grad = net.feature_gradient(params, pass, onehot);

  const nn::Shape fs = pass.features.shape;
  const std::size_t hw = fs.h * fs.w;
  ImageTensor cam(fs.h, fs.w, 0.0f);
  std::vector<double> acc(hw, 0.0);
  for (std::size_t c = 0; c < fs.c; ++c) {
    const float* g = grad.channel(c);
    double alpha = 0.0;
    for (std::size_t i = 0; i < hw; ++i) alpha += g[i];
    alpha /= static_cast<double>(hw);
    if (alpha == 0.0) continue;
    const float* a = pass.features.channel(c);
    for (std::size_t i = 0; i < hw; ++i) acc[i] += alpha * a[i];
  }
  for (std::size_t i = 0; i < hw; ++i) cam.pixels[i] = static_cast<float>(std::max(0.0, acc[i]));
  const ImageTensor up = resize_bilinear(cam, image.height, image.width);
  SaliencyMap map(image.height, image.width);
  for (std::size_t i = 0; i < up.pixels.size(); ++i) map.values[i] = std::max(0.0f, up.pixels[i]);
  max_normalize(map);
  map.technique = "gradcam";
  return map;
}

}  // namespace

SaliencyMap gradient_cam(const nn::Network& net, std::span<const float> params, const ImageTensor& image,
                         std::size_t target) {
  const nn::Shape in = net.input_shape();
  if (image.height != in.h || image.width != in.w) throw DimensionError("image size does not match the model input");
  nn::Tensor input(in);
  std::copy(image.pixels.begin(), image.pixels.end(), input.data.begin());
  return cam_from_input(net, params, input, target);
}

SaliencyMap gradient_cam(const ConceptModel& model, const ImageTensor& image, std::size_t target) {
  SaliencyMap m = cam_from_input(model.network(), model.params(), model.to_input(image), target);
  if (target < model.concept_ids().size()) m.target = model.concept_ids()[target];
  return m;
}

namespace {

std::vector<std::size_t> window_starts(std::size_t extent, std::size_t patch, std::size_t stride) {
  std::vector<std::size_t> out;
  for (std::size_t p = 0; p + patch <= extent; p += stride) out.push_back(p);
  if (out.empty() || out.back() + patch < extent) out.push_back(extent - patch);
  return out;
}

}  // namespace

SaliencyMap occlusion_saliency(const Scorer& score, const ImageTensor& image, std::size_t patch_size,
                               std::size_t stride, double fill) {
  if (patch_size == 0 || patch_size > image.height || patch_size > image.width) {
    throw DimensionError("occlusion patch size must be in [1, image size]");
  }
  if (stride == 0) throw DimensionError("occlusion stride must be at least 1");
  const double base = score(image);
  const auto ys = window_starts(image.height, patch_size, stride);
  const auto xs = window_starts(image.width, patch_size, stride);
  std::vector<double> drops(ys.size() * xs.size());
  parallel_for(drops.size(), [&](std::size_t k) {
    ImageTensor occluded = image;
    const std::size_t y0 = ys[k / xs.size()], x0 = xs[k % xs.size()];
    for (std::size_t y = y0; y < y0 + patch_size; ++y) {
      for (std::size_t x = x0; x < x0 + patch_size; ++x) occluded.at(y, x) = static_cast<float>(fill);
    }
    drops[k] = std::max(0.0, base - score(occluded));
  });
  std::vector<double> sum(image.size(), 0.0);
  std::vector<std::size_t> cover(image.size(), 0);
  for (std::size_t k = 0; k < drops.size(); ++k) {
    const std::size_t y0 = ys[k / xs.size()], x0 = xs[k % xs.size()];
    for (std::size_t y = y0; y < y0 + patch_size; ++y) {
      for (std::size_t x = x0; x < x0 + patch_size; ++x) {
        sum[y * image.width + x] += drops[k];
        ++cover[y * image.width + x];
      }
    }
  }
  SaliencyMap map(image.height, image.width);
  for (std::size_t i = 0; i < sum.size(); ++i) map.values[i] = cover[i] ? sum[i] / static_cast<double>(cover[i]) : 0.0;
  max_normalize(map);
  map.technique = "occlusion";
  return map;
}

SaliencyMap occlusion_saliency(const ConceptModel& model, const ImageTensor& image, std::size_t target,
                               std::size_t patch_size, std::size_t stride) {
  if (target >= model.concept_ids().size()) throw DimensionError("target index outside the concept list");
  const Scorer scorer = [&](const ImageTensor& img) { return predict_concepts(model, img).values[target]; };
  SaliencyMap m = occlusion_saliency(scorer, image, patch_size, stride, model.mean_intensity());
  m.target = model.concept_ids()[target];
  return m;
}

std::size_t mask_size(std::size_t pixels, double n_percent) {
  if (!(n_percent > 0.0) || n_percent > 100.0) {
    throw DimensionError("mask fraction must be in (0, 100], got " + std::to_string(n_percent));
  }
  const double k = std::round(n_percent * static_cast<double>(pixels) / 100.0);
  return std::clamp<std::size_t>(static_cast<std::size_t>(k), 1, pixels);
}

std::vector<std::size_t> saliency_rank(const SaliencyMap& map) {
  std::vector<std::size_t> idx(map.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return map.values[a] > map.values[b]; });
  return idx;
}

std::vector<std::uint8_t> top_fraction_mask(const SaliencyMap& map, double n_percent) {
  const std::size_t k = mask_size(map.size(), n_percent);
  const auto rank = saliency_rank(map);
  std::vector<std::uint8_t> mask(map.size(), 0);
  for (std::size_t i = 0; i < k; ++i) mask[rank[i]] = 1;
  return mask;
}

SaliencyMap parse_saliency_csv(std::string_view text, std::size_t expected_h, std::size_t expected_w) {
  std::vector<std::vector<double>> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    if (rows.size() == expected_h) {
      throw DimensionError("saliency grid has more than the expected " + std::to_string(expected_h) + " rows");
    }
    std::vector<double> vals;
    std::size_t col = 0, start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      const std::string cell = trim(std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos
                                                                                                    : comma - start));
      ++col;
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size() || !std::isfinite(v)) {
        throw ParseError("saliency grid: non-numeric cell at row " + std::to_string(row) + ", column " +
                         std::to_string(col) + ": '" + cell + "'");
      }
      vals.push_back(v);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (vals.size() != expected_w) {
      throw DimensionError("saliency grid row " + std::to_string(row) + " has " + std::to_string(vals.size()) +
                           " columns, expected " + std::to_string(expected_w));
    }
    rows.push_back(std::move(vals));
  }
  if (rows.size() != expected_h) {
    throw DimensionError("saliency grid has " + std::to_string(rows.size()) + " rows, expected " +
                         std::to_string(expected_h));
  }
  SaliencyMap map(expected_h, expected_w);
  double lo = rows[0][0], hi = rows[0][0];
  for (const auto& r : rows) {
    for (double v : r) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  for (std::size_t y = 0; y < expected_h; ++y) {
    for (std::size_t x = 0; x < expected_w; ++x) {
      map.values[y * expected_w + x] = hi > lo ? (rows[y][x] - lo) / (hi - lo) : 0.0;
    }
  }
  map.technique = "imported";
  return map;
}

SaliencyMap import_saliency(const std::filesystem::path& path, std::size_t expected_h, std::size_t expected_w) {
  return parse_saliency_csv(read_text_file(path), expected_h, expected_w);
}

std::string saliency_csv(const SaliencyMap& map) {
  std::string out;
  char buf[32];
  for (std::size_t y = 0; y < map.height; ++y) {
    for (std::size_t x = 0; x < map.width; ++x) {
      std::snprintf(buf, sizeof buf, "%.9g", map.at(y, x));
      if (x) out += ',';
      out += buf;
    }
    out += '\n';
  }
  return out;
}

void export_saliency_csv(const SaliencyMap& map, const std::filesystem::path& path) {
  write_text_file(path, saliency_csv(map));
}

void export_mask_png(const std::vector<std::uint8_t>& mask, std::size_t h, std::size_t w,
                     const std::filesystem::path& path) {
  if (mask.size() != h * w) throw DimensionError("mask size does not match its dimensions");
  ImageTensor img(h, w);
  for (std::size_t i = 0; i < mask.size(); ++i) img.pixels[i] = mask[i] ? 1.0f : 0.0f;
  write_png(path, img);
}

}  // namespace cbx

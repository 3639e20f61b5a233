#pragma once

#include "cbx/concept_model.hpp"
#include "cbx/image.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace cbx {

struct SaliencyMap {
  std::size_t height = 0, width = 0;
  std::vector<double> values;  // row-major, in [0, 1]
  std::string technique;
  std::string case_id;
  std::string target;

  SaliencyMap() = default;
  SaliencyMap(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), values(h * w, fill) {}
  double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
  std::size_t size() const { return values.size(); }
};

// Divides by the maximum; all-zero (or non-positive) maps become zeros.
void max_normalize(SaliencyMap& map);

// Positive part of the gradient-weighted last conv feature map, bilinearly
// upsampled and max-normalized. Throws SchemaError when the network has no
// convolutional features.
SaliencyMap gradient_cam(const ConceptModel& model, const ImageTensor& image, std::size_t target);
SaliencyMap gradient_cam(const nn::Network& net, std::span<const float> params, const ImageTensor& image,
                         std::size_t target);

using Scorer = std::function<double(const ImageTensor&)>;

// Sliding-window occlusion with a constant fill value. Patch positions cover
// the image edge to edge (the last window is clamped to the border).
SaliencyMap occlusion_saliency(const Scorer& score, const ImageTensor& image, std::size_t patch_size,
                               std::size_t stride, double fill);
SaliencyMap occlusion_saliency(const ConceptModel& model, const ImageTensor& image, std::size_t target,
                               std::size_t patch_size, std::size_t stride);

// k = round(n/100 * H*W), half away from zero, at least 1.
std::size_t mask_size(std::size_t pixels, double n_percent);

// Exactly mask_size() highest pixels; ties by row-major index.
std::vector<std::uint8_t> top_fraction_mask(const SaliencyMap& map, double n_percent);

// Row-major order of pixels by descending value, ties by index.
std::vector<std::size_t> saliency_rank(const SaliencyMap& map);

// CSV float grid, min-max normalized. Throws DimensionError on a size
// mismatch and ParseError naming the row/column of a non-numeric cell.
SaliencyMap import_saliency(const std::filesystem::path& path, std::size_t expected_h, std::size_t expected_w);
SaliencyMap parse_saliency_csv(std::string_view text, std::size_t expected_h, std::size_t expected_w);
void export_saliency_csv(const SaliencyMap& map, const std::filesystem::path& path);
std::string saliency_csv(const SaliencyMap& map);

// Mask as 0/255 PNG.
void export_mask_png(const std::vector<std::uint8_t>& mask, std::size_t h, std::size_t w,
                     const std::filesystem::path& path);

}  // namespace cbx

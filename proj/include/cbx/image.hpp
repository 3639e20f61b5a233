#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cbx {

// Grayscale image, row-major, intensities nominally in [0, 1].
struct ImageTensor {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;
  std::string source;      // original path, if any
  std::string provenance;  // preprocessing parameters applied

  ImageTensor() = default;
  ImageTensor(std::size_t h, std::size_t w, float fill = 0.0f)
      : height(h), width(w), pixels(h * w, fill) {}

  float& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  float at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
  std::size_t size() const { return pixels.size(); }
};

// Decodes an 8/16-bit grayscale or colour PNG; colour is reduced by
// luminance (0.299 R + 0.587 G + 0.114 B). Throws IoError when undecodable.
ImageTensor read_png(const std::filesystem::path& path);
ImageTensor decode_png(const std::vector<std::uint8_t>& bytes);

// 8-bit grayscale PNG; values are clamped to [0, 1] and scaled to 0..255.
void write_png(const std::filesystem::path& path, const ImageTensor& img);
std::vector<std::uint8_t> encode_png(const ImageTensor& img);

struct CropBox {
  std::size_t top = 0, bottom = 0, left = 0, right = 0;  // half-open [top,bottom) x [left,right)
  bool operator==(const CropBox&) const = default;
};

// Trims rows, then columns, whose mean is below `threshold`, from the
// edges inward only. An all-dark image yields an empty box.
CropBox find_border_crop(const ImageTensor& img, double threshold);
ImageTensor crop(const ImageTensor& img, const CropBox& box);

// Bilinear resampling with pixel-centre alignment; same-size is identity.
ImageTensor resize_bilinear(const ImageTensor& img, std::size_t out_h, std::size_t out_w);

// Per-image min-max scaling to [0, 1]; constant images become all zeros.
void minmax_normalize(ImageTensor& img);

struct PreprocessOptions {
  std::size_t target_size = 64;
  double border_threshold = 0.02;
  std::size_t min_crop_size = 32;
};

ImageTensor preprocess_image(const ImageTensor& raw, const PreprocessOptions& opts = {});

// Area-average downsampling to size x size (OSS default featurizer).
std::vector<double> downsample_features(const ImageTensor& img, std::size_t size);

}  // namespace cbx

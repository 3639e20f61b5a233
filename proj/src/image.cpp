#include "cbx/image.hpp"

#include "cbx/error.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace cbx {

namespace {

ImageTensor from_rgb(const std::vector<png_byte>& buf, std::size_t h, std::size_t w) {
  ImageTensor img(h, w);
  for (std::size_t i = 0; i < h * w; ++i) {
    const double r = buf[3 * i], g = buf[3 * i + 1], b = buf[3 * i + 2];
    img.pixels[i] = static_cast<float>((0.299 * r + 0.587 * g + 0.114 * b) / 255.0);
  }
  return img;
}

struct PngImage {
  png_image image{};
  PngImage() {
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image); }
};

}  // namespace

ImageTensor read_png(const std::filesystem::path& path) {
  PngImage png;
  if (!png_image_begin_read_from_file(&png.image, path.c_str())) {
    throw IoError("cannot decode PNG " + path.string() + ": " + png.image.message);
  }
  png.image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(png.image));
  if (!png_image_finish_read(&png.image, nullptr, buf.data(), 0, nullptr)) {
    throw IoError("cannot decode PNG " + path.string() + ": " + png.image.message);
  }
  auto img = from_rgb(buf, png.image.height, png.image.width);
  img.source = path.string();
  return img;
}

ImageTensor decode_png(const std::vector<std::uint8_t>& bytes) {
  PngImage png;
  if (!png_image_begin_read_from_memory(&png.image, bytes.data(), bytes.size())) {
    throw IoError(std::string("cannot decode PNG buffer: ") + png.image.message);
  }
  png.image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(png.image));
  if (!png_image_finish_read(&png.image, nullptr, buf.data(), 0, nullptr)) {
    throw IoError(std::string("cannot decode PNG buffer: ") + png.image.message);
  }
  return from_rgb(buf, png.image.height, png.image.width);
}

namespace {

std::vector<png_byte> to_gray8(const ImageTensor& img) {
  std::vector<png_byte> buf(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const float v = std::clamp(img.pixels[i], 0.0f, 1.0f);
    buf[i] = static_cast<png_byte>(std::lround(v * 255.0f));
  }
  return buf;
}

}  // namespace

void write_png(const std::filesystem::path& path, const ImageTensor& img) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto bytes = encode_png(img);
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot write " + path.string());
  const bool ok = std::fwrite(bytes.data(), 1, bytes.size(), f) == bytes.size();
  std::fclose(f);
  if (!ok) throw IoError("write failed: " + path.string());
}

std::vector<std::uint8_t> encode_png(const ImageTensor& img) {
  PngImage png;
  png.image.width = static_cast<png_uint_32>(img.width);
  png.image.height = static_cast<png_uint_32>(img.height);
  png.image.format = PNG_FORMAT_GRAY;
  const auto buf = to_gray8(img);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png.image, nullptr, &size, 0, buf.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode failed: ") + png.image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&png.image, out.data(), &size, 0, buf.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode failed: ") + png.image.message);
  }
  out.resize(size);
  return out;
}

CropBox find_border_crop(const ImageTensor& img, double threshold) {
  CropBox box{0, img.height, 0, img.width};
  auto row_mean = [&](std::size_t y) {
    double s = 0.0;
    for (std::size_t x = box.left; x < box.right; ++x) s += img.at(y, x);
    return s / static_cast<double>(box.right - box.left);
  };
  auto col_mean = [&](std::size_t x) {
    double s = 0.0;
    for (std::size_t y = box.top; y < box.bottom; ++y) s += img.at(y, x);
    return s / static_cast<double>(box.bottom - box.top);
  };
  if (img.height == 0 || img.width == 0) return {0, 0, 0, 0};
  while (box.top < box.bottom && row_mean(box.top) < threshold) ++box.top;
  while (box.bottom > box.top && row_mean(box.bottom - 1) < threshold) --box.bottom;
  if (box.top == box.bottom) return {0, 0, 0, 0};
  while (box.left < box.right && col_mean(box.left) < threshold) ++box.left;
  while (box.right > box.left && col_mean(box.right - 1) < threshold) --box.right;
  if (box.left == box.right) return {0, 0, 0, 0};
  return box;
}

ImageTensor crop(const ImageTensor& img, const CropBox& box) {
  ImageTensor out(box.bottom - box.top, box.right - box.left);
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) out.at(y, x) = img.at(box.top + y, box.left + x);
  }
  out.source = img.source;
  return out;
}

ImageTensor resize_bilinear(const ImageTensor& img, std::size_t out_h, std::size_t out_w) {
  if (img.height == 0 || img.width == 0) throw DimensionError("resize of empty image");
  ImageTensor out(out_h, out_w);
  out.source = img.source;
  const double sy = static_cast<double>(img.height) / static_cast<double>(out_h);
  const double sx = static_cast<double>(img.width) / static_cast<double>(out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0,
                                 static_cast<double>(img.height - 1));
    const auto y0 = static_cast<std::size_t>(std::floor(fy));
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(img.width - 1));
      const auto x0 = static_cast<std::size_t>(std::floor(fx));
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - static_cast<double>(x0);
      const double top = (1.0 - wx) * img.at(y0, x0) + wx * img.at(y0, x1);
      const double bot = (1.0 - wx) * img.at(y1, x0) + wx * img.at(y1, x1);
      out.at(y, x) = static_cast<float>((1.0 - wy) * top + wy * bot);
    }
  }
  return out;
}

void minmax_normalize(ImageTensor& img) {
  if (img.pixels.empty()) return;
  const auto [lo_it, hi_it] = std::minmax_element(img.pixels.begin(), img.pixels.end());
  const double lo = *lo_it, hi = *hi_it;
  if (hi - lo < 1e-12) {
    std::fill(img.pixels.begin(), img.pixels.end(), 0.0f);
    return;
  }
  const double scale = 1.0 / (hi - lo);
  for (auto& v : img.pixels) v = static_cast<float>((v - lo) * scale);
}

ImageTensor preprocess_image(const ImageTensor& raw, const PreprocessOptions& opts) {
  const CropBox box = find_border_crop(raw, opts.border_threshold);
  const std::size_t h = box.bottom - box.top, w = box.right - box.left;
  if (h < opts.min_crop_size || w < opts.min_crop_size) {
    std::ostringstream msg;
    msg << "image " << (raw.source.empty() ? "<memory>" : raw.source) << " is " << h << "x" << w
        << " after border crop; minimum is " << opts.min_crop_size;
    throw DimensionError(msg.str());
  }
  ImageTensor out = resize_bilinear(crop(raw, box), opts.target_size, opts.target_size);
  minmax_normalize(out);
  out.source = raw.source;
  std::ostringstream prov;
  prov << "crop=[" << box.top << ',' << box.bottom << ")x[" << box.left << ',' << box.right
       << ") border_threshold=" << opts.border_threshold << " resize=bilinear:" << opts.target_size
       << " normalize=minmax";
  out.provenance = prov.str();
  return out;
}

std::vector<double> downsample_features(const ImageTensor& img, std::size_t size) {
  std::vector<double> out(size * size, 0.0);
  std::vector<double> count(size * size, 0.0);
  for (std::size_t y = 0; y < img.height; ++y) {
    const std::size_t by = y * size / img.height;
    for (std::size_t x = 0; x < img.width; ++x) {
      const std::size_t bx = x * size / img.width;
      out[by * size + bx] += img.at(y, x);
      count[by * size + bx] += 1.0;
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (count[i] > 0) out[i] /= count[i];
  }
  return out;
}

}  // namespace cbx

#include "cbx/error.hpp"
#include "cbx/image.hpp"
#include "cbx/rng.hpp"
#include "cbx/util.hpp"
#include "test_support.hpp"

using namespace cbx;

TEST(Png, RoundTripIsExactAt8Bits) {
  test::TempDir dir;
  ImageTensor img(5, 7);
  for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = static_cast<float>(i % 256) / 255.0f;
  write_png(dir / "a.png", img);
  const auto back = read_png(dir / "a.png");
  ASSERT_EQ(back.height, 5u);
  ASSERT_EQ(back.width, 7u);
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(back.pixels[i], img.pixels[i], 1e-6);
  EXPECT_EQ(decode_png(encode_png(img)).pixels, back.pixels);
}

TEST(Png, CorruptOrMissingFilesRaise) {
  test::TempDir dir;
  write_text_file(dir / "bad.png", "definitely not a png");
  EXPECT_THROW(read_png(dir / "bad.png"), Error);
  EXPECT_THROW(read_png(dir / "missing.png"), Error);
  EXPECT_THROW(decode_png({0x89, 'P', 'N', 'G'}), Error);
}

TEST(Crop, RemovesDarkBorders) {
  ImageTensor img(20, 30, 0.0f);
  for (std::size_t y = 4; y < 15; ++y) {
    for (std::size_t x = 6; x < 27; ++x) img.at(y, x) = 0.5f;
  }
  EXPECT_EQ(find_border_crop(img, 0.02), (CropBox{4, 15, 6, 27}));
  EXPECT_EQ(find_border_crop(ImageTensor(8, 8, 0.0f), 0.02), (CropBox{0, 0, 0, 0}));
  EXPECT_EQ(find_border_crop(ImageTensor(8, 8, 1.0f), 0.02), (CropBox{0, 8, 0, 8}));
}

TEST(Resize, ConstantStaysConstantAndIdentityIsExact) {
  ImageTensor c(9, 13, 0.25f);
  for (float v : resize_bilinear(c, 4, 21).pixels) EXPECT_FLOAT_EQ(v, 0.25f);
  Rng rng(3);
  ImageTensor r(6, 6);
  for (auto& v : r.pixels) v = static_cast<float>(rng.uniform());
  EXPECT_EQ(resize_bilinear(r, 6, 6).pixels, r.pixels);
}

TEST(Resize, StaysWithinInputRange) {
  Rng rng(4);
  ImageTensor r(11, 7);
  for (auto& v : r.pixels) v = static_cast<float>(rng.uniform(0.2, 0.6));
  for (float v : resize_bilinear(r, 32, 17).pixels) {
    EXPECT_GE(v, 0.2f - 1e-6f);
    EXPECT_LE(v, 0.6f + 1e-6f);
  }
}

TEST(Normalize, MinMaxAndConstant) {
  ImageTensor img(1, 3);
  img.pixels = {2.0f, 4.0f, 3.0f};
  minmax_normalize(img);
  EXPECT_EQ(img.pixels, (std::vector<float>{0.0f, 1.0f, 0.5f}));
  ImageTensor flat(2, 2, 0.7f);
  minmax_normalize(flat);
  for (float v : flat.pixels) EXPECT_FLOAT_EQ(v, 0.0f);
}

TEST(Preprocess, CropsResizesAndRecordsProvenance) {
  ImageTensor raw(100, 80, 0.0f);
  for (std::size_t y = 10; y < 90; ++y) {
    for (std::size_t x = 5; x < 75; ++x) raw.at(y, x) = 0.2f + 0.6f * static_cast<float>(x) / 80.0f;
  }
  PreprocessOptions opts;
  opts.target_size = 32;
  const auto out = preprocess_image(raw, opts);
  EXPECT_EQ(out.height, 32u);
  EXPECT_EQ(out.width, 32u);
  EXPECT_FLOAT_EQ(*std::min_element(out.pixels.begin(), out.pixels.end()), 0.0f);
  EXPECT_FLOAT_EQ(*std::max_element(out.pixels.begin(), out.pixels.end()), 1.0f);
  EXPECT_NE(out.provenance.find("crop=[10,90)x[5,75)"), std::string::npos) << out.provenance;
}

TEST(Preprocess, TooSmallAfterCropRaises) {
  ImageTensor raw(64, 64, 0.0f);
  for (std::size_t y = 0; y < 10; ++y) {
    for (std::size_t x = 0; x < 10; ++x) raw.at(y, x) = 1.0f;
  }
  EXPECT_THROW(preprocess_image(raw), DimensionError);
}

TEST(Downsample, BlockMeans) {
  ImageTensor img(4, 4);
  for (std::size_t y = 0; y < 4; ++y) {
    for (std::size_t x = 0; x < 4; ++x) img.at(y, x) = static_cast<float>(y < 2 ? 0 : 1) + (x < 2 ? 0.0f : 0.5f);
  }
  EXPECT_EQ(downsample_features(img, 2), (std::vector<double>{0.0, 0.5, 1.0, 1.5}));
}

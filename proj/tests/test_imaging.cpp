#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "carguard/error.hpp"
#include "carguard/imaging.hpp"
#include "test_util.hpp"

using namespace carguard;

namespace {

ImageBuffer random_image(std::mt19937_64& rng, int w, int h) {
  ImageBuffer img(w, h);
  std::uniform_int_distribution<int> u(0, 255);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(u(rng));
  return img;
}

}  // namespace

TEST(Histogram, TwoByTwoExample) {
  ImageBuffer img(2, 2);
  img.set(0, 0, {0, 0, 0});
  img.set(1, 0, {0, 0, 0});
  img.set(0, 1, {255, 0, 0});
  img.set(1, 1, {0, 255, 0});
  auto h = color_histogram(img, 2);
  ASSERT_EQ(h.values.size(), 6u);
  EXPECT_EQ(h.values, (std::vector<double>{0.75, 0.25, 0.75, 0.25, 1.0, 0.0}));
}

TEST(Histogram, ChannelsSumToOne) {
  std::mt19937_64 rng(3);
  for (int bins : {1, 2, 3, 8, 16, 32, 256}) {
    for (int t = 0; t < 10; ++t) {
      auto img = random_image(rng, 1 + static_cast<int>(rng() % 40), 1 + static_cast<int>(rng() % 40));
      auto h = color_histogram(img, bins);
      for (int c = 0; c < 3; ++c) {
        double s = std::accumulate(h.values.begin() + c * bins, h.values.begin() + (c + 1) * bins, 0.0);
        EXPECT_NEAR(s, 1.0, 1e-9);
      }
    }
  }
}

// Bin b holds the values v with b*256 <= v*B < (b+1)*256.
TEST(Histogram, MatchesRangeOracle) {
  std::mt19937_64 rng(4);
  for (int bins : {3, 5, 7, 8, 100}) {
    auto img = random_image(rng, 17, 9);
    auto h = color_histogram(img, bins);
    const double n = 17.0 * 9.0;
    for (int c = 0; c < 3; ++c) {
      for (int b = 0; b < bins; ++b) {
        int count = 0;
        for (std::size_t i = c; i < img.pixels.size(); i += 3) {
          int v = img.pixels[i];
          if (b * 256 <= v * bins && v * bins < (b + 1) * 256) ++count;
        }
        EXPECT_DOUBLE_EQ(h.values[c * bins + b], count / n);
      }
    }
  }
}

TEST(Histogram, PixelPermutationInvariant) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    auto img = random_image(rng, 13, 11);
    std::vector<Rgb> px;
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) px.push_back(img.at(x, y));
    std::shuffle(px.begin(), px.end(), rng);
    // Also reshape: same pixels laid out as 11x13.
    ImageBuffer other(11, 13);
    for (std::size_t i = 0; i < px.size(); ++i) {
      other.set(static_cast<int>(i % 11), static_cast<int>(i / 11), px[i]);
    }
    EXPECT_EQ(color_histogram(img, 8).values, color_histogram(other, 8).values);
  }
}

TEST(Histogram, RejectsBadInput) {
  EXPECT_THROW(color_histogram(ImageBuffer(2, 2), 0), Error);
  EXPECT_THROW(color_histogram(ImageBuffer{}, 8), Error);
}

TEST(ToyEmbed, UniformImage) {
  auto v = toy_embed(ImageBuffer(32, 24, {90, 140, 30}), 64);
  ASSERT_EQ(v.size(), 64u);
  for (double x : v) EXPECT_NEAR(x, 0.125, 1e-12);
}

TEST(ToyEmbed, BlackImageIsZero) {
  auto v = toy_embed(ImageBuffer(16, 16), 64);
  for (double x : v) EXPECT_EQ(x, 0.0);
}

TEST(ToyEmbed, MatchesBlockMeanOracle) {
  std::mt19937_64 rng(6);
  auto img = random_image(rng, 16, 16);
  std::vector<double> sums(64, 0.0);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      auto p = img.at(x, y);
      sums[(y / 2) * 8 + x / 2] += 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    }
  }
  double norm = 0.0;
  for (double s : sums) norm += s * s;
  norm = std::sqrt(norm);  // the mean's 1/4 factor cancels under normalization
  auto v = toy_embed(img, 64);
  for (int i = 0; i < 64; ++i) EXPECT_NEAR(v[i], sums[i] / norm, 1e-12);
}

TEST(ToyEmbed, TinyImageAndBadDim) {
  // Smaller than the grid: cells reuse the available pixels.
  auto v = toy_embed(ImageBuffer(3, 2, {200, 200, 200}), 64);
  for (double x : v) EXPECT_NEAR(x, 0.125, 1e-12);
  EXPECT_THROW(toy_embed(ImageBuffer(4, 4), 60), Error);
}

TEST(Crop, QuarterBoxGivesTopLeftBlock) {
  ImageBuffer img(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) img.set(x, y, {static_cast<std::uint8_t>(x), static_cast<std::uint8_t>(y), 7});
  auto c = crop_roi(img, {0.25, 0.25, 0.5, 0.5});
  ASSERT_EQ(c.width, 2);
  ASSERT_EQ(c.height, 2);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) EXPECT_EQ(c.at(x, y), img.at(x, y));
}

TEST(Crop, ClipsAtRightEdge) {
  ImageBuffer img(4, 4);
  for (int x = 0; x < 4; ++x) img.set(x, 0, {static_cast<std::uint8_t>(10 * x), 0, 0});
  auto c = crop_roi(img, {1.0, 0.5, 0.5, 1.0});
  EXPECT_EQ(c.width, 1);
  EXPECT_EQ(c.height, 4);
  EXPECT_EQ(c.at(0, 0), (Rgb{30, 0, 0}));
}

TEST(Crop, EmptyImageIsEmptyRoi) {
  try {
    crop_roi(ImageBuffer{}, {0.5, 0.5, 1, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::empty_roi);
  }
}

TEST(Codec, DecodesMinimalBlackPng) {
  // 1x1 RGB PNG, built by hand: IHDR, one zlib IDAT row, IEND.
  const std::vector<std::uint8_t> png = {
      0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48,
      0x44, 0x52, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x01, 0x08, 0x02, 0x00, 0x00,
      0x00, 0x90, 0x77, 0x53, 0xde, 0x00, 0x00, 0x00, 0x0c, 0x49, 0x44, 0x41, 0x54, 0x78,
      0x9c, 0x63, 0x60, 0x60, 0x60, 0x00, 0x00, 0x00, 0x04, 0x00, 0x01, 0xf6, 0x17, 0x38,
      0x55, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45, 0x4e, 0x44, 0xae, 0x42, 0x60, 0x82};
  auto img = decode_image(png);
  EXPECT_EQ(img.width, 1);
  EXPECT_EQ(img.height, 1);
  EXPECT_EQ(img.at(0, 0), (Rgb{0, 0, 0}));
}

TEST(Codec, PngRoundTrip) {
  std::mt19937_64 rng(8);
  auto img = random_image(rng, 23, 7);
  EXPECT_EQ(decode_image(encode_png(img)), img);

  testutil::TempDir dir;
  write_png(dir / "a.png", img);
  EXPECT_EQ(read_image(dir / "a.png"), img);
}

TEST(Codec, JpegDecodesNearOriginal) {
  ImageBuffer img(16, 16, {120, 60, 200});
  auto back = decode_image(encode_jpeg(img, 95));
  ASSERT_EQ(back.width, 16);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(back.at(8, 8)[c], img.at(8, 8)[c], 6);
}

TEST(Codec, TruncatedJpegFails) {
  std::mt19937_64 rng(9);
  auto bytes = encode_jpeg(random_image(rng, 64, 64), 90);
  bytes.resize(bytes.size() / 2);
  try {
    decode_image(bytes);
    FAIL() << "truncated jpeg decoded";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::decode);
  }
}

TEST(Codec, TruncatedPngAndGarbageFail) {
  auto bytes = encode_png(ImageBuffer(8, 8, {1, 2, 3}));
  bytes.resize(bytes.size() - 20);
  EXPECT_THROW(decode_image(bytes), Error);
  std::vector<std::uint8_t> junk = {'h', 'e', 'l', 'l', 'o'};
  EXPECT_THROW(decode_image(junk), Error);
  EXPECT_THROW(decode_image(std::vector<std::uint8_t>{}), Error);
}

TEST(Codec, MissingFileIsIo) {
  try {
    read_image("/nonexistent/x.png");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::io);
  }
}

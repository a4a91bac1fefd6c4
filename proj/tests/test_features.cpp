#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "carguard/error.hpp"
#include "carguard/features.hpp"
#include "carguard/matcher.hpp"
#include "test_util.hpp"

using namespace carguard;

TEST(L2Normalize, ThreeFour) {
  auto v = l2_normalize(std::vector<double>{3, 4});
  EXPECT_NEAR(v[0], 0.6, 1e-15);
  EXPECT_NEAR(v[1], 0.8, 1e-15);
}

TEST(L2Normalize, ZeroStaysZeroAndNanRejected) {
  EXPECT_EQ(l2_normalize(std::vector<double>{0, 0, 0}), (std::vector<double>{0, 0, 0}));
  EXPECT_THROW(l2_normalize(std::vector<double>{1, NAN}), Error);
  EXPECT_THROW(l2_normalize(std::vector<double>{INFINITY, 0}), Error);
}

TEST(L2Normalize, UnitNormOnRandomVectors) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) {
    auto v = l2_normalize(testutil::random_vector(rng, 1 + rng() % 50, -10, 10));
    double n = 0;
    for (double x : v) n += x * x;
    EXPECT_NEAR(n, 1.0, 1e-12);
  }
}

TEST(FusionConfig, DefaultLayoutIs152) {
  FusionConfig c;
  EXPECT_EQ(c.total_dim(), 152u);
  EXPECT_EQ(c.block_offset(Block::local), 0u);
  EXPECT_EQ(c.block_offset(Block::global), 64u);
  EXPECT_EQ(c.block_offset(Block::hist), 128u);
  EXPECT_EQ(c.block_dim(Block::hist), 24u);
}

TEST(FusionConfig, Validation) {
  FusionConfig c;
  c.weights = {0, 0, 0};
  EXPECT_THROW(validate(c), Error);
  c.weights = {1, -1, 0};
  EXPECT_THROW(validate(c), Error);
  c.weights = {0, 0, 1};
  c.hist_bins = 0;
  EXPECT_THROW(validate(c), Error);  // the only positive weight is on a dropped block
  c.local_dim = 0;
  EXPECT_THROW(validate(c), Error);
}

TEST(Fuse, GlobalDifferenceGivesTwoThirds) {
  FusionConfig c{2, 2, 2, {1, 1, 1}};
  HistogramFeature h{2, {1, 0, 1, 0, 1, 0}};
  auto a = fuse({{1, 0}}, {{1, 0}}, h, c);
  auto b = fuse({{1, 0}}, {{0, 1}}, h, c);
  EXPECT_NEAR(cosine_similarity(a.values, b.values), 2.0 / 3.0, 1e-7);
}

TEST(Fuse, ZeroWeightZeroesBlock) {
  FusionConfig c{2, 2, 2, {1, 1, 0}};
  auto d = fuse({{3, 4}}, {{1, 1}}, HistogramFeature{2, {0.5, 0.5, 1, 0, 0, 1}}, c);
  for (float x : d.block(Block::hist)) EXPECT_EQ(x, 0.0f);
  EXPECT_NEAR(d.block(Block::local)[0], 0.6f, 1e-7);
  EXPECT_NEAR(d.block(Block::global)[1], std::sqrt(0.5), 1e-7);
}

TEST(Fuse, EachBlockNormalizedThenWeighted) {
  std::mt19937_64 rng(2);
  FusionConfig c{5, 7, 3, {0.5, 2.0, 1.5}};
  auto l = testutil::random_vector(rng, 5);
  auto g = testutil::random_vector(rng, 7);
  auto hv = testutil::random_vector(rng, 9, 0, 1);
  auto d = fuse({l}, {g}, HistogramFeature{3, hv}, c);
  ASSERT_EQ(d.values.size(), 21u);
  auto norm = [](std::span<const float> s) {
    double n = 0;
    for (float x : s) n += double(x) * x;
    return std::sqrt(n);
  };
  EXPECT_NEAR(norm(d.block(Block::local)), 0.5, 1e-6);
  EXPECT_NEAR(norm(d.block(Block::global)), 2.0, 1e-6);
  EXPECT_NEAR(norm(d.block(Block::hist)), 1.5, 1e-6);
}

TEST(Fuse, DimensionMismatchIsLayoutError) {
  FusionConfig c{2, 2, 0, {1, 1, 0}};
  try {
    fuse({{1, 0, 0}}, {{1, 0}}, std::nullopt, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::layout_mismatch);
  }
  EXPECT_THROW(fuse({{1, 0}}, {{1, 0}}, HistogramFeature{2, {1, 0, 1, 0, 1, 0}}, c), Error);
  c.hist_bins = 2;
  EXPECT_THROW(fuse({{1, 0}}, {{1, 0}}, std::nullopt, c), Error);
}

TEST(SameLayout, WeightsCompareAtFloatPrecision) {
  FusionConfig a;
  FusionConfig b;
  b.weights.local = 1.0 + 1e-12;
  EXPECT_TRUE(same_layout(a, b));
  b.weights.local = 1.01;
  EXPECT_FALSE(same_layout(a, b));
  b = a;
  b.hist_bins = 16;
  EXPECT_FALSE(same_layout(a, b));
}

TEST(ToyProvider, DimsAndEmbed) {
  ToyEmbeddingProvider p(16, 64);
  EXPECT_EQ(p.dim(EmbedKind::local_roi), 16u);
  EXPECT_EQ(p.dim(EmbedKind::global_body), 64u);
  auto v = embed(p, ImageBuffer(8, 8, {50, 50, 50}), "x", EmbedKind::local_roi);
  EXPECT_EQ(v.dim(), 16u);
  EXPECT_THROW(ToyEmbeddingProvider(10, 64), Error);
}

TEST(PrecomputedProvider, SidecarRoundTrip) {
  testutil::TempDir dir;
  std::map<std::string, std::vector<float>> table = {
      {"img-a", {1, 2, 3}}, {"img-b", {0, 0.5f, -1}}};
  write_embedding_sidecar(dir / "e.cge", 3, table);
  auto p = PrecomputedEmbeddingProvider::load(dir / "e.cge");
  EXPECT_EQ(p.size(), 2u);
  EXPECT_EQ(p.dim(EmbedKind::local_roi), 3u);
  ImageBuffer none;
  EXPECT_EQ(p.embed(none, "img-b", EmbedKind::global_body).values,
            (std::vector<double>{0, 0.5, -1}));
  // Region-suffixed local keys fall back to the image id.
  EXPECT_EQ(p.embed(none, "img-a#0", EmbedKind::local_roi).values,
            (std::vector<double>{1, 2, 3}));
  try {
    p.embed(none, "img-c", EmbedKind::local_roi);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::missing_embedding);
  }
}

TEST(PrecomputedProvider, BadSidecar) {
  testutil::TempDir dir;
  {
    std::ofstream f(dir / "bad.cge", std::ios::binary);
    f << "XXXX";
  }
  try {
    PrecomputedEmbeddingProvider::load(dir / "bad.cge");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::corrupt);
  }
  EXPECT_THROW(PrecomputedEmbeddingProvider::load(dir / "missing.cge"), Error);
  EXPECT_THROW(PrecomputedEmbeddingProvider(3, {{"a", {1, 2}}}), Error);
}

TEST(DescribeRoi, AveragesBodiesAndUsesRoiHistogram) {
  ToyEmbeddingProvider p(16, 16);
  FusionConfig c{16, 16, 2, {1, 1, 1}};
  ImageBuffer close(8, 8, {0, 0, 0});
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) close.set(x, y, {255, 255, 255});
  std::vector<ImageBuffer> bodies = {ImageBuffer(8, 8, {200, 0, 0})};
  std::vector<std::string> ids = {"b"};

  auto roi_hist = describe_roi(p, c, HistSource::roi, close, "c", {0.25, 0.25, 0.5, 0.5}, bodies, ids);
  // ROI is all white: every channel lands in the top bin.
  auto h = roi_hist.block(Block::hist);
  EXPECT_EQ(h[0], 0.0f);
  EXPECT_GT(h[1], 0.0f);

  auto body_hist = describe_roi(p, c, HistSource::full_body, close, "c", {0.25, 0.25, 0.5, 0.5}, bodies, ids);
  auto hb = body_hist.block(Block::hist);
  EXPECT_GT(hb[1], 0.0f);  // red high
  EXPECT_GT(hb[2], 0.0f);  // green low
  EXPECT_EQ(hb[3], 0.0f);

  EXPECT_THROW(describe_roi(p, c, HistSource::roi, close, "c", {0.5, 0.5, 1, 1}, {}, {}), Error);
}

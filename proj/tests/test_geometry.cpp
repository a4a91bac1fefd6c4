#include <gtest/gtest.h>

#include <random>

#include "carguard/error.hpp"
#include "carguard/geometry.hpp"

using namespace carguard;

TEST(Iou, CornerBoxesGiveOneSeventh) {
  // (0,0)-(2,2) and (1,1)-(3,3) on a 4x4 frame: overlap 1, union 4 + 4 - 1.
  auto a = from_corners(0, 0, 2, 2, 4, 4);
  auto b = from_corners(1, 1, 3, 3, 4, 4);
  EXPECT_NEAR(iou(a, b), 1.0 / 7.0, 1e-12);
  EXPECT_NEAR(iou(a, b), 0.142857, 1e-6);
}

TEST(Iou, IdenticalAndDisjoint) {
  NormalizedBBox a{0.3, 0.3, 0.2, 0.2};
  EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
  EXPECT_DOUBLE_EQ(iou(a, {0.8, 0.8, 0.2, 0.2}), 0.0);
  // Touching edges share no area.
  EXPECT_DOUBLE_EQ(iou(from_corners(0, 0, 1, 1, 4, 4), from_corners(1, 0, 2, 1, 4, 4)), 0.0);
}

TEST(Iou, SymmetricAndBounded) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    NormalizedBBox a{u(rng), u(rng), 0.01 + 0.99 * u(rng), 0.01 + 0.99 * u(rng)};
    NormalizedBBox b{u(rng), u(rng), 0.01 + 0.99 * u(rng), 0.01 + 0.99 * u(rng)};
    double ab = iou(a, b);
    EXPECT_EQ(ab, iou(b, a));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
  }
}

TEST(BBox, ValidateNamesField) {
  EXPECT_NO_THROW(validate(NormalizedBBox{0.5, 0.5, 1.0, 1.0}));
  try {
    validate(NormalizedBBox{0.5, 0.5, 0.0, 0.3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::validation);
    EXPECT_EQ(e.field(), "bbox.w");
  }
  EXPECT_FALSE(is_valid({1.2, 0.5, 0.1, 0.1}));
  EXPECT_FALSE(is_valid({0.5, 0.5, 0.1, 1.5}));
}

TEST(PixelBox, WholeImageAndQuarter) {
  EXPECT_EQ(to_pixel_box({0.5, 0.5, 1.0, 1.0}, 4, 4), (PixelBox{0, 0, 4, 4}));
  EXPECT_EQ(to_pixel_box({0.25, 0.25, 0.5, 0.5}, 4, 4), (PixelBox{0, 0, 2, 2}));
}

TEST(PixelBox, ClippedAtRightEdge) {
  // x-span [3, 5) on a 4-wide frame: pixel 3 only.
  auto p = to_pixel_box({1.0, 0.5, 0.5, 0.5}, 4, 4);
  EXPECT_EQ(p.left, 3);
  EXPECT_EQ(p.width, 1);
}

TEST(PixelBox, DegenerateClampsToOnePixel) {
  auto p = to_pixel_box({0.5, 0.5, 1e-6, 1e-6}, 10, 10);
  EXPECT_EQ(p.width, 1);
  EXPECT_EQ(p.height, 1);
}

// Rounding half up on both edges is the same as taking the pixels whose
// centers i + 0.5 fall in (x0, x1]; the oracle counts centers directly.
TEST(PixelBox, MatchesPixelCenterOracle) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 5000; ++t) {
    int W = 1 + static_cast<int>(u(rng) * 64);
    NormalizedBBox b{u(rng), 0.5, 0.0, 1.0};
    b.w = std::max(1.01 / W, u(rng));
    double x0 = (b.cx - b.w / 2) * W, x1 = (b.cx + b.w / 2) * W;
    int first = -1, count = 0;
    for (int i = 0; i < W; ++i) {
      if (x0 < i + 0.5 && i + 0.5 <= x1) {
        if (first < 0) first = i;
        ++count;
      }
    }
    if (count == 0) continue;  // only a sliver inside the frame
    auto p = to_pixel_box(b, W, 1);
    EXPECT_EQ(p.left, first) << "W=" << W << " cx=" << b.cx << " w=" << b.w;
    EXPECT_EQ(p.width, count) << "W=" << W << " cx=" << b.cx << " w=" << b.w;
  }
}

TEST(PixelBox, EmptyImageRejected) {
  EXPECT_THROW(to_pixel_box({0.5, 0.5, 1, 1}, 0, 4), Error);
}

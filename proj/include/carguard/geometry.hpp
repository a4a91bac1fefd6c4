#pragma once

#include <compare>

namespace carguard {

/// Box center and size, normalized to the image dimensions.
struct NormalizedBBox {
  double cx = 0.5;
  double cy = 0.5;
  double w = 1.0;
  double h = 1.0;

  bool operator==(const NormalizedBBox&) const = default;
};

bool is_valid(const NormalizedBBox& box) noexcept;

/// Throws Error(validation) naming the first violated bound.
void validate(const NormalizedBBox& box);

/// Inclusive pixel rectangle: columns [left, left + width - 1].
struct PixelBox {
  int left = 0;
  int top = 0;
  int width = 0;
  int height = 0;

  bool operator==(const PixelBox&) const = default;
};

/// Converts to pixel coordinates: left = round((cx - w/2) * W),
/// right = round((cx + w/2) * W) - 1, both clamped to [0, W - 1], with at
/// least one pixel of extent. Rounding is half-up. Throws Error(empty_roi) when
/// the unclamped span lies entirely outside the frame.
PixelBox to_pixel_box(const NormalizedBBox& box, int image_width, int image_height);

/// Inverse of the pixel conversion for exact corner coordinates; right/bottom
/// are exclusive edges.
NormalizedBBox from_corners(double left, double top, double right, double bottom,
                            int image_width, int image_height);

/// Intersection over union in normalized coordinates; 0 for disjoint boxes.
double iou(const NormalizedBBox& a, const NormalizedBBox& b) noexcept;

}  // namespace carguard

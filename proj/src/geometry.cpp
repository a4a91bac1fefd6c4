#include "carguard/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "carguard/error.hpp"

namespace carguard {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::validation: return "validation";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::duplicate: return "duplicate";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::layout_mismatch: return "layout_mismatch";
    case ErrorCode::decode: return "decode";
    case ErrorCode::empty_roi: return "empty_roi";
    case ErrorCode::config: return "config";
    case ErrorCode::missing_embedding: return "missing_embedding";
    case ErrorCode::io: return "io";
    case ErrorCode::corrupt: return "corrupt";
    case ErrorCode::payload_too_large: return "payload_too_large";
    case ErrorCode::internal: return "internal";
  }
  return "unknown";
}

bool is_valid(const NormalizedBBox& box) noexcept {
  auto finite = std::isfinite(box.cx) && std::isfinite(box.cy) && std::isfinite(box.w) &&
                std::isfinite(box.h);
  return finite && box.cx >= 0.0 && box.cx <= 1.0 && box.cy >= 0.0 && box.cy <= 1.0 &&
         box.w > 0.0 && box.w <= 1.0 && box.h > 0.0 && box.h <= 1.0;
}

void validate(const NormalizedBBox& box) {
  if (is_valid(box)) return;
  const char* what = "bbox";
  if (!(box.cx >= 0.0 && box.cx <= 1.0)) {
    what = "bbox.cx";
  } else if (!(box.cy >= 0.0 && box.cy <= 1.0)) {
    what = "bbox.cy";
  } else if (!(box.w > 0.0 && box.w <= 1.0)) {
    what = "bbox.w";
  } else if (!(box.h > 0.0 && box.h <= 1.0)) {
    what = "bbox.h";
  }
  throw Error(ErrorCode::validation,
              std::string(what) + " out of range (need 0<=cx,cy<=1 and 0<w,h<=1)", what);
}

namespace {

long round_half_up(double v) { return static_cast<long>(std::floor(v + 0.5)); }

struct Span {
  int first;
  int extent;
};

Span to_pixel_span(double center, double size, int length) {
  long lo = round_half_up((center - size / 2.0) * length);
  long hi = round_half_up((center + size / 2.0) * length) - 1;
  hi = std::max(hi, lo);
  if (lo > length - 1 || hi < 0) {
    throw Error(ErrorCode::empty_roi, "box lies outside the image frame after clipping");
  }
  lo = std::clamp<long>(lo, 0, length - 1);
  hi = std::clamp<long>(hi, 0, length - 1);
  return {static_cast<int>(lo), static_cast<int>(hi - lo + 1)};
}

}  // namespace

PixelBox to_pixel_box(const NormalizedBBox& box, int image_width, int image_height) {
  if (image_width <= 0 || image_height <= 0) {
    throw Error(ErrorCode::empty_roi, "image has no pixels");
  }
  auto x = to_pixel_span(box.cx, box.w, image_width);
  auto y = to_pixel_span(box.cy, box.h, image_height);
  return {x.first, y.first, x.extent, y.extent};
}

NormalizedBBox from_corners(double left, double top, double right, double bottom,
                            int image_width, int image_height) {
  double w = static_cast<double>(image_width);
  double h = static_cast<double>(image_height);
  return {(left + right) / 2.0 / w, (top + bottom) / 2.0 / h, (right - left) / w,
          (bottom - top) / h};
}

double iou(const NormalizedBBox& a, const NormalizedBBox& b) noexcept {
  double ax0 = a.cx - a.w / 2, ax1 = a.cx + a.w / 2;
  double ay0 = a.cy - a.h / 2, ay1 = a.cy + a.h / 2;
  double bx0 = b.cx - b.w / 2, bx1 = b.cx + b.w / 2;
  double by0 = b.cy - b.h / 2, by1 = b.cy + b.h / 2;
  double iw = std::min(ax1, bx1) - std::max(ax0, bx0);
  double ih = std::min(ay1, by1) - std::max(ay0, by0);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  double inter = iw * ih;
  double uni = a.w * a.h + b.w * b.h - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

}  // namespace carguard

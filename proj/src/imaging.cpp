#include "carguard/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "carguard/error.hpp"
#include "carguard/features.hpp"

namespace carguard {

ImageBuffer::ImageBuffer(int w, int h, Rgb fill) : width(w), height(h) {
  if (w <= 0 || h <= 0) {
    throw Error(ErrorCode::validation, "image dimensions must be positive");
  }
  pixels.resize(static_cast<std::size_t>(w) * h * 3);
  for (std::size_t i = 0; i < pixels.size(); i += 3) {
    pixels[i] = fill[0];
    pixels[i + 1] = fill[1];
    pixels[i + 2] = fill[2];
  }
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string(), path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ImageBuffer read_image(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  try {
    return decode_image(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what(), path.string());
  }
}

ImageBuffer crop_roi(const ImageBuffer& image, const NormalizedBBox& box) {
  if (image.empty()) throw Error(ErrorCode::empty_roi, "cannot crop an empty image");
  auto px = to_pixel_box(box, image.width, image.height);
  ImageBuffer out(px.width, px.height);
  const std::size_t row_bytes = static_cast<std::size_t>(px.width) * 3;
  for (int y = 0; y < px.height; ++y) {
    auto src = image.pixels.begin() +
               ((static_cast<std::size_t>(px.top + y) * image.width + px.left) * 3);
    std::copy_n(src, row_bytes, out.pixels.begin() + static_cast<std::size_t>(y) * row_bytes);
  }
  return out;
}

HistogramFeature color_histogram(const ImageBuffer& image, int bins_per_channel) {
  if (bins_per_channel < 1) {
    throw Error(ErrorCode::config, "histogram needs at least one bin per channel");
  }
  if (image.empty()) throw Error(ErrorCode::validation, "histogram of an empty image");

  const auto bins = static_cast<std::size_t>(bins_per_channel);
  std::vector<std::uint64_t> counts(3 * bins, 0);
  for (std::size_t i = 0; i < image.pixels.size(); i += 3) {
    for (std::size_t c = 0; c < 3; ++c) {
      auto v = static_cast<std::size_t>(image.pixels[i + c]);
      counts[c * bins + v * bins / 256]++;
    }
  }
  const double total = static_cast<double>(image.pixels.size() / 3);
  HistogramFeature h{bins_per_channel, std::vector<double>(3 * bins)};
  for (std::size_t k = 0; k < counts.size(); ++k) {
    h.values[k] = static_cast<double>(counts[k]) / total;
  }
  return h;
}

std::vector<double> toy_embed(const ImageBuffer& image, std::size_t dim) {
  auto grid = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(dim))));
  if (dim == 0 || grid * grid != dim) {
    throw Error(ErrorCode::config, "toy embedding dim must be a perfect square", "dim");
  }
  if (image.empty()) throw Error(ErrorCode::validation, "embedding of an empty image");

  const auto W = static_cast<std::size_t>(image.width);
  const auto H = static_cast<std::size_t>(image.height);
  auto cell_range = [grid](std::size_t g, std::size_t len) {
    std::size_t lo = std::min(g * len / grid, len - 1);
    std::size_t hi = std::max(lo + 1, (g + 1) * len / grid);
    return std::pair{lo, std::min(hi, len)};
  };

  std::vector<double> pooled(dim, 0.0);
  for (std::size_t gy = 0; gy < grid; ++gy) {
    auto [y0, y1] = cell_range(gy, H);
    for (std::size_t gx = 0; gx < grid; ++gx) {
      auto [x0, x1] = cell_range(gx, W);
      double sum = 0.0;
      for (std::size_t y = y0; y < y1; ++y) {
        for (std::size_t x = x0; x < x1; ++x) {
          auto i = (y * W + x) * 3;
          sum += 0.299 * image.pixels[i] + 0.587 * image.pixels[i + 1] +
                 0.114 * image.pixels[i + 2];
        }
      }
      pooled[gy * grid + gx] = sum / static_cast<double>((y1 - y0) * (x1 - x0));
    }
  }
  return l2_normalize(pooled);
}

}  // namespace carguard

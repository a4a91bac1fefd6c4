#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "carguard/geometry.hpp"

namespace carguard {

using Rgb = std::array<std::uint8_t, 3>;

/// Row-major 8-bit RGB pixels.
struct ImageBuffer {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  ImageBuffer() = default;
  ImageBuffer(int w, int h, Rgb fill = {0, 0, 0});

  bool empty() const noexcept { return width <= 0 || height <= 0; }

  Rgb at(int x, int y) const {
    auto i = (static_cast<std::size_t>(y) * width + x) * 3;
    return {pixels[i], pixels[i + 1], pixels[i + 2]};
  }
  void set(int x, int y, Rgb c) {
    auto i = (static_cast<std::size_t>(y) * width + x) * 3;
    pixels[i] = c[0];
    pixels[i + 1] = c[1];
    pixels[i + 2] = c[2];
  }

  bool operator==(const ImageBuffer&) const = default;
};

/// Decodes a PNG or JPEG stream to RGB. Alpha is dropped and grayscale is
/// expanded. Throws Error(decode) naming the failing stage; never returns a
/// partially decoded buffer.
ImageBuffer decode_image(std::span<const std::uint8_t> bytes);
ImageBuffer read_image(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const ImageBuffer& image);
std::vector<std::uint8_t> encode_jpeg(const ImageBuffer& image, int quality = 90);
void write_png(const std::filesystem::path& path, const ImageBuffer& image);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

ImageBuffer crop_roi(const ImageBuffer& image, const NormalizedBBox& box);

struct HistogramFeature {
  int bins_per_channel = 0;
  /// Channel-major: R bins, then G bins, then B bins. Each channel sums to 1.
  std::vector<double> values;
};

/// Bin of channel value v is floor(v * B / 256).
HistogramFeature color_histogram(const ImageBuffer& image, int bins_per_channel);

/// Luminance average-pooled over a sqrt(dim) x sqrt(dim) grid, flattened
/// row-major and L2-normalized. An all-zero pool yields the zero vector.
std::vector<double> toy_embed(const ImageBuffer& image, std::size_t dim = 64);

}  // namespace carguard

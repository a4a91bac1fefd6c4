// PNG/JPEG decode and encode on top of libpng and libjpeg.
#include <csetjmp>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <string>

#include <jpeglib.h>
#include <png.h>

#include "carguard/error.hpp"
#include "carguard/imaging.hpp"

namespace carguard {
namespace {

constexpr std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

bool is_png(std::span<const std::uint8_t> b) {
  return b.size() >= 8 && std::memcmp(b.data(), kPngSignature, 8) == 0;
}
bool is_jpeg(std::span<const std::uint8_t> b) {
  return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF;
}

ImageBuffer decode_png(std::span<const std::uint8_t> bytes) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    std::string msg = std::string("png header: ") + img.message;
    png_image_free(&img);
    throw Error(ErrorCode::decode, msg);
  }
  img.format = PNG_FORMAT_RGB;
  if (img.width == 0 || img.height == 0 || img.width > 1u << 15 || img.height > 1u << 15) {
    png_image_free(&img);
    throw Error(ErrorCode::decode, "png header: unsupported dimensions");
  }
  ImageBuffer out(static_cast<int>(img.width), static_cast<int>(img.height));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string msg = std::string("png data: ") + img.message;
    png_image_free(&img);
    throw Error(ErrorCode::decode, msg);
  }
  return out;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
  const char* stage;
};

void jpeg_fail(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

// Warnings (msg_level < 0) include "premature end of data"; treat them as fatal.
void jpeg_message(j_common_ptr cinfo, int msg_level) {
  if (msg_level < 0) jpeg_fail(cinfo);
}

ImageBuffer decode_jpeg(std::span<const std::uint8_t> bytes) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager err{};
  err.stage = "jpeg header";
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_fail;
  err.base.emit_message = jpeg_message;
  ImageBuffer out;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw Error(ErrorCode::decode, std::string(err.stage) + ": " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  err.stage = "jpeg decompress";
  jpeg_start_decompress(&cinfo);
  out = ImageBuffer(static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height));
  err.stage = "jpeg scanlines";
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) *
                                           cinfo.output_width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  err.stage = "jpeg trailer";
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

}  // namespace

ImageBuffer decode_image(std::span<const std::uint8_t> bytes) {
  if (is_png(bytes)) return decode_png(bytes);
  if (is_jpeg(bytes)) return decode_jpeg(bytes);
  throw Error(ErrorCode::decode, "signature: stream is neither PNG nor JPEG");
}

std::vector<std::uint8_t> encode_png(const ImageBuffer& image) {
  if (image.empty()) throw Error(ErrorCode::validation, "cannot encode an empty image");
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.pixels.data(), 0, nullptr)) {
    throw Error(ErrorCode::internal, std::string("png encode: ") + img.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.pixels.data(), 0, nullptr)) {
    throw Error(ErrorCode::internal, std::string("png encode: ") + img.message);
  }
  out.resize(size);
  return out;
}

std::vector<std::uint8_t> encode_jpeg(const ImageBuffer& image, int quality) {
  if (image.empty()) throw Error(ErrorCode::validation, "cannot encode an empty image");
  jpeg_compress_struct cinfo;
  JpegErrorManager err{};
  err.stage = "jpeg encode";
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_fail;
  unsigned char* buffer = nullptr;
  unsigned long size = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::free(buffer);
    throw Error(ErrorCode::internal, std::string(err.stage) + ": " + err.message);
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &buffer, &size);
  cinfo.image_width = static_cast<JDIMENSION>(image.width);
  cinfo.image_height = static_cast<JDIMENSION>(image.height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    auto* row = const_cast<JSAMPROW>(image.pixels.data() +
                                     static_cast<std::size_t>(cinfo.next_scanline) *
                                         image.width * 3);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  std::vector<std::uint8_t> out(buffer, buffer + size);
  jpeg_destroy_compress(&cinfo);
  std::free(buffer);
  return out;
}

void write_png(const std::filesystem::path& path, const ImageBuffer& image) {
  auto bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string(), path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io, "short write to " + path.string(), path.string());
}

}  // namespace carguard

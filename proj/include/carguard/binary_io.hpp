#pragma once

// Little-endian primitive IO for the on-disk formats (CGF1, CGE1, store log).

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "carguard/error.hpp"

namespace carguard {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian; add byte swapping for this target");

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  void write_bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  }
  void write_u16(std::uint16_t v) { write_bytes(&v, sizeof v); }
  void write_u32(std::uint32_t v) { write_bytes(&v, sizeof v); }
  void write_u64(std::uint64_t v) { write_bytes(&v, sizeof v); }
  void write_f32(float v) { write_bytes(&v, sizeof v); }

 private:
  std::ostream& out_;
};

class BinaryReader {
 public:
  BinaryReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  void read_bytes(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw Error(ErrorCode::corrupt, source_ + ": unexpected end of file", source_);
    }
  }
  std::uint16_t read_u16() { return read<std::uint16_t>(); }
  std::uint32_t read_u32() { return read<std::uint32_t>(); }
  std::uint64_t read_u64() { return read<std::uint64_t>(); }
  float read_f32() { return read<float>(); }

 private:
  template <class T>
  T read() {
    T v;
    read_bytes(&v, sizeof v);
    return v;
  }

  std::istream& in_;
  std::string source_;
};

/// Appends little-endian values to a byte buffer.
inline void append_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
  std::uint8_t b[4];
  std::memcpy(b, &v, 4);
  buf.insert(buf.end(), b, b + 4);
}

inline std::uint32_t load_u32(const std::uint8_t* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}

}  // namespace carguard

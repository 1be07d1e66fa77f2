#pragma once

// Binary field dumps.
//
// Layout (all little-endian):
//   16 bytes  magic "UAPODFLD" followed by 7 zero bytes and 0x01
//   12 bytes  uint32 width, height, channels
//   8*w*h*c   IEEE-754 doubles, row-major, channel-interleaved

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "uapod/errors.hpp"
#include "uapod/operator.hpp"

namespace uapod {

inline constexpr std::array<unsigned char, 16> kFieldMagic = {
    'U', 'A', 'P', 'O', 'D', 'F', 'L', 'D', 0, 0, 0, 0, 0, 0, 0, 1};

struct FieldDims {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t channels = 1;

  std::uint64_t count() const noexcept {
    return std::uint64_t{width} * std::uint64_t{height} * std::uint64_t{channels};
  }
  bool operator==(const FieldDims&) const = default;
};

struct Field {
  FieldDims dims;
  Vector values;
};

namespace detail {

template <typename U>
void put_le(std::vector<unsigned char>& buf, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    buf.push_back(static_cast<unsigned char>((value >> (8 * i)) & 0xffu));
  }
}

template <typename U>
U get_le(const unsigned char* p) {
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(p[i]) << (8 * i);
  return value;
}

}  // namespace detail

/// Serialized bytes of a field; the exact content `dump_field` writes.
inline std::vector<unsigned char> encode_field(const Vector& field, const FieldDims& dims) {
  if (static_cast<std::uint64_t>(field.size()) != dims.count()) {
    throw DimensionMismatch("field length " + std::to_string(field.size()) +
                            " differs from width*height*channels " + std::to_string(dims.count()));
  }
  std::vector<unsigned char> buf(kFieldMagic.begin(), kFieldMagic.end());
  buf.reserve(28 + 8 * static_cast<std::size_t>(field.size()));
  detail::put_le(buf, dims.width);
  detail::put_le(buf, dims.height);
  detail::put_le(buf, dims.channels);
  for (Index i = 0; i < field.size(); ++i) detail::put_le(buf, std::bit_cast<std::uint64_t>(field[i]));
  return buf;
}

inline Field decode_field(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 28 || std::memcmp(bytes.data(), kFieldMagic.data(), kFieldMagic.size()) != 0) {
    throw IoError("not a field dump (bad magic or truncated header)");
  }
  Field out;
  out.dims.width = detail::get_le<std::uint32_t>(bytes.data() + 16);
  out.dims.height = detail::get_le<std::uint32_t>(bytes.data() + 20);
  out.dims.channels = detail::get_le<std::uint32_t>(bytes.data() + 24);
  const std::uint64_t count = out.dims.count();
  if (bytes.size() != 28 + 8 * count) throw IoError("field dump payload size mismatch");
  out.values.resize(static_cast<Index>(count));
  for (std::uint64_t i = 0; i < count; ++i) {
    out.values[static_cast<Index>(i)] =
        std::bit_cast<double>(detail::get_le<std::uint64_t>(bytes.data() + 28 + 8 * i));
  }
  return out;
}

inline void dump_field(const std::filesystem::path& path, const Vector& field, const FieldDims& dims) {
  const auto bytes = encode_field(field, dims);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

inline Field load_field(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  return decode_field(bytes);
}

}  // namespace uapod

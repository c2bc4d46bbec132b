#pragma once

// "MEFL" LUT files:
//   magic "MEFL" | u16 version (1) | u16 K | K*256 float32, row-major
// All integers and floats little-endian.

#include <cmath>
#include <filesystem>

#include "meflut/binary.hpp"
#include "meflut/image.hpp"
#include "meflut/image_io.hpp"

namespace meflut {

inline constexpr std::uint16_t kLutFormatVersion = 1;

inline std::vector<std::uint8_t> encode_lut(const LutMatrix& lut) {
  lut.validate();
  if (lut.k_frames() > 0xffff) throw FormatError("too many LUT rows");
  detail::ByteWriter w;
  w.bytes("MEFL");
  w.u16(kLutFormatVersion);
  w.u16(static_cast<std::uint16_t>(lut.k_frames()));
  for (float e : lut.table()) w.f32(e);
  return w.buffer();
}

inline LutMatrix decode_lut(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  if (r.bytes(4) != "MEFL") throw FormatError("not a LUT file (bad magic)");
  const auto version = r.u16();
  if (version != kLutFormatVersion) throw FormatError("unsupported LUT version " + std::to_string(version));
  const std::size_t k = r.u16();
  if (k == 0) throw FormatError("LUT declares zero rows");
  std::vector<float> table(k * kLutSize);
  for (float& e : table) {
    e = r.f32();
    if (std::isnan(e)) throw FormatError("LUT contains NaN");
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after LUT table");
  LutMatrix lut(k, std::move(table));
  lut.validate();
  return lut;
}

inline void write_lut(const LutMatrix& lut, const std::filesystem::path& path) {
  detail::write_file_bytes(path, encode_lut(lut));
}

inline LutMatrix read_lut(const std::filesystem::path& path) { return decode_lut(detail::read_file_bytes(path)); }

}  // namespace meflut

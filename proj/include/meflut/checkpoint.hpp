#pragma once

// "MEFN" network checkpoints, little-endian:
//   magic "MEFN" | u16 version (1)
//   hyper block: u16 K | u16 C | u16 R | R x u16 dilation rates
//   u32 tensor count
//   per tensor, in for_each_tensor order: 4 x u32 dims, then float32 values
// Parameters are held in double precision in memory and stored as float32.

#include <cmath>
#include <filesystem>

#include "meflut/binary.hpp"
#include "meflut/image_io.hpp"
#include "meflut/network.hpp"

namespace meflut {

inline constexpr std::uint16_t kCheckpointVersion = 1;

inline std::vector<std::uint8_t> encode_checkpoint(const NetworkParams& p) {
  check_params(p);
  detail::ByteWriter w;
  w.bytes("MEFN");
  w.u16(kCheckpointVersion);
  w.u16(static_cast<std::uint16_t>(p.k_frames));
  w.u16(static_cast<std::uint16_t>(p.channels));
  w.u16(static_cast<std::uint16_t>(p.rates.size()));
  for (int r : p.rates) w.u16(static_cast<std::uint16_t>(r));
  const auto tensors = tensor_list(p);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const Tensor4* t : tensors) {
    for (int d : t->dims) w.u32(static_cast<std::uint32_t>(d));
    for (double v : t->data) w.f32(static_cast<float>(v));
  }
  return w.buffer();
}

inline NetworkParams decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  if (r.bytes(4) != "MEFN") throw FormatError("not a network checkpoint (bad magic)");
  const auto version = r.u16();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const int k = r.u16();
  const int c = r.u16();
  const int nrates = r.u16();
  std::vector<int> rates;
  for (int i = 0; i < nrates; ++i) rates.push_back(r.u16());
  NetworkParams p;
  try {
    p = zero_params(k, c, rates);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid checkpoint hyperparameters: ") + e.what());
  }
  const auto tensors = tensor_list(p);
  if (r.u32() != tensors.size()) throw FormatError("checkpoint tensor count does not match its hyperparameters");
  for (Tensor4* t : tensors) {
    std::array<int, 4> dims{};
    for (int& d : dims) d = static_cast<int>(r.u32());
    if (dims != t->dims) throw FormatError("checkpoint tensor has unexpected dims");
    for (double& v : t->data) {
      const float f = r.f32();
      if (!std::isfinite(f)) throw FormatError("checkpoint contains a non-finite value");
      v = f;
    }
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint tensors");
  return p;
}

inline void write_checkpoint(const NetworkParams& p, const std::filesystem::path& path) {
  detail::write_file_bytes(path, encode_checkpoint(p));
}

inline NetworkParams read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file_bytes(path));
}

}  // namespace meflut

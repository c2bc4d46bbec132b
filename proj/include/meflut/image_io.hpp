#pragma once

// 8-bit PNG and binary PNM (P5/P6) codecs plus exposure-sequence ingestion.

#include <png.h>

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "meflut/color.hpp"
#include "meflut/error.hpp"
#include "meflut/image.hpp"

namespace meflut {

/// Interleaved 8-bit pixels; channels is 1 (gray) or 3 (RGB).
struct RawImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

inline RawImage decode_png(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw IoError("cannot decode PNG " + name + ": " + img.message);
  }
  if (img.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&img);
    throw IoError("only 8-bit PNG is supported: " + name);
  }
  RawImage out;
  out.width = static_cast<int>(img.width);
  out.height = static_cast<int>(img.height);
  out.channels = (img.format & PNG_FORMAT_FLAG_COLOR) ? 3 : 1;
  img.format = out.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError("cannot decode PNG " + name + ": " + img.message);
  }
  return out;
}

inline RawImage decode_pnm(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  std::size_t pos = 2;
  auto next_token = [&]() -> long {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    long v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > (1L << 24)) throw IoError("PNM header value out of range in " + name);
      ++pos;
      any = true;
    }
    if (!any) throw IoError("malformed PNM header in " + name);
    return v;
  };
  RawImage out;
  out.channels = bytes[1] == '6' ? 3 : 1;
  out.width = static_cast<int>(next_token());
  out.height = static_cast<int>(next_token());
  const long maxval = next_token();
  if (maxval != 255) throw IoError("only 8-bit PNM (maxval 255) is supported: " + name);
  ++pos;  // single whitespace before raster
  const std::size_t n = static_cast<std::size_t>(out.width) * out.height * out.channels;
  if (out.width < 1 || out.height < 1 || pos + n > bytes.size()) throw IoError("truncated PNM raster in " + name);
  out.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return out;
}

}  // namespace detail

inline RawImage read_image(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) return detail::decode_png(bytes, path.string());
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) {
    return detail::decode_pnm(bytes, path.string());
  }
  throw IoError("unrecognized image format: " + path.string());
}

/// Format chosen by extension: .ppm/.pgm/.pnm write binary PNM, anything else PNG.
inline void write_image(const std::filesystem::path& path, const RawImage& img) {
  if (img.channels != 1 && img.channels != 3) throw ShapeError("image must have 1 or 3 channels");
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * img.channels;
  if (img.pixels.size() != n) throw ShapeError("pixel buffer size mismatch");
  const auto ext = path.extension().string();
  if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") {
    std::ostringstream hdr;
    hdr << (img.channels == 3 ? "P6" : "P5") << '\n' << img.width << ' ' << img.height << "\n255\n";
    const std::string h = hdr.str();
    std::vector<std::uint8_t> bytes(h.begin(), h.end());
    bytes.insert(bytes.end(), img.pixels.begin(), img.pixels.end());
    detail::write_file_bytes(path, bytes);
    return;
  }
  png_image pi{};
  pi.version = PNG_IMAGE_VERSION;
  pi.width = static_cast<png_uint_32>(img.width);
  pi.height = static_cast<png_uint_32>(img.height);
  pi.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&pi, nullptr, &size, 0, img.pixels.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode failed: ") + pi.message);
  }
  std::vector<std::uint8_t> bytes(size);
  if (!png_image_write_to_memory(&pi, bytes.data(), &size, 0, img.pixels.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode failed: ") + pi.message);
  }
  bytes.resize(size);
  detail::write_file_bytes(path, bytes);
}

inline YuvImage raw_to_yuv(const RawImage& raw) {
  if (raw.channels == 3) return rgb_image_to_yuv(raw.width, raw.height, raw.pixels);
  return gray_to_yuv(Plane8(raw.width, raw.height, raw.pixels));
}

inline YuvImage read_yuv(const std::filesystem::path& path) { return raw_to_yuv(read_image(path)); }

inline void write_yuv(const std::filesystem::path& path, const YuvImage& img) {
  write_image(path, RawImage{img.width(), img.height(), 3, yuv_image_to_rgb(img)});
}

inline void write_plane(const std::filesystem::path& path, const Plane8& p) {
  write_image(path, RawImage{p.width(), p.height(), 1, p.data()});
}

inline ExposureStack load_sequence(const std::vector<std::filesystem::path>& paths, const std::vector<double>& evs) {
  if (paths.empty()) throw StackShapeError("no input frames given");
  if (paths.size() != evs.size()) {
    throw MetadataError("got " + std::to_string(paths.size()) + " frames but " + std::to_string(evs.size()) +
                        " exposure values");
  }
  for (std::size_t i = 1; i < evs.size(); ++i) {
    if (!(evs[i] > evs[i - 1])) throw MetadataError("exposure values must be strictly increasing");
  }
  ExposureStack stack;
  stack.evs = evs;
  for (const auto& p : paths) {
    stack.frames.push_back(read_yuv(p));
    if (!stack.frames.back().y.same_shape(stack.frames.front().y)) {
      throw StackShapeError("frame " + p.string() + " differs in size from " + paths.front().string());
    }
  }
  return stack;
}

inline constexpr const char* kManifestName = "manifest.tsv";

/// Reads `filename<TAB>ev` lines from dir/manifest.tsv; filenames resolve relative to dir.
inline ExposureStack load_sequence_dir(const std::filesystem::path& dir) {
  const auto manifest = dir / kManifestName;
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open manifest " + manifest.string());
  std::vector<std::filesystem::path> paths;
  std::vector<double> evs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw MetadataError(manifest.string() + ":" + std::to_string(lineno) + ": expected filename<TAB>ev");
    }
    try {
      std::size_t used = 0;
      const std::string ev_text = line.substr(tab + 1);
      evs.push_back(std::stod(ev_text, &used));
      if (used != ev_text.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw MetadataError(manifest.string() + ":" + std::to_string(lineno) + ": bad exposure value");
    }
    paths.push_back(dir / line.substr(0, tab));
  }
  return load_sequence(paths, evs);
}

inline void write_sequence_dir(const std::filesystem::path& dir, const ExposureStack& stack) {
  stack.validate();
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / kManifestName);
  if (!manifest) throw IoError("cannot write manifest in " + dir.string());
  for (std::size_t k = 0; k < stack.k(); ++k) {
    const std::string name = "frame" + std::to_string(k) + ".png";
    write_yuv(dir / name, stack.frames[k]);
    manifest << name << '\t' << stack.evs[k] << '\n';
  }
}

}  // namespace meflut

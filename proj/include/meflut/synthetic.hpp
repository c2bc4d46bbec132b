#pragma once

// Seeded high-dynamic-range test scenes rendered at several exposures.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <vector>

#include "meflut/color.hpp"
#include "meflut/image_io.hpp"
#include "meflut/tensor.hpp"

namespace meflut {

struct SceneConfig {
  int width = 64;
  int height = 64;
  std::vector<double> evs = {-2.0, 0.0, 2.0};
  int blobs = 6;
  double log2_range = 4.0;  // scene radiance spans about 2^-range .. 2^range
  double gamma = 2.2;
  double exposure_gain = 0.25;
};

struct SyntheticSequence {
  ExposureStack stack;
  std::vector<RawImage> rgb;  // exposures as rendered, before YUV conversion
  RawImage reference;          // global tone map of the radiance, for eval
};

namespace detail {

struct Blob {
  double cx, cy, sigma, amp;
  double color[3];
};

}  // namespace detail

/// Linear RGB radiance, row-major, 3 values per pixel.
inline std::vector<double> render_radiance(const SceneConfig& cfg, std::uint64_t seed) {
  SplitMix64 rng(seed);
  const double gx = rng.uniform(-1.0, 1.0) * cfg.log2_range * 0.5;
  const double gy = rng.uniform(-1.0, 1.0) * cfg.log2_range * 0.5;
  const double freq = rng.uniform(4.0, 12.0);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  std::vector<detail::Blob> blobs;
  for (int i = 0; i < cfg.blobs; ++i) {
    detail::Blob b{};
    b.cx = rng.uniform();
    b.cy = rng.uniform();
    b.sigma = rng.uniform(0.05, 0.25);
    b.amp = rng.uniform(-1.0, 1.0) * cfg.log2_range;
    for (double& c : b.color) c = rng.uniform(0.35, 1.0);
    blobs.push_back(b);
  }
  std::vector<double> rad(static_cast<std::size_t>(cfg.width) * cfg.height * 3);
  for (int y = 0; y < cfg.height; ++y) {
    for (int x = 0; x < cfg.width; ++x) {
      const double u = (x + 0.5) / cfg.width;
      const double v = (y + 0.5) / cfg.height;
      double l = gx * (u - 0.5) * 2.0 + gy * (v - 0.5) * 2.0;
      l += 0.4 * std::sin(2.0 * std::numbers::pi * freq * u + phase) * std::cos(2.0 * std::numbers::pi * freq * v);
      double tint[3] = {1.0, 1.0, 1.0};
      for (const auto& b : blobs) {
        const double d2 = (u - b.cx) * (u - b.cx) + (v - b.cy) * (v - b.cy);
        const double g = std::exp(-d2 / (2.0 * b.sigma * b.sigma));
        l += b.amp * g;
        for (int c = 0; c < 3; ++c) tint[c] *= 1.0 - g * (1.0 - b.color[c]);
      }
      l = std::clamp(l, -cfg.log2_range - 2.0, cfg.log2_range + 2.0);
      const double lum = std::exp2(l);
      const std::size_t i = (static_cast<std::size_t>(y) * cfg.width + x) * 3;
      for (int c = 0; c < 3; ++c) rad[i + c] = lum * tint[c];
    }
  }
  return rad;
}

inline RawImage expose(const std::vector<double>& rad, int width, int height, double ev, const SceneConfig& cfg) {
  RawImage img{width, height, 3, std::vector<std::uint8_t>(rad.size())};
  const double gain = cfg.exposure_gain * std::exp2(ev);
  for (std::size_t i = 0; i < rad.size(); ++i) {
    const double v = std::pow(std::clamp(rad[i] * gain, 0.0, 1.0), 1.0 / cfg.gamma);
    img.pixels[i] = detail::round_clamp8(v * 255.0);
  }
  return img;
}

inline SyntheticSequence make_sequence(const SceneConfig& cfg, std::uint64_t seed) {
  if (cfg.width < 1 || cfg.height < 1) throw ConfigError("scene dimensions must be positive");
  if (cfg.evs.empty()) throw ConfigError("scene needs at least one exposure");
  const auto rad = render_radiance(cfg, seed);
  SyntheticSequence seq;
  seq.stack.evs = cfg.evs;
  for (double ev : cfg.evs) {
    seq.rgb.push_back(expose(rad, cfg.width, cfg.height, ev, cfg));
    seq.stack.frames.push_back(raw_to_yuv(seq.rgb.back()));
  }
  seq.reference = RawImage{cfg.width, cfg.height, 3, std::vector<std::uint8_t>(rad.size())};
  for (std::size_t i = 0; i < rad.size(); ++i) {
    const double t = rad[i] * cfg.exposure_gain * 4.0;
    seq.reference.pixels[i] = detail::round_clamp8(std::pow(t / (1.0 + t), 1.0 / cfg.gamma) * 255.0);
  }
  seq.stack.validate();
  return seq;
}

inline std::vector<ExposureStack> make_dataset(const SceneConfig& cfg, int count, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<ExposureStack> out;
  for (int i = 0; i < count; ++i) out.push_back(make_sequence(cfg, rng.next()).stack);
  return out;
}

/// frameN.png + manifest.tsv, plus reference.png.
inline void write_synthetic_dir(const std::filesystem::path& dir, const SyntheticSequence& seq) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / kManifestName);
  if (!manifest) throw IoError("cannot write manifest in " + dir.string());
  for (std::size_t k = 0; k < seq.rgb.size(); ++k) {
    const std::string name = "frame" + std::to_string(k) + ".png";
    write_image(dir / name, seq.rgb[k]);
    manifest << name << '\t' << seq.stack.evs[k] << '\n';
  }
  write_image(dir / "reference.png", seq.reference);
}

}  // namespace meflut

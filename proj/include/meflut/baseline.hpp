#pragma once

// Classical exposure fusion: contrast, saturation and well-exposedness
// quality weights with Laplacian-pyramid (or linear) blending.

#include <cmath>

#include "meflut/color.hpp"
#include "meflut/lut_engine.hpp"
#include "meflut/pyramid.hpp"

namespace meflut {

struct MertensConfig {
  double contrast_exp = 1.0;
  double saturation_exp = 1.0;
  double exposedness_exp = 1.0;
  double sigma = 0.2;
  int levels = 0;  // 0 = default_pyramid_levels of the input

  void validate() const {
    if (contrast_exp < 0.0 || saturation_exp < 0.0 || exposedness_exp < 0.0) {
      throw ConfigError("quality exponents must be >= 0");
    }
    if (!(sigma > 0.0)) throw ConfigError("well-exposedness sigma must be > 0");
    if (levels < 0) throw ConfigError("pyramid levels must be >= 1 (or 0 for the default)");
  }
};

inline constexpr double kMertensWeightFloor = 1e-12;

/// |4-neighbour Laplacian| of a real plane, edge-replicated.
inline PlaneR laplacian_magnitude(const PlaneR& p) {
  const int w = p.width();
  const int h = p.height();
  PlaneR out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double c = p(x, y);
      const double l = p(std::max(0, x - 1), y) + p(std::min(w - 1, x + 1), y) + p(x, std::max(0, y - 1)) +
                       p(x, std::min(h - 1, y + 1)) - 4.0 * c;
      out(x, y) = std::abs(l);
    }
  }
  return out;
}

/// Per-pixel quality of one frame before normalization.
inline PlaneR mertens_quality(const YuvImage& frame, const MertensConfig& cfg) {
  const PlaneR contrast = laplacian_magnitude(to_unit(frame.y));
  const int w = frame.width();
  const int h = frame.height();
  PlaneR q(w, h);
  const double inv2s2 = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
  for (std::size_t i = 0; i < q.size(); ++i) {
    double rgb[3];
    yuv_to_rgb_unit(frame.y.data()[i], frame.u.data()[i], frame.v.data()[i], rgb[0], rgb[1], rgb[2]);
    const double mean = (rgb[0] + rgb[1] + rgb[2]) / 3.0;
    double var = 0.0;
    double expo = 1.0;
    for (double c : rgb) {
      var += (c - mean) * (c - mean);
      expo *= std::exp(-(c - 0.5) * (c - 0.5) * inv2s2);
    }
    const double sat = std::sqrt(var / 3.0);
    q.data()[i] = std::pow(contrast.data()[i], cfg.contrast_exp) * std::pow(sat, cfg.saturation_exp) *
                      std::pow(expo, cfg.exposedness_exp) +
                  kMertensWeightFloor;
  }
  return q;
}

/// Quality weights normalized to sum to one per pixel.
inline WeightMaps mertens_weights(const ExposureStack& stack, const MertensConfig& cfg = {}) {
  cfg.validate();
  stack.validate_shape();
  WeightMaps w;
  for (const auto& f : stack.frames) w.planes.push_back(mertens_quality(f, cfg));
  for (std::size_t i = 0; i < w.planes.front().size(); ++i) {
    double s = 0.0;
    for (const auto& p : w.planes) s += p.data()[i];
    for (auto& p : w.planes) p.data()[i] /= s;
  }
  return w;
}

/// Full baseline fusion. Luma and both chroma planes are blended with the
/// same weights; levels = 1 gives linear blending.
inline FuseResult fuse_mertens_detailed(const ExposureStack& stack, const MertensConfig& cfg = {}) {
  const ExposureStack sorted = sort_by_ev(stack);
  const WeightMaps w = mertens_weights(sorted, cfg);
  const int levels = cfg.levels > 0 ? cfg.levels : default_pyramid_levels(sorted.width(), sorted.height());
  std::vector<PlaneR> ys, us, vs;
  for (const auto& f : sorted.frames) {
    ys.push_back(to_unit(f.y));
    us.push_back(to_unit(f.u));
    vs.push_back(to_unit(f.v));
  }
  FuseResult out;
  out.image.y = quantize(pyramid_blend(ys, w.planes, levels));
  out.image.u = quantize(pyramid_blend(us, w.planes, levels));
  out.image.v = quantize(pyramid_blend(vs, w.planes, levels));
  out.weights = w;
  return out;
}

inline YuvImage fuse_mertens(const ExposureStack& stack, const MertensConfig& cfg = {}) {
  return fuse_mertens_detailed(stack, cfg).image;
}

}  // namespace meflut

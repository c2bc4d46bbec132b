#pragma once

// Gaussian / Laplacian pyramids with the 5-tap binomial kernel and edge
// replication, and multi-resolution luma blending.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <vector>

#include "meflut/error.hpp"
#include "meflut/image.hpp"

namespace meflut {

inline constexpr std::array<double, 5> kBinomial5 = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};

/// floor(log2(min(w, h))): the deepest pyramid a plane supports.
inline int max_pyramid_levels(int width, int height) {
  return std::bit_width(static_cast<unsigned>(std::min(width, height))) - 1;
}

inline int default_pyramid_levels(int width, int height) {
  return std::max(1, max_pyramid_levels(width, height) - 2);
}

/// Blur with edge replication, then keep even rows and columns.
inline PlaneR pyramid_reduce(const PlaneR& p) {
  const int w = p.width();
  const int h = p.height();
  const int ow = (w + 1) / 2;
  const int oh = (h + 1) / 2;
  PlaneR horiz(ow, h);
  for (int y = 0; y < h; ++y) {
    const double* src = p.row(y);
    double* dst = horiz.row(y);
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int t = -2; t <= 2; ++t) s += kBinomial5[t + 2] * src[std::clamp(2 * x + t, 0, w - 1)];
      dst[x] = s;
    }
  }
  PlaneR out(ow, oh);
  for (int y = 0; y < oh; ++y) {
    double* dst = out.row(y);
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int t = -2; t <= 2; ++t) s += kBinomial5[t + 2] * horiz(x, std::clamp(2 * y + t, 0, h - 1));
      dst[x] = s;
    }
  }
  return out;
}

/// Interpolating expand to (w, h): fine sample i gathers coarse samples j
/// with |i - 2j| <= 2 using weights 2 * kernel(i - 2j), coarse indices
/// clamped at the border. Taps sum to one for every output sample.
inline PlaneR pyramid_expand(const PlaneR& coarse, int w, int h) {
  const int cw = coarse.width();
  const int ch = coarse.height();
  auto gather = [](auto&& at, int i, int n) {
    double s = 0.0;
    for (int j = (i - 2 + 1) / 2 - 1; j <= (i + 2) / 2; ++j) {
      const int d = i - 2 * j;
      if (d < -2 || d > 2) continue;
      s += 2.0 * kBinomial5[d + 2] * at(std::clamp(j, 0, n - 1));
    }
    return s;
  };
  PlaneR horiz(w, ch);
  for (int y = 0; y < ch; ++y) {
    const double* src = coarse.row(y);
    double* dst = horiz.row(y);
    for (int x = 0; x < w; ++x) dst[x] = gather([&](int j) { return src[j]; }, x, cw);
  }
  PlaneR out(w, h);
  for (int y = 0; y < h; ++y) {
    double* dst = out.row(y);
    for (int x = 0; x < w; ++x) dst[x] = gather([&](int j) { return horiz(x, j); }, y, ch);
  }
  return out;
}

inline std::vector<PlaneR> gaussian_pyramid(const PlaneR& p, int levels) {
  std::vector<PlaneR> pyr{p};
  for (int l = 1; l < levels; ++l) pyr.push_back(pyramid_reduce(pyr.back()));
  return pyr;
}

inline std::vector<PlaneR> laplacian_pyramid(const PlaneR& p, int levels) {
  std::vector<PlaneR> g = gaussian_pyramid(p, levels);
  for (int l = 0; l + 1 < levels; ++l) {
    const PlaneR up = pyramid_expand(g[l + 1], g[l].width(), g[l].height());
    for (std::size_t i = 0; i < up.size(); ++i) g[l].data()[i] -= up.data()[i];
  }
  return g;
}

inline PlaneR collapse_pyramid(const std::vector<PlaneR>& lap) {
  PlaneR acc = lap.back();
  for (int l = static_cast<int>(lap.size()) - 2; l >= 0; --l) {
    PlaneR up = pyramid_expand(acc, lap[l].width(), lap[l].height());
    for (std::size_t i = 0; i < up.size(); ++i) up.data()[i] += lap[l].data()[i];
    acc = std::move(up);
  }
  return acc;
}

/// Laplacian-pyramid blend of luma planes with normalized weights. One level
/// is the plain per-pixel alpha blend. The result is clamped to [0,1].
inline PlaneR pyramid_blend(const std::vector<PlaneR>& ystack, const std::vector<PlaneR>& weights, int levels) {
  if (ystack.empty() || ystack.size() != weights.size()) {
    throw StackShapeError("pyramid blend needs one weight plane per frame");
  }
  for (std::size_t k = 0; k < ystack.size(); ++k) {
    if (!ystack[k].same_shape(ystack.front()) || !weights[k].same_shape(ystack.front())) {
      throw StackShapeError("pyramid blend planes differ in dimensions");
    }
  }
  const int max_levels = max_pyramid_levels(ystack.front().width(), ystack.front().height());
  if (levels < 1 || levels > max_levels) {
    throw ConfigError("pyramid levels must be in [1, " + std::to_string(max_levels) + "], got " +
                      std::to_string(levels));
  }
  std::vector<PlaneR> blended;
  for (std::size_t k = 0; k < ystack.size(); ++k) {
    const auto lap = laplacian_pyramid(ystack[k], levels);
    const auto gw = gaussian_pyramid(weights[k], levels);
    if (blended.empty()) {
      for (const auto& l : lap) blended.emplace_back(l.width(), l.height(), 0.0);
    }
    for (int l = 0; l < levels; ++l) {
      auto& dst = blended[l].data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gw[l].data()[i] * lap[l].data()[i];
    }
  }
  PlaneR out = collapse_pyramid(blended);
  for (double& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

}  // namespace meflut

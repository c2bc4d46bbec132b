#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "meflut/error.hpp"
#include "meflut/image.hpp"

namespace meflut {

namespace detail {

// Two-tap linear interpolation taps along one axis. Output sample i sits at
// source coordinate (i + 0.5) * step - 0.5, clamped to the valid range.
struct AxisTaps {
  std::vector<int> i0, i1;
  std::vector<double> f;  // weight of i1
};

inline AxisTaps make_axis_taps(int out_len, int src_len, double step) {
  AxisTaps t;
  t.i0.resize(out_len);
  t.i1.resize(out_len);
  t.f.resize(out_len);
  for (int i = 0; i < out_len; ++i) {
    double c = (i + 0.5) * step - 0.5;
    c = std::clamp(c, 0.0, static_cast<double>(src_len - 1));
    const int lo = static_cast<int>(std::floor(c));
    const int hi = std::min(lo + 1, src_len - 1);
    t.i0[i] = lo;
    t.i1[i] = hi;
    t.f[i] = c - lo;
  }
  return t;
}

template <typename T>
PlaneR bilinear_resample(const Plane<T>& src, int out_w, int out_h, double step_x, double step_y, double scale) {
  const AxisTaps tx = make_axis_taps(out_w, src.width(), step_x);
  const AxisTaps ty = make_axis_taps(out_h, src.height(), step_y);
  PlaneR out(out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    const T* r0 = src.row(ty.i0[y]);
    const T* r1 = src.row(ty.i1[y]);
    const double fy = ty.f[y];
    double* o = out.row(y);
    for (int x = 0; x < out_w; ++x) {
      const double fx = tx.f[x];
      const double top = static_cast<double>(r0[tx.i0[x]]) * (1.0 - fx) + static_cast<double>(r0[tx.i1[x]]) * fx;
      const double bot = static_cast<double>(r1[tx.i0[x]]) * (1.0 - fx) + static_cast<double>(r1[tx.i1[x]]) * fx;
      o[x] = (top * (1.0 - fy) + bot * fy) * scale;
    }
  }
  return out;
}

}  // namespace detail

/// Bilinear downsampling at integer rate s with half-pixel centers; the
/// result is in [0,1]. Output is ceil(H/s) x ceil(W/s).
inline PlaneR downsample_bilinear(const Plane8& p, int s) {
  if (s < 1) throw ConfigError("downsampling rate must be >= 1, got " + std::to_string(s));
  const int ow = (p.width() + s - 1) / s;
  const int oh = (p.height() + s - 1) / s;
  PlaneR out = detail::bilinear_resample(p, ow, oh, s, s, 1.0);
  for (double& v : out.data()) v /= 255.0;
  return out;
}

/// Bilinear resize of a real plane to (out_w, out_h), half-pixel centers.
inline PlaneR resize_bilinear(const PlaneR& p, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw ShapeError("resize target must be positive");
  return detail::bilinear_resample(p, out_w, out_h, static_cast<double>(p.width()) / out_w,
                                   static_cast<double>(p.height()) / out_h, 1.0);
}

/// Integer rate bringing the short side down to [target_min, 2*target_min).
inline int choose_rate(int h, int w, int target_min = 128) {
  if (target_min < 1) throw ConfigError("target_min must be >= 1");
  return std::max(1, std::min(h, w) / target_min);
}

}  // namespace meflut

#pragma once

// Single-scale MEF-SSIM of a fused luma plane against its exposure stack,
// and its exact gradient with respect to the fused plane.
//
// For every window x window patch (stride 1, valid positions) with stack
// patches x_k and fused patch y, mean-removed as x~_k and y~:
//   c_k    = |x~_k|,  c^ = max_k c_k
//   s^     = sum_k x~_k / |sum_k x~_k|      (structure, weights w_k = c_k)
//   x^     = c^ * s^                         (desired patch)
//   score  = (2 <x^, y~> + C) / (|x^|^2 + |y~|^2 + C),  C = stability_c * N
// with N = window^2. Patches whose aggregated structure vanishes score 1.
// Every patch statistic is a window sum, so both the score and its
// gradient reduce to separable box sums.

#include <algorithm>
#include <cmath>
#include <vector>

#include "meflut/error.hpp"
#include "meflut/image.hpp"

namespace meflut {

struct MefSsimConfig {
  int window = 7;
  double stability_c = 0.03 * 0.03;
};

/// Squared structure norm per pixel below which a patch counts as flat.
inline constexpr double kFlatPatchTol = 1e-12;

namespace detail {

/// Sum over every window x window patch; result is (W-win+1) x (H-win+1),
/// indexed by the patch's top-left corner.
inline PlaneR window_sums(const PlaneR& p, int win) {
  const int w = p.width();
  const int h = p.height();
  const int gw = w - win + 1;
  const int gh = h - win + 1;
  PlaneR horiz(gw, h);
  for (int y = 0; y < h; ++y) {
    const double* src = p.row(y);
    double* dst = horiz.row(y);
    for (int x = 0; x < gw; ++x) {
      double s = 0.0;
      for (int t = 0; t < win; ++t) s += src[x + t];
      dst[x] = s;
    }
  }
  PlaneR out(gw, gh, 0.0);
  for (int y = 0; y < gh; ++y) {
    double* dst = out.row(y);
    for (int t = 0; t < win; ++t) {
      const double* src = horiz.row(y + t);
      for (int x = 0; x < gw; ++x) dst[x] += src[x];
    }
  }
  return out;
}

/// Adjoint of window_sums: each pixel receives the sum of the grid values
/// of every patch that covers it.
inline PlaneR window_scatter(const PlaneR& grid, int win, int w, int h) {
  const int gw = grid.width();
  const int gh = grid.height();
  PlaneR horiz(w, gh);
  for (int y = 0; y < gh; ++y) {
    const double* src = grid.row(y);
    double* dst = horiz.row(y);
    for (int x = 0; x < w; ++x) {
      const int lo = std::max(0, x - win + 1);
      const int hi = std::min(gw - 1, x);
      double s = 0.0;
      for (int t = lo; t <= hi; ++t) s += src[t];
      dst[x] = s;
    }
  }
  PlaneR out(w, h, 0.0);
  for (int y = 0; y < h; ++y) {
    const int lo = std::max(0, y - win + 1);
    const int hi = std::min(gh - 1, y);
    double* dst = out.row(y);
    for (int t = lo; t <= hi; ++t) {
      const double* src = horiz.row(t);
      for (int x = 0; x < w; ++x) dst[x] += src[x];
    }
  }
  return out;
}

inline PlaneR product(const PlaneR& a, const PlaneR& b) {
  PlaneR out(a.width(), a.height());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  return out;
}

inline void check_mef_inputs(const std::vector<PlaneR>& ystack, const PlaneR& fused, int window) {
  if (ystack.empty()) throw ShapeError("MEF-SSIM needs at least one exposure");
  for (const auto& y : ystack) {
    if (!y.same_shape(fused)) throw ShapeError("MEF-SSIM inputs differ in dimensions");
  }
  if (window < 1 || window > fused.width() || window > fused.height()) {
    throw ShapeError("MEF-SSIM window " + std::to_string(window) + " does not fit a " +
                     std::to_string(fused.width()) + "x" + std::to_string(fused.height()) + " image");
  }
}

}  // namespace detail

struct MefSsimResult {
  double score = 1.0;
  PlaneR gradient;  // d score / d fused; empty unless requested
};

inline MefSsimResult mef_ssim_evaluate(const std::vector<PlaneR>& ystack, const PlaneR& fused,
                                       const MefSsimConfig& cfg, bool with_gradient) {
  detail::check_mef_inputs(ystack, fused, cfg.window);
  const int win = cfg.window;
  const double n = static_cast<double>(win) * win;
  const double c2 = cfg.stability_c * n;
  const int w = fused.width();
  const int h = fused.height();

  PlaneR sum_all(w, h, 0.0);
  std::vector<PlaneR> sx, sxx;
  for (const auto& x : ystack) {
    for (std::size_t i = 0; i < x.size(); ++i) sum_all.data()[i] += x.data()[i];
    sx.push_back(detail::window_sums(x, win));
    sxx.push_back(detail::window_sums(detail::product(x, x), win));
  }
  const PlaneR sX = detail::window_sums(sum_all, win);
  const PlaneR sXX = detail::window_sums(detail::product(sum_all, sum_all), win);
  const PlaneR sy = detail::window_sums(fused, win);
  const PlaneR syy = detail::window_sums(detail::product(fused, fused), win);
  const PlaneR sXy = detail::window_sums(detail::product(sum_all, fused), win);

  const int gw = sX.width();
  const int gh = sX.height();
  const double patches = static_cast<double>(gw) * gh;
  PlaneR coef_x, coef_xmean, coef_y, coef_ymean;
  if (with_gradient) {
    coef_x = PlaneR(gw, gh, 0.0);
    coef_xmean = PlaneR(gw, gh, 0.0);
    coef_y = PlaneR(gw, gh, 0.0);
    coef_ymean = PlaneR(gw, gh, 0.0);
  }
  double total = 0.0;
  for (std::size_t p = 0; p < sX.size(); ++p) {
    double c_hat2 = 0.0;
    for (std::size_t k = 0; k < ystack.size(); ++k) {
      const double sk = sx[k].data()[p];
      c_hat2 = std::max(c_hat2, std::max(0.0, sxx[k].data()[p] - sk * sk / n));
    }
    const double q = std::max(0.0, sXX.data()[p] - sX.data()[p] * sX.data()[p] / n);
    if (q <= kFlatPatchTol * n) {
      total += 1.0;
      continue;
    }
    const double beta = std::sqrt(c_hat2 / q);
    const double cross = sXy.data()[p] - sX.data()[p] * sy.data()[p] / n;
    const double a = beta * cross;
    const double yvar = std::max(0.0, syy.data()[p] - sy.data()[p] * sy.data()[p] / n);
    const double den = c_hat2 + yvar + c2;
    const double score = (2.0 * a + c2) / den;
    total += score;
    if (with_gradient) {
      // d score / d y(i) = A (X(i) - mean X) - B (y(i) - mean y) for i in the patch.
      const double ca = 2.0 * beta / den;
      const double cb = 2.0 * score / den;
      coef_x.data()[p] = ca;
      coef_xmean.data()[p] = ca * sX.data()[p] / n;
      coef_y.data()[p] = cb;
      coef_ymean.data()[p] = cb * sy.data()[p] / n;
    }
  }
  MefSsimResult result;
  result.score = total / patches;
  if (with_gradient) {
    const PlaneR gx = detail::window_scatter(coef_x, win, w, h);
    const PlaneR gxm = detail::window_scatter(coef_xmean, win, w, h);
    const PlaneR gy = detail::window_scatter(coef_y, win, w, h);
    const PlaneR gym = detail::window_scatter(coef_ymean, win, w, h);
    result.gradient = PlaneR(w, h);
    for (std::size_t i = 0; i < result.gradient.size(); ++i) {
      result.gradient.data()[i] = (sum_all.data()[i] * gx.data()[i] - gxm.data()[i] -
                                   fused.data()[i] * gy.data()[i] + gym.data()[i]) /
                                  patches;
    }
  }
  return result;
}

inline double mef_ssim_score(const std::vector<PlaneR>& ystack, const PlaneR& fused, const MefSsimConfig& cfg = {}) {
  return mef_ssim_evaluate(ystack, fused, cfg, false).score;
}

inline double mef_ssim_score(const std::vector<PlaneR>& ystack, const PlaneR& fused, int window, double stability_c) {
  return mef_ssim_score(ystack, fused, MefSsimConfig{window, stability_c});
}

}  // namespace meflut

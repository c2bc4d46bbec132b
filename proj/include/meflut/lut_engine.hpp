#pragma once

// LUT deployment path: per-pixel table query, weight normalization, guided
// filter upsampling, luma blending and chroma merging.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "meflut/error.hpp"
#include "meflut/image.hpp"
#include "meflut/parallel.hpp"
#include "meflut/pyramid.hpp"
#include "meflut/resample.hpp"

namespace meflut {

/// K per-pixel weight planes of identical size.
struct WeightMaps {
  std::vector<PlaneR> planes;

  std::size_t k_frames() const noexcept { return planes.size(); }
  int width() const { return planes.at(0).width(); }
  int height() const { return planes.at(0).height(); }

  void validate() const {
    if (planes.empty()) throw StackShapeError("weight maps are empty");
    for (const auto& p : planes) {
      if (!p.same_shape(planes.front())) throw StackShapeError("weight planes differ in dimensions");
    }
  }
};

enum class Upsample { Gfu, Bilinear };

struct FusionConfig {
  int gfu_radius = 2;
  double gfu_eps = 1e-4;
  double norm_eps = 1e-8;
  int target_min = 128;
  Upsample upsample = Upsample::Gfu;
  // 1 = linear alpha blend; > 1 blends luma with a Laplacian pyramid.
  int pyramid_levels = 1;
  // Upper bound on worker threads; 1 is the bitwise reference mode.
  int threads = 1;

  void validate() const {
    if (gfu_radius < 1) throw ConfigError("gfu_radius must be >= 1");
    if (!(gfu_eps > 0.0)) throw ConfigError("gfu_eps must be > 0");
    if (!(norm_eps > 0.0)) throw ConfigError("norm_eps must be > 0");
    if (target_min < 1) throw ConfigError("target_min must be >= 1");
    if (pyramid_levels < 1) throw ConfigError("pyramid_levels must be >= 1");
    if (threads < 1) throw ConfigError("threads must be >= 1");
  }
};

/// Looks up L(k, v) for every pixel value v of low-res frame k.
inline WeightMaps query_weights(const LutMatrix& lut, const std::vector<Plane8>& ylow, int threads = 1) {
  if (lut.k_frames() != ylow.size()) {
    throw StackShapeError("LUT has " + std::to_string(lut.k_frames()) + " rows but stack has " +
                          std::to_string(ylow.size()) + " frames");
  }
  WeightMaps w;
  w.planes.reserve(ylow.size());
  for (std::size_t k = 0; k < ylow.size(); ++k) {
    if (!ylow[k].same_shape(ylow.front())) throw StackShapeError("low-res planes differ in dimensions");
    w.planes.emplace_back(ylow[k].width(), ylow[k].height());
  }
  const int width = ylow.front().width();
  parallel_for(ylow.front().height(), threads, [&](int y0, int y1) {
    for (std::size_t k = 0; k < ylow.size(); ++k) {
      const auto row = lut.row(k);
      for (int y = y0; y < y1; ++y) {
        const std::uint8_t* src = ylow[k].row(y);
        double* dst = w.planes[k].row(y);
        for (int x = 0; x < width; ++x) dst[x] = row[src[x]];
      }
    }
  });
  return w;
}

/// out_k = (w_k + eps) / sum_j (w_j + eps), per pixel.
inline WeightMaps normalize_weights(const WeightMaps& w, double norm_eps, int threads = 1) {
  w.validate();
  if (!(norm_eps > 0.0)) throw ConfigError("norm_eps must be > 0");
  WeightMaps out = w;
  const std::size_t k_frames = w.k_frames();
  const int width = w.width();
  parallel_for(w.height(), threads, [&](int y0, int y1) {
    for (int y = y0; y < y1; ++y) {
      for (int x = 0; x < width; ++x) {
        double sum = 0.0;
        for (std::size_t k = 0; k < k_frames; ++k) {
          const double v = w.planes[k].row(y)[x];
          if (!(v >= 0.0) || !std::isfinite(v)) {
            throw WeightDomainError("weights must be finite and nonnegative");
          }
          sum += v + norm_eps;
        }
        for (std::size_t k = 0; k < k_frames; ++k) {
          out.planes[k].row(y)[x] = (w.planes[k].row(y)[x] + norm_eps) / sum;
        }
      }
    }
  });
  return out;
}

/// Mean over the (2r+1)^2 window clipped to the image.
inline PlaneR box_mean(const PlaneR& p, int radius, int threads = 1) {
  const int w = p.width();
  const int h = p.height();
  PlaneR horiz(w, h);
  parallel_for(h, threads, [&](int y0, int y1) {
    for (int y = y0; y < y1; ++y) {
      const double* src = p.row(y);
      double* dst = horiz.row(y);
      for (int x = 0; x < w; ++x) {
        const int lo = std::max(0, x - radius);
        const int hi = std::min(w - 1, x + radius);
        double s = 0.0;
        for (int i = lo; i <= hi; ++i) s += src[i];
        dst[x] = s / (hi - lo + 1);
      }
    }
  });
  PlaneR out(w, h);
  parallel_for(h, threads, [&](int y0, int y1) {
    for (int y = y0; y < y1; ++y) {
      const int lo = std::max(0, y - radius);
      const int hi = std::min(h - 1, y + radius);
      double* dst = out.row(y);
      std::fill(dst, dst + w, 0.0);
      for (int i = lo; i <= hi; ++i) {
        const double* src = horiz.row(i);
        for (int x = 0; x < w; ++x) dst[x] += src[x];
      }
      const double n = hi - lo + 1;
      for (int x = 0; x < w; ++x) dst[x] /= n;
    }
  });
  return out;
}

/// Box-smoothed guided filter coefficients (mean_a, mean_b) for input p and guide I.
struct GuidedCoefficients {
  PlaneR a;
  PlaneR b;
};

inline GuidedCoefficients guided_coefficients(const PlaneR& guide, const PlaneR& input, int radius, double eps,
                                              int threads = 1) {
  if (!guide.same_shape(input)) throw StackShapeError("guide and input must share dimensions");
  const std::size_t n = guide.size();
  PlaneR ip(guide.width(), guide.height());
  PlaneR ii(guide.width(), guide.height());
  for (std::size_t i = 0; i < n; ++i) {
    ip.data()[i] = guide.data()[i] * input.data()[i];
    ii.data()[i] = guide.data()[i] * guide.data()[i];
  }
  const PlaneR mean_i = box_mean(guide, radius, threads);
  const PlaneR mean_p = box_mean(input, radius, threads);
  const PlaneR corr_ip = box_mean(ip, radius, threads);
  const PlaneR corr_ii = box_mean(ii, radius, threads);
  PlaneR a(guide.width(), guide.height());
  PlaneR b(guide.width(), guide.height());
  for (std::size_t i = 0; i < n; ++i) {
    const double mi = mean_i.data()[i];
    const double var = corr_ii.data()[i] - mi * mi;
    const double cov = corr_ip.data()[i] - mi * mean_p.data()[i];
    a.data()[i] = cov / (var + eps);
    b.data()[i] = mean_p.data()[i] - a.data()[i] * mi;
  }
  return {box_mean(a, radius, threads), box_mean(b, radius, threads)};
}

/// Guided-filter upsampling: coefficients are fit at low resolution against
/// the low-res guide, bilinearly resized and applied to the full-res guide.
inline PlaneR gfu_upsample(const PlaneR& wlow, const PlaneR& ylow, const PlaneR& yfull, int radius, double eps,
                           int threads = 1) {
  if (!wlow.same_shape(ylow)) throw StackShapeError("low-res weight and guide differ in dimensions");
  if (yfull.width() < ylow.width() || yfull.height() < ylow.height()) {
    throw StackShapeError("full-res guide is smaller than the low-res guide");
  }
  if (radius < 1) throw ConfigError("gfu radius must be >= 1");
  if (!(eps > 0.0)) throw ConfigError("gfu eps must be > 0");
  const GuidedCoefficients c = guided_coefficients(ylow, wlow, radius, eps, threads);
  const int w = yfull.width();
  const int h = yfull.height();
  const bool same = yfull.same_shape(ylow);
  const PlaneR a = same ? c.a : resize_bilinear(c.a, w, h);
  const PlaneR b = same ? c.b : resize_bilinear(c.b, w, h);
  PlaneR out(w, h);
  parallel_for(h, threads, [&](int y0, int y1) {
    for (int y = y0; y < y1; ++y) {
      const double* ar = a.row(y);
      const double* br = b.row(y);
      const double* g = yfull.row(y);
      double* o = out.row(y);
      for (int x = 0; x < w; ++x) o[x] = std::max(0.0, ar[x] * g[x] + br[x]);
    }
  });
  return out;
}

/// Y = sum_k W_k * Y_k, clamped to [0,1]. Weights must already sum to one.
inline PlaneR blend_y(const std::vector<PlaneR>& ystack, const WeightMaps& w, int threads = 1) {
  w.validate();
  if (ystack.size() != w.k_frames()) throw StackShapeError("weight count does not match frame count");
  for (const auto& y : ystack) {
    if (!y.same_shape(w.planes.front())) throw StackShapeError("frame and weight dimensions differ");
  }
  const int width = w.width();
  PlaneR out(width, w.height());
  parallel_for(w.height(), threads, [&](int y0, int y1) {
    for (int y = y0; y < y1; ++y) {
      double* o = out.row(y);
      for (int x = 0; x < width; ++x) {
        double acc = 0.0;
        double wsum = 0.0;
        for (std::size_t k = 0; k < ystack.size(); ++k) {
          const double wk = w.planes[k].row(y)[x];
          wsum += wk;
          acc += wk * ystack[k].row(y)[x];
        }
        if (std::abs(wsum - 1.0) > 1e-3 || !std::isfinite(wsum)) {
          throw WeightDomainError("blend weights at (" + std::to_string(x) + "," + std::to_string(y) +
                                  ") sum to " + std::to_string(wsum));
        }
        o[x] = std::clamp(acc, 0.0, 1.0);
      }
    }
  });
  return out;
}

/// Chroma merge weighted by distance from the neutral value tau:
/// P = sum |P_k - tau| P_k / sum |P_k - tau|, tau when every frame is neutral.
inline Plane8 merge_uv(const std::vector<const Plane8*>& planes, int tau = 128, int threads = 1) {
  if (planes.empty()) throw StackShapeError("no chroma planes to merge");
  for (const auto* p : planes) {
    if (!p->same_shape(*planes.front())) throw StackShapeError("chroma planes differ in dimensions");
  }
  const int width = planes.front()->width();
  Plane8 out(width, planes.front()->height());
  parallel_for(out.height(), threads, [&](int y0, int y1) {
    for (int y = y0; y < y1; ++y) {
      std::uint8_t* o = out.row(y);
      for (int x = 0; x < width; ++x) {
        std::int64_t num = 0;
        std::int64_t den = 0;
        for (const auto* p : planes) {
          const int v = p->row(y)[x];
          const int d = std::abs(v - tau);
          num += static_cast<std::int64_t>(d) * v;
          den += d;
        }
        // Integer round-half-up of num / den.
        o[x] = den == 0 ? static_cast<std::uint8_t>(tau)
                        : static_cast<std::uint8_t>(std::min<std::int64_t>(255, (2 * num + den) / (2 * den)));
      }
    }
  });
  return out;
}

inline Plane8 merge_uv(const std::vector<Plane8>& planes, int tau = 128, int threads = 1) {
  std::vector<const Plane8*> ptrs;
  for (const auto& p : planes) ptrs.push_back(&p);
  return merge_uv(ptrs, tau, threads);
}

namespace detail {

inline Plane8 average_planes(const std::vector<const Plane8*>& planes) {
  Plane8 out(planes.front()->width(), planes.front()->height());
  const std::int64_t n = static_cast<std::int64_t>(planes.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::int64_t s = 0;
    for (const auto* p : planes) s += p->data()[i];
    out.data()[i] = static_cast<std::uint8_t>((2 * s + n) / (2 * n));
  }
  return out;
}

}  // namespace detail

/// Maps a K-frame stack onto k_lut frames in EV order. Extra frames are
/// averaged in contiguous groups; missing frames are filled by repeating
/// frames, earlier ones first when the split is uneven.
inline ExposureStack adapt_frame_count(const ExposureStack& stack, std::size_t k_lut) {
  stack.validate_shape();
  if (k_lut < 1) throw ConfigError("LUT frame count must be >= 1");
  const std::size_t k = stack.k();
  if (k == k_lut) return stack;
  ExposureStack out;
  if (k > k_lut) {
    const std::size_t base = k / k_lut;
    const std::size_t rem = k % k_lut;
    std::size_t start = 0;
    for (std::size_t g = 0; g < k_lut; ++g) {
      const std::size_t n = base + (g < rem ? 1 : 0);
      std::vector<const Plane8*> ys, us, vs;
      double ev = 0.0;
      for (std::size_t i = start; i < start + n; ++i) {
        ys.push_back(&stack.frames[i].y);
        us.push_back(&stack.frames[i].u);
        vs.push_back(&stack.frames[i].v);
        ev += stack.evs[i];
      }
      out.frames.push_back(
          YuvImage{detail::average_planes(ys), detail::average_planes(us), detail::average_planes(vs)});
      out.evs.push_back(ev / static_cast<double>(n));
      start += n;
    }
  } else {
    const std::size_t base = k_lut / k;
    const std::size_t rem = k_lut % k;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t n = base + (i < rem ? 1 : 0);
      for (std::size_t r = 0; r < n; ++r) {
        out.frames.push_back(stack.frames[i]);
        out.evs.push_back(stack.evs[i]);
      }
    }
  }
  return out;
}

/// Stable sort of frames (and their LUT rows) by EV.
inline std::vector<std::size_t> ev_order(const std::vector<double>& evs) {
  std::vector<std::size_t> idx(evs.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return evs[a] < evs[b]; });
  return idx;
}

inline bool is_identity(const std::vector<std::size_t>& order) {
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i] != i) return false;
  }
  return true;
}

inline ExposureStack sort_by_ev(const ExposureStack& stack, LutMatrix* lut = nullptr) {
  const auto order = ev_order(stack.evs);
  if (is_identity(order)) return stack;
  ExposureStack out;
  for (std::size_t i : order) {
    out.frames.push_back(stack.frames[i]);
    out.evs.push_back(stack.evs[i]);
  }
  if (lut != nullptr && lut->k_frames() == stack.k()) {
    LutMatrix sorted(lut->k_frames());
    for (std::size_t i = 0; i < order.size(); ++i) {
      for (int v = 0; v < kLutSize; ++v) sorted.at(i, v) = lut->at(order[i], v);
    }
    *lut = std::move(sorted);
  }
  return out;
}

/// Low-resolution luma of a stack at rate s: real-valued (guide) and
/// requantized to 8 bits (LUT / network input).
struct LowResLuma {
  int rate = 1;
  std::vector<PlaneR> real;
  std::vector<Plane8> quantized;
};

inline LowResLuma downsample_luma(const ExposureStack& stack, int target_min) {
  LowResLuma low;
  low.rate = choose_rate(stack.height(), stack.width(), target_min);
  for (const auto& f : stack.frames) {
    low.real.push_back(downsample_bilinear(f.y, low.rate));
    low.quantized.push_back(quantize(low.real.back()));
  }
  return low;
}

struct FuseResult {
  YuvImage image;
  WeightMaps weights;  // normalized full-resolution blend weights
};

/// Shared back half of every weight-map fusion path: upsample normalized
/// low-res weights, renormalize, blend Y and merge chroma. The stack must
/// already be in EV order with K matching the weights.
inline FuseResult fuse_from_low_weights(const ExposureStack& stack, const WeightMaps& low_weights,
                                        const std::vector<PlaneR>& ylow, const FusionConfig& cfg) {
  const int w = stack.width();
  const int h = stack.height();
  std::vector<PlaneR> yfull;
  yfull.reserve(stack.k());
  for (const auto& f : stack.frames) yfull.push_back(to_unit(f.y));

  WeightMaps full;
  full.planes.reserve(stack.k());
  for (std::size_t k = 0; k < stack.k(); ++k) {
    const PlaneR& wl = low_weights.planes[k];
    if (wl.width() == w && wl.height() == h && cfg.upsample == Upsample::Bilinear) {
      full.planes.push_back(wl);
    } else if (cfg.upsample == Upsample::Gfu) {
      full.planes.push_back(gfu_upsample(wl, ylow[k], yfull[k], cfg.gfu_radius, cfg.gfu_eps, cfg.threads));
    } else {
      full.planes.push_back(resize_bilinear(wl, w, h));
    }
  }
  full = normalize_weights(full, cfg.norm_eps, cfg.threads);

  const PlaneR yh = cfg.pyramid_levels > 1 ? pyramid_blend(yfull, full.planes, cfg.pyramid_levels)
                                           : blend_y(yfull, full, cfg.threads);
  FuseResult result;
  result.image.y = quantize(yh);
  std::vector<const Plane8*> us, vs;
  for (const auto& f : stack.frames) {
    us.push_back(&f.u);
    vs.push_back(&f.v);
  }
  result.image.u = merge_uv(us, 128, cfg.threads);
  result.image.v = merge_uv(vs, 128, cfg.threads);
  result.weights = std::move(full);
  return result;
}

/// Puts the stack in EV order (carrying LUT rows along) and adapts its frame
/// count to the LUT.
inline ExposureStack prepare_stack(const ExposureStack& stack, LutMatrix& lut) {
  stack.validate_shape();
  lut.validate();
  ExposureStack sorted = sort_by_ev(stack, &lut);
  return adapt_frame_count(sorted, lut.k_frames());
}

inline FuseResult fuse_detailed(const ExposureStack& stack, const LutMatrix& lut, const FusionConfig& cfg = {}) {
  cfg.validate();
  LutMatrix rows = lut;
  const ExposureStack prepared = prepare_stack(stack, rows);
  const LowResLuma low = downsample_luma(prepared, cfg.target_min);
  const WeightMaps raw = query_weights(rows, low.quantized, cfg.threads);
  const WeightMaps norm = normalize_weights(raw, cfg.norm_eps, cfg.threads);
  return fuse_from_low_weights(prepared, norm, low.real, cfg);
}

/// LUT fusion: adapt -> downsample -> quantize -> query -> normalize ->
/// upsample -> renormalize -> blend Y -> merge U/V.
inline YuvImage fuse(const ExposureStack& stack, const LutMatrix& lut, const FusionConfig& cfg = {}) {
  return fuse_detailed(stack, lut, cfg).image;
}

/// LUT fusion queried directly at full resolution, with no upsampling stage.
inline YuvImage fuse_full_resolution(const ExposureStack& stack, const LutMatrix& lut, const FusionConfig& cfg = {}) {
  cfg.validate();
  LutMatrix rows = lut;
  const ExposureStack prepared = prepare_stack(stack, rows);
  std::vector<Plane8> ys;
  for (const auto& f : prepared.frames) ys.push_back(f.y);
  const WeightMaps norm = normalize_weights(query_weights(rows, ys, cfg.threads), cfg.norm_eps, cfg.threads);
  FusionConfig direct = cfg;
  direct.upsample = Upsample::Bilinear;
  std::vector<PlaneR> unused;
  return fuse_from_low_weights(prepared, norm, unused, direct).image;
}

}  // namespace meflut

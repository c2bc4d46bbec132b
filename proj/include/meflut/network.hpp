#pragma once

// Weight-prediction CNN: shared stem convolution, channel-then-frame
// attention over the stacked features, a dilated inception block with
// spatial attention per frame, a 3x3 head, and a softmax across frames.
// Forward passes record what the reverse pass needs.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "meflut/error.hpp"
#include "meflut/image.hpp"
#include "meflut/lut_engine.hpp"
#include "meflut/parallel.hpp"
#include "meflut/tensor.hpp"

namespace meflut {

struct NetworkParams {
  int k_frames = 0;
  int channels = 0;
  std::vector<int> rates;

  Tensor4 stem_w, stem_b;  // [C,1,3,3], [C]
  Tensor4 ca_w1, ca_b1;    // [C/4,C], [C/4]
  Tensor4 ca_w2, ca_b2;    // [C,C/4], [C]
  Tensor4 fa_w1, fa_b1;    // [K,K], [K]
  Tensor4 fa_w2, fa_b2;    // [K,K], [K]
  std::vector<Tensor4> branch_w, branch_b;  // per rate: [C,C,3,3], [C]
  std::vector<Tensor4> sa_w, sa_b;          // per rate: [1,2,7,7], [1]
  Tensor4 head_w, head_b;                   // [1,R*C,3,3], [1]

  friend bool operator==(const NetworkParams&, const NetworkParams&) = default;
};

/// Gradients share the parameter layout.
using GradientSet = NetworkParams;

/// Visits every tensor in declaration order: stem, channel attention,
/// frame attention, branch convolutions (all rates), spatial attention
/// (all rates), head.
template <typename P, typename Fn>
void for_each_tensor(P& p, Fn&& fn) {
  fn("stem_w", p.stem_w);
  fn("stem_b", p.stem_b);
  fn("ca_w1", p.ca_w1);
  fn("ca_b1", p.ca_b1);
  fn("ca_w2", p.ca_w2);
  fn("ca_b2", p.ca_b2);
  fn("fa_w1", p.fa_w1);
  fn("fa_b1", p.fa_b1);
  fn("fa_w2", p.fa_w2);
  fn("fa_b2", p.fa_b2);
  for (std::size_t i = 0; i < p.branch_w.size(); ++i) {
    fn("branch_w" + std::to_string(i), p.branch_w[i]);
    fn("branch_b" + std::to_string(i), p.branch_b[i]);
  }
  for (std::size_t i = 0; i < p.sa_w.size(); ++i) {
    fn("sa_w" + std::to_string(i), p.sa_w[i]);
    fn("sa_b" + std::to_string(i), p.sa_b[i]);
  }
  fn("head_w", p.head_w);
  fn("head_b", p.head_b);
}

inline constexpr int kSpatialKernel = 7;

/// Zero-initialized parameters for K frames, C channels and the given rates.
inline NetworkParams zero_params(int k_frames, int channels, std::vector<int> rates = {2, 4, 8}) {
  if (k_frames < 1) throw ConfigError("network needs K >= 1");
  if (channels < 4 || channels % 4 != 0) throw ConfigError("channel count must be a positive multiple of 4");
  if (rates.empty()) throw ConfigError("network needs at least one dilation rate");
  for (int r : rates) {
    if (r < 1) throw ConfigError("dilation rates must be >= 1");
  }
  const int c = channels;
  const int r = static_cast<int>(rates.size());
  NetworkParams p;
  p.k_frames = k_frames;
  p.channels = c;
  p.rates = std::move(rates);
  p.stem_w = Tensor4(c, 1, 3, 3);
  p.stem_b = Tensor4(c, 1, 1, 1);
  p.ca_w1 = Tensor4(c / 4, c, 1, 1);
  p.ca_b1 = Tensor4(c / 4, 1, 1, 1);
  p.ca_w2 = Tensor4(c, c / 4, 1, 1);
  p.ca_b2 = Tensor4(c, 1, 1, 1);
  p.fa_w1 = Tensor4(k_frames, k_frames, 1, 1);
  p.fa_b1 = Tensor4(k_frames, 1, 1, 1);
  p.fa_w2 = Tensor4(k_frames, k_frames, 1, 1);
  p.fa_b2 = Tensor4(k_frames, 1, 1, 1);
  for (int i = 0; i < r; ++i) {
    p.branch_w.emplace_back(c, c, 3, 3);
    p.branch_b.emplace_back(c, 1, 1, 1);
    p.sa_w.emplace_back(1, 2, kSpatialKernel, kSpatialKernel);
    p.sa_b.emplace_back(1, 1, 1, 1);
  }
  p.head_w = Tensor4(1, r * c, 3, 3);
  p.head_b = Tensor4(1, 1, 1, 1);
  return p;
}

/// Flat list of tensor pointers in declaration order.
inline std::vector<Tensor4*> tensor_list(NetworkParams& p) {
  std::vector<Tensor4*> out;
  for_each_tensor(p, [&](const std::string&, Tensor4& t) { out.push_back(&t); });
  return out;
}

inline std::vector<const Tensor4*> tensor_list(const NetworkParams& p) {
  std::vector<const Tensor4*> out;
  for_each_tensor(p, [&](const std::string&, const Tensor4& t) { out.push_back(&t); });
  return out;
}

inline std::size_t parameter_count(const NetworkParams& p) {
  std::size_t n = 0;
  for (const Tensor4* t : tensor_list(p)) n += t->size();
  return n;
}

/// dst += src, tensor by tensor.
inline void accumulate(NetworkParams& dst, const NetworkParams& src) {
  const auto d = tensor_list(dst);
  const auto s = tensor_list(src);
  if (d.size() != s.size()) throw ShapeError("parameter layouts differ");
  for (std::size_t t = 0; t < d.size(); ++t) {
    if (!d[t]->same_dims(*s[t])) throw ShapeError("parameter layouts differ");
    for (std::size_t i = 0; i < d[t]->size(); ++i) d[t]->data[i] += s[t]->data[i];
  }
}

inline NetworkParams zeros_like(const NetworkParams& p) {
  NetworkParams z = p;
  for_each_tensor(z, [](const std::string&, Tensor4& t) { std::fill(t.data.begin(), t.data.end(), 0.0); });
  return z;
}

/// Biases zero; weights uniform in +-1/sqrt(fan_in) from a seeded stream.
inline NetworkParams init_params(int k_frames, int channels, std::uint64_t seed, std::vector<int> rates = {2, 4, 8}) {
  NetworkParams p = zero_params(k_frames, channels, std::move(rates));
  SplitMix64 rng(seed);
  auto fill = [&](Tensor4& t) {
    const double fan_in = static_cast<double>(t.c()) * t.h() * t.w();
    const double bound = 1.0 / std::sqrt(fan_in);
    for (double& v : t.data) v = rng.uniform(-bound, bound);
  };
  fill(p.stem_w);
  fill(p.ca_w1);
  fill(p.ca_w2);
  fill(p.fa_w1);
  fill(p.fa_w2);
  for (auto& t : p.branch_w) fill(t);
  for (auto& t : p.sa_w) fill(t);
  fill(p.head_w);
  return p;
}

inline void check_params(const NetworkParams& p) {
  auto expect = [](const Tensor4& t, std::array<int, 4> d, const char* name) {
    if (t.dims != d) throw ShapeError(std::string("parameter ") + name + " has dims " + dims_string(t));
  };
  const int c = p.channels;
  const int k = p.k_frames;
  if (k < 1 || c < 4 || c % 4 != 0) throw ShapeError("invalid network hyperparameters");
  const std::size_t r = p.rates.size();
  if (r == 0 || p.branch_w.size() != r || p.branch_b.size() != r || p.sa_w.size() != r || p.sa_b.size() != r) {
    throw ShapeError("branch tensors do not match the rate list");
  }
  expect(p.stem_w, {c, 1, 3, 3}, "stem_w");
  expect(p.stem_b, {c, 1, 1, 1}, "stem_b");
  expect(p.ca_w1, {c / 4, c, 1, 1}, "ca_w1");
  expect(p.ca_b1, {c / 4, 1, 1, 1}, "ca_b1");
  expect(p.ca_w2, {c, c / 4, 1, 1}, "ca_w2");
  expect(p.ca_b2, {c, 1, 1, 1}, "ca_b2");
  expect(p.fa_w1, {k, k, 1, 1}, "fa_w1");
  expect(p.fa_b1, {k, 1, 1, 1}, "fa_b1");
  expect(p.fa_w2, {k, k, 1, 1}, "fa_w2");
  expect(p.fa_b2, {k, 1, 1, 1}, "fa_b2");
  for (std::size_t i = 0; i < r; ++i) {
    expect(p.branch_w[i], {c, c, 3, 3}, "branch_w");
    expect(p.branch_b[i], {c, 1, 1, 1}, "branch_b");
    expect(p.sa_w[i], {1, 2, kSpatialKernel, kSpatialKernel}, "sa_w");
    expect(p.sa_b[i], {1, 1, 1, 1}, "sa_b");
  }
  expect(p.head_w, {1, static_cast<int>(r) * c, 3, 3}, "head_w");
  expect(p.head_b, {1, 1, 1, 1}, "head_b");
}

// ---------------------------------------------------------------------------
// Convolution: stride 1, zero "same" padding, cross-correlation.

namespace detail {

struct Tap {
  int dy, dx;
};

inline Tap kernel_tap(const Tensor4& k, int ky, int kx, int dilation) {
  return {(ky - k.h() / 2) * dilation, (kx - k.w() / 2) * dilation};
}

inline void check_conv(const Tensor4& kernel, int cin, int dilation) {
  if (kernel.c() != cin) {
    throw ShapeError("kernel expects " + std::to_string(kernel.c()) + " input channels, got " + std::to_string(cin));
  }
  if (kernel.h() % 2 == 0 || kernel.w() % 2 == 0) throw ShapeError("kernel sizes must be odd");
  if (dilation < 1) throw ShapeError("dilation must be >= 1");
}

}  // namespace detail

/// out (kernel.n() planes of h x w) = bias + conv(in). `in` holds cin planes.
inline void conv2d_raw(const double* in, int cin, int h, int w, const Tensor4& kernel, const Tensor4* bias,
                       int dilation, double* out) {
  detail::check_conv(kernel, cin, dilation);
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int co = 0; co < kernel.n(); ++co) {
    double* o = out + co * hw;
    std::fill(o, o + hw, bias != nullptr ? bias->data[co] : 0.0);
    for (int ci = 0; ci < cin; ++ci) {
      const double* src = in + ci * hw;
      for (int ky = 0; ky < kernel.h(); ++ky) {
        for (int kx = 0; kx < kernel.w(); ++kx) {
          const double wv = kernel.at(co, ci, ky, kx);
          if (wv == 0.0) continue;
          const auto [dy, dx] = detail::kernel_tap(kernel, ky, kx, dilation);
          const int y0 = std::max(0, -dy);
          const int y1 = std::min(h, h - dy);
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(w, w - dx);
          for (int y = y0; y < y1; ++y) {
            double* orow = o + static_cast<std::size_t>(y) * w;
            const double* irow = src + static_cast<std::size_t>(y + dy) * w + dx;
            for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x];
          }
        }
      }
    }
  }
}

/// Accumulates dkernel (and dbias, din when non-null) given dout.
inline void conv2d_backward_raw(const double* in, int cin, int h, int w, const Tensor4& kernel, int dilation,
                                const double* dout, double* din, Tensor4& dkernel, Tensor4* dbias) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int co = 0; co < kernel.n(); ++co) {
    const double* g = dout + co * hw;
    if (dbias != nullptr) {
      double s = 0.0;
      for (std::size_t i = 0; i < hw; ++i) s += g[i];
      dbias->data[co] += s;
    }
    for (int ci = 0; ci < cin; ++ci) {
      const double* src = in + ci * hw;
      double* dsrc = din != nullptr ? din + ci * hw : nullptr;
      for (int ky = 0; ky < kernel.h(); ++ky) {
        for (int kx = 0; kx < kernel.w(); ++kx) {
          const auto [dy, dx] = detail::kernel_tap(kernel, ky, kx, dilation);
          const int y0 = std::max(0, -dy);
          const int y1 = std::min(h, h - dy);
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(w, w - dx);
          const double wv = kernel.at(co, ci, ky, kx);
          double acc = 0.0;
          for (int y = y0; y < y1; ++y) {
            const double* grow = g + static_cast<std::size_t>(y) * w;
            const double* irow = src + static_cast<std::size_t>(y + dy) * w + dx;
            for (int x = x0; x < x1; ++x) acc += grow[x] * irow[x];
            if (dsrc != nullptr) {
              double* drow = dsrc + static_cast<std::size_t>(y + dy) * w + dx;
              for (int x = x0; x < x1; ++x) drow[x] += wv * grow[x];
            }
          }
          dkernel.at(co, ci, ky, kx) += acc;
        }
      }
    }
  }
}

/// Same-padded convolution of x = [1, Cin, H, W].
inline Tensor4 conv2d(const Tensor4& x, const Tensor4& kernel, const Tensor4* bias = nullptr, int dilation = 1) {
  if (x.n() != 1) throw ShapeError("conv2d expects a single [1,C,H,W] slice");
  if (bias != nullptr && bias->size() != static_cast<std::size_t>(kernel.n())) {
    throw ShapeError("bias length does not match output channels");
  }
  Tensor4 out(1, kernel.n(), x.h(), x.w());
  conv2d_raw(x.data.data(), x.c(), x.h(), x.w(), kernel, bias, dilation, out.data.data());
  return out;
}

inline double sigmoid(double z) noexcept { return 1.0 / (1.0 + std::exp(-z)); }

namespace detail {

// y = W x + b for W stored as [out, in, 1, 1].
inline void linear(const Tensor4& wt, const Tensor4& b, const double* x, double* y) {
  const int out = wt.n();
  const int in = wt.c();
  for (int o = 0; o < out; ++o) {
    double s = b.data[o];
    for (int i = 0; i < in; ++i) s += wt.data[static_cast<std::size_t>(o) * in + i] * x[i];
    y[o] = s;
  }
}

// Backward of y = W x + b given dy: accumulates dW, db and writes dx.
inline void linear_backward(const Tensor4& wt, const double* x, const double* dy, Tensor4& dw, Tensor4& db,
                            double* dx) {
  const int out = wt.n();
  const int in = wt.c();
  for (int i = 0; i < in; ++i) dx[i] = 0.0;
  for (int o = 0; o < out; ++o) {
    db.data[o] += dy[o];
    for (int i = 0; i < in; ++i) {
      dw.data[static_cast<std::size_t>(o) * in + i] += dy[o] * x[i];
      dx[i] += wt.data[static_cast<std::size_t>(o) * in + i] * dy[o];
    }
  }
}

// Two-layer gate sigma(W2 relu(W1 p + b1) + b2); records hidden and gate.
inline void gate_mlp(const Tensor4& w1, const Tensor4& b1, const Tensor4& w2, const Tensor4& b2, const double* p,
                     double* hidden, double* gate) {
  linear(w1, b1, p, hidden);
  for (int i = 0; i < w1.n(); ++i) hidden[i] = std::max(0.0, hidden[i]);
  linear(w2, b2, hidden, gate);
  for (int i = 0; i < w2.n(); ++i) gate[i] = sigmoid(gate[i]);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Channel and frame attention.

struct CfcaCache {
  Tensor4 pooled_c;  // [K, C] spatial means of Y
  Tensor4 hidden_c;  // [K, C/4]
  Tensor4 gate_c;    // [K, C]
  Tensor4 yc;        // [K, C, H, W] channel-gated features
  Tensor4 pooled_f;  // [C, K] spatial means of Y^C, grouped per channel
  Tensor4 hidden_f;  // [C, K]
  Tensor4 gate_f;    // [C, K]
};

/// Gates y = [K, C, H, W] per (k, c): first by an MLP over each frame's
/// channel means, then by an MLP over each channel's per-frame means.
inline Tensor4 cfca_forward(const Tensor4& y, const NetworkParams& p, CfcaCache* cache = nullptr) {
  const int k_frames = y.n();
  const int c = y.c();
  if (k_frames != p.k_frames || c != p.channels) {
    throw ShapeError("CFCA input " + dims_string(y) + " does not match network K/C");
  }
  const std::size_t hw = y.plane_size();
  const double inv = 1.0 / static_cast<double>(hw);
  CfcaCache local;
  CfcaCache& cc = cache != nullptr ? *cache : local;
  cc.pooled_c = Tensor4(k_frames, c, 1, 1);
  cc.hidden_c = Tensor4(k_frames, c / 4, 1, 1);
  cc.gate_c = Tensor4(k_frames, c, 1, 1);
  cc.yc = y;
  for (int k = 0; k < k_frames; ++k) {
    for (int ch = 0; ch < c; ++ch) {
      const double* src = y.plane(k, ch);
      double s = 0.0;
      for (std::size_t i = 0; i < hw; ++i) s += src[i];
      cc.pooled_c.data[static_cast<std::size_t>(k) * c + ch] = s * inv;
    }
    detail::gate_mlp(p.ca_w1, p.ca_b1, p.ca_w2, p.ca_b2, &cc.pooled_c.data[static_cast<std::size_t>(k) * c],
                     &cc.hidden_c.data[static_cast<std::size_t>(k) * (c / 4)],
                     &cc.gate_c.data[static_cast<std::size_t>(k) * c]);
    for (int ch = 0; ch < c; ++ch) {
      const double g = cc.gate_c.data[static_cast<std::size_t>(k) * c + ch];
      double* dst = cc.yc.plane(k, ch);
      for (std::size_t i = 0; i < hw; ++i) dst[i] *= g;
    }
  }
  cc.pooled_f = Tensor4(c, k_frames, 1, 1);
  cc.hidden_f = Tensor4(c, k_frames, 1, 1);
  cc.gate_f = Tensor4(c, k_frames, 1, 1);
  Tensor4 x = cc.yc;
  for (int ch = 0; ch < c; ++ch) {
    for (int k = 0; k < k_frames; ++k) {
      const double* src = cc.yc.plane(k, ch);
      double s = 0.0;
      for (std::size_t i = 0; i < hw; ++i) s += src[i];
      cc.pooled_f.data[static_cast<std::size_t>(ch) * k_frames + k] = s * inv;
    }
    detail::gate_mlp(p.fa_w1, p.fa_b1, p.fa_w2, p.fa_b2, &cc.pooled_f.data[static_cast<std::size_t>(ch) * k_frames],
                     &cc.hidden_f.data[static_cast<std::size_t>(ch) * k_frames],
                     &cc.gate_f.data[static_cast<std::size_t>(ch) * k_frames]);
    for (int k = 0; k < k_frames; ++k) {
      const double g = cc.gate_f.data[static_cast<std::size_t>(ch) * k_frames + k];
      double* dst = x.plane(k, ch);
      for (std::size_t i = 0; i < hw; ++i) dst[i] *= g;
    }
  }
  return x;
}

// ---------------------------------------------------------------------------
// Dilated inception with spatial attention, one frame at a time.

struct DisaCache {
  std::vector<Tensor4> features;  // per rate: [1, C, H, W] after ReLU
  std::vector<Tensor4> pooled;    // per rate: [1, 2, H, W] channel mean / max
  std::vector<std::vector<int>> argmax;
  std::vector<std::vector<double>> gate;  // per rate: H*W sigmoid values
  Tensor4 concat;                         // [1, R*C, H, W] gated features
};

/// One frame's features x = C planes of h x w to its raw (pre-softmax) weight map.
inline PlaneR disa_forward(const double* x, int h, int w, const NetworkParams& p, DisaCache* cache = nullptr) {
  const int c = p.channels;
  const int r = static_cast<int>(p.rates.size());
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  DisaCache local;
  DisaCache& dc = cache != nullptr ? *cache : local;
  dc.features.assign(r, Tensor4());
  dc.pooled.assign(r, Tensor4());
  dc.argmax.assign(r, {});
  dc.gate.assign(r, {});
  dc.concat = Tensor4(1, r * c, h, w);
  for (int b = 0; b < r; ++b) {
    Tensor4& d = dc.features[b];
    d = Tensor4(1, c, h, w);
    conv2d_raw(x, c, h, w, p.branch_w[b], &p.branch_b[b], p.rates[b], d.data.data());
    for (double& v : d.data) v = std::max(0.0, v);

    Tensor4& m = dc.pooled[b];
    m = Tensor4(1, 2, h, w);
    auto& am = dc.argmax[b];
    am.assign(hw, 0);
    double* mean = m.plane(0, 0);
    double* mx = m.plane(0, 1);
    for (std::size_t i = 0; i < hw; ++i) {
      mean[i] = 0.0;
      mx[i] = d.data[i];
    }
    for (int ch = 0; ch < c; ++ch) {
      const double* src = d.plane(0, ch);
      for (std::size_t i = 0; i < hw; ++i) {
        mean[i] += src[i];
        if (src[i] > mx[i]) {
          mx[i] = src[i];
          am[i] = ch;
        }
      }
    }
    for (std::size_t i = 0; i < hw; ++i) mean[i] /= c;

    auto& g = dc.gate[b];
    g.resize(hw);
    conv2d_raw(m.data.data(), 2, h, w, p.sa_w[b], &p.sa_b[b], 1, g.data());
    for (double& v : g) v = sigmoid(v);
    for (int ch = 0; ch < c; ++ch) {
      const double* src = d.plane(0, ch);
      double* dst = dc.concat.plane(0, b * c + ch);
      for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] * g[i];
    }
  }
  PlaneR raw(w, h);
  conv2d_raw(dc.concat.data.data(), r * c, h, w, p.head_w, &p.head_b, 1, raw.data().data());
  return raw;
}

// ---------------------------------------------------------------------------
// Full network.

struct ForwardCache {
  std::vector<PlaneR> input;
  Tensor4 stem;  // [K, C, H, W] after ReLU
  CfcaCache cfca;
  Tensor4 x;  // CFCA output
  std::vector<DisaCache> disa;
  std::vector<PlaneR> raw;
  WeightMaps weights;
};

/// Per-pixel softmax across frames.
inline WeightMaps softmax_frames(const std::vector<PlaneR>& raw) {
  WeightMaps out;
  out.planes = raw;
  const std::size_t n = raw.front().size();
  const std::size_t k_frames = raw.size();
  for (std::size_t i = 0; i < n; ++i) {
    double mx = raw[0].data()[i];
    for (std::size_t k = 1; k < k_frames; ++k) mx = std::max(mx, raw[k].data()[i]);
    double s = 0.0;
    for (std::size_t k = 0; k < k_frames; ++k) {
      const double e = std::exp(raw[k].data()[i] - mx);
      out.planes[k].data()[i] = e;
      s += e;
    }
    for (std::size_t k = 0; k < k_frames; ++k) out.planes[k].data()[i] /= s;
  }
  return out;
}

/// K low-res luma planes in [0,1] to K normalized weight maps.
/// `threads` parallelizes the per-frame spatial-attention stage.
inline WeightMaps network_forward(const std::vector<PlaneR>& ylow, const NetworkParams& p,
                                  ForwardCache* cache = nullptr, int threads = 1) {
  check_params(p);
  if (ylow.size() != static_cast<std::size_t>(p.k_frames)) {
    throw ShapeError("network expects " + std::to_string(p.k_frames) + " frames, got " +
                     std::to_string(ylow.size()));
  }
  for (const auto& y : ylow) {
    if (!y.same_shape(ylow.front())) throw ShapeError("network input planes differ in dimensions");
  }
  const int k_frames = p.k_frames;
  const int c = p.channels;
  const int h = ylow.front().height();
  const int w = ylow.front().width();
  ForwardCache local;
  ForwardCache& fc = cache != nullptr ? *cache : local;
  fc.input = ylow;
  fc.stem = Tensor4(k_frames, c, h, w);
  for (int k = 0; k < k_frames; ++k) {
    conv2d_raw(ylow[k].data().data(), 1, h, w, p.stem_w, &p.stem_b, 1, fc.stem.plane(k, 0));
  }
  for (double& v : fc.stem.data) v = std::max(0.0, v);
  fc.x = cfca_forward(fc.stem, p, &fc.cfca);
  fc.disa.assign(k_frames, DisaCache{});
  fc.raw.assign(k_frames, PlaneR());
  parallel_for(k_frames, threads, [&](int k0, int k1) {
    for (int k = k0; k < k1; ++k) fc.raw[k] = disa_forward(fc.x.plane(k, 0), h, w, p, &fc.disa[k]);
  });
  fc.weights = softmax_frames(fc.raw);
  if (cache == nullptr) return std::move(fc.weights);
  return fc.weights;
}

// ---------------------------------------------------------------------------
// Reverse pass.

namespace detail {

// Backward of one frame's DISA given d(raw); accumulates parameter grads,
// returns d(x) as C planes.
inline std::vector<double> disa_backward(const double* x, int h, int w, const NetworkParams& p, const DisaCache& dc,
                                         const PlaneR& draw, GradientSet& g) {
  const int c = p.channels;
  const int r = static_cast<int>(p.rates.size());
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  Tensor4 dconcat(1, r * c, h, w);
  conv2d_backward_raw(dc.concat.data.data(), r * c, h, w, p.head_w, 1, draw.data().data(), dconcat.data.data(),
                      g.head_w, &g.head_b);
  std::vector<double> dx(static_cast<std::size_t>(c) * hw, 0.0);
  std::vector<double> dgate(hw);
  Tensor4 dpooled(1, 2, h, w);
  Tensor4 dd(1, c, h, w);
  for (int b = 0; b < r; ++b) {
    const Tensor4& d = dc.features[b];
    const auto& gate = dc.gate[b];
    std::fill(dgate.begin(), dgate.end(), 0.0);
    for (int ch = 0; ch < c; ++ch) {
      const double* gin = dconcat.plane(0, b * c + ch);
      const double* src = d.plane(0, ch);
      double* dst = dd.plane(0, ch);
      for (std::size_t i = 0; i < hw; ++i) {
        dst[i] = gin[i] * gate[i];
        dgate[i] += gin[i] * src[i];
      }
    }
    for (std::size_t i = 0; i < hw; ++i) dgate[i] *= gate[i] * (1.0 - gate[i]);
    std::fill(dpooled.data.begin(), dpooled.data.end(), 0.0);
    conv2d_backward_raw(dc.pooled[b].data.data(), 2, h, w, p.sa_w[b], 1, dgate.data(), dpooled.data.data(),
                        g.sa_w[b], &g.sa_b[b]);
    const double* dmean = dpooled.plane(0, 0);
    const double* dmax = dpooled.plane(0, 1);
    const auto& am = dc.argmax[b];
    for (int ch = 0; ch < c; ++ch) {
      double* dst = dd.plane(0, ch);
      const double* src = d.plane(0, ch);
      for (std::size_t i = 0; i < hw; ++i) {
        double v = dst[i] + dmean[i] / c;
        if (am[i] == ch) v += dmax[i];
        dst[i] = src[i] > 0.0 ? v : 0.0;
      }
    }
    conv2d_backward_raw(x, c, h, w, p.branch_w[b], p.rates[b], dd.data.data(), dx.data(), g.branch_w[b],
                        &g.branch_b[b]);
  }
  return dx;
}

}  // namespace detail

/// Parameter gradients given d(loss)/d(normalized weight map) per frame.
/// The cache must come from network_forward on the same parameters.
inline GradientSet network_backward(const NetworkParams& p, const ForwardCache& fc, const std::vector<PlaneR>& dweights,
                                    int threads = 1) {
  const int k_frames = p.k_frames;
  const int c = p.channels;
  const int h = fc.input.front().height();
  const int w = fc.input.front().width();
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const double inv = 1.0 / static_cast<double>(hw);
  if (dweights.size() != static_cast<std::size_t>(k_frames)) throw ShapeError("weight gradient count mismatch");

  // Softmax.
  std::vector<PlaneR> draw(k_frames, PlaneR(w, h));
  for (std::size_t i = 0; i < hw; ++i) {
    double dot = 0.0;
    for (int k = 0; k < k_frames; ++k) dot += fc.weights.planes[k].data()[i] * dweights[k].data()[i];
    for (int k = 0; k < k_frames; ++k) {
      draw[k].data()[i] = fc.weights.planes[k].data()[i] * (dweights[k].data()[i] - dot);
    }
  }

  // DISA per frame; per-frame grads are summed in frame order afterwards.
  std::vector<GradientSet> frame_grads(k_frames, zeros_like(p));
  Tensor4 dx(k_frames, c, h, w);
  parallel_for(k_frames, threads, [&](int k0, int k1) {
    for (int k = k0; k < k1; ++k) {
      auto d = detail::disa_backward(fc.x.plane(k, 0), h, w, p, fc.disa[k], draw[k], frame_grads[k]);
      std::copy(d.begin(), d.end(), dx.plane(k, 0));
    }
  });
  GradientSet g = zeros_like(p);
  for (int k = 0; k < k_frames; ++k) accumulate(g, frame_grads[k]);

  const CfcaCache& cc = fc.cfca;
  // Frame attention: X[k,c] = YC[k,c] * gate_f[c,k].
  Tensor4 dyc(k_frames, c, h, w);
  std::vector<double> dgate(k_frames), dz(k_frames), dh(k_frames), dpool(k_frames);
  for (int ch = 0; ch < c; ++ch) {
    const double* gate = &cc.gate_f.data[static_cast<std::size_t>(ch) * k_frames];
    const double* hidden = &cc.hidden_f.data[static_cast<std::size_t>(ch) * k_frames];
    const double* pooled = &cc.pooled_f.data[static_cast<std::size_t>(ch) * k_frames];
    for (int k = 0; k < k_frames; ++k) {
      const double* gx = dx.plane(k, ch);
      const double* yc = cc.yc.plane(k, ch);
      double* out = dyc.plane(k, ch);
      double s = 0.0;
      for (std::size_t i = 0; i < hw; ++i) {
        out[i] = gx[i] * gate[k];
        s += gx[i] * yc[i];
      }
      dgate[k] = s;
      dz[k] = s * gate[k] * (1.0 - gate[k]);
    }
    detail::linear_backward(p.fa_w2, hidden, dz.data(), g.fa_w2, g.fa_b2, dh.data());
    for (int k = 0; k < k_frames; ++k) dh[k] = hidden[k] > 0.0 ? dh[k] : 0.0;
    detail::linear_backward(p.fa_w1, pooled, dh.data(), g.fa_w1, g.fa_b1, dpool.data());
    for (int k = 0; k < k_frames; ++k) {
      double* out = dyc.plane(k, ch);
      const double add = dpool[k] * inv;
      for (std::size_t i = 0; i < hw; ++i) out[i] += add;
    }
  }

  // Channel attention: YC[k,c] = Y[k,c] * gate_c[k,c].
  Tensor4 dy(k_frames, c, h, w);
  const int hidden_c = c / 4;
  std::vector<double> dzc(c), dhc(hidden_c), dpc(c);
  for (int k = 0; k < k_frames; ++k) {
    const double* gate = &cc.gate_c.data[static_cast<std::size_t>(k) * c];
    const double* hidden = &cc.hidden_c.data[static_cast<std::size_t>(k) * hidden_c];
    const double* pooled = &cc.pooled_c.data[static_cast<std::size_t>(k) * c];
    for (int ch = 0; ch < c; ++ch) {
      const double* gyc = dyc.plane(k, ch);
      const double* y = fc.stem.plane(k, ch);
      double* out = dy.plane(k, ch);
      double s = 0.0;
      for (std::size_t i = 0; i < hw; ++i) {
        out[i] = gyc[i] * gate[ch];
        s += gyc[i] * y[i];
      }
      dzc[ch] = s * gate[ch] * (1.0 - gate[ch]);
    }
    detail::linear_backward(p.ca_w2, hidden, dzc.data(), g.ca_w2, g.ca_b2, dhc.data());
    for (int i = 0; i < hidden_c; ++i) dhc[i] = hidden[i] > 0.0 ? dhc[i] : 0.0;
    detail::linear_backward(p.ca_w1, pooled, dhc.data(), g.ca_w1, g.ca_b1, dpc.data());
    for (int ch = 0; ch < c; ++ch) {
      double* out = dy.plane(k, ch);
      const double* y = fc.stem.plane(k, ch);
      const double add = dpc[ch] * inv;
      for (std::size_t i = 0; i < hw; ++i) out[i] = y[i] > 0.0 ? out[i] + add : 0.0;
    }
  }

  // Stem.
  for (int k = 0; k < k_frames; ++k) {
    conv2d_backward_raw(fc.input[k].data().data(), 1, h, w, p.stem_w, 1, dy.plane(k, 0), nullptr, g.stem_w,
                        &g.stem_b);
  }
  return g;
}

}  // namespace meflut

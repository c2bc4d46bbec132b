#pragma once

// Unsupervised training of the weight network with the MEF-SSIM loss, Adam,
// and extraction of the per-exposure lookup tables from a trained network.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <ostream>
#include <vector>

#include "meflut/error.hpp"
#include "meflut/lut_engine.hpp"
#include "meflut/mef_ssim.hpp"
#include "meflut/network.hpp"
#include "meflut/parallel.hpp"
#include "meflut/resample.hpp"

namespace meflut {

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 100;
  std::uint64_t seed = 0;
  int window = 7;
  double stability_c = 0.03 * 0.03;
  int batch = 1;
  int channels = 24;
  int target_min = 128;
  int threads = 1;

  MefSsimConfig mef() const { return {window, stability_c}; }

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (window < 3 || window % 2 == 0) throw ConfigError("window must be odd and >= 3");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch < 1) throw ConfigError("batch must be >= 1");
    if (!(stability_c > 0.0)) throw ConfigError("stability_c must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must be in [0,1)");
  }
};

/// Network input for one sequence: luma downsampled to the training
/// resolution and requantized to 8 bits, as seen at deployment.
inline std::vector<PlaneR> training_input(const ExposureStack& stack, int target_min) {
  stack.validate_shape();
  const LowResLuma low = downsample_luma(stack, target_min);
  std::vector<PlaneR> out;
  for (const auto& q : low.quantized) out.push_back(to_unit(q));
  return out;
}

/// Low-resolution luma blend with the network's weights.
inline PlaneR network_blend(const std::vector<PlaneR>& ylow, const WeightMaps& w) {
  PlaneR out(ylow.front().width(), ylow.front().height(), 0.0);
  for (std::size_t k = 0; k < ylow.size(); ++k) {
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += w.planes[k].data()[i] * ylow[k].data()[i];
  }
  return out;
}

/// 1 - MEF-SSIM(ylow, sum_k W_k ylow_k) at the given (low) resolution.
inline double loss(const std::vector<PlaneR>& ylow, const NetworkParams& p, const MefSsimConfig& mef = {},
                   int threads = 1) {
  const WeightMaps w = network_forward(ylow, p, nullptr, threads);
  return 1.0 - mef_ssim_score(ylow, network_blend(ylow, w), mef);
}

struct LossAndGradients {
  double loss = 0.0;
  GradientSet grads;
};

inline bool all_finite(const NetworkParams& g) {
  for (const Tensor4* t : tensor_list(g)) {
    if (!t->all_finite()) return false;
  }
  return true;
}

/// Exact reverse-mode gradients of `loss` with respect to every parameter.
inline LossAndGradients gradients(const std::vector<PlaneR>& ylow, const NetworkParams& p,
                                  const MefSsimConfig& mef = {}, int threads = 1) {
  ForwardCache cache;
  const WeightMaps w = network_forward(ylow, p, &cache, threads);
  const PlaneR fused = network_blend(ylow, w);
  const MefSsimResult m = mef_ssim_evaluate(ylow, fused, mef, true);
  // loss = 1 - score; d loss / d W_k = -dscore/dfused * y_k.
  std::vector<PlaneR> dweights;
  for (const auto& y : ylow) {
    PlaneR d(y.width(), y.height());
    for (std::size_t i = 0; i < d.size(); ++i) d.data()[i] = -m.gradient.data()[i] * y.data()[i];
    dweights.push_back(std::move(d));
  }
  LossAndGradients out{1.0 - m.score, network_backward(p, cache, dweights, threads)};
  if (!std::isfinite(out.loss) || !all_finite(out.grads)) throw NumericsError("non-finite loss or gradient");
  return out;
}

// ---------------------------------------------------------------------------
// Adam.

struct AdamState {
  NetworkParams m;
  NetworkParams v;
  long long step = 0;
};

inline AdamState adam_init(const NetworkParams& p) { return {zeros_like(p), zeros_like(p), 0}; }

/// One bias-corrected Adam update, in place.
inline void adam_step(NetworkParams& p, const GradientSet& g, AdamState& state, const TrainConfig& cfg) {
  const auto params = tensor_list(p);
  const auto grads = tensor_list(g);
  const auto ms = tensor_list(state.m);
  const auto vs = tensor_list(state.v);
  if (params.size() != grads.size() || params.size() != ms.size()) throw ShapeError("Adam state layout mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (!params[t]->same_dims(*grads[t])) throw ShapeError("gradient layout mismatch");
    auto& pv = params[t]->data;
    const auto& gv = grads[t]->data;
    auto& mv = ms[t]->data;
    auto& vv = vs[t]->data;
    for (std::size_t i = 0; i < pv.size(); ++i) {
      mv[i] = cfg.beta1 * mv[i] + (1.0 - cfg.beta1) * gv[i];
      vv[i] = cfg.beta2 * vv[i] + (1.0 - cfg.beta2) * gv[i] * gv[i];
      const double mhat = mv[i] / bc1;
      const double vhat = vv[i] / bc2;
      pv[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Training loop.

/// Called once per epoch with (epoch index starting at 1, mean loss).
using EpochCallback = std::function<void(int, double)>;

inline NetworkParams train(const std::vector<ExposureStack>& dataset, const TrainConfig& cfg,
                           const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (dataset.empty()) throw StackShapeError("training set is empty");
  const std::size_t k = dataset.front().k();
  std::vector<std::vector<PlaneR>> inputs;
  for (const auto& s : dataset) {
    if (s.k() != k) throw StackShapeError("all training sequences must have the same frame count");
    inputs.push_back(training_input(s, cfg.target_min));
  }
  SplitMix64 rng(cfg.seed);
  NetworkParams params = init_params(static_cast<int>(k), cfg.channels, rng.next());
  AdamState state = adam_init(params);
  std::vector<std::size_t> order(inputs.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      GradientSet acc = zeros_like(params);
      for (std::size_t i = start; i < end; ++i) {
        const LossAndGradients lg = gradients(inputs[order[i]], params, cfg.mef(), cfg.threads);
        loss_sum += lg.loss;
        accumulate(acc, lg.grads);
      }
      if (end - start > 1) {
        const double scale = 1.0 / static_cast<double>(end - start);
        for (Tensor4* t : tensor_list(acc)) {
          for (double& v : t->data) v *= scale;
        }
      }
      adam_step(params, acc, state, cfg);
    }
    if (on_epoch) on_epoch(epoch, loss_sum / static_cast<double>(order.size()));
  }
  return params;
}

/// Mean loss of the given parameters over a dataset.
inline double mean_loss(const std::vector<ExposureStack>& dataset, const NetworkParams& p, const TrainConfig& cfg) {
  double s = 0.0;
  for (const auto& st : dataset) s += loss(training_input(st, cfg.target_min), p, cfg.mef(), cfg.threads);
  return s / static_cast<double>(dataset.size());
}

// ---------------------------------------------------------------------------
// LUT extraction.

/// Feeds K constant planes of value v/255 (probe x probe) for every v and
/// stores the spatial mean of each frame's weight map as L(k, v).
inline LutMatrix extract_luts(const NetworkParams& p, int probe = 128, int threads = 1) {
  check_params(p);
  if (probe < 1) throw ConfigError("probe resolution must be >= 1");
  LutMatrix lut(static_cast<std::size_t>(p.k_frames));
  parallel_for(kLutSize, threads, [&](int v0, int v1) {
    for (int v = v0; v < v1; ++v) {
      const std::vector<PlaneR> planes(p.k_frames, PlaneR(probe, probe, v / 255.0));
      const WeightMaps w = network_forward(planes, p);
      for (int k = 0; k < p.k_frames; ++k) {
        double s = 0.0;
        for (double x : w.planes[k].data()) s += x;
        lut.at(k, v) = static_cast<float>(s / static_cast<double>(w.planes[k].size()));
      }
    }
  });
  return lut;
}

// ---------------------------------------------------------------------------
// Network fusion path (deployment without tables).

inline FuseResult fuse_network_detailed(const ExposureStack& stack, const NetworkParams& p,
                                        const FusionConfig& cfg = {}) {
  cfg.validate();
  stack.validate_shape();
  const ExposureStack sorted = sort_by_ev(stack);
  const ExposureStack prepared = adapt_frame_count(sorted, static_cast<std::size_t>(p.k_frames));
  const LowResLuma low = downsample_luma(prepared, cfg.target_min);
  std::vector<PlaneR> input;
  for (const auto& q : low.quantized) input.push_back(to_unit(q));
  const WeightMaps w = network_forward(input, p, nullptr, cfg.threads);
  return fuse_from_low_weights(prepared, w, low.real, cfg);
}

inline YuvImage fuse_network(const ExposureStack& stack, const NetworkParams& p, const FusionConfig& cfg = {}) {
  return fuse_network_detailed(stack, p, cfg).image;
}

}  // namespace meflut

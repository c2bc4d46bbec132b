#include <gtest/gtest.h>

#include <cstring>

#include "meflut/meflut.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace meflut;

namespace {

Tensor4 random_tensor(int n, int c, int h, int w, SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor4 t(n, c, h, w);
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Random params with nonzero biases so every term is exercised.
NetworkParams random_params(int k, int c, std::uint64_t seed, std::vector<int> rates = {2, 4, 8}) {
  NetworkParams p = zero_params(k, c, std::move(rates));
  SplitMix64 rng(seed);
  for (Tensor4* t : tensor_list(p)) {
    for (double& v : t->data) v = rng.uniform(-0.5, 0.5);
  }
  return p;
}

oracle::Volume frame_volume(const Tensor4& t, int k) {
  oracle::Volume v(t.c(), t.h(), t.w());
  for (int ch = 0; ch < t.c(); ++ch) {
    for (int y = 0; y < t.h(); ++y) {
      for (int x = 0; x < t.w(); ++x) v.at(ch, y, x) = t.at(k, ch, y, x);
    }
  }
  return v;
}

std::vector<PlaneR> random_inputs(int k, int w, int h, SplitMix64& rng) {
  std::vector<PlaneR> out;
  for (int i = 0; i < k; ++i) out.push_back(testutil::random_plane(w, h, rng));
  return out;
}

}  // namespace

TEST(Conv2d, IdentityKernel) {
  SplitMix64 rng(1);
  const Tensor4 x = random_tensor(1, 2, 6, 5, rng);
  Tensor4 k(2, 2, 3, 3);
  k.at(0, 0, 1, 1) = 1.0;
  k.at(1, 1, 1, 1) = 1.0;
  EXPECT_EQ(conv2d(x, k), x);
}

TEST(Conv2d, OnesKernelZeroPadding) {
  Tensor4 x(1, 1, 5, 6, 0.3);
  const Tensor4 k(1, 1, 3, 3, 1.0);
  const Tensor4 out = conv2d(x, k);
  ASSERT_EQ(out.h(), 5);
  ASSERT_EQ(out.w(), 6);
  EXPECT_NEAR(out.at(0, 0, 2, 2), 9 * 0.3, 1e-12);
  EXPECT_NEAR(out.at(0, 0, 0, 0), 4 * 0.3, 1e-12);
  EXPECT_NEAR(out.at(0, 0, 4, 5), 4 * 0.3, 1e-12);
  EXPECT_NEAR(out.at(0, 0, 0, 3), 6 * 0.3, 1e-12);
}

TEST(Conv2d, DilatedDelta) {
  Tensor4 x(1, 1, 9, 9);
  x.at(0, 0, 4, 4) = 1.0;
  SplitMix64 rng(2);
  const Tensor4 k = random_tensor(1, 1, 3, 3, rng);
  const Tensor4 out = conv2d(x, k, nullptr, 2);
  for (int y = 0; y < 9; ++y) {
    for (int xx = 0; xx < 9; ++xx) {
      const int dy = y - 4, dx = xx - 4;
      const bool tap = dy % 2 == 0 && dx % 2 == 0 && std::abs(dy) <= 2 && std::abs(dx) <= 2;
      // Cross-correlation: out(p) = sum k(t) x(p + 2(t - 1)), so the delta lands at k(1 - d/2).
      const double expected = tap ? k.at(0, 0, 1 - dy / 2, 1 - dx / 2) : 0.0;
      EXPECT_DOUBLE_EQ(out.at(0, 0, y, xx), expected) << y << "," << xx;
    }
  }
}

TEST(Conv2d, MatchesDirectSummation) {
  SplitMix64 rng(3);
  for (int dilation : {1, 2, 4, 8}) {
    const Tensor4 x = random_tensor(1, 3, 7, 10, rng);
    const Tensor4 k = random_tensor(4, 3, 3, 3, rng);
    const Tensor4 b = random_tensor(4, 1, 1, 1, rng);
    const Tensor4 out = conv2d(x, k, &b, dilation);
    const oracle::Volume ref = oracle::conv(frame_volume(x, 0), k, &b, dilation);
    for (int c = 0; c < 4; ++c) {
      for (int y = 0; y < 7; ++y) {
        for (int xx = 0; xx < 10; ++xx) EXPECT_NEAR(out.at(0, c, y, xx), ref.at(c, y, xx), 1e-12);
      }
    }
  }
}

TEST(Conv2d, ShapeErrors) {
  EXPECT_THROW(conv2d(Tensor4(1, 2, 4, 4), Tensor4(1, 3, 3, 3)), ShapeError);
  EXPECT_THROW(conv2d(Tensor4(2, 1, 4, 4), Tensor4(1, 1, 3, 3)), ShapeError);
  const Tensor4 b(2, 1, 1, 1);
  EXPECT_THROW(conv2d(Tensor4(1, 1, 4, 4), Tensor4(1, 1, 3, 3), &b), ShapeError);
}

TEST(Cfca, ZeroWeightsQuarterInput) {
  const NetworkParams p = zero_params(3, 8);
  SplitMix64 rng(4);
  const Tensor4 y = random_tensor(3, 8, 5, 4, rng, 0.0, 2.0);
  const Tensor4 x = cfca_forward(y, p);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(x.data[i], 0.25 * y.data[i], 1e-15);
}

TEST(Cfca, MatchesOracle) {
  SplitMix64 rng(5);
  for (auto [k, c] : {std::pair{2, 4}, std::pair{3, 8}, std::pair{1, 4}}) {
    const NetworkParams p = random_params(k, c, rng.next());
    const Tensor4 y = random_tensor(k, c, 8, 8, rng, 0.0, 1.0);
    const Tensor4 x = cfca_forward(y, p);
    std::vector<oracle::Volume> frames;
    for (int i = 0; i < k; ++i) frames.push_back(frame_volume(y, i));
    const auto ref = oracle::cfca(frames, p);
    double worst = 0.0;
    for (int i = 0; i < k; ++i) {
      for (int ch = 0; ch < c; ++ch) {
        for (int yy = 0; yy < 8; ++yy) {
          for (int xx = 0; xx < 8; ++xx) worst = std::max(worst, std::abs(x.at(i, ch, yy, xx) - ref[i].at(ch, yy, xx)));
        }
      }
    }
    EXPECT_LT(worst, 1e-6) << "K=" << k << " C=" << c;
  }
}

TEST(Cfca, GatesShrinkMagnitude) {
  SplitMix64 rng(6);
  NetworkParams p = random_params(3, 8, 66);
  for (Tensor4* t : tensor_list(p)) {
    for (double& v : t->data) v *= 6.0;
  }
  const Tensor4 y = random_tensor(3, 8, 6, 6, rng, -3.0, 3.0);
  CfcaCache cache;
  const Tensor4 x = cfca_forward(y, p, &cache);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_LE(std::abs(x.data[i]), std::abs(y.data[i]));
  for (const Tensor4* g : {&cache.gate_c, &cache.gate_f}) {
    for (double v : g->data) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(Cfca, ShapeError) {
  const NetworkParams p = zero_params(3, 8);
  EXPECT_THROW(cfca_forward(Tensor4(2, 8, 4, 4), p), ShapeError);
  EXPECT_THROW(cfca_forward(Tensor4(3, 4, 4, 4), p), ShapeError);
}

TEST(Disa, MatchesOracle) {
  SplitMix64 rng(7);
  for (int c : {4, 8}) {
    const NetworkParams p = random_params(2, c, rng.next());
    const Tensor4 x = random_tensor(1, c, 8, 8, rng, 0.0, 1.0);
    const PlaneR out = disa_forward(x.data.data(), 8, 8, p);
    EXPECT_LT(testutil::max_abs_diff(out, oracle::disa(frame_volume(x, 0), p)), 1e-6) << "C=" << c;
  }
  const NetworkParams p = random_params(2, 4, 70);
  const Tensor4 x = random_tensor(1, 4, 5, 5, rng, 0.0, 1.0);
  EXPECT_LT(testutil::max_abs_diff(disa_forward(x.data.data(), 5, 5, p), oracle::disa(frame_volume(x, 0), p)), 1e-6);
}

TEST(Disa, ZeroSpatialKernelGivesHalfGate) {
  NetworkParams p = random_params(2, 4, 71);
  for (auto& t : p.sa_w) std::fill(t.data.begin(), t.data.end(), 0.0);
  for (auto& t : p.sa_b) std::fill(t.data.begin(), t.data.end(), 0.0);
  SplitMix64 rng(8);
  const Tensor4 x = random_tensor(1, 4, 6, 6, rng);
  DisaCache cache;
  disa_forward(x.data.data(), 6, 6, p, &cache);
  for (const auto& g : cache.gate) {
    for (double v : g) EXPECT_DOUBLE_EQ(v, 0.5);
  }
}

TEST(Disa, ConstantFeaturesHaveEqualMeanAndMax) {
  NetworkParams p = random_params(2, 4, 72);
  // Channel-replicating branch kernels keep every channel identical.
  for (auto& t : p.branch_w) {
    for (int o = 0; o < 4; ++o) {
      for (int i = 0; i < 4; ++i) {
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) t.at(o, i, ky, kx) = t.at(0, i, ky, kx);
        }
      }
    }
  }
  for (auto& t : p.branch_b) std::fill(t.data.begin(), t.data.end(), 0.1);
  const Tensor4 x(1, 4, 6, 6, 0.4);
  DisaCache cache;
  disa_forward(x.data.data(), 6, 6, p, &cache);
  for (const auto& pooled : cache.pooled) {
    for (int y = 0; y < 6; ++y) {
      for (int xx = 0; xx < 6; ++xx) EXPECT_NEAR(pooled.at(0, 0, y, xx), pooled.at(0, 1, y, xx), 1e-12);
    }
  }
}

TEST(Disa, GatesInOpenInterval) {
  const NetworkParams p = random_params(2, 8, 73);
  SplitMix64 rng(9);
  const Tensor4 x = random_tensor(1, 8, 8, 8, rng, 0.0, 1.0);
  DisaCache cache;
  disa_forward(x.data.data(), 8, 8, p, &cache);
  for (const auto& g : cache.gate) {
    for (double v : g) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(NetworkForward, MatchesOracle) {
  SplitMix64 rng(10);
  for (auto [k, c] : {std::pair{3, 8}, std::pair{2, 4}}) {
    const NetworkParams p = random_params(k, c, rng.next());
    const auto ylow = random_inputs(k, 8, 8, rng);
    const WeightMaps w = network_forward(ylow, p);
    const auto ref = oracle::network(ylow, p);
    for (int i = 0; i < k; ++i) EXPECT_LT(testutil::max_abs_diff(w.planes[i], ref[i]), 1e-6);
  }
}

TEST(NetworkForward, SoftmaxSumsToOne) {
  SplitMix64 rng(11);
  const NetworkParams p = init_params(4, 8, 5);
  const WeightMaps w = network_forward(random_inputs(4, 17, 13, rng), p);
  ASSERT_EQ(w.k_frames(), 4u);
  for (std::size_t i = 0; i < w.planes[0].size(); ++i) {
    double s = 0.0;
    for (const auto& pl : w.planes) {
      EXPECT_GT(pl.data()[i], 0.0);
      s += pl.data()[i];
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(NetworkForward, FrameOrderMatters) {
  SplitMix64 rng(12);
  const NetworkParams p = random_params(3, 8, 80);
  const auto ylow = random_inputs(3, 10, 10, rng);
  const WeightMaps a = network_forward(ylow, p);
  const WeightMaps b = network_forward({ylow[2], ylow[0], ylow[1]}, p);
  double diff = 0.0;
  const std::size_t back[3] = {1, 2, 0};
  for (std::size_t k = 0; k < 3; ++k) diff = std::max(diff, testutil::max_abs_diff(a.planes[k], b.planes[back[k]]));
  EXPECT_GT(diff, 0.0);
}

TEST(NetworkForward, ConstantInputConstantInterior) {
  const NetworkParams p = init_params(3, 8, 6);
  const std::vector<PlaneR> ylow = {PlaneR(40, 40, 0.2), PlaneR(40, 40, 0.5), PlaneR(40, 40, 0.9)};
  const WeightMaps w = network_forward(ylow, p);
  // Dilation 8 plus the 3x3 stem and head reach 10 px, the 7x7 gate 3 more.
  const int margin = 14;
  for (const auto& pl : w.planes) {
    const double ref = pl(20, 20);
    for (int y = margin; y < 40 - margin; ++y) {
      for (int x = margin; x < 40 - margin; ++x) EXPECT_NEAR(pl(x, y), ref, 1e-12);
    }
  }
}

TEST(NetworkForward, DeterministicAndThreadIndependent) {
  SplitMix64 rng(13);
  const NetworkParams p = init_params(3, 8, 7);
  const auto ylow = random_inputs(3, 16, 12, rng);
  const WeightMaps a = network_forward(ylow, p);
  const WeightMaps b = network_forward(ylow, p);
  const WeightMaps c = network_forward(ylow, p, nullptr, 3);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(a.planes[k], b.planes[k]);
    EXPECT_LT(testutil::max_abs_diff(a.planes[k], c.planes[k]), 1e-12);
  }
}

TEST(NetworkForward, Errors) {
  const NetworkParams p = init_params(3, 8, 1);
  EXPECT_THROW(network_forward({PlaneR(4, 4), PlaneR(4, 4)}, p), ShapeError);
  EXPECT_THROW(network_forward({PlaneR(4, 4), PlaneR(4, 4), PlaneR(5, 4)}, p), ShapeError);
  EXPECT_THROW(zero_params(3, 6), ConfigError);
  EXPECT_THROW(zero_params(0, 8), ConfigError);
}

TEST(NetworkParamsInit, SeededAndZeroBiases) {
  const NetworkParams a = init_params(3, 24, 42);
  EXPECT_EQ(a, init_params(3, 24, 42));
  EXPECT_NE(a, init_params(3, 24, 43));
  for (double v : a.stem_b.data) EXPECT_EQ(v, 0.0);
  for (double v : a.head_b.data) EXPECT_EQ(v, 0.0);
  bool any = false;
  for (double v : a.head_w.data) any = any || v != 0.0;
  EXPECT_TRUE(any);
  // 24*9+24 + 6*24+6 + 24*6+24 + 2*(9+3) + 3*(24*24*9+24) + 3*(98+1) + 72*9+1
  EXPECT_EQ(parameter_count(a), 240u + 150u + 168u + 24u + 15624u + 297u + 649u);
}

TEST(Checkpoint, RoundTripIsExactForFloatValues) {
  SplitMix64 rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    NetworkParams p = init_params(1 + static_cast<int>(rng.below(5)), 4 * (1 + static_cast<int>(rng.below(3))), rng.next());
    for (Tensor4* t : tensor_list(p)) {
      for (double& v : t->data) v = static_cast<float>(rng.uniform(-2, 2));
    }
    EXPECT_EQ(decode_checkpoint(encode_checkpoint(p)), p);
  }
  testutil::TempDir dir;
  const NetworkParams p = init_params(3, 8, 9, {1, 3});
  write_checkpoint(p, dir / "net.mefn");
  const NetworkParams q = read_checkpoint(dir / "net.mefn");
  EXPECT_EQ(q.rates, (std::vector<int>{1, 3}));
  const auto a = tensor_list(p);
  const auto b = tensor_list(q);
  for (std::size_t t = 0; t < a.size(); ++t) {
    for (std::size_t i = 0; i < a[t]->size(); ++i) EXPECT_EQ(b[t]->data[i], static_cast<float>(a[t]->data[i]));
  }
}

TEST(Checkpoint, Errors) {
  const auto good = encode_checkpoint(init_params(2, 4, 1));
  auto bad = good;
  bad[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  bad = good;
  bad[4] = 9;
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  bad = good;
  bad.resize(bad.size() - 3);
  EXPECT_THROW(decode_checkpoint(bad), IoError);
  bad = good;
  bad.push_back(0);
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  bad = good;
  bad[8] = 6;  // C = 6 is not a multiple of 4
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  bad = good;
  const std::uint32_t nan_bits = 0x7fc00000u;
  std::memcpy(bad.data() + bad.size() - 4, &nan_bits, 4);
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  EXPECT_THROW(read_checkpoint("/nonexistent/net.mefn"), IoError);
}

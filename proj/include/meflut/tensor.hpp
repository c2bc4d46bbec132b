#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "meflut/error.hpp"

namespace meflut {

/// Dense 4-D array, row-major over (n, c, h, w). Activations use
/// (frames, channels, height, width); kernels use (out, in, kh, kw).
struct Tensor4 {
  std::array<int, 4> dims{0, 0, 0, 0};
  std::vector<double> data;

  Tensor4() = default;
  Tensor4(int n, int c, int h, int w, double fill = 0.0) : dims{n, c, h, w} {
    if (n < 0 || c < 0 || h < 0 || w < 0) throw ShapeError("negative tensor dimension");
    data.assign(static_cast<std::size_t>(n) * c * h * w, fill);
  }

  int n() const noexcept { return dims[0]; }
  int c() const noexcept { return dims[1]; }
  int h() const noexcept { return dims[2]; }
  int w() const noexcept { return dims[3]; }
  std::size_t size() const noexcept { return data.size(); }
  std::size_t plane_size() const noexcept { return static_cast<std::size_t>(dims[2]) * dims[3]; }

  double* plane(int n_idx, int c_idx) noexcept {
    return data.data() + (static_cast<std::size_t>(n_idx) * dims[1] + c_idx) * plane_size();
  }
  const double* plane(int n_idx, int c_idx) const noexcept {
    return data.data() + (static_cast<std::size_t>(n_idx) * dims[1] + c_idx) * plane_size();
  }
  double& at(int a, int b, int y, int x) noexcept { return plane(a, b)[static_cast<std::size_t>(y) * dims[3] + x]; }
  double at(int a, int b, int y, int x) const noexcept {
    return plane(a, b)[static_cast<std::size_t>(y) * dims[3] + x];
  }

  bool same_dims(const Tensor4& o) const noexcept { return dims == o.dims; }
  bool all_finite() const noexcept {
    for (double v : data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const Tensor4&, const Tensor4&) = default;
};

inline std::string dims_string(const Tensor4& t) {
  return std::to_string(t.n()) + "x" + std::to_string(t.c()) + "x" + std::to_string(t.h()) + "x" +
         std::to_string(t.w());
}

/// SplitMix64: portable seeded stream so initializations and shuffles are
/// reproducible across standard libraries.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  /// Uniform in [0, 1).
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  std::uint64_t below(std::uint64_t n) noexcept { return next() % n; }

 private:
  std::uint64_t state_;
};

}  // namespace meflut

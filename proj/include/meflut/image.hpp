#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "meflut/error.hpp"

namespace meflut {

/// Row-major single-channel image.
template <typename T>
class Plane {
 public:
  using value_type = T;

  Plane() = default;
  Plane(int width, int height, T fill = T{}) : width_(width), height_(height) {
    if (width < 1 || height < 1) {
      throw ShapeError("plane dimensions must be positive, got " + std::to_string(width) + "x" +
                       std::to_string(height));
    }
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }
  Plane(int width, int height, std::vector<T> data) : width_(width), height_(height), data_(std::move(data)) {
    if (width < 1 || height < 1 ||
        data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
      throw ShapeError("plane data length does not match " + std::to_string(width) + "x" + std::to_string(height));
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int x, int y) noexcept { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  const T& operator()(int x, int y) const noexcept { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  T* row(int y) noexcept { return data_.data() + static_cast<std::size_t>(y) * width_; }
  const T* row(int y) const noexcept { return data_.data() + static_cast<std::size_t>(y) * width_; }

  std::span<T> pixels() noexcept { return data_; }
  std::span<const T> pixels() const noexcept { return data_; }
  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  bool same_shape(const Plane& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }
  template <typename U>
  bool same_shape(const Plane<U>& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Plane& a, const Plane& b) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using Plane8 = Plane<std::uint8_t>;
using PlaneR = Plane<double>;

/// Full-range BT.601 planar YUV, all planes the same size.
struct YuvImage {
  Plane8 y;
  Plane8 u;
  Plane8 v;

  int width() const noexcept { return y.width(); }
  int height() const noexcept { return y.height(); }

  void validate() const {
    if (y.empty() || !y.same_shape(u) || !y.same_shape(v)) {
      throw ShapeError("YUV planes must share identical dimensions");
    }
  }

  friend bool operator==(const YuvImage&, const YuvImage&) = default;
};

/// K co-registered frames ordered by exposure value.
struct ExposureStack {
  std::vector<YuvImage> frames;
  std::vector<double> evs;

  std::size_t k() const noexcept { return frames.size(); }
  int width() const { return frames.at(0).width(); }
  int height() const { return frames.at(0).height(); }

  // Shape checks only; EV ordering is checked separately because adapted
  // stacks may carry duplicated EVs.
  void validate_shape() const {
    if (frames.empty()) throw StackShapeError("exposure stack is empty");
    if (frames.size() != evs.size()) {
      throw StackShapeError("frame count " + std::to_string(frames.size()) + " does not match EV count " +
                            std::to_string(evs.size()));
    }
    for (const auto& f : frames) {
      f.validate();
      if (!f.y.same_shape(frames.front().y)) throw StackShapeError("frames differ in dimensions");
    }
  }

  void validate() const {
    validate_shape();
    for (std::size_t i = 1; i < evs.size(); ++i) {
      if (!(evs[i] > evs[i - 1])) throw MetadataError("exposure values must be strictly increasing");
    }
  }

  std::vector<const Plane8*> y_planes() const {
    std::vector<const Plane8*> out;
    out.reserve(frames.size());
    for (const auto& f : frames) out.push_back(&f.y);
    return out;
  }
};

inline constexpr int kLutSize = 256;

/// K x 256 table; row k maps an 8-bit Y value to the fusion weight of frame k.
/// Entries are stored in single precision, the precision of the file format.
class LutMatrix {
 public:
  LutMatrix() = default;
  explicit LutMatrix(std::size_t k_frames, float fill = 0.0f)
      : k_(k_frames), table_(k_frames * kLutSize, fill) {}
  LutMatrix(std::size_t k_frames, std::vector<float> table) : k_(k_frames), table_(std::move(table)) {
    if (table_.size() != k_ * kLutSize) throw FormatError("LUT table size must be K*256");
  }

  std::size_t k_frames() const noexcept { return k_; }
  float& at(std::size_t k, int v) noexcept { return table_[k * kLutSize + static_cast<std::size_t>(v)]; }
  float at(std::size_t k, int v) const noexcept { return table_[k * kLutSize + static_cast<std::size_t>(v)]; }
  std::span<const float> row(std::size_t k) const noexcept {
    return std::span<const float>(table_).subspan(k * kLutSize, kLutSize);
  }
  const std::vector<float>& table() const noexcept { return table_; }
  std::vector<float>& table() noexcept { return table_; }

  // Entries finite and nonnegative, every intensity column with positive mass.
  void validate() const {
    if (k_ == 0) throw FormatError("LUT must have at least one row");
    for (float e : table_) {
      if (!std::isfinite(e) || e < 0.0) throw FormatError("LUT entries must be finite and nonnegative");
    }
    for (int v = 0; v < kLutSize; ++v) {
      double col = 0.0;
      for (std::size_t k = 0; k < k_; ++k) col += at(k, v);
      if (!(col > 0.0)) throw FormatError("LUT column " + std::to_string(v) + " has zero total weight");
    }
  }

  friend bool operator==(const LutMatrix&, const LutMatrix&) = default;

 private:
  std::size_t k_ = 0;
  std::vector<float> table_;
};

/// Round-half-up of a real intensity in [0,1] to 8 bits.
inline std::uint8_t quantize_unit(double v) noexcept {
  const double s = std::floor(v * 255.0 + 0.5);
  return static_cast<std::uint8_t>(std::clamp(s, 0.0, 255.0));
}

inline PlaneR to_unit(const Plane8& p) {
  PlaneR out(p.width(), p.height());
  auto src = p.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] / 255.0;
  return out;
}

inline Plane8 quantize(const PlaneR& p) {
  Plane8 out(p.width(), p.height());
  auto src = p.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = quantize_unit(src[i]);
  return out;
}

}  // namespace meflut

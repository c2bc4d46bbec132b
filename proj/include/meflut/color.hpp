#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "meflut/image.hpp"

namespace meflut {

struct Rgb8 {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb8&, const Rgb8&) = default;
};

struct Yuv8 {
  std::uint8_t y = 0, u = 128, v = 128;
  friend bool operator==(const Yuv8&, const Yuv8&) = default;
};

namespace detail {
inline std::uint8_t round_clamp8(double x) noexcept {
  return static_cast<std::uint8_t>(std::clamp(std::floor(x + 0.5), 0.0, 255.0));
}
}  // namespace detail

// Full-range BT.601 luma with the 0.492 / 0.877 chroma scales. Chroma is
// formed from the already-rounded luma so Y, U and V agree on one integer Y.
// V saturates for strongly red or cyan colors.
inline Yuv8 rgb_to_yuv(std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept {
  const double y = 0.299 * r + 0.587 * g + 0.114 * b;
  const std::uint8_t yq = detail::round_clamp8(y);
  const double u = (static_cast<double>(b) - yq) * 0.492 + 128.0;
  const double v = (static_cast<double>(r) - yq) * 0.877 + 128.0;
  return {yq, detail::round_clamp8(u), detail::round_clamp8(v)};
}

inline Rgb8 yuv_to_rgb(std::uint8_t y, std::uint8_t u, std::uint8_t v) noexcept {
  const double r = y + (static_cast<double>(v) - 128.0) / 0.877;
  const double b = y + (static_cast<double>(u) - 128.0) / 0.492;
  const double g = (y - 0.299 * r - 0.114 * b) / 0.587;
  return {detail::round_clamp8(r), detail::round_clamp8(g), detail::round_clamp8(b)};
}

/// Real-valued inverse in [0,1] units, unclamped before the final clip.
inline void yuv_to_rgb_unit(std::uint8_t y, std::uint8_t u, std::uint8_t v, double& r, double& g,
                            double& b) noexcept {
  const double rr = y + (static_cast<double>(v) - 128.0) / 0.877;
  const double bb = y + (static_cast<double>(u) - 128.0) / 0.492;
  const double gg = (y - 0.299 * rr - 0.114 * bb) / 0.587;
  r = std::clamp(rr / 255.0, 0.0, 1.0);
  g = std::clamp(gg / 255.0, 0.0, 1.0);
  b = std::clamp(bb / 255.0, 0.0, 1.0);
}

/// Interleaved 8-bit RGB (3 bytes per pixel) to planar YUV.
inline YuvImage rgb_image_to_yuv(int width, int height, std::span<const std::uint8_t> rgb) {
  if (rgb.size() != static_cast<std::size_t>(width) * height * 3) throw ShapeError("RGB buffer size mismatch");
  YuvImage out{Plane8(width, height), Plane8(width, height), Plane8(width, height)};
  auto y = out.y.pixels();
  auto u = out.u.pixels();
  auto v = out.v.pixels();
  for (std::size_t i = 0; i < y.size(); ++i) {
    const Yuv8 p = rgb_to_yuv(rgb[3 * i], rgb[3 * i + 1], rgb[3 * i + 2]);
    y[i] = p.y;
    u[i] = p.u;
    v[i] = p.v;
  }
  return out;
}

inline std::vector<std::uint8_t> yuv_image_to_rgb(const YuvImage& img) {
  img.validate();
  auto y = img.y.pixels();
  auto u = img.u.pixels();
  auto v = img.v.pixels();
  std::vector<std::uint8_t> rgb(y.size() * 3);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const Rgb8 p = yuv_to_rgb(y[i], u[i], v[i]);
    rgb[3 * i] = p.r;
    rgb[3 * i + 1] = p.g;
    rgb[3 * i + 2] = p.b;
  }
  return rgb;
}

/// Grayscale lift: chroma planes fixed at 128.
inline YuvImage gray_to_yuv(Plane8 gray) {
  const int w = gray.width();
  const int h = gray.height();
  return YuvImage{std::move(gray), Plane8(w, h, 128), Plane8(w, h, 128)};
}

}  // namespace meflut

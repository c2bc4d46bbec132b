#pragma once

#include <cmath>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "meflut/error.hpp"
#include "meflut/image.hpp"
#include "meflut/mef_ssim.hpp"

namespace meflut {

inline constexpr double kPsnrCapDb = 100.0;

/// PSNR after removing each image's mean brightness; capped at 100 dB.
inline double psnr_brightness_sub(const PlaneR& a, const PlaneR& b) {
  if (!a.same_shape(b)) throw ShapeError("PSNR inputs differ in dimensions");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a.data()[i];
    mb += b.data()[i];
  }
  ma /= n;
  mb /= n;
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = (a.data()[i] - ma) - (b.data()[i] - mb);
    mse += d * d;
  }
  mse /= n;
  if (mse < 1e-10) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / mse));
}

struct SsimConfig {
  int window = 7;
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;
};

/// Mean SSIM over every window x window patch (uniform weights, stride 1).
inline double ssim(const PlaneR& a, const PlaneR& b, const SsimConfig& cfg = {}) {
  if (!a.same_shape(b)) throw ShapeError("SSIM inputs differ in dimensions");
  if (cfg.window < 1 || cfg.window > a.width() || cfg.window > a.height()) {
    throw ShapeError("SSIM window does not fit the image");
  }
  const double n = static_cast<double>(cfg.window) * cfg.window;
  const PlaneR sa = detail::window_sums(a, cfg.window);
  const PlaneR sb = detail::window_sums(b, cfg.window);
  const PlaneR saa = detail::window_sums(detail::product(a, a), cfg.window);
  const PlaneR sbb = detail::window_sums(detail::product(b, b), cfg.window);
  const PlaneR sab = detail::window_sums(detail::product(a, b), cfg.window);
  double total = 0.0;
  for (std::size_t p = 0; p < sa.size(); ++p) {
    const double mx = sa.data()[p] / n;
    const double my = sb.data()[p] / n;
    const double vx = saa.data()[p] / n - mx * mx;
    const double vy = sbb.data()[p] / n - my * my;
    const double cxy = sab.data()[p] / n - mx * my;
    total += ((2.0 * mx * my + cfg.c1) * (2.0 * cxy + cfg.c2)) /
             ((mx * mx + my * my + cfg.c1) * (vx + vy + cfg.c2));
  }
  return total / static_cast<double>(sa.size());
}

inline double ssim(const PlaneR& a, const PlaneR& b, int window) { return ssim(a, b, SsimConfig{window}); }

struct EvalRow {
  std::string name;
  std::optional<double> psnr_db;
  std::optional<double> ssim;
  double mef_ssim = 0.0;
};

/// Luma metrics of a fused image: PSNR / SSIM against a reference when one
/// is given, MEF-SSIM against the source stack always.
inline EvalRow evaluate(const YuvImage& fused, const YuvImage* reference, const ExposureStack& stack,
                        std::string name = {}) {
  fused.validate();
  stack.validate_shape();
  if (!fused.y.same_shape(stack.frames.front().y)) throw ShapeError("fused image and stack differ in dimensions");
  EvalRow row;
  row.name = std::move(name);
  const PlaneR fy = to_unit(fused.y);
  if (reference != nullptr) {
    if (!reference->y.same_shape(fused.y)) throw ShapeError("reference and fused image differ in dimensions");
    const PlaneR ry = to_unit(reference->y);
    row.psnr_db = psnr_brightness_sub(fy, ry);
    row.ssim = ssim(fy, ry);
  }
  std::vector<PlaneR> ys;
  for (const auto& f : stack.frames) ys.push_back(to_unit(f.y));
  row.mef_ssim = mef_ssim_score(ys, fy);
  return row;
}

struct EvalReport {
  std::vector<EvalRow> rows;

  void add(EvalRow r) { rows.push_back(std::move(r)); }

  std::optional<double> mean_psnr() const { return mean_of([](const EvalRow& r) { return r.psnr_db; }); }
  std::optional<double> mean_ssim() const { return mean_of([](const EvalRow& r) { return r.ssim; }); }
  std::optional<double> mean_mef_ssim() const {
    return mean_of([](const EvalRow& r) { return std::optional<double>(r.mef_ssim); });
  }

  /// Header row, one row per image, then a "mean" row. Missing values print as NA.
  void write_tsv(std::ostream& os) const {
    auto cell = [&](const std::optional<double>& v) {
      if (v) {
        os << std::fixed << std::setprecision(6) << *v;
      } else {
        os << "NA";
      }
    };
    os << "name\tpsnr_db\tssim\tmef_ssim\n";
    for (const auto& r : rows) {
      os << r.name << '\t';
      cell(r.psnr_db);
      os << '\t';
      cell(r.ssim);
      os << '\t';
      cell(r.mef_ssim);
      os << '\n';
    }
    os << "mean\t";
    cell(mean_psnr());
    os << '\t';
    cell(mean_ssim());
    os << '\t';
    cell(mean_mef_ssim());
    os << '\n';
  }

 private:
  template <typename Get>
  std::optional<double> mean_of(Get get) const {
    double s = 0.0;
    int n = 0;
    for (const auto& r : rows) {
      if (auto v = get(r)) {
        s += *v;
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return s / n;
  }
};

}  // namespace meflut

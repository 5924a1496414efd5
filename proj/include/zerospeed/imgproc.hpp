#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "image.hpp"

namespace zerospeed {

// Region of interest as fractions of the frame: rows [top, bottom), columns
// [left, right). The default excludes the sky band and the mirror housing of
// a side-mounted blind-spot camera.
struct RoiSpec {
  double top = 0.05;
  double bottom = 0.90;
  double left = 0.15;
  double right = 0.86;

  void validate() const {
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in_unit(top) || !in_unit(bottom) || !in_unit(left) || !in_unit(right) || !(top < bottom) ||
        !(left < right)) {
      throw ConfigError("ROI must satisfy 0 <= top < bottom <= 1 and 0 <= left < right <= 1");
    }
  }

  static RoiSpec full() { return {0.0, 1.0, 0.0, 1.0}; }

  friend bool operator==(const RoiSpec&, const RoiSpec&) = default;
};

struct ClaheParams {
  int tiles_x = 8;
  int tiles_y = 8;
  // Relative to the mean bin height of a tile; +inf disables clipping.
  double clip_limit = 2.0;

  void validate() const {
    if (tiles_x < 1 || tiles_y < 1) throw ConfigError("CLAHE tile grid must be at least 1x1");
    if (!(clip_limit > 0.0)) throw ConfigError("CLAHE clip limit must be positive");
  }
};

// ITU-R BT.601 luma.
inline GrayImage to_grayscale(const RgbImage& rgb) {
  if (rgb.empty()) throw DimensionError("cannot convert a zero-sized image");
  GrayImage out(rgb.width(), rgb.height());
  auto src = rgb.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const double v = 0.299 * src[3 * i] + 0.587 * src[3 * i + 1] + 0.114 * src[3 * i + 2];
    dst[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0) + 0.5);
  }
  return out;
}

namespace detail {

using Lut = std::array<std::uint8_t, 256>;

// Histogram equalization lookup for one tile, with optional clipping and
// uniform redistribution of the clipped mass.
inline Lut clahe_tile_lut(const GrayImage& img, int x0, int x1, int y0, int y1, double clip_limit) {
  std::array<long, 256> hist{};
  for (int y = y0; y < y1; ++y) {
    const auto r = img.row(y);
    for (int x = x0; x < x1; ++x) ++hist[r[x]];
  }
  const long n = static_cast<long>(x1 - x0) * (y1 - y0);

  if (std::isfinite(clip_limit)) {
    const long limit = std::max(1L, static_cast<long>(clip_limit * static_cast<double>(n) / 256.0));
    long excess = 0;
    for (auto& h : hist) {
      if (h > limit) {
        excess += h - limit;
        h = limit;
      }
    }
    const long per_bin = excess / 256;
    const long residual = excess % 256;
    for (auto& h : hist) h += per_bin;
    if (residual > 0) {
      const long step = std::max(256L / residual, 1L);
      long left = residual;
      for (long i = 0; i < 256 && left > 0; i += step, --left) ++hist[i];
    }
  }

  Lut lut{};
  long cdf = 0;
  const double scale = 255.0 / static_cast<double>(n);
  for (int v = 0; v < 256; ++v) {
    cdf += hist[v];
    lut[v] = static_cast<std::uint8_t>(std::min(255L, std::lround(static_cast<double>(cdf) * scale)));
  }
  return lut;
}

// Interpolation support for one axis: for each pixel, the two neighbouring
// tile indices (clamped at the border) and the weight of the second.
struct AxisWeights {
  std::vector<int> lo, hi;
  std::vector<float> w;
};

inline AxisWeights clahe_axis(int size, int tiles) {
  AxisWeights a;
  a.lo.resize(size);
  a.hi.resize(size);
  a.w.resize(size);
  const double tile = static_cast<double>(size) / tiles;
  for (int p = 0; p < size; ++p) {
    const double f = (p + 0.5) / tile - 0.5;
    const int i0 = static_cast<int>(std::floor(f));
    a.w[p] = static_cast<float>(f - i0);
    a.lo[p] = std::clamp(i0, 0, tiles - 1);
    a.hi[p] = std::clamp(i0 + 1, 0, tiles - 1);
  }
  return a;
}

}  // namespace detail

// Contrast-limited adaptive histogram equalization on a tiles_x x tiles_y
// grid. Each pixel blends the mappings of its four nearest tile centres.
inline GrayImage apply_clahe(const GrayImage& img, const ClaheParams& params = {}) {
  params.validate();
  if (img.empty() || img.width() < params.tiles_x || img.height() < params.tiles_y) {
    throw DimensionError("image smaller than the CLAHE tile grid");
  }
  const int w = img.width();
  const int h = img.height();
  const int tx = params.tiles_x;
  const int ty = params.tiles_y;

  std::vector<detail::Lut> luts(static_cast<std::size_t>(tx) * ty);
  for (int j = 0; j < ty; ++j) {
    const int y0 = static_cast<int>(static_cast<long>(j) * h / ty);
    const int y1 = static_cast<int>(static_cast<long>(j + 1) * h / ty);
    for (int i = 0; i < tx; ++i) {
      const int x0 = static_cast<int>(static_cast<long>(i) * w / tx);
      const int x1 = static_cast<int>(static_cast<long>(i + 1) * w / tx);
      luts[static_cast<std::size_t>(j) * tx + i] = detail::clahe_tile_lut(img, x0, x1, y0, y1, params.clip_limit);
    }
  }

  const auto ax = detail::clahe_axis(w, tx);
  const auto ay = detail::clahe_axis(h, ty);

  GrayImage out(w, h);
  for (int y = 0; y < h; ++y) {
    const auto src = img.row(y);
    auto dst = out.row(y);
    const float wy = ay.w[y];
    const auto* top = &luts[static_cast<std::size_t>(ay.lo[y]) * tx];
    const auto* bot = &luts[static_cast<std::size_t>(ay.hi[y]) * tx];
    for (int x = 0; x < w; ++x) {
      const std::uint8_t v = src[x];
      const float wx = ax.w[x];
      const float t = (1.f - wx) * top[ax.lo[x]][v] + wx * top[ax.hi[x]][v];
      const float b = (1.f - wx) * bot[ax.lo[x]][v] + wx * bot[ax.hi[x]][v];
      const float r = (1.f - wy) * t + wy * b;
      dst[x] = static_cast<std::uint8_t>(std::clamp(r, 0.f, 255.f) + 0.5f);  // r >= 0, so this rounds half up
    }
  }
  return out;
}

struct RoiCrop {
  GrayImage image;
  PixelOffset offset;  // full-frame coordinates of the crop's (0,0)
};

inline constexpr int kMinRoiSpan = 16;

// Pixel bounds of an ROI: floor(fraction * dimension) on both ends.
struct RoiBounds {
  int x0, x1, y0, y1;
};

inline RoiBounds roi_bounds(int width, int height, const RoiSpec& roi) {
  roi.validate();
  RoiBounds b{static_cast<int>(std::floor(roi.left * width)), static_cast<int>(std::floor(roi.right * width)),
              static_cast<int>(std::floor(roi.top * height)), static_cast<int>(std::floor(roi.bottom * height))};
  if (b.x1 - b.x0 < kMinRoiSpan || b.y1 - b.y0 < kMinRoiSpan) {
    throw ConfigError("ROI spans fewer than " + std::to_string(kMinRoiSpan) + "x" +
                      std::to_string(kMinRoiSpan) + " pixels after rounding");
  }
  return b;
}

inline RoiCrop crop_roi(const GrayImage& img, const RoiSpec& roi) {
  const auto b = roi_bounds(img.width(), img.height(), roi);
  GrayImage out(b.x1 - b.x0, b.y1 - b.y0);
  for (int y = b.y0; y < b.y1; ++y) {
    const auto src = img.row(y);
    std::copy(src.begin() + b.x0, src.begin() + b.x1, out.row(y - b.y0).begin());
  }
  return {std::move(out), {b.x0, b.y0}};
}

}  // namespace zerospeed

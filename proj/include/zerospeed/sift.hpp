#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "error.hpp"
#include "image.hpp"

// Scale-invariant feature detector and descriptor, Lowe's construction:
// Gaussian scale space, difference-of-Gaussian extrema refined to subpixel
// accuracy, dominant gradient orientations and 4x4x8 gradient histograms.
//
// Pixel intensities are normalized to [0,1] before anything else, so the
// contrast threshold is in those units. The input is not upsampled.

namespace zerospeed::sift {

struct SiftParams {
  int max_features = 1000;
  double contrast_threshold = 0.04;  // |interpolated DoG| on [0,1] images
  double edge_ratio = 15.0;          // principal-curvature ratio r
  int scales_per_octave = 3;
  double sigma0 = 1.6;
  double assumed_input_blur = 0.5;

  void validate() const {
    if (max_features < 1) throw ConfigError("sift.max_features must be >= 1");
    if (!(contrast_threshold > 0.0)) throw ConfigError("sift.contrast_threshold must be positive");
    if (!(edge_ratio > 0.0)) throw ConfigError("sift.edge_ratio must be positive");
    if (scales_per_octave < 1) throw ConfigError("sift.scales_per_octave must be >= 1");
    if (!(sigma0 > 0.0)) throw ConfigError("sift.sigma0 must be positive");
    if (!(assumed_input_blur > 0.0) || !(assumed_input_blur < sigma0)) {
      throw ConfigError("sift.assumed_input_blur must be positive and below sigma0");
    }
  }
};

struct Keypoint {
  double x = 0.0;  // base-resolution pixel coordinates
  double y = 0.0;
  int octave = 0;
  int scale_index = 0;       // DoG layer within the octave
  double sigma = 0.0;        // absolute scale, base-resolution pixels
  double orientation = 0.0;  // radians in [0, 2pi), image axes (y down)
  double response = 0.0;     // |interpolated DoG|

  // Scale relative to the keypoint's own octave.
  double octave_sigma() const { return sigma / std::ldexp(1.0, octave); }
};

inline constexpr int kDescriptorWidth = 4;
inline constexpr int kDescriptorBins = 8;
inline constexpr int kDescriptorSize = kDescriptorWidth * kDescriptorWidth * kDescriptorBins;

using Descriptor = std::array<float, kDescriptorSize>;

struct Features {
  std::vector<Keypoint> keypoints;
  std::vector<Descriptor> descriptors;  // index-aligned with keypoints
  std::size_t size() const { return keypoints.size(); }
};

inline constexpr int kImageBorder = 5;
inline constexpr int kMaxInterpSteps = 5;
inline constexpr int kMinPyramidInput = 32;

// ---------------------------------------------------------------------------
// Scale space

inline void to_unit_float(const GrayImage& img, FloatImage& out) {
  out.reshape(img.width(), img.height());
  auto src = img.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<float>(src[i]) * (1.0f / 255.0f);
}

inline FloatImage to_unit_float(const GrayImage& img) {
  FloatImage out;
  to_unit_float(img, out);
  return out;
}

namespace detail {

// Reflect-101 border indexing, robust to kernels wider than the image.
inline int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

inline std::vector<float> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(radius + 1);
  double sum = 0.0;
  for (int i = 0; i <= radius; ++i) {
    k[i] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += i == 0 ? k[i] : 2.0 * k[i];
  }
  std::vector<float> out(radius + 1);
  for (int i = 0; i <= radius; ++i) out[i] = static_cast<float>(k[i] / sum);
  return out;
}

// One output row of a folded symmetric kernel:
//   out[x] = k0*c[x] + sum_i k_i*(lo[i][x] + hi[i][x]),  i = 1..r,
// accumulated in that order. Blocks of 16, then 4, keep the sums in 4-float
// registers; element-wise vector arithmetic rounds exactly like the scalar
// tail, so the result does not depend on the blocking.
typedef float f32x4 __attribute__((vector_size(16)));

inline f32x4 load4(const float* p) {
  f32x4 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void fold_taps(float* out, int w, const float* c, const float* const* lo, const float* const* hi,
                      const f32x4* kv, const float* k, int r) {
  int x0 = 0;
  for (; x0 + 16 <= w; x0 += 16) {
    f32x4 a0 = kv[0] * load4(c + x0);
    f32x4 a1 = kv[0] * load4(c + x0 + 4);
    f32x4 a2 = kv[0] * load4(c + x0 + 8);
    f32x4 a3 = kv[0] * load4(c + x0 + 12);
    for (int i = 1; i <= r; ++i) {
      const float* p = lo[i] + x0;
      const float* q = hi[i] + x0;
      a0 += kv[i] * (load4(p) + load4(q));
      a1 += kv[i] * (load4(p + 4) + load4(q + 4));
      a2 += kv[i] * (load4(p + 8) + load4(q + 8));
      a3 += kv[i] * (load4(p + 12) + load4(q + 12));
    }
    std::memcpy(out + x0, &a0, sizeof a0);
    std::memcpy(out + x0 + 4, &a1, sizeof a1);
    std::memcpy(out + x0 + 8, &a2, sizeof a2);
    std::memcpy(out + x0 + 12, &a3, sizeof a3);
  }
  for (; x0 + 4 <= w; x0 += 4) {
    f32x4 a = kv[0] * load4(c + x0);
    for (int i = 1; i <= r; ++i) a += kv[i] * (load4(lo[i] + x0) + load4(hi[i] + x0));
    std::memcpy(out + x0, &a, sizeof a);
  }
  for (int x = x0; x < w; ++x) {
    float acc = k[0] * c[x];
    for (int i = 1; i <= r; ++i) acc += k[i] * (lo[i][x] + hi[i][x]);
    out[x] = acc;
  }
}

}  // namespace detail

// Separable Gaussian blur with reflect-101 borders. Half-kernel taps are
// folded so each output is k0*c + sum k_i*(a_i + b_i), accumulated in a
// fixed order.
// Scratch rows and the row-pass image, reused between calls.
struct BlurScratch {
  FloatImage tmp;
  std::vector<float> pad;
};

inline void gaussian_blur(const FloatImage& src, double sigma, FloatImage& dst, BlurScratch& scratch) {
  const auto k = detail::gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size()) - 1;
  const int w = src.width();
  const int h = src.height();
  std::vector<detail::f32x4> kv(r + 1);
  for (int i = 0; i <= r; ++i) kv[i] = detail::f32x4{k[i], k[i], k[i], k[i]};
  std::vector<const float*> lo(r + 1), hi(r + 1);

  FloatImage& tmp = scratch.tmp;
  tmp.reshape(w, h);
  scratch.pad.resize(static_cast<std::size_t>(w) + 2 * r);
  float* c = scratch.pad.data() + r;
  for (int i = 1; i <= r; ++i) {
    lo[i] = c - i;
    hi[i] = c + i;
  }
  for (int y = 0; y < h; ++y) {
    const float* in = src.row(y).data();
    std::memcpy(c, in, sizeof(float) * static_cast<std::size_t>(w));
    for (int i = 1; i <= r; ++i) {
      c[-i] = in[detail::reflect101(-i, w)];
      c[w - 1 + i] = in[detail::reflect101(w - 1 + i, w)];
    }
    detail::fold_taps(tmp.row(y).data(), w, c, lo.data(), hi.data(), kv.data(), k.data(), r);
  }

  dst.reshape(w, h);
  for (int y = 0; y < h; ++y) {
    for (int i = 1; i <= r; ++i) {
      lo[i] = tmp.row(detail::reflect101(y - i, h)).data();
      hi[i] = tmp.row(detail::reflect101(y + i, h)).data();
    }
    detail::fold_taps(dst.row(y).data(), w, tmp.row(y).data(), lo.data(), hi.data(), kv.data(), k.data(), r);
  }
}

inline FloatImage gaussian_blur(const FloatImage& src, double sigma) {
  FloatImage dst;
  BlurScratch scratch;
  gaussian_blur(src, sigma, dst, scratch);
  return dst;
}

inline void downsample_half(const FloatImage& src, FloatImage& out) {
  const int w = std::max(1, src.width() / 2);
  const int h = std::max(1, src.height() / 2);
  out.reshape(w, h);
  for (int y = 0; y < h; ++y) {
    const auto in = src.row(2 * y);
    auto o = out.row(y);
    for (int x = 0; x < w; ++x) o[x] = in[2 * x];
  }
}

inline FloatImage downsample_half(const FloatImage& src) {
  FloatImage out;
  downsample_half(src, out);
  return out;
}

struct GaussianPyramid {
  int scales_per_octave = 3;
  double sigma0 = 1.6;
  // octaves[o][s] holds scales_per_octave + 3 levels, sigma0 * 2^(s/S) in
  // octave-local pixels.
  std::vector<std::vector<FloatImage>> octaves;

  int octave_count() const { return static_cast<int>(octaves.size()); }
  int levels_per_octave() const { return scales_per_octave + 3; }
};

struct DogPyramid {
  int scales_per_octave = 3;
  double sigma0 = 1.6;
  std::vector<std::vector<FloatImage>> octaves;  // scales_per_octave + 2 layers each

  int octave_count() const { return static_cast<int>(octaves.size()); }
};

inline int octave_count_for(int width, int height) {
  return static_cast<int>(std::floor(std::log2(static_cast<double>(std::min(width, height))))) - 2;
}

// Input must already be normalized to [0,1]. Images already held by pyr are
// overwritten in place.
inline void build_gaussian_pyramid(const FloatImage& img, const SiftParams& params, GaussianPyramid& pyr,
                                   BlurScratch& scratch) {
  params.validate();
  if (img.empty() || std::min(img.width(), img.height()) < kMinPyramidInput) {
    throw DimensionError("SIFT input must be at least " + std::to_string(kMinPyramidInput) + " pixels on each side");
  }
  const int S = params.scales_per_octave;
  const int levels = S + 3;
  const int n_oct = octave_count_for(img.width(), img.height());

  // Incremental blur taking level s-1 to level s.
  std::vector<double> inc(levels, 0.0);
  const double k = std::pow(2.0, 1.0 / S);
  for (int s = 1; s < levels; ++s) {
    const double prev = params.sigma0 * std::pow(k, s - 1);
    const double cur = prev * k;
    inc[s] = std::sqrt(cur * cur - prev * prev);
  }

  pyr.scales_per_octave = S;
  pyr.sigma0 = params.sigma0;
  pyr.octaves.resize(n_oct);

  const double pre = std::sqrt(params.sigma0 * params.sigma0 - params.assumed_input_blur * params.assumed_input_blur);
  for (int o = 0; o < n_oct; ++o) {
    auto& oct = pyr.octaves[o];
    oct.resize(levels);
    if (o == 0) {
      gaussian_blur(img, pre, oct[0], scratch);
    } else {
      downsample_half(pyr.octaves[o - 1][S], oct[0]);
    }
    for (int s = 1; s < levels; ++s) gaussian_blur(oct[s - 1], inc[s], oct[s], scratch);
  }
}

inline GaussianPyramid build_gaussian_pyramid(const FloatImage& img, const SiftParams& params) {
  GaussianPyramid pyr;
  BlurScratch scratch;
  build_gaussian_pyramid(img, params, pyr, scratch);
  return pyr;
}

inline void build_dog_pyramid(const GaussianPyramid& gauss, DogPyramid& dog) {
  dog.scales_per_octave = gauss.scales_per_octave;
  dog.sigma0 = gauss.sigma0;
  dog.octaves.resize(gauss.octaves.size());
  for (std::size_t o = 0; o < gauss.octaves.size(); ++o) {
    const auto& g = gauss.octaves[o];
    auto& d = dog.octaves[o];
    d.resize(g.size() - 1);
    for (std::size_t s = 1; s < g.size(); ++s) {
      FloatImage& diff = d[s - 1];
      diff.reshape(g[s].width(), g[s].height());
      auto a = g[s].pixels();
      auto b = g[s - 1].pixels();
      auto out = diff.pixels();
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    }
  }
}

inline DogPyramid build_dog_pyramid(const GaussianPyramid& gauss) {
  DogPyramid dog;
  build_dog_pyramid(gauss, dog);
  return dog;
}

// ---------------------------------------------------------------------------
// Extrema

namespace detail {

inline bool is_extremum(const std::vector<FloatImage>& layers, int s, int x, int y, float v) {
  if (v > 0) {
    for (int ds = -1; ds <= 1; ++ds) {
      const auto& L = layers[s + ds];
      for (int dy = -1; dy <= 1; ++dy) {
        const float* row = L.row(y + dy).data();
        for (int dx = -1; dx <= 1; ++dx) {
          if ((ds | dy | dx) != 0 && row[x + dx] > v) return false;
        }
      }
    }
  } else {
    for (int ds = -1; ds <= 1; ++ds) {
      const auto& L = layers[s + ds];
      for (int dy = -1; dy <= 1; ++dy) {
        const float* row = L.row(y + dy).data();
        for (int dx = -1; dx <= 1; ++dx) {
          if ((ds | dy | dx) != 0 && row[x + dx] < v) return false;
        }
      }
    }
  }
  return true;
}

// Solves H x = b for a symmetric 3x3 system; nullopt when singular.
inline std::optional<std::array<double, 3>> solve3(const std::array<std::array<double, 3>, 3>& H,
                                                    const std::array<double, 3>& b) {
  const double det = H[0][0] * (H[1][1] * H[2][2] - H[1][2] * H[2][1]) -
                     H[0][1] * (H[1][0] * H[2][2] - H[1][2] * H[2][0]) +
                     H[0][2] * (H[1][0] * H[2][1] - H[1][1] * H[2][0]);
  if (!std::isfinite(det) || std::abs(det) < 1e-18) return std::nullopt;
  std::array<double, 3> x{};
  for (int c = 0; c < 3; ++c) {
    auto M = H;
    for (int r = 0; r < 3; ++r) M[r][c] = b[r];
    x[c] = (M[0][0] * (M[1][1] * M[2][2] - M[1][2] * M[2][1]) - M[0][1] * (M[1][0] * M[2][2] - M[1][2] * M[2][0]) +
            M[0][2] * (M[1][0] * M[2][1] - M[1][1] * M[2][0])) /
           det;
  }
  return x;
}

// Quadratic refinement of a discrete extremum in (x, y, scale). Returns the
// keypoint when it converges and survives the contrast and edge tests.
inline std::optional<Keypoint> refine_extremum(const DogPyramid& dog, int o, int s, int x, int y,
                                               const SiftParams& params, bool edge_test = true) {
  const auto& layers = dog.octaves[o];
  const int S = dog.scales_per_octave;
  const int w = layers[0].width();
  const int h = layers[0].height();

  std::array<double, 3> offset{};  // (x, y, s)
  std::array<double, 3> grad{};
  int step = 0;
  for (; step < kMaxInterpSteps; ++step) {
    const auto& prev = layers[s - 1];
    const auto& cur = layers[s];
    const auto& next = layers[s + 1];
    const double v2 = 2.0 * cur(x, y);
    grad = {0.5 * (cur(x + 1, y) - cur(x - 1, y)), 0.5 * (cur(x, y + 1) - cur(x, y - 1)),
            0.5 * (next(x, y) - prev(x, y))};
    const double dxx = cur(x + 1, y) + cur(x - 1, y) - v2;
    const double dyy = cur(x, y + 1) + cur(x, y - 1) - v2;
    const double dss = next(x, y) + prev(x, y) - v2;
    const double dxy = 0.25 * (cur(x + 1, y + 1) - cur(x - 1, y + 1) - cur(x + 1, y - 1) + cur(x - 1, y - 1));
    const double dxs = 0.25 * (next(x + 1, y) - next(x - 1, y) - prev(x + 1, y) + prev(x - 1, y));
    const double dys = 0.25 * (next(x, y + 1) - next(x, y - 1) - prev(x, y + 1) + prev(x, y - 1));
    const std::array<std::array<double, 3>, 3> H{{{dxx, dxy, dxs}, {dxy, dyy, dys}, {dxs, dys, dss}}};
    const auto sol = solve3(H, grad);
    if (!sol) return std::nullopt;
    offset = {-(*sol)[0], -(*sol)[1], -(*sol)[2]};

    if (std::abs(offset[0]) < 0.5 && std::abs(offset[1]) < 0.5 && std::abs(offset[2]) < 0.5) break;
    if (std::abs(offset[0]) > 1e6 || std::abs(offset[1]) > 1e6 || std::abs(offset[2]) > 1e6) return std::nullopt;

    x += static_cast<int>(std::lround(offset[0]));
    y += static_cast<int>(std::lround(offset[1]));
    s += static_cast<int>(std::lround(offset[2]));
    if (s < 1 || s > S || x < kImageBorder || x >= w - kImageBorder || y < kImageBorder ||
        y >= h - kImageBorder) {
      return std::nullopt;
    }
  }
  if (step >= kMaxInterpSteps) return std::nullopt;

  const auto& cur = layers[s];
  const double contrast = cur(x, y) + 0.5 * (grad[0] * offset[0] + grad[1] * offset[1] + grad[2] * offset[2]);
  if (std::abs(contrast) < params.contrast_threshold) return std::nullopt;

  if (edge_test) {
    const double v2 = 2.0 * cur(x, y);
    const double dxx = cur(x + 1, y) + cur(x - 1, y) - v2;
    const double dyy = cur(x, y + 1) + cur(x, y - 1) - v2;
    const double dxy = 0.25 * (cur(x + 1, y + 1) - cur(x - 1, y + 1) - cur(x + 1, y - 1) + cur(x - 1, y - 1));
    const double tr = dxx + dyy;
    const double det = dxx * dyy - dxy * dxy;
    const double r = params.edge_ratio;
    if (det <= 0.0 || tr * tr * r >= (r + 1.0) * (r + 1.0) * det) return std::nullopt;
  }

  Keypoint kp;
  const double scale = std::ldexp(1.0, o);
  kp.x = (x + offset[0]) * scale;
  kp.y = (y + offset[1]) * scale;
  kp.octave = o;
  kp.scale_index = s;
  kp.sigma = dog.sigma0 * std::pow(2.0, (s + offset[2]) / S) * scale;
  kp.response = std::abs(contrast);
  return kp;
}

inline bool stronger(const Keypoint& a, const Keypoint& b) {
  if (a.response != b.response) return a.response > b.response;
  if (a.y != b.y) return a.y < b.y;
  if (a.x != b.x) return a.x < b.x;
  return a.orientation < b.orientation;
}

}  // namespace detail

// Keeps the max_features strongest keypoints; ties broken by (y, x). The
// result is sorted strongest first.
inline void retain_strongest(std::vector<Keypoint>& kps, int max_features) {
  std::sort(kps.begin(), kps.end(), detail::stronger);
  if (kps.size() > static_cast<std::size_t>(max_features)) kps.resize(max_features);
}

struct DetectOptions {
  bool edge_test = true;  // off only for diagnostics
};

inline std::vector<Keypoint> detect_keypoints(const DogPyramid& dog, const SiftParams& params,
                                              DetectOptions opts = {}) {
  params.validate();
  const int S = dog.scales_per_octave;
  const float prefilter = static_cast<float>(0.5 * params.contrast_threshold);
  std::vector<Keypoint> kps;
  for (int o = 0; o < dog.octave_count(); ++o) {
    const auto& layers = dog.octaves[o];
    const int w = layers[0].width();
    const int h = layers[0].height();
    for (int s = 1; s <= S; ++s) {
      for (int y = kImageBorder; y < h - kImageBorder; ++y) {
        const float* row = layers[s].row(y).data();
        for (int x = kImageBorder; x < w - kImageBorder; ++x) {
          const float v = row[x];
          if (std::abs(v) <= prefilter) continue;
          if (!detail::is_extremum(layers, s, x, y, v)) continue;
          if (auto kp = detail::refine_extremum(dog, o, s, x, y, params, opts.edge_test)) kps.push_back(*kp);
        }
      }
    }
  }
  retain_strongest(kps, params.max_features);
  return kps;
}

// ---------------------------------------------------------------------------
// Gradients

namespace detail {

// Polynomial atan2 in radians, [0, 2pi). Max error below 2e-4 rad. Written
// with selects only so whole rows vectorize.
inline float fast_atan2(float y, float x) {
  constexpr float p1 = 0.9997878412794807f;
  constexpr float p3 = -0.3258083974640975f;
  constexpr float p5 = 0.1555786518463281f;
  constexpr float p7 = -0.04432655554792128f;
  constexpr float half_pi = std::numbers::pi_v<float> / 2.f;
  constexpr float pi = std::numbers::pi_v<float>;
  const float ax = std::abs(x);
  const float ay = std::abs(y);
  const bool steep = ay > ax;
  const float num = steep ? ax : ay;
  const float den = (steep ? ay : ax) + 1e-30f;
  const float c = num / den;
  const float c2 = c * c;
  float a = (((p7 * c2 + p5) * c2 + p3) * c2 + p1) * c;
  a = steep ? half_pi - a : a;
  a = x < 0 ? pi - a : a;
  a = y < 0 ? 2.f * pi - a : a;
  return a >= 2.f * pi ? a - 2.f * pi : a;
}

typedef std::int32_t i32x4 __attribute__((vector_size(16)));

inline f32x4 select4(i32x4 mask, f32x4 a, f32x4 b) {
  return reinterpret_cast<f32x4>((reinterpret_cast<i32x4>(a) & mask) | (reinterpret_cast<i32x4>(b) & ~mask));
}

// fast_atan2 on four lanes; each lane performs the scalar operations exactly.
inline f32x4 fast_atan2(f32x4 y, f32x4 x) {
  const f32x4 p1 = f32x4{} + 0.9997878412794807f;
  const f32x4 p3 = f32x4{} + -0.3258083974640975f;
  const f32x4 p5 = f32x4{} + 0.1555786518463281f;
  const f32x4 p7 = f32x4{} + -0.04432655554792128f;
  const f32x4 half_pi = f32x4{} + std::numbers::pi_v<float> / 2.f;
  const f32x4 pi = f32x4{} + std::numbers::pi_v<float>;
  const f32x4 two_pi = f32x4{} + 2.f * std::numbers::pi_v<float>;
  const f32x4 zero{};
  const i32x4 abs_mask = i32x4{} + 0x7fffffff;
  const f32x4 ax = reinterpret_cast<f32x4>(reinterpret_cast<i32x4>(x) & abs_mask);
  const f32x4 ay = reinterpret_cast<f32x4>(reinterpret_cast<i32x4>(y) & abs_mask);
  const i32x4 steep = ay > ax;
  const f32x4 num = select4(steep, ax, ay);
  const f32x4 den = select4(steep, ay, ax) + 1e-30f;
  const f32x4 c = num / den;
  const f32x4 c2 = c * c;
  f32x4 a = (((p7 * c2 + p5) * c2 + p3) * c2 + p1) * c;
  a = select4(steep, half_pi - a, a);
  a = select4(x < zero, pi - a, a);
  a = select4(y < zero, two_pi - a, a);
  return select4(a >= two_pi, a - two_pi, a);
}

}  // namespace detail

// Central-difference gradient magnitude and direction of one Gaussian level.
// Border pixels carry zero magnitude.
struct GradientField {
  FloatImage magnitude;
  FloatImage angle;
};

inline void compute_gradients(const FloatImage& img, GradientField& g) {
  const int w = img.width();
  const int h = img.height();
  g.magnitude.reshape(w, h);
  g.angle.reshape(w, h);
  auto zero_row = [&](int y) {
    std::fill_n(g.magnitude.row(y).data(), w, 0.0f);
    std::fill_n(g.angle.row(y).data(), w, 0.0f);
  };
  zero_row(0);
  if (h > 1) zero_row(h - 1);
  std::vector<float> gx(w), gy(w);
  for (int y = 1; y < h - 1; ++y) {
    const float* up = img.row(y - 1).data();
    const float* mid = img.row(y).data();
    const float* dn = img.row(y + 1).data();
    float* mag = g.magnitude.row(y).data();
    float* ang = g.angle.row(y).data();
    mag[0] = ang[0] = 0.0f;
    mag[w - 1] = ang[w - 1] = 0.0f;
    for (int x = 1; x < w - 1; ++x) {
      gx[x] = mid[x + 1] - mid[x - 1];
      gy[x] = dn[x] - up[x];
    }
    for (int x = 1; x < w - 1; ++x) mag[x] = std::sqrt(gx[x] * gx[x] + gy[x] * gy[x]);
    int x = 1;
    for (; x + 4 <= w - 1; x += 4) {
      const auto a = detail::fast_atan2(detail::load4(gy.data() + x), detail::load4(gx.data() + x));
      std::memcpy(ang + x, &a, sizeof a);
    }
    for (; x < w - 1; ++x) ang[x] = detail::fast_atan2(gy[x], gx[x]);
  }
}

inline GradientField compute_gradients(const FloatImage& img) {
  GradientField g;
  compute_gradients(img, g);
  return g;
}

// Lazily computed gradient fields, one per (octave, level) actually used.
// reset() invalidates every field but keeps the buffers for the next image.
class GradientCache {
 public:
  GradientCache() = default;
  explicit GradientCache(const GaussianPyramid& pyr) { reset(pyr); }

  void reset(const GaussianPyramid& pyr) {
    pyr_ = &pyr;
    fields_.resize(pyr.octaves.size());
    valid_.resize(pyr.octaves.size());
    for (std::size_t o = 0; o < pyr.octaves.size(); ++o) {
      fields_[o].resize(pyr.octaves[o].size());
      valid_[o].assign(pyr.octaves[o].size(), false);
    }
  }

  const GradientField& at(int octave, int level) {
    auto& slot = fields_[octave][level];
    if (!valid_[octave][level]) {
      compute_gradients(pyr_->octaves[octave][level], slot);
      valid_[octave][level] = true;
    }
    return slot;
  }

 private:
  const GaussianPyramid* pyr_ = nullptr;
  std::vector<std::vector<GradientField>> fields_;
  std::vector<std::vector<bool>> valid_;
};

// ---------------------------------------------------------------------------
// Orientation

inline constexpr int kOrientationBins = 36;
inline constexpr double kOrientationSigmaFactor = 1.5;
inline constexpr double kOrientationRadiusFactor = 3.0 * kOrientationSigmaFactor;
inline constexpr double kOrientationPeakRatio = 0.8;

// Dominant gradient orientations around a keypoint. Votes are linearly split
// between adjacent bins; peaks within 80% of the maximum each produce a copy.
// Returns nothing for a window without gradient.
inline std::vector<Keypoint> assign_orientations(const Keypoint& kp, GradientCache& grads) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const auto& field = grads.at(kp.octave, kp.scale_index);
  const int w = field.magnitude.width();
  const int h = field.magnitude.height();
  const double scale = std::ldexp(1.0, kp.octave);
  const int cx = static_cast<int>(std::lround(kp.x / scale));
  const int cy = static_cast<int>(std::lround(kp.y / scale));
  const double sigma = kOrientationSigmaFactor * kp.octave_sigma();
  const int radius = static_cast<int>(std::lround(kOrientationRadiusFactor * kp.octave_sigma()));
  const double inv2s2 = -1.0 / (2.0 * sigma * sigma);

  // The window is separable: exp(a + b) = exp(a) exp(b).
  std::vector<double> gw(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) gw[i + radius] = std::exp(i * i * inv2s2);

  std::array<double, kOrientationBins> raw{};
  for (int dy = -radius; dy <= radius; ++dy) {
    const int y = cy + dy;
    if (y <= 0 || y >= h - 1) continue;
    const float* mag = field.magnitude.row(y).data();
    const float* ang = field.angle.row(y).data();
    const double wy = gw[dy + radius];
    for (int dx = -radius; dx <= radius; ++dx) {
      const int x = cx + dx;
      if (x <= 0 || x >= w - 1) continue;
      const double weight = wy * gw[dx + radius] * mag[x];
      const double fbin = ang[x] * (kOrientationBins / two_pi);  // angles lie in [0, 2pi)
      int b0 = static_cast<int>(fbin);
      const double frac = fbin - b0;
      if (b0 >= kOrientationBins) b0 -= kOrientationBins;
      const int b1 = b0 + 1 == kOrientationBins ? 0 : b0 + 1;
      raw[b0] += weight * (1.0 - frac);
      raw[b1] += weight * frac;
    }
  }

  std::array<double, kOrientationBins> hist{};
  for (int i = 0; i < kOrientationBins; ++i) {
    auto at = [&](int j) { return raw[(j + kOrientationBins) % kOrientationBins]; };
    hist[i] = (at(i - 2) + at(i + 2)) * (1.0 / 16.0) + (at(i - 1) + at(i + 1)) * (4.0 / 16.0) + at(i) * (6.0 / 16.0);
  }
  const double peak = *std::max_element(hist.begin(), hist.end());
  std::vector<Keypoint> out;
  if (!(peak > 0.0)) return out;

  for (int i = 0; i < kOrientationBins; ++i) {
    const double l = hist[(i + kOrientationBins - 1) % kOrientationBins];
    const double r = hist[(i + 1) % kOrientationBins];
    const double c = hist[i];
    if (c > l && c > r && c >= kOrientationPeakRatio * peak) {
      double bin = i + 0.5 * (l - r) / (l - 2.0 * c + r);
      if (bin < 0) bin += kOrientationBins;
      if (bin >= kOrientationBins) bin -= kOrientationBins;
      Keypoint oriented = kp;
      oriented.orientation = bin * (two_pi / kOrientationBins);
      if (oriented.orientation >= two_pi) oriented.orientation -= two_pi;
      out.push_back(oriented);
    }
  }
  return out;
}

inline std::vector<Keypoint> assign_orientations(const Keypoint& kp, const GaussianPyramid& pyr) {
  GradientCache grads(pyr);
  return assign_orientations(kp, grads);
}

// ---------------------------------------------------------------------------
// Descriptor

inline constexpr double kDescriptorScaleFactor = 3.0;  // histogram cell width in octave sigmas
inline constexpr float kDescriptorClamp = 0.2f;

// 4x4 spatial x 8 orientation gradient histogram in a window rotated to the
// keypoint orientation. Returns nullopt when any part of the rotated window
// falls outside the image.
inline std::optional<Descriptor> compute_descriptor(const Keypoint& kp, GradientCache& grads) {
  constexpr int d = kDescriptorWidth;
  constexpr int n = kDescriptorBins;
  constexpr double two_pi = 2.0 * std::numbers::pi;

  const auto& field = grads.at(kp.octave, kp.scale_index);
  const int w = field.magnitude.width();
  const int h = field.magnitude.height();
  const double scale = std::ldexp(1.0, kp.octave);
  const int cx = static_cast<int>(std::lround(kp.x / scale));
  const int cy = static_cast<int>(std::lround(kp.y / scale));

  const double hist_width = kDescriptorScaleFactor * kp.octave_sigma();
  const double cos_o = std::cos(kp.orientation);
  const double sin_o = std::sin(kp.orientation);
  // Half-extent of the rotated (d+1) x (d+1) cell square, axis aligned.
  const double half = 0.5 * hist_width * (d + 1) * (std::abs(cos_o) + std::abs(sin_o));
  const int radius = static_cast<int>(std::ceil(half));
  if (cx - radius < 1 || cx + radius > w - 2 || cy - radius < 1 || cy + radius > h - 2) return std::nullopt;

  const double cos_t = cos_o / hist_width;
  const double sin_t = sin_o / hist_width;
  const double exp_scale = -1.0 / (0.5 * d * d);
  const double bins_per_rad = n / two_pi;
  const double lim = 0.5 * (d + 1);

  // Rotation preserves length, so the Gaussian weight of a sample depends on
  // dx^2 + dy^2 only and factors per axis.
  const double axis_scale = exp_scale / (hist_width * hist_width);
  std::vector<double> gw(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) gw[i + radius] = std::exp(i * i * axis_scale);

  // (d+2) x (d+2) x (n+2) with a guard ring so trilinear spill needs no checks.
  std::array<double, (d + 2) * (d + 2) * (n + 2)> hist{};
  for (int dy = -radius; dy <= radius; ++dy) {
    const float* mag = field.magnitude.row(cy + dy).data();
    const float* ang = field.angle.row(cy + dy).data();
    const double wy = gw[dy + radius];
    // Columns whose rotated coordinates can land inside the cell square:
    // |dx cos_t + dy sin_t| < lim and |-dx sin_t + dy cos_t| < lim.
    int lo = -radius, hi = radius;
    auto clip = [&](double a, double b) {  // |a dx + b| < lim
      if (std::abs(a) < 1e-12) {
        if (!(std::abs(b) < lim)) hi = lo - 1;
        return;
      }
      double t0 = (-lim - b) / a, t1 = (lim - b) / a;
      if (t0 > t1) std::swap(t0, t1);
      lo = std::max(lo, static_cast<int>(std::floor(t0)));
      hi = std::min(hi, static_cast<int>(std::ceil(t1)));
    };
    clip(cos_t, dy * sin_t);
    clip(-sin_t, dy * cos_t);
    for (int dx = lo; dx <= hi; ++dx) {
      const double c_rot = dx * cos_t + dy * sin_t;
      const double r_rot = -dx * sin_t + dy * cos_t;
      const double rbin = r_rot + d / 2.0 - 0.5;
      const double cbin = c_rot + d / 2.0 - 0.5;
      if (!(rbin > -1.0 && rbin < d && cbin > -1.0 && cbin < d)) continue;
      const int x = cx + dx;
      double rel = ang[x] - kp.orientation;
      if (rel < 0) rel += two_pi;
      if (rel >= two_pi) rel -= two_pi;
      const double obin = rel * bins_per_rad;
      const double weight = wy * gw[dx + radius] * mag[x];

      // rbin, cbin > -1 and obin >= 0, so truncation is floor here.
      const int r0 = static_cast<int>(rbin + 1.0) - 1;
      const int c0 = static_cast<int>(cbin + 1.0) - 1;
      int o0 = static_cast<int>(obin);
      const double fr = rbin - r0;
      const double fc = cbin - c0;
      const double fo = obin - o0;
      if (o0 >= n) o0 -= n;

      const double v_r1 = weight * fr, v_r0 = weight - v_r1;
      const double v_rc11 = v_r1 * fc, v_rc10 = v_r1 - v_rc11;
      const double v_rc01 = v_r0 * fc, v_rc00 = v_r0 - v_rc01;
      const double v_rco111 = v_rc11 * fo, v_rco110 = v_rc11 - v_rco111;
      const double v_rco101 = v_rc10 * fo, v_rco100 = v_rc10 - v_rco101;
      const double v_rco011 = v_rc01 * fo, v_rco010 = v_rc01 - v_rco011;
      const double v_rco001 = v_rc00 * fo, v_rco000 = v_rc00 - v_rco001;

      const int idx = ((r0 + 1) * (d + 2) + c0 + 1) * (n + 2) + o0;
      hist[idx] += v_rco000;
      hist[idx + 1] += v_rco001;
      hist[idx + (n + 2)] += v_rco010;
      hist[idx + (n + 3)] += v_rco011;
      hist[idx + (d + 2) * (n + 2)] += v_rco100;
      hist[idx + (d + 2) * (n + 2) + 1] += v_rco101;
      hist[idx + (d + 3) * (n + 2)] += v_rco110;
      hist[idx + (d + 3) * (n + 2) + 1] += v_rco111;
    }
  }

  Descriptor desc{};
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < d; ++c) {
      const int idx = ((r + 1) * (d + 2) + c + 1) * (n + 2);
      // Orientation bin n wraps onto bin 0.
      const double wrap = hist[idx + n];
      for (int o = 0; o < n; ++o) {
        double v = hist[idx + o];
        if (o == 0) v += wrap;
        desc[(r * d + c) * n + o] = static_cast<float>(v);
      }
    }
  }

  auto normalize = [&desc]() {
    double sq = 0.0;
    for (float v : desc) sq += static_cast<double>(v) * v;
    if (!(sq > 0.0)) return false;
    const double inv = 1.0 / std::sqrt(sq);
    for (float& v : desc) v = static_cast<float>(v * inv);
    return true;
  };
  if (!normalize()) return std::nullopt;
  for (float& v : desc) v = std::min(v, kDescriptorClamp);
  if (!normalize()) return std::nullopt;
  return desc;
}

inline std::optional<Descriptor> compute_descriptor(const Keypoint& kp, const GaussianPyramid& pyr) {
  GradientCache grads(pyr);
  return compute_descriptor(kp, grads);
}

// ---------------------------------------------------------------------------

// Buffers carried from one image to the next. Results do not depend on what
// a workspace held before.
struct Workspace {
  FloatImage unit;
  BlurScratch blur;
  GaussianPyramid gauss;
  DogPyramid dog;
  GradientCache grads;
};

inline Features detect_and_describe(const FloatImage& img, const SiftParams& params, Workspace& ws) {
  build_gaussian_pyramid(img, params, ws.gauss, ws.blur);
  build_dog_pyramid(ws.gauss, ws.dog);
  // The cap applies to described keypoints, so candidates come uncapped and
  // are described strongest first until the cap is reached.
  SiftParams uncapped = params;
  uncapped.max_features = std::numeric_limits<int>::max();
  const auto candidates = detect_keypoints(ws.dog, uncapped);

  auto& grads = ws.grads;
  grads.reset(ws.gauss);
  struct Described {
    Keypoint kp;
    Descriptor desc;
  };
  std::vector<Described> described;
  described.reserve(candidates.size());
  for (const auto& kp : candidates) {
    if (described.size() >= static_cast<std::size_t>(params.max_features)) break;
    for (const auto& oriented : assign_orientations(kp, grads)) {
      if (auto desc = compute_descriptor(oriented, grads)) described.push_back({oriented, *desc});
    }
  }

  std::sort(described.begin(), described.end(),
            [](const Described& a, const Described& b) { return detail::stronger(a.kp, b.kp); });
  if (described.size() > static_cast<std::size_t>(params.max_features)) described.resize(params.max_features);

  Features out;
  out.keypoints.reserve(described.size());
  out.descriptors.reserve(described.size());
  for (auto& d : described) {
    out.keypoints.push_back(d.kp);
    out.descriptors.push_back(d.desc);
  }
  return out;
}

inline Features detect_and_describe(const GrayImage& img, const SiftParams& params, Workspace& ws) {
  to_unit_float(img, ws.unit);
  return detect_and_describe(ws.unit, params, ws);
}

inline Features detect_and_describe(const FloatImage& img, const SiftParams& params) {
  Workspace ws;
  return detect_and_describe(img, params, ws);
}

inline Features detect_and_describe(const GrayImage& img, const SiftParams& params) {
  Workspace ws;
  return detect_and_describe(img, params, ws);
}

}  // namespace zerospeed::sift

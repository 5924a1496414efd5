#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "error.hpp"
#include "sift.hpp"

namespace zerospeed::matching {

using sift::Descriptor;

struct Match {
  std::size_t query_index = 0;  // feature in the previous frame
  std::size_t train_index = 0;  // feature in the current frame
  double distance = 0.0;

  friend bool operator==(const Match&, const Match&) = default;
};

// Squared Euclidean distance with eight independent partial sums, combined
// in a fixed order; the result does not depend on vector width.
inline float squared_distance(const Descriptor& a, const Descriptor& b) {
  std::array<float, 8> acc{};
  for (std::size_t i = 0; i < a.size(); i += 8) {
    for (std::size_t l = 0; l < 8; ++l) {
      const float d = a[i + l] - b[i + l];
      acc[l] += d * d;
    }
  }
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

// Exhaustive k-nearest-neighbour search. Each query gets min(k, |train|)
// matches in ascending distance; equal distances keep the lower train index
// first.
inline std::vector<std::vector<Match>> knn_match(std::span<const Descriptor> prev, std::span<const Descriptor> curr,
                                                 std::size_t k = 2) {
  if (k < 1) throw ConfigError("knn_match: k must be >= 1");
  std::vector<std::vector<Match>> out;
  if (prev.empty() || curr.empty()) return out;
  const std::size_t kk = std::min(k, curr.size());
  out.resize(prev.size());

  struct Cand {
    float d2;
    std::size_t idx;
  };
  std::vector<Cand> best(kk);
  for (std::size_t q = 0; q < prev.size(); ++q) {
    std::size_t filled = 0;
    for (std::size_t t = 0; t < curr.size(); ++t) {
      const float d2 = squared_distance(prev[q], curr[t]);
      if (filled == kk && !(d2 < best[kk - 1].d2)) continue;
      std::size_t pos = filled < kk ? filled++ : kk - 1;
      while (pos > 0 && d2 < best[pos - 1].d2) {
        best[pos] = best[pos - 1];
        --pos;
      }
      best[pos] = {d2, t};
    }
    auto& row = out[q];
    row.reserve(kk);
    for (std::size_t i = 0; i < kk; ++i) {
      row.push_back({q, best[i].idx, std::sqrt(static_cast<double>(best[i].d2))});
    }
  }
  return out;
}

// Lowe's ratio test: keep the best match when d1 < ratio * d2. Queries with
// fewer than two candidates are dropped.
inline std::vector<Match> ratio_filter(const std::vector<std::vector<Match>>& knn, double ratio = 0.75) {
  std::vector<Match> out;
  for (const auto& row : knn) {
    if (row.size() < 2) continue;
    if (row[0].distance < ratio * row[1].distance) out.push_back(row[0]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Affine RANSAC

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

// [a b tx; c d ty], maps previous-frame points to current-frame points.
struct AffineModel {
  std::array<double, 6> m{1, 0, 0, 0, 1, 0};

  Point2 apply(Point2 p) const { return {m[0] * p.x + m[1] * p.y + m[2], m[3] * p.x + m[4] * p.y + m[5]}; }
  double det() const { return m[0] * m[4] - m[1] * m[3]; }
  bool valid() const {
    return std::all_of(m.begin(), m.end(), [](double v) { return std::isfinite(v); }) && std::abs(det()) > 1e-8;
  }
};

struct RansacParams {
  double inlier_threshold = 3.0;  // pixels
  double confidence = 0.995;
  int max_iterations = 2000;
  int min_matches = 8;
  std::uint64_t rng_seed = 0x9e3779b97f4a7c15ULL;

  void validate() const {
    if (!(inlier_threshold > 0.0)) throw ConfigError("ransac.inlier_threshold must be positive");
    if (!(confidence > 0.0 && confidence < 1.0)) throw ConfigError("ransac.confidence must lie in (0,1)");
    if (max_iterations < 1) throw ConfigError("ransac.max_iterations must be >= 1");
    if (min_matches < 3) throw ConfigError("ransac.min_matches must be >= 3");
  }
};

struct RansacResult {
  AffineModel model;
  std::vector<std::uint8_t> inlier_mask;
  std::size_t inlier_count = 0;
  int iterations = 0;
};

inline constexpr double kMinSampleArea = 1.0;  // px^2

namespace detail {

inline std::optional<std::array<double, 3>> solve3x3(const std::array<std::array<double, 3>, 3>& A,
                                                      const std::array<double, 3>& b) {
  auto det3 = [](const std::array<std::array<double, 3>, 3>& M) {
    return M[0][0] * (M[1][1] * M[2][2] - M[1][2] * M[2][1]) - M[0][1] * (M[1][0] * M[2][2] - M[1][2] * M[2][0]) +
           M[0][2] * (M[1][0] * M[2][1] - M[1][1] * M[2][0]);
  };
  const double det = det3(A);
  if (!std::isfinite(det) || std::abs(det) < 1e-12) return std::nullopt;
  std::array<double, 3> x{};
  for (int c = 0; c < 3; ++c) {
    auto M = A;
    for (int r = 0; r < 3; ++r) M[r][c] = b[r];
    x[c] = det3(M) / det;
  }
  return x;
}

inline double triangle_area(Point2 a, Point2 b, Point2 c) {
  return 0.5 * std::abs((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
}

inline std::optional<AffineModel> affine_from_three(const std::array<Point2, 3>& src, const std::array<Point2, 3>& dst) {
  const std::array<std::array<double, 3>, 3> A{
      {{src[0].x, src[0].y, 1.0}, {src[1].x, src[1].y, 1.0}, {src[2].x, src[2].y, 1.0}}};
  const auto row0 = solve3x3(A, {dst[0].x, dst[1].x, dst[2].x});
  const auto row1 = solve3x3(A, {dst[0].y, dst[1].y, dst[2].y});
  if (!row0 || !row1) return std::nullopt;
  AffineModel m;
  m.m = {(*row0)[0], (*row0)[1], (*row0)[2], (*row1)[0], (*row1)[1], (*row1)[2]};
  if (!m.valid()) return std::nullopt;
  return m;
}

// Least squares over the masked correspondences, in coordinates centred on
// the source centroid for conditioning.
inline std::optional<AffineModel> affine_least_squares(std::span<const Point2> src, std::span<const Point2> dst,
                                                       const std::vector<std::uint8_t>& mask) {
  double mx = 0.0, my = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (!mask[i]) continue;
    mx += src[i].x;
    my += src[i].y;
    ++n;
  }
  if (n < 3) return std::nullopt;
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);

  std::array<std::array<double, 3>, 3> ata{};
  std::array<double, 3> atx{}, aty{};
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (!mask[i]) continue;
    const std::array<double, 3> r{src[i].x - mx, src[i].y - my, 1.0};
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) ata[a][b] += r[a] * r[b];
      atx[a] += r[a] * dst[i].x;
      aty[a] += r[a] * dst[i].y;
    }
  }
  const auto px = solve3x3(ata, atx);
  const auto py = solve3x3(ata, aty);
  if (!px || !py) return std::nullopt;
  AffineModel m;
  m.m = {(*px)[0], (*px)[1], (*px)[2] - (*px)[0] * mx - (*px)[1] * my,
         (*py)[0], (*py)[1], (*py)[2] - (*py)[0] * mx - (*py)[1] * my};
  if (!m.valid()) return std::nullopt;
  return m;
}

inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

}  // namespace detail

inline double reprojection_error(const AffineModel& model, Point2 src, Point2 dst) {
  const auto p = model.apply(src);
  return std::hypot(p.x - dst.x, p.y - dst.y);
}

// Robust affine fit: minimal 3-point samples, inlier counting below the
// reprojection threshold, adaptive iteration bound, least-squares refit on
// the winning consensus set. Sampling uses mt19937_64 reduced by modulo so
// the sequence is identical on every standard library.
inline RansacResult ransac_affine(std::span<const Point2> prev, std::span<const Point2> curr,
                                  const RansacParams& params) {
  params.validate();
  if (prev.size() != curr.size()) throw ConfigError("ransac_affine: point lists differ in length");
  const std::size_t n = prev.size();
  const std::size_t min_pts = std::max<std::size_t>(3, static_cast<std::size_t>(params.min_matches));
  if (n < min_pts) {
    throw InsufficientMatchesError("ransac_affine: " + std::to_string(n) + " correspondences, need " +
                                   std::to_string(min_pts));
  }

  std::mt19937_64 rng(params.rng_seed);
  const double thr2 = params.inlier_threshold * params.inlier_threshold;

  std::vector<std::uint8_t> best_mask, mask(n);
  std::size_t best_count = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  double bound = static_cast<double>(params.max_iterations);
  int iter = 0;

  while (iter < params.max_iterations && static_cast<double>(iter) < bound) {
    ++iter;
    const std::size_t i0 = detail::uniform_index(rng, n);
    std::size_t i1 = detail::uniform_index(rng, n);
    while (i1 == i0) i1 = detail::uniform_index(rng, n);
    std::size_t i2 = detail::uniform_index(rng, n);
    while (i2 == i0 || i2 == i1) i2 = detail::uniform_index(rng, n);

    if (detail::triangle_area(prev[i0], prev[i1], prev[i2]) < kMinSampleArea) continue;
    const auto model = detail::affine_from_three({prev[i0], prev[i1], prev[i2]}, {curr[i0], curr[i1], curr[i2]});
    if (!model) continue;

    std::size_t count = 0;
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto p = model->apply(prev[i]);
      const double dx = p.x - curr[i].x;
      const double dy = p.y - curr[i].y;
      const double e2 = dx * dx + dy * dy;
      mask[i] = e2 < thr2;
      if (mask[i]) {
        ++count;
        cost += e2;
      }
    }
    if (count > best_count || (count == best_count && count > 0 && cost < best_cost)) {
      best_count = count;
      best_cost = cost;
      best_mask = mask;
      const double w = static_cast<double>(count) / static_cast<double>(n);
      const double miss = 1.0 - w * w * w;
      if (miss <= 0.0) {
        bound = 0.0;
      } else {
        bound = std::min(bound, std::log(1.0 - params.confidence) / std::log(miss));
      }
    }
  }

  if (best_count < min_pts) {
    throw DegenerateGeometryError("ransac_affine: best consensus has " + std::to_string(best_count) +
                                  " inliers, need " + std::to_string(min_pts));
  }
  const auto refit = detail::affine_least_squares(prev, curr, best_mask);
  if (!refit) throw DegenerateGeometryError("ransac_affine: least-squares refit is singular");

  RansacResult result;
  result.model = *refit;
  result.inlier_mask = std::move(best_mask);
  result.inlier_count = best_count;
  result.iterations = iter;
  return result;
}

}  // namespace zerospeed::matching

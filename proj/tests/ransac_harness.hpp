#pragma once

// Known affine model, 70 noisy inliers and 30 uniform outliers.

#include <cmath>
#include <random>
#include <vector>

#include <zerospeed/matching.hpp>

namespace testing_support {

struct RansacProblem {
  zerospeed::matching::AffineModel truth;
  std::vector<zerospeed::matching::Point2> src, dst;
  std::vector<bool> is_inlier;
};

inline RansacProblem make_ransac_problem(std::uint64_t seed, int n = 100, double outlier_fraction = 0.3,
                                         double noise_sigma = 0.5) {
  using zerospeed::matching::Point2;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> lin(-0.05, 0.05);
  std::uniform_real_distribution<double> shift(-20.0, 20.0);
  std::uniform_real_distribution<double> px(0.0, 640.0);
  std::uniform_real_distribution<double> py(0.0, 480.0);
  std::normal_distribution<double> noise(0.0, noise_sigma);

  RansacProblem p;
  p.truth.m = {1.0 + lin(rng), lin(rng), shift(rng), lin(rng), 1.0 + lin(rng), shift(rng)};
  const int n_out = static_cast<int>(std::lround(outlier_fraction * n));
  for (int i = 0; i < n; ++i) {
    const Point2 s{px(rng), py(rng)};
    p.src.push_back(s);
    if (i < n - n_out) {
      const auto t = p.truth.apply(s);
      p.dst.push_back({t.x + noise(rng), t.y + noise(rng)});
      p.is_inlier.push_back(true);
    } else {
      p.dst.push_back({px(rng), py(rng)});
      p.is_inlier.push_back(false);
    }
  }
  // Interleave so inliers are not a prefix.
  std::vector<std::size_t> order(n);
  for (int i = 0; i < n; ++i) order[i] = static_cast<std::size_t>(i);
  std::shuffle(order.begin(), order.end(), rng);
  RansacProblem q = p;
  for (int i = 0; i < n; ++i) {
    q.src[i] = p.src[order[i]];
    q.dst[i] = p.dst[order[i]];
    q.is_inlier[i] = p.is_inlier[order[i]];
  }
  return q;
}

struct RansacTrial {
  bool success = false;
  double model_error = 0.0;  // mean |estimated - true| mapping over true inliers, px
  double recall = 0.0;       // true inliers flagged as inliers
  double residual = 0.0;     // mean |estimated mapping - noisy target| over true inliers, px
};

// Success: mean model error on the true inliers below 0.5 px and at least
// 95% of them recovered. The error is taken against the noise-free target,
// since residuals to the noisy points average sigma*sqrt(pi/2) > 0.5 px for
// any model.
inline RansacTrial ransac_trial(std::uint64_t seed) {
  auto p = make_ransac_problem(seed);
  zerospeed::matching::RansacParams params;
  params.rng_seed = seed * 7919 + 1;
  RansacTrial t;
  try {
    const auto r = zerospeed::matching::ransac_affine(p.src, p.dst, params);
    double err = 0.0, res = 0.0;
    std::size_t n_in = 0, hit = 0;
    for (std::size_t i = 0; i < p.src.size(); ++i) {
      if (!p.is_inlier[i]) continue;
      ++n_in;
      const auto a = r.model.apply(p.src[i]);
      const auto b = p.truth.apply(p.src[i]);
      err += std::hypot(a.x - b.x, a.y - b.y);
      res += std::hypot(a.x - p.dst[i].x, a.y - p.dst[i].y);
      hit += r.inlier_mask[i] ? 1 : 0;
    }
    t.model_error = err / static_cast<double>(n_in);
    t.recall = static_cast<double>(hit) / static_cast<double>(n_in);
    t.residual = res / static_cast<double>(n_in);
    t.success = t.model_error < 0.5 && t.recall >= 0.95;
  } catch (const zerospeed::Error&) {
    t.success = false;
  }
  return t;
}

}  // namespace testing_support

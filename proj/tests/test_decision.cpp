#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include <zerospeed/decision.hpp>

using namespace zerospeed;
using namespace zerospeed::decision;

namespace {

Trajectory track(std::vector<matching::Point2> pts, std::uint64_t id = 0) {
  Trajectory t;
  t.id = id;
  t.positions = std::move(pts);
  return t;
}

Trajectory disp(double dx, double dy, double x0 = 10.0, double y0 = 20.0) {
  return track({{x0, y0}, {x0 + dx, y0 + dy}});
}

WindowStats stats_of(double mean_disp, double sdx, double sdy, std::size_t n = 10) {
  WindowStats s;
  s.mean_disp = mean_disp;
  s.sd_x = sdx;
  s.sd_y = sdy;
  s.n_tracks = n;
  return s;
}

}  // namespace

TEST(Displacement, Examples) {
  EXPECT_DOUBLE_EQ(trajectory_displacement(track({{0, 0}, {3, 4}})), 5.0);
  EXPECT_DOUBLE_EQ(trajectory_displacement(track({{7, 7}, {7, 7}})), 0.0);
  EXPECT_DOUBLE_EQ(trajectory_displacement(track({{0, 0}, {10, 0}, {1, 1}})), std::sqrt(2.0));
  EXPECT_THROW(trajectory_displacement(track({{1, 1}})), std::invalid_argument);
}

TEST(WindowStats, TwoTracks) {
  const std::vector<Trajectory> tr{disp(1, 0), disp(3, 0)};
  const auto s = compute_window_stats(tr);
  EXPECT_DOUBLE_EQ(s.mean_disp, 2.0);
  EXPECT_DOUBLE_EQ(s.mean_dx, 2.0);
  EXPECT_DOUBLE_EQ(s.sd_x, 1.0);
  EXPECT_DOUBLE_EQ(s.sd_y, 0.0);
  EXPECT_EQ(s.n_tracks, 2u);
}

TEST(WindowStats, SingleTrackAndEmpty) {
  const std::vector<Trajectory> one{disp(3, 4)};
  const auto s = compute_window_stats(one);
  EXPECT_DOUBLE_EQ(s.mean_disp, 5.0);
  EXPECT_EQ(s.sd_x, 0.0);
  EXPECT_EQ(s.sd_y, 0.0);

  const auto e = compute_window_stats({});
  EXPECT_EQ(e.n_tracks, 0u);
  EXPECT_EQ(e.mean_disp, 0.0);
  EXPECT_EQ(e.sd_x, 0.0);
  EXPECT_EQ(e.sd_y, 0.0);
}

// Two-pass population formulas, written out separately.
TEST(WindowStats, MatchesFormulaOracle) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::uniform_int_distribution<int> count(1, 50);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Trajectory> tr;
    const int m = count(rng);
    for (int j = 0; j < m; ++j) tr.push_back(track({{u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)}}));
    double S = 0, X = 0, Y = 0;
    for (const auto& t : tr) {
      const double xj = t.positions[2].x - t.positions[0].x;
      const double yj = t.positions[2].y - t.positions[0].y;
      S += std::sqrt(xj * xj + yj * yj);
      X += xj;
      Y += yj;
    }
    S /= m;
    X /= m;
    Y /= m;
    double vx = 0, vy = 0;
    for (const auto& t : tr) {
      vx += std::pow(t.positions[2].x - t.positions[0].x - X, 2);
      vy += std::pow(t.positions[2].y - t.positions[0].y - Y, 2);
    }
    const double sx = std::sqrt(vx / m), sy = std::sqrt(vy / m);
    const auto s = compute_window_stats(tr);
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); };
    ASSERT_LT(rel(s.mean_disp, S), 1e-9);
    ASSERT_LT(rel(s.mean_dx, X), 1e-9);
    ASSERT_LT(rel(s.mean_dy, Y), 1e-9);
    ASSERT_LT(rel(s.sd_x, sx), 1e-9);
    ASSERT_LT(rel(s.sd_y, sy), 1e-9);
  }
}

TEST(WindowStats, PermutationInvariant) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::vector<Trajectory> tr;
  for (int j = 0; j < 30; ++j) tr.push_back(disp(u(rng), u(rng)));
  const auto a = compute_window_stats(tr);
  std::shuffle(tr.begin(), tr.end(), rng);
  const auto b = compute_window_stats(tr);
  EXPECT_NEAR(a.mean_disp, b.mean_disp, 1e-12);
  EXPECT_NEAR(a.sd_x, b.sd_x, 1e-12);
  EXPECT_NEAR(a.sd_y, b.sd_y, 1e-12);
}

TEST(WindowStats, HomogeneousOfDegreeOne) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::vector<Trajectory> tr, scaled;
  const double lambda = 2.5;
  for (int j = 0; j < 20; ++j) {
    const double dx = u(rng), dy = u(rng);
    tr.push_back(disp(dx, dy, 0, 0));
    scaled.push_back(disp(lambda * dx, lambda * dy, 0, 0));
  }
  const auto a = compute_window_stats(tr);
  const auto b = compute_window_stats(scaled);
  EXPECT_NEAR(b.mean_disp, lambda * a.mean_disp, 1e-12);
  EXPECT_NEAR(b.sd_x, lambda * a.sd_x, 1e-12);
  EXPECT_NEAR(b.sd_y, lambda * a.sd_y, 1e-12);
}

TEST(WindowStats, RigidMotionHasNoSpread) {
  for (double d : {0.0, 0.75, 1.5, 3.0}) {
    std::vector<Trajectory> tr;
    for (int j = 0; j < 17; ++j) tr.push_back(disp(d, -0.5 * d, j * 3.0, j * 2.0));
    const auto s = compute_window_stats(tr);
    EXPECT_LT(s.sd_x, 1e-12);
    EXPECT_LT(s.sd_y, 1e-12);
    EXPECT_NE(classify(s), MotionState::Vibration);
  }
}

TEST(Classify, Examples) {
  EXPECT_EQ(classify(stats_of(3.0, 0.0, 0.0)), MotionState::Moving);
  EXPECT_EQ(classify(stats_of(1.0, 0.5, 0.1)), MotionState::Vibration);
  EXPECT_EQ(classify(stats_of(2.05, 0.0, 0.0)), MotionState::Static);
  EXPECT_EQ(classify(stats_of(1.0, 0.23, 0.23)), MotionState::Static);
  EXPECT_EQ(classify(stats_of(1.0, 0.1, 0.2300001)), MotionState::Vibration);
}

TEST(Classify, TooFewTracksIsIndeterminate) {
  EXPECT_EQ(classify(stats_of(3.0, 0.0, 0.0, 4)), MotionState::Indeterminate);
  EXPECT_EQ(classify(stats_of(3.0, 0.0, 0.0, 5)), MotionState::Moving);
  EXPECT_EQ(classify(stats_of(0.0, 0.0, 0.0, 0), {}, 1), MotionState::Indeterminate);
}

TEST(Classify, SdCombineModes) {
  const auto s = stats_of(1.0, 0.3, 0.1);
  EXPECT_EQ(classify(s, {}, 5, SdCombine::Max), MotionState::Vibration);
  EXPECT_EQ(classify(s, {}, 5, SdCombine::Mean), MotionState::Static);  // 0.2
  EXPECT_EQ(classify(s, {}, 5, SdCombine::Norm), MotionState::Vibration);
}

TEST(Classify, MonotoneInDisplacement) {
  for (double sd : {0.0, 0.2, 0.5}) {
    bool moving = false;
    for (double d = 0.0; d <= 5.0; d += 0.01) {
      const bool now = classify(stats_of(d, sd, sd)) == MotionState::Moving;
      ASSERT_FALSE(moving && !now) << d;
      moving = now;
    }
  }
}

TEST(States, RoundTripNames) {
  for (auto s : {MotionState::Static, MotionState::Vibration, MotionState::Moving, MotionState::Indeterminate}) {
    EXPECT_EQ(parse_state(to_string(s)), s);
  }
  EXPECT_EQ(parse_state("Moving"), MotionState::Moving);
  EXPECT_FALSE(parse_state("parked").has_value());
}

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "error.hpp"
#include "tracking.hpp"

namespace zerospeed::decision {

using tracking::Trajectory;

enum class MotionState { Static, Vibration, Moving, Indeterminate };

inline constexpr std::string_view to_string(MotionState s) {
  switch (s) {
    case MotionState::Static: return "static";
    case MotionState::Vibration: return "vibration";
    case MotionState::Moving: return "moving";
    case MotionState::Indeterminate: return "indeterminate";
  }
  return "indeterminate";
}

inline std::optional<MotionState> parse_state(std::string_view text) {
  std::string lower(text);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "static") return MotionState::Static;
  if (lower == "vibration") return MotionState::Vibration;
  if (lower == "moving") return MotionState::Moving;
  if (lower == "indeterminate") return MotionState::Indeterminate;
  return std::nullopt;
}

struct WindowStats {
  double mean_disp = 0.0;  // mean start-to-end displacement length
  double sd_x = 0.0;       // population standard deviations of the
  double sd_y = 0.0;       // signed axis displacements
  double mean_dx = 0.0;
  double mean_dy = 0.0;
  std::size_t n_tracks = 0;
};

struct DecisionThresholds {
  double cumulative_thresh = 2.05;  // px
  double sd_thresh = 0.23;          // px

  void validate() const {
    if (!(cumulative_thresh > 0.0) || !(sd_thresh > 0.0)) throw ConfigError("decision thresholds must be positive");
  }
};

// How sd_x and sd_y fold into the single spread compared with sd_thresh.
enum class SdCombine { Max, Mean, Norm };

inline std::optional<SdCombine> parse_sd_combine(std::string_view s) {
  if (s == "max") return SdCombine::Max;
  if (s == "mean") return SdCombine::Mean;
  if (s == "norm") return SdCombine::Norm;
  return std::nullopt;
}

inline constexpr std::string_view to_string(SdCombine c) {
  switch (c) {
    case SdCombine::Max: return "max";
    case SdCombine::Mean: return "mean";
    case SdCombine::Norm: return "norm";
  }
  return "max";
}

inline constexpr std::size_t kDefaultMinTracks = 5;

// Length of the vector from the earliest to the latest retained position.
inline double trajectory_displacement(const Trajectory& traj) {
  if (traj.positions.size() < 2) throw std::invalid_argument("trajectory_displacement needs at least 2 positions");
  return std::hypot(traj.end().x - traj.start().x, traj.end().y - traj.start().y);
}

inline WindowStats compute_window_stats(std::span<const Trajectory> tracks) {
  WindowStats st;
  st.n_tracks = tracks.size();
  if (tracks.empty()) return st;
  const double m = static_cast<double>(tracks.size());

  double sum_s = 0.0, sum_x = 0.0, sum_y = 0.0;
  for (const auto& t : tracks) {
    sum_s += trajectory_displacement(t);
    sum_x += t.end().x - t.start().x;
    sum_y += t.end().y - t.start().y;
  }
  st.mean_disp = sum_s / m;
  st.mean_dx = sum_x / m;
  st.mean_dy = sum_y / m;

  double ss_x = 0.0, ss_y = 0.0;
  for (const auto& t : tracks) {
    const double ex = (t.end().x - t.start().x) - st.mean_dx;
    const double ey = (t.end().y - t.start().y) - st.mean_dy;
    ss_x += ex * ex;
    ss_y += ey * ey;
  }
  st.sd_x = std::sqrt(ss_x / m);
  st.sd_y = std::sqrt(ss_y / m);
  return st;
}

inline double combined_sd(const WindowStats& st, SdCombine how) {
  switch (how) {
    case SdCombine::Max: return std::max(st.sd_x, st.sd_y);
    case SdCombine::Mean: return 0.5 * (st.sd_x + st.sd_y);
    case SdCombine::Norm: return std::hypot(st.sd_x, st.sd_y);
  }
  return std::max(st.sd_x, st.sd_y);
}

// Dual-threshold decision:
//   moving     mean_disp >  cumulative_thresh
//   vibration  mean_disp <= cumulative_thresh and sd >  sd_thresh
//   static     mean_disp <= cumulative_thresh and sd <= sd_thresh
// Too few tracks gives Indeterminate rather than a guess.
inline MotionState classify(const WindowStats& st, const DecisionThresholds& th = {},
                            std::size_t min_tracks = kDefaultMinTracks, SdCombine how = SdCombine::Max) {
  if (st.n_tracks < min_tracks) return MotionState::Indeterminate;
  if (st.mean_disp > th.cumulative_thresh) return MotionState::Moving;
  if (combined_sd(st, how) > th.sd_thresh) return MotionState::Vibration;
  return MotionState::Static;
}

}  // namespace zerospeed::decision

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "error.hpp"
#include "matching.hpp"

namespace zerospeed::tracking {

using matching::Match;
using matching::Point2;

inline constexpr std::size_t kWindowSize = 5;
inline constexpr int kMaxMisses = 2;
inline constexpr double kAssociationRadius = 1.0;  // px, strict

struct Trajectory {
  std::uint64_t id = 0;
  std::vector<Point2> positions;  // oldest first, at most the window size
  std::int64_t last_frame = 0;
  int miss_count = 0;

  const Point2& start() const { return positions.front(); }
  const Point2& end() const { return positions.back(); }
};

// Live trajectories of one camera stream. Single writer.
class TrackStore {
 public:
  explicit TrackStore(std::size_t window = kWindowSize, double association_radius = kAssociationRadius)
      : window_(window), radius_(association_radius) {
    if (window_ < 2) throw ConfigError("trajectory window must hold at least 2 positions");
    if (!(radius_ > 0.0)) throw ConfigError("association radius must be positive");
  }

  // Advances the store to `frame` using the inlier matches between frame-1
  // (query side, prev_pts) and frame (train side, curr_pts).
  //
  //  1. associate: a match extends the trajectory whose endpoint lies within
  //     the association radius of the match's previous-frame point; pairs
  //     are taken greedily by ascending distance, then lowest id, then match
  //     order, each trajectory and match used at most once;
  //  2. create: every unused match starts a trajectory at its current point;
  //  3. eliminate: trajectories not extended gain a miss; two misses remove
  //     them.
  void step(std::span<const Match> inliers, std::span<const Point2> prev_pts, std::span<const Point2> curr_pts,
            std::int64_t frame) {
    if (frame != current_ + 1) {
      throw SequencingError("tracker step for frame " + std::to_string(frame) + ", expected " +
                            std::to_string(current_ + 1));
    }
    for (const auto& m : inliers) {
      if (m.query_index >= prev_pts.size() || m.train_index >= curr_pts.size()) {
        throw std::out_of_range("tracker step: match index outside keypoint list");
      }
    }

    struct Pair {
      double dist;
      std::uint64_t id;
      std::size_t traj;
      std::size_t match;
    };
    std::vector<Pair> pairs;
    if (!tracks_.empty() && !inliers.empty()) {
      std::vector<std::pair<double, std::size_t>> by_x(tracks_.size());
      for (std::size_t t = 0; t < tracks_.size(); ++t) by_x[t] = {tracks_[t].end().x, t};
      std::sort(by_x.begin(), by_x.end());
      for (std::size_t mi = 0; mi < inliers.size(); ++mi) {
        const Point2 p = prev_pts[inliers[mi].query_index];
        auto it = std::lower_bound(by_x.begin(), by_x.end(), std::pair<double, std::size_t>{p.x - radius_, 0});
        for (; it != by_x.end() && it->first <= p.x + radius_; ++it) {
          const auto& tr = tracks_[it->second];
          const double d = std::hypot(tr.end().x - p.x, tr.end().y - p.y);
          if (d < radius_) pairs.push_back({d, tr.id, it->second, mi});
        }
      }
      std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        return std::tie(a.dist, a.id, a.match) < std::tie(b.dist, b.id, b.match);
      });
    }

    std::vector<std::uint8_t> extended(tracks_.size(), 0);
    std::vector<std::uint8_t> consumed(inliers.size(), 0);
    for (const auto& pr : pairs) {
      if (extended[pr.traj] || consumed[pr.match]) continue;
      extended[pr.traj] = 1;
      consumed[pr.match] = 1;
      auto& tr = tracks_[pr.traj];
      if (tr.positions.size() == window_) tr.positions.erase(tr.positions.begin());
      tr.positions.push_back(curr_pts[inliers[pr.match].train_index]);
      tr.last_frame = frame;
      tr.miss_count = 0;
    }

    std::vector<Trajectory> next;
    next.reserve(tracks_.size() + inliers.size());
    for (std::size_t t = 0; t < tracks_.size(); ++t) {
      auto& tr = tracks_[t];
      if (!extended[t] && ++tr.miss_count >= kMaxMisses) continue;
      next.push_back(std::move(tr));
    }
    for (std::size_t mi = 0; mi < inliers.size(); ++mi) {
      if (consumed[mi]) continue;
      Trajectory tr;
      tr.id = next_id_++;
      tr.positions.reserve(window_);
      tr.positions.push_back(curr_pts[inliers[mi].train_index]);
      tr.last_frame = frame;
      next.push_back(std::move(tr));
    }
    tracks_ = std::move(next);
    current_ = frame;
  }

  // Drops every trajectory. The id counter and frame index are kept, so ids
  // stay unique across resets and the next step is still frame current+1.
  void reset() { tracks_.clear(); }

  // Trajectories usable for displacement statistics: at least min_len
  // positions and extended at the current frame.
  std::vector<Trajectory> valid_trajectories(std::size_t min_len = 2) const {
    std::vector<Trajectory> out;
    for (const auto& tr : tracks_) {
      if (tr.positions.size() >= std::max<std::size_t>(min_len, 2) && tr.miss_count == 0) out.push_back(tr);
    }
    return out;
  }

  const std::vector<Trajectory>& trajectories() const { return tracks_; }  // ascending id
  std::size_t size() const { return tracks_.size(); }
  std::uint64_t next_id() const { return next_id_; }
  std::int64_t current_frame() const { return current_; }
  std::size_t window() const { return window_; }

 private:
  std::size_t window_;
  double radius_;
  std::vector<Trajectory> tracks_;
  std::uint64_t next_id_ = 0;
  std::int64_t current_ = -1;
};

}  // namespace zerospeed::tracking

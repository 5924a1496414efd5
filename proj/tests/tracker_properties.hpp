#pragma once

// Randomized match streams driven through a TrackStore, with every lifecycle
// invariant checked after each step.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>

#include <zerospeed/tracking.hpp>

namespace testing_support {

struct TrackerPropertyReport {
  std::size_t frames = 0;
  std::size_t violations = 0;
  std::size_t extensions = 0;
  std::size_t creations = 0;
  std::size_t removals = 0;
  std::size_t evictions = 0;
  std::size_t resets = 0;
  std::string first_violation;
};

inline TrackerPropertyReport run_tracker_properties(std::uint64_t seed, std::size_t n_frames) {
  using namespace zerospeed::tracking;
  TrackerPropertyReport rep;
  auto fail = [&](const std::string& what, std::int64_t frame) {
    if (rep.violations++ == 0) rep.first_violation = "frame " + std::to_string(frame) + ": " + what;
  };

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> near(-0.45, 0.45);
  std::uniform_real_distribution<double> coord(0.0, 400.0);
  std::uniform_real_distribution<double> motion(-3.0, 3.0);

  TrackStore store;
  std::uint64_t max_id_seen = 0;
  bool any_id = false;
  std::map<std::uint64_t, int> consecutive_misses;

  for (std::int64_t f = 0; f < static_cast<std::int64_t>(n_frames); ++f) {
    if (f > 0 && unit(rng) < 0.03) {
      const auto before = store.next_id();
      store.reset();
      store.reset();
      ++rep.resets;
      if (store.size() != 0) fail("reset left trajectories", f);
      if (store.next_id() != before) fail("reset changed the id counter", f);
      consecutive_misses.clear();
    }

    // Continuations of a random subset of live tracks, some near-duplicates
    // competing for the same track, and fresh points.
    std::vector<Point2> prev, curr;
    for (const auto& t : store.trajectories()) {
      if (unit(rng) < 0.7) {
        const Point2 p{t.end().x + near(rng), t.end().y + near(rng)};
        prev.push_back(p);
        curr.push_back({p.x + motion(rng), p.y + motion(rng)});
        if (unit(rng) < 0.1) {
          prev.push_back({t.end().x + near(rng), t.end().y + near(rng)});
          curr.push_back({coord(rng), coord(rng)});
        }
      }
    }
    const int fresh = unit(rng) < 0.05 ? 0 : static_cast<int>(unit(rng) * 20);
    for (int i = 0; i < fresh; ++i) {
      prev.push_back({coord(rng), coord(rng)});
      curr.push_back({coord(rng), coord(rng)});
    }
    std::vector<Match> matches;
    if (f > 0 && unit(rng) > 0.05) {
      for (std::size_t i = 0; i < prev.size(); ++i) matches.push_back({i, i, 0.0});
      std::shuffle(matches.begin(), matches.end(), rng);
    }

    const auto before = store.trajectories();
    store.step(matches, prev, curr, f);
    ++rep.frames;
    const auto& after = store.trajectories();

    std::map<std::uint64_t, const Trajectory*> old_by_id;
    for (const auto& t : before) old_by_id[t.id] = &t;

    std::set<std::uint64_t> ids;
    std::set<std::size_t> used_matches;
    std::size_t extended = 0, created = 0;
    for (const auto& t : after) {
      if (!ids.insert(t.id).second) fail("duplicate id " + std::to_string(t.id), f);
      if (t.positions.empty() || t.positions.size() > kWindowSize) fail("window size out of range", f);
      if (t.miss_count < 0 || t.miss_count >= kMaxMisses) fail("miss_count out of range", f);
      if (t.last_frame < f - 1) fail("stale trajectory kept", f);

      const auto it = old_by_id.find(t.id);
      if (it == old_by_id.end()) {
        // Created this frame: id strictly above everything seen so far.
        if (any_id && t.id <= max_id_seen) fail("id reused or not increasing", f);
        if (t.positions.size() != 1 || t.last_frame != f) fail("new trajectory malformed", f);
        max_id_seen = t.id;
        any_id = true;
        ++created;
        continue;
      }
      const auto& old = *it->second;
      if (t.last_frame != f) {
        if (t.positions != old.positions) fail("unextended trajectory changed", f);
        if (t.miss_count != old.miss_count + 1) fail("miss not counted", f);
        continue;
      }
      ++extended;
      // Find the match that extended it: its current point is the new end,
      // its previous point lies within the radius of the old end.
      bool found = false;
      for (const auto& m : matches) {
        if (curr[m.train_index] == t.end() &&
            std::hypot(prev[m.query_index].x - old.end().x, prev[m.query_index].y - old.end().y) < kAssociationRadius &&
            !used_matches.count(m.query_index)) {
          used_matches.insert(m.query_index);
          found = true;
          break;
        }
      }
      if (!found) fail("extension without an associated match", f);
      std::vector<Point2> expect = old.positions;
      if (expect.size() == kWindowSize) {
        expect.erase(expect.begin());
        ++rep.evictions;
      }
      expect.push_back(t.end());
      if (t.positions != expect) fail("append or eviction order wrong", f);
      if (t.miss_count != 0) fail("extended trajectory kept its misses", f);
    }
    for (const auto& t : before) {
      if (!ids.count(t.id)) {
        ++rep.removals;
        if (t.miss_count + 1 < kMaxMisses) fail("trajectory removed before two misses", f);
      }
    }
    if (extended + created != matches.size()) fail("matches not partitioned into extensions and creations", f);
    rep.extensions += extended;
    rep.creations += created;
  }
  return rep;
}

}  // namespace testing_support

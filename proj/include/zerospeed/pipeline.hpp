#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <json.hpp>

#include "config.hpp"
#include "decision.hpp"
#include "error.hpp"
#include "image.hpp"
#include "image_io.hpp"
#include "imgproc.hpp"
#include "matching.hpp"
#include "sift.hpp"
#include "tracking.hpp"

namespace zerospeed {

using decision::MotionState;

struct FrameDecision {
  std::int64_t frame = 0;
  MotionState state = MotionState::Indeterminate;
  double mean_displacement_px = 0.0;
  double sd_x_px = 0.0;
  double sd_y_px = 0.0;
  std::size_t active_tracks = 0;   // valid trajectories behind the statistics
  std::size_t matched_points = 0;  // RANSAC inliers against the previous frame
  double latency_ms = 0.0;
};

namespace detail {

// Shortest "%.6g" rendering; always valid JSON for finite input.
inline std::string format_g6(double v) {
  if (!std::isfinite(v)) v = 0.0;
  if (v == 0.0) v = 0.0;  // drop the sign of -0
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace detail

// One JSON object, keys in declaration order, floats to 6 significant digits.
inline std::string to_json_line(const FrameDecision& d) {
  std::string s;
  s.reserve(192);
  s += "{\"frame\":" + std::to_string(d.frame);
  s += ",\"state\":\"";
  s += decision::to_string(d.state);
  s += "\",\"mean_displacement_px\":" + detail::format_g6(d.mean_displacement_px);
  s += ",\"sd_x_px\":" + detail::format_g6(d.sd_x_px);
  s += ",\"sd_y_px\":" + detail::format_g6(d.sd_y_px);
  s += ",\"active_tracks\":" + std::to_string(d.active_tracks);
  s += ",\"matched_points\":" + std::to_string(d.matched_points);
  s += ",\"latency_ms\":" + detail::format_g6(d.latency_ms);
  s += "}";
  return s;
}

inline FrameDecision decision_from_json(const nlohmann::json& j) {
  FrameDecision d;
  try {
    d.frame = j.at("frame").get<std::int64_t>();
    const auto st = decision::parse_state(j.at("state").get<std::string>());
    if (!st) throw InputError("unknown state '" + j.at("state").get<std::string>() + "'");
    d.state = *st;
    d.mean_displacement_px = j.value("mean_displacement_px", 0.0);
    d.sd_x_px = j.value("sd_x_px", 0.0);
    d.sd_y_px = j.value("sd_y_px", 0.0);
    d.active_tracks = j.value("active_tracks", std::size_t{0});
    d.matched_points = j.value("matched_points", std::size_t{0});
    d.latency_ms = j.value("latency_ms", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed decision record: ") + e.what());
  }
  return d;
}

// ---------------------------------------------------------------------------
// Speed signal

// Frame-indexed vehicle speed with step-hold semantics: each sample holds
// until the next one; frames before the first sample read 0 km/h.
class SpeedSignal {
 public:
  SpeedSignal() = default;
  explicit SpeedSignal(std::map<std::int64_t, double> samples) : samples_(std::move(samples)) {}

  double at(std::int64_t frame) const {
    auto it = samples_.upper_bound(frame);
    if (it == samples_.begin()) return 0.0;
    return std::prev(it)->second;
  }

  std::size_t size() const { return samples_.size(); }

 private:
  std::map<std::int64_t, double> samples_;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

template <typename T>
bool parse_number(const std::string& text, T& out) {
  const char* first = text.data();
  const char* last = first + text.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

}  // namespace detail

// CSV with header "frame,speed_kmh". Frames must increase strictly.
inline SpeedSignal parse_speed_signal(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError("speed signal is empty, expected header frame,speed_kmh", 1);
  ++lineno;
  std::string header = detail::trim(line);
  if (header.size() >= 3 && static_cast<unsigned char>(header[0]) == 0xEF) header = header.substr(3);  // UTF-8 BOM
  header.erase(std::remove_if(header.begin(), header.end(), [](unsigned char c) { return std::isspace(c); }),
               header.end());
  if (header != "frame,speed_kmh") throw ParseError("speed signal header must be 'frame,speed_kmh'", lineno);

  std::map<std::int64_t, double> samples;
  std::optional<std::int64_t> last;
  while (std::getline(in, line)) {
    ++lineno;
    const auto row = detail::trim(line);
    if (row.empty()) continue;
    const auto comma = row.find(',');
    if (comma == std::string::npos || row.find(',', comma + 1) != std::string::npos) {
      throw ParseError("expected two columns", lineno);
    }
    std::int64_t frame = 0;
    double speed = 0.0;
    if (!detail::parse_number(detail::trim(row.substr(0, comma)), frame) || frame < 0) {
      throw ParseError("frame must be a non-negative integer", lineno);
    }
    if (!detail::parse_number(detail::trim(row.substr(comma + 1)), speed) || !std::isfinite(speed) || speed < 0) {
      throw ParseError("speed_kmh must be a non-negative number", lineno);
    }
    if (last && frame <= *last) throw ParseError("frame indices must increase", lineno);
    last = frame;
    samples[frame] = speed;
  }
  return SpeedSignal(std::move(samples));
}

inline SpeedSignal load_speed_signal(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open speed signal: " + path.string());
  try {
    return parse_speed_signal(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

// ---------------------------------------------------------------------------
// Frame source

struct FrameFile {
  std::int64_t index = 0;
  std::filesystem::path path;
};

// frame_<digits>.pgm|png, ascending index.
inline std::vector<FrameFile> list_frames(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw InputError("input is not a directory: " + dir.string());
  static const std::regex pattern(R"(frame_(\d+)\.(pgm|png|PGM|PNG))");
  std::vector<FrameFile> frames;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::smatch m;
    const auto name = entry.path().filename().string();
    if (!std::regex_match(name, m, pattern)) continue;
    std::int64_t idx = 0;
    if (!detail::parse_number(m[1].str(), idx)) continue;
    frames.push_back({idx, entry.path()});
  }
  if (frames.empty()) throw InputError("no frame_NNNNNN.pgm|png files in " + dir.string());
  std::sort(frames.begin(), frames.end(), [](const FrameFile& a, const FrameFile& b) { return a.index < b.index; });
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (frames[i].index == frames[i - 1].index) {
      throw InputError("duplicate frame index " + std::to_string(frames[i].index) + " in " + dir.string());
    }
  }
  return frames;
}

// ---------------------------------------------------------------------------
// Pipeline

// Per-stream frame pipeline:
// grayscale -> ROI crop -> CLAHE -> SIFT -> KNN + ratio test -> RANSAC ->
// trajectory step -> window statistics -> decision.
//
// Tracking runs in full-frame coordinates so a change of ROI profile keeps
// existing trajectories comparable.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)), store_(cfg_.window) { cfg_.validate(); }

  FrameDecision process_frame(const GrayImage& frame, std::int64_t frame_index,
                              std::optional<double> speed_kmh = std::nullopt) {
    check_order(frame_index);
    const auto t0 = std::chrono::steady_clock::now();

    const auto& roi = cfg_.roi_for_speed(speed_kmh);
    auto crop = crop_roi(frame, roi);
    const auto enhanced = apply_clahe(crop.image, cfg_.clahe);
    auto feats = sift::detect_and_describe(enhanced, cfg_.sift, ws_);

    std::vector<matching::Point2> points(feats.keypoints.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      points[i] = {feats.keypoints[i].x + crop.offset.x, feats.keypoints[i].y + crop.offset.y};
    }

    const std::int64_t ordinal = ordinal_++;
    FrameDecision out;
    out.frame = frame_index;
    bool failed = false;

    if (ordinal == 0 || !has_prev_) {
      store_.step({}, {}, {}, ordinal);
    } else {
      try {
        const auto knn = matching::knn_match(prev_desc_, feats.descriptors, 2);
        const auto matches = matching::ratio_filter(knn, cfg_.ratio);
        std::vector<matching::Point2> src(matches.size()), dst(matches.size());
        for (std::size_t i = 0; i < matches.size(); ++i) {
          src[i] = prev_points_[matches[i].query_index];
          dst[i] = points[matches[i].train_index];
        }
        auto params = cfg_.ransac;
        params.rng_seed = frame_seed(cfg_.ransac.rng_seed, ordinal);
        const auto fit = matching::ransac_affine(src, dst, params);
        std::vector<matching::Match> inliers;
        inliers.reserve(fit.inlier_count);
        for (std::size_t i = 0; i < matches.size(); ++i) {
          if (fit.inlier_mask[i]) inliers.push_back(matches[i]);
        }
        store_.step(inliers, prev_points_, points, ordinal);
        out.matched_points = inliers.size();
      } catch (const InsufficientMatchesError&) {
        failed = true;
      } catch (const DegenerateGeometryError&) {
        failed = true;
      }
      if (failed) {
        store_.reset();
        store_.step({}, {}, {}, ordinal);
      }
    }

    prev_points_ = std::move(points);
    prev_desc_ = std::move(feats.descriptors);
    has_prev_ = true;

    const auto valid = store_.valid_trajectories(cfg_.min_track_len);
    const auto stats = decision::compute_window_stats(valid);
    out.mean_displacement_px = stats.mean_disp;
    out.sd_x_px = stats.sd_x;
    out.sd_y_px = stats.sd_y;
    out.active_tracks = stats.n_tracks;
    out.state = (failed || ordinal < 2)
                    ? MotionState::Indeterminate
                    : decision::classify(stats, cfg_.thresholds, cfg_.min_tracks, cfg_.sd_combine);

    out.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return out;
  }

  FrameDecision process_frame(const RgbImage& frame, std::int64_t frame_index,
                              std::optional<double> speed_kmh = std::nullopt) {
    return process_frame(to_grayscale(frame), frame_index, speed_kmh);
  }

  // A frame that could not be read: emit Indeterminate and restart tracking
  // from the next readable frame.
  FrameDecision skip_frame(std::int64_t frame_index) {
    check_order(frame_index);
    const std::int64_t ordinal = ordinal_++;
    store_.reset();
    store_.step({}, {}, {}, ordinal);
    has_prev_ = false;
    prev_points_.clear();
    prev_desc_.clear();
    FrameDecision out;
    out.frame = frame_index;
    return out;
  }

  const tracking::TrackStore& tracks() const { return store_; }
  const PipelineConfig& config() const { return cfg_; }

 private:
  void check_order(std::int64_t frame_index) {
    if (last_index_ && frame_index <= *last_index_) {
      throw SequencingError("frame " + std::to_string(frame_index) + " arrived after frame " +
                            std::to_string(*last_index_));
    }
    last_index_ = frame_index;
  }

  // splitmix64 of (seed, ordinal): independent sampling per frame, fixed per run.
  static std::uint64_t frame_seed(std::uint64_t seed, std::int64_t ordinal) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(ordinal + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  PipelineConfig cfg_;
  tracking::TrackStore store_;
  sift::Workspace ws_;
  std::vector<matching::Point2> prev_points_;
  std::vector<sift::Descriptor> prev_desc_;
  bool has_prev_ = false;
  std::int64_t ordinal_ = 0;
  std::optional<std::int64_t> last_index_;
};

struct RunSummary {
  std::size_t frames = 0;
  std::size_t skipped = 0;
  std::array<std::size_t, 4> state_counts{};  // indexed by MotionState
  double latency_mean_ms = 0.0;
  double latency_sd_ms = 0.0;

  nlohmann::json to_json() const {
    return {{"frames", frames},
            {"skipped", skipped},
            {"static", state_counts[0]},
            {"vibration", state_counts[1]},
            {"moving", state_counts[2]},
            {"indeterminate", state_counts[3]},
            {"latency_mean_ms", latency_mean_ms},
            {"latency_sd_ms", latency_sd_ms}};
  }
};

struct RunOptions {
  bool strict = false;  // abort on the first unreadable frame
  const SpeedSignal* signal = nullptr;
};

// Processes every frame in order and hands each decision to `sink`.
inline RunSummary run(const std::vector<FrameFile>& frames, const PipelineConfig& cfg,
                      const std::function<void(const FrameDecision&)>& sink, RunOptions opts = {}) {
  if (frames.empty()) throw InputError("no frames to process");
  Pipeline pipe(cfg);
  RunSummary summary;
  std::vector<double> latencies;
  latencies.reserve(frames.size());
  for (const auto& f : frames) {
    std::optional<double> speed;
    if (opts.signal) speed = opts.signal->at(f.index);
    FrameDecision d;
    std::optional<GrayImage> img;
    try {
      img = read_frame(f.path);
    } catch (const InputError&) {
      if (opts.strict) throw;
      ++summary.skipped;
    }
    if (img) {
      d = pipe.process_frame(*img, f.index, speed);
      latencies.push_back(d.latency_ms);
    } else {
      d = pipe.skip_frame(f.index);
    }
    ++summary.frames;
    ++summary.state_counts[static_cast<std::size_t>(d.state)];
    sink(d);
  }
  if (!latencies.empty()) {
    double sum = 0.0;
    for (double v : latencies) sum += v;
    summary.latency_mean_ms = sum / static_cast<double>(latencies.size());
    double ss = 0.0;
    for (double v : latencies) ss += (v - summary.latency_mean_ms) * (v - summary.latency_mean_ms);
    summary.latency_sd_ms = std::sqrt(ss / static_cast<double>(latencies.size()));
  }
  return summary;
}

}  // namespace zerospeed

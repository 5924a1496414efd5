#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "decision.hpp"
#include "error.hpp"
#include "imgproc.hpp"
#include "matching.hpp"
#include "sift.hpp"
#include "tracking.hpp"

namespace zerospeed {

// ROI used while the vehicle speed is at most max_speed_kmh; an empty bound
// covers every higher speed.
struct RoiProfile {
  std::optional<double> max_speed_kmh;
  RoiSpec roi;
};

struct PipelineConfig {
  std::vector<RoiProfile> roi_profiles{RoiProfile{std::nullopt, RoiSpec{}}};
  ClaheParams clahe;
  sift::SiftParams sift;
  double ratio = 0.75;
  matching::RansacParams ransac;
  decision::DecisionThresholds thresholds;
  decision::SdCombine sd_combine = decision::SdCombine::Max;
  std::size_t window = tracking::kWindowSize;
  std::size_t min_track_len = 2;
  std::size_t min_tracks = decision::kDefaultMinTracks;

  void validate() const {
    if (roi_profiles.empty()) throw ConfigError("roi_profiles must not be empty");
    double last = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < roi_profiles.size(); ++i) {
      const auto& p = roi_profiles[i];
      p.roi.validate();
      const bool is_last = i + 1 == roi_profiles.size();
      if (!p.max_speed_kmh) {
        if (!is_last) throw ConfigError("only the last ROI profile may leave max_speed_kmh unbounded");
        continue;
      }
      if (is_last) throw ConfigError("the last ROI profile must cover all speeds (max_speed_kmh: null)");
      if (!(*p.max_speed_kmh > last)) throw ConfigError("ROI profiles must be sorted by ascending max_speed_kmh");
      last = *p.max_speed_kmh;
    }
    clahe.validate();
    sift.validate();
    if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("ratio must lie in (0,1]");
    ransac.validate();
    thresholds.validate();
    if (window < 2) throw ConfigError("window must be >= 2");
    if (min_track_len < 2 || min_track_len > window) throw ConfigError("min_track_len must lie in [2, window]");
  }

  // Absent speed selects the first profile.
  const RoiSpec& roi_for_speed(std::optional<double> speed_kmh) const {
    if (!speed_kmh) return roi_profiles.front().roi;
    for (const auto& p : roi_profiles) {
      if (!p.max_speed_kmh || *speed_kmh <= *p.max_speed_kmh) return p.roi;
    }
    return roi_profiles.back().roi;
  }
};

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline RoiSpec roi_from_json(const json& j, const std::string& where) {
  reject_unknown(j, where, {"top", "bottom", "left", "right"});
  RoiSpec r;
  read_field(j, "top", r.top, where);
  read_field(j, "bottom", r.bottom, where);
  read_field(j, "left", r.left, where);
  read_field(j, "right", r.right, where);
  return r;
}

inline json roi_to_json(const RoiSpec& r) {
  return {{"top", r.top}, {"bottom", r.bottom}, {"left", r.left}, {"right", r.right}};
}

}  // namespace detail

// Every key is optional; unknown keys are rejected so typos surface.
inline PipelineConfig config_from_json(const nlohmann::json& j) {
  using detail::read_field;
  using detail::reject_unknown;
  reject_unknown(j, "config",
                 {"roi_profiles", "clahe", "sift", "ratio", "ransac", "thresholds", "sd_combine", "window",
                  "min_track_len", "min_tracks"});
  PipelineConfig cfg;

  if (j.contains("roi_profiles")) {
    const auto& arr = j.at("roi_profiles");
    if (!arr.is_array()) throw ConfigError("roi_profiles must be an array");
    cfg.roi_profiles.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string where = "roi_profiles[" + std::to_string(i) + "]";
      reject_unknown(arr[i], where, {"max_speed_kmh", "roi"});
      RoiProfile p;
      if (arr[i].contains("max_speed_kmh") && !arr[i].at("max_speed_kmh").is_null()) {
        double v = 0;
        read_field(arr[i], "max_speed_kmh", v, where);
        p.max_speed_kmh = v;
      }
      if (arr[i].contains("roi")) p.roi = detail::roi_from_json(arr[i].at("roi"), where + ".roi");
      cfg.roi_profiles.push_back(p);
    }
  }
  if (j.contains("clahe")) {
    const auto& c = j.at("clahe");
    reject_unknown(c, "clahe", {"tiles_x", "tiles_y", "clip_limit"});
    read_field(c, "tiles_x", cfg.clahe.tiles_x, "clahe");
    read_field(c, "tiles_y", cfg.clahe.tiles_y, "clahe");
    read_field(c, "clip_limit", cfg.clahe.clip_limit, "clahe");
  }
  if (j.contains("sift")) {
    const auto& s = j.at("sift");
    reject_unknown(s, "sift",
                   {"max_features", "contrast_threshold", "edge_ratio", "scales_per_octave", "sigma0",
                    "assumed_input_blur"});
    read_field(s, "max_features", cfg.sift.max_features, "sift");
    read_field(s, "contrast_threshold", cfg.sift.contrast_threshold, "sift");
    read_field(s, "edge_ratio", cfg.sift.edge_ratio, "sift");
    read_field(s, "scales_per_octave", cfg.sift.scales_per_octave, "sift");
    read_field(s, "sigma0", cfg.sift.sigma0, "sift");
    read_field(s, "assumed_input_blur", cfg.sift.assumed_input_blur, "sift");
  }
  read_field(j, "ratio", cfg.ratio, "config");
  if (j.contains("ransac")) {
    const auto& r = j.at("ransac");
    reject_unknown(r, "ransac", {"inlier_threshold", "confidence", "max_iterations", "min_matches", "rng_seed"});
    read_field(r, "inlier_threshold", cfg.ransac.inlier_threshold, "ransac");
    read_field(r, "confidence", cfg.ransac.confidence, "ransac");
    read_field(r, "max_iterations", cfg.ransac.max_iterations, "ransac");
    read_field(r, "min_matches", cfg.ransac.min_matches, "ransac");
    read_field(r, "rng_seed", cfg.ransac.rng_seed, "ransac");
  }
  if (j.contains("thresholds")) {
    const auto& t = j.at("thresholds");
    reject_unknown(t, "thresholds", {"cumulative_thresh", "sd_thresh"});
    read_field(t, "cumulative_thresh", cfg.thresholds.cumulative_thresh, "thresholds");
    read_field(t, "sd_thresh", cfg.thresholds.sd_thresh, "thresholds");
  }
  if (j.contains("sd_combine")) {
    std::string s;
    read_field(j, "sd_combine", s, "config");
    const auto how = decision::parse_sd_combine(s);
    if (!how) throw ConfigError("sd_combine must be one of max|mean|norm");
    cfg.sd_combine = *how;
  }
  read_field(j, "window", cfg.window, "config");
  read_field(j, "min_track_len", cfg.min_track_len, "config");
  read_field(j, "min_tracks", cfg.min_tracks, "config");
  cfg.validate();
  return cfg;
}

inline nlohmann::json config_to_json(const PipelineConfig& cfg) {
  using nlohmann::json;
  json profiles = json::array();
  for (const auto& p : cfg.roi_profiles) {
    profiles.push_back({{"max_speed_kmh", p.max_speed_kmh ? json(*p.max_speed_kmh) : json(nullptr)},
                        {"roi", detail::roi_to_json(p.roi)}});
  }
  return {
      {"roi_profiles", profiles},
      {"clahe", {{"tiles_x", cfg.clahe.tiles_x}, {"tiles_y", cfg.clahe.tiles_y}, {"clip_limit", cfg.clahe.clip_limit}}},
      {"sift",
       {{"max_features", cfg.sift.max_features},
        {"contrast_threshold", cfg.sift.contrast_threshold},
        {"edge_ratio", cfg.sift.edge_ratio},
        {"scales_per_octave", cfg.sift.scales_per_octave},
        {"sigma0", cfg.sift.sigma0},
        {"assumed_input_blur", cfg.sift.assumed_input_blur}}},
      {"ratio", cfg.ratio},
      {"ransac",
       {{"inlier_threshold", cfg.ransac.inlier_threshold},
        {"confidence", cfg.ransac.confidence},
        {"max_iterations", cfg.ransac.max_iterations},
        {"min_matches", cfg.ransac.min_matches},
        {"rng_seed", cfg.ransac.rng_seed}}},
      {"thresholds",
       {{"cumulative_thresh", cfg.thresholds.cumulative_thresh}, {"sd_thresh", cfg.thresholds.sd_thresh}}},
      {"sd_combine", std::string(decision::to_string(cfg.sd_combine))},
      {"window", cfg.window},
      {"min_track_len", cfg.min_track_len},
      {"min_tracks", cfg.min_tracks},
  };
}

// JSON with // and /* */ comments allowed.
inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace zerospeed

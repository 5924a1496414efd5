#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "decision.hpp"
#include "error.hpp"
#include "image.hpp"
#include "image_io.hpp"
#include "matching.hpp"

// Synthetic blind-spot sequences with known motion state.
//
// Frames sample a textured background raster bilinearly at
//   p - (global_k + jitter_k(p))
// so a background point at p in frame 0 appears at p + global_k in frame k.
//
//   static     global_k = 0, no jitter
//   moving     global_k = k * translation
//   vibration  global_k = A sin(pi k / 2 + pi / 4) u, a 4-frame cycle along a
//              seeded direction u, so the net drift across any 5 consecutive
//              frames is exactly zero; plus an elastic field jitter_k drawn
//              afresh every frame on a coarse node grid and smoothly
//              interpolated in between.
//
// A perfectly rigid oscillation moves every trajectory identically, which
// gives zero cross-trajectory spread and reads as static. The elastic term
// stands in for the uneven image motion a shaking chassis produces, and is
// what pushes the displacement spread above the vibration threshold.
//
// All randomness comes from a counter-based hash of (seed, stream, index), so
// output is bit-identical across platforms.

namespace zerospeed::synth {

using decision::MotionState;
using matching::Point2;

enum class SceneKind { Static, Vibration, Moving };
enum class Texture { ValueNoise, Checker, LowTexture };

struct Intruder {
  int width = 96;
  int height = 64;
  double x = 0.0;  // top-left corner in frame 0
  double y = 0.0;
  double vx = 4.0;  // px / frame
  double vy = 0.0;
};

struct SceneSpec {
  SceneKind kind = SceneKind::Static;
  int width = 704;
  int height = 576;
  int n_frames = 60;
  Texture texture = Texture::ValueNoise;
  // value_noise: lattice spacing 16/density px. checker: cell size
  // 16/density px. low_texture: contrast in gray levels is 6*density.
  double texture_density = 1.0;
  double pixel_noise_sigma = 2.0;  // gray levels
  Point2 translation{3.0, 0.0};    // moving: px / frame
  double oscillation_amplitude = 1.0;  // vibration: sinusoid amplitude, px (frames sit at +-A/sqrt2)
  double jitter_amplitude = 0.5;       // vibration: per-axis sd of node offsets, px
  double jitter_spacing = 64.0;        // vibration: node grid pitch, px
  double illumination_ramp = 0.0;      // gray levels added by the last frame
  std::optional<Intruder> intruder;
  std::uint64_t seed = 1;

  void validate() const {
    if (width < 32 || height < 32) throw ConfigError("scene must be at least 32x32");
    if (n_frames < 2) throw ConfigError("scene needs at least 2 frames");
    if (!(texture_density > 0.0)) throw ConfigError("texture_density must be positive");
    if (pixel_noise_sigma < 0.0 || oscillation_amplitude < 0.0 || jitter_amplitude < 0.0) {
      throw ConfigError("noise and motion amplitudes must be >= 0");
    }
    if (!(jitter_spacing >= 8.0)) throw ConfigError("jitter_spacing must be >= 8 px");
    if (!std::isfinite(translation.x) || !std::isfinite(translation.y)) throw ConfigError("translation must be finite");
    if (intruder && (intruder->width < 1 || intruder->height < 1)) throw ConfigError("intruder size must be >= 1");
  }
};

// Calibrated vibration scene: 1.0 px oscillation with 0.5 px elastic jitter.
inline SceneSpec calibrated_vibration(std::uint64_t seed, int width = 704, int height = 576, int n_frames = 60) {
  SceneSpec s;
  s.kind = SceneKind::Vibration;
  s.width = width;
  s.height = height;
  s.n_frames = n_frames;
  s.oscillation_amplitude = 1.0;
  s.jitter_amplitude = 0.5;
  s.seed = seed;
  return s;
}

struct GroundTruth {
  std::int64_t frame = 0;
  MotionState label = MotionState::Static;
};

struct Scene {
  std::vector<GrayImage> frames;
  std::vector<GroundTruth> truth;
  std::vector<Point2> global_offset;  // rigid part of the motion per frame
};

inline MotionState label_of(SceneKind k) {
  switch (k) {
    case SceneKind::Static: return MotionState::Static;
    case SceneKind::Vibration: return MotionState::Vibration;
    case SceneKind::Moving: return MotionState::Moving;
  }
  return MotionState::Static;
}

namespace detail {

inline std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t hash(std::uint64_t seed, std::uint64_t stream, std::uint64_t a, std::uint64_t b = 0) {
  return mix(mix(mix(seed ^ mix(stream)) ^ a) ^ b);
}

inline double unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

// Sum of four uniforms, rescaled to zero mean and unit variance.
inline double approx_normal(std::uint64_t h) {
  double s = 0.0;
  for (int i = 0; i < 4; ++i) s += static_cast<double>((h >> (16 * i)) & 0xffff) * (1.0 / 65536.0);
  return (s - 2.0) * std::sqrt(3.0);
}

// Box-Muller from two hashed uniforms; used where few samples are needed.
inline double normal(std::uint64_t h1, std::uint64_t h2) {
  const double u1 = std::max(unit(h1), 1e-300);
  const double u2 = unit(h2);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

enum Stream : std::uint64_t {
  kTexture = 1,
  kChecker = 2,
  kNoise = 3,
  kJitterX = 4,
  kJitterY = 5,
  kDirection = 6,
  kIntruder = 7,
};

// Value noise at lattice pitch `cell`, smoothstep-interpolated.
inline double value_noise(std::uint64_t seed, std::uint64_t octave, double x, double y, double cell) {
  const double fx = x / cell;
  const double fy = y / cell;
  const double ix = std::floor(fx);
  const double iy = std::floor(fy);
  const double tx = smooth(fx - ix);
  const double ty = smooth(fy - iy);
  auto lattice = [&](double cx, double cy) {
    return unit(hash(seed, kTexture + 16 * octave, static_cast<std::uint64_t>(static_cast<std::int64_t>(cx)),
                     static_cast<std::uint64_t>(static_cast<std::int64_t>(cy))));
  };
  const double a = lattice(ix, iy);
  const double b = lattice(ix + 1, iy);
  const double c = lattice(ix, iy + 1);
  const double d = lattice(ix + 1, iy + 1);
  return (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
}

// Background raster covering [-margin, size + margin) in both axes.
struct Background {
  int margin = 0;
  int width = 0;
  int height = 0;
  std::vector<float> data;

  float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }

  double sample(double x, double y) const {
    const double fx = std::clamp(x + margin, 0.0, static_cast<double>(width - 1));
    const double fy = std::clamp(y + margin, 0.0, static_cast<double>(height - 1));
    const int x0 = std::min(static_cast<int>(fx), width - 2);
    const int y0 = std::min(static_cast<int>(fy), height - 2);
    const double ax = fx - x0;
    const double ay = fy - y0;
    const double top = at(x0, y0) * (1 - ax) + at(x0 + 1, y0) * ax;
    const double bot = at(x0, y0 + 1) * (1 - ax) + at(x0 + 1, y0 + 1) * ax;
    return top * (1 - ay) + bot * ay;
  }
};

inline Background render_background(const SceneSpec& spec, std::uint64_t seed, int w, int h, int margin) {
  Background bg;
  bg.margin = margin;
  bg.width = w + 2 * margin;
  bg.height = h + 2 * margin;
  bg.data.resize(static_cast<std::size_t>(bg.width) * bg.height);
  const double d = spec.texture_density;
  for (int y = 0; y < bg.height; ++y) {
    for (int x = 0; x < bg.width; ++x) {
      const double px = x - margin;
      const double py = y - margin;
      double v = 0.0;
      switch (spec.texture) {
        case Texture::ValueNoise: {
          v = 20.0 + 215.0 * value_noise(seed, 0, px, py, 16.0 / d);
          break;
        }
        case Texture::Checker: {
          const double cell = 16.0 / d;
          const auto cx = static_cast<std::int64_t>(std::floor(px / cell));
          const auto cy = static_cast<std::int64_t>(std::floor(py / cell));
          v = 40.0 + 175.0 * unit(hash(seed, kChecker, static_cast<std::uint64_t>(cx), static_cast<std::uint64_t>(cy)));
          break;
        }
        case Texture::LowTexture: {
          v = 128.0 + 6.0 * d * (value_noise(seed, 0, px, py, 128.0) - 0.5);
          break;
        }
      }
      bg.data[static_cast<std::size_t>(y) * bg.width + x] = static_cast<float>(v);
    }
  }
  return bg;
}

// Elastic displacement field for one frame: Gaussian node offsets on a
// regular grid, smoothstep-interpolated.
class JitterField {
 public:
  JitterField(const SceneSpec& spec, std::int64_t frame)
      : spacing_(spec.jitter_spacing),
        nx_(static_cast<int>(std::ceil(spec.width / spec.jitter_spacing)) + 2),
        ny_(static_cast<int>(std::ceil(spec.height / spec.jitter_spacing)) + 2) {
    dx_.resize(static_cast<std::size_t>(nx_) * ny_);
    dy_.resize(dx_.size());
    const auto f = static_cast<std::uint64_t>(frame);
    for (int j = 0; j < ny_; ++j) {
      for (int i = 0; i < nx_; ++i) {
        const std::size_t k = static_cast<std::size_t>(j) * nx_ + i;
        const auto node = static_cast<std::uint64_t>(k);
        dx_[k] = spec.jitter_amplitude *
                 normal(hash(spec.seed, kJitterX, f, 2 * node), hash(spec.seed, kJitterX, f, 2 * node + 1));
        dy_[k] = spec.jitter_amplitude *
                 normal(hash(spec.seed, kJitterY, f, 2 * node), hash(spec.seed, kJitterY, f, 2 * node + 1));
      }
    }
  }

  Point2 at(double x, double y) const {
    const double fx = std::clamp(x / spacing_, 0.0, nx_ - 1.000001);
    const double fy = std::clamp(y / spacing_, 0.0, ny_ - 1.000001);
    const int i = static_cast<int>(fx);
    const int j = static_cast<int>(fy);
    const double tx = smooth(fx - i);
    const double ty = smooth(fy - j);
    auto lerp2 = [&](const std::vector<double>& v) {
      const std::size_t k = static_cast<std::size_t>(j) * nx_ + i;
      return (v[k] * (1 - tx) + v[k + 1] * tx) * (1 - ty) + (v[k + nx_] * (1 - tx) + v[k + nx_ + 1] * tx) * ty;
    };
    return {lerp2(dx_), lerp2(dy_)};
  }

 private:
  double spacing_;
  int nx_, ny_;
  std::vector<double> dx_, dy_;
};

}  // namespace detail

// Rigid per-frame offset of the background.
inline Point2 global_offset(const SceneSpec& spec, std::int64_t k) {
  switch (spec.kind) {
    case SceneKind::Static: return {0.0, 0.0};
    case SceneKind::Moving: return {spec.translation.x * k, spec.translation.y * k};
    case SceneKind::Vibration: {
      const double theta = 2.0 * std::numbers::pi * detail::unit(detail::hash(spec.seed, detail::kDirection, 0));
      const double s = spec.oscillation_amplitude * std::sin(std::numbers::pi * (k % 4) / 2.0 + std::numbers::pi / 4.0);
      return {s * std::cos(theta), s * std::sin(theta)};
    }
  }
  return {0.0, 0.0};
}

inline GrayImage render_frame(const SceneSpec& spec, const detail::Background& bg,
                              const std::optional<detail::Background>& intruder_tex, std::int64_t k) {
  const int w = spec.width;
  const int h = spec.height;
  const Point2 g = global_offset(spec, k);
  const bool jitter = spec.kind == SceneKind::Vibration && spec.jitter_amplitude > 0.0;
  std::optional<detail::JitterField> field;
  if (jitter) field.emplace(spec, k);
  const double light = spec.n_frames > 1 ? spec.illumination_ramp * static_cast<double>(k) / (spec.n_frames - 1) : 0.0;

  double ix0 = 0, iy0 = 0;
  if (spec.intruder) {
    ix0 = spec.intruder->x + spec.intruder->vx * k;
    iy0 = spec.intruder->y + spec.intruder->vy * k;
  }

  GrayImage out(w, h);
  for (int y = 0; y < h; ++y) {
    auto row = out.row(y);
    for (int x = 0; x < w; ++x) {
      double dx = g.x, dy = g.y;
      if (field) {
        const auto j = field->at(x, y);
        dx += j.x;
        dy += j.y;
      }
      double v = bg.sample(x - dx, y - dy);
      if (spec.intruder) {
        const double lx = x - ix0;
        const double ly = y - iy0;
        if (lx >= 0 && ly >= 0 && lx < spec.intruder->width && ly < spec.intruder->height) {
          v = intruder_tex->sample(lx, ly);
        }
      }
      v += light;
      if (spec.pixel_noise_sigma > 0.0) {
        const auto idx = static_cast<std::uint64_t>(y) * static_cast<std::uint64_t>(w) + static_cast<std::uint64_t>(x);
        v += spec.pixel_noise_sigma *
             detail::approx_normal(detail::hash(spec.seed, detail::kNoise, static_cast<std::uint64_t>(k), idx));
      }
      row[x] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0) + 0.5);
    }
  }
  return out;
}

inline Scene generate(const SceneSpec& spec) {
  spec.validate();
  const double max_shift = std::max(std::abs(spec.translation.x), std::abs(spec.translation.y)) * (spec.n_frames - 1);
  const double motion = spec.kind == SceneKind::Moving ? max_shift
                        : spec.kind == SceneKind::Vibration
                            ? spec.oscillation_amplitude + 6.0 * spec.jitter_amplitude
                            : 0.0;
  const int margin = static_cast<int>(std::ceil(motion)) + 4;
  const auto bg = detail::render_background(spec, spec.seed, spec.width, spec.height, margin);

  std::optional<detail::Background> intruder_tex;
  if (spec.intruder) {
    SceneSpec tex = spec;
    tex.texture = Texture::ValueNoise;
    tex.texture_density = 2.0;
    intruder_tex = detail::render_background(tex, detail::mix(spec.seed ^ detail::kIntruder), spec.intruder->width,
                                             spec.intruder->height, 1);
  }

  Scene scene;
  scene.frames.reserve(spec.n_frames);
  for (int k = 0; k < spec.n_frames; ++k) {
    scene.frames.push_back(render_frame(spec, bg, intruder_tex, k));
    scene.truth.push_back({k, label_of(spec.kind)});
    scene.global_offset.push_back(global_offset(spec, k));
  }
  return scene;
}

// ---------------------------------------------------------------------------
// Serialization

inline std::string to_string(SceneKind k) {
  switch (k) {
    case SceneKind::Static: return "static";
    case SceneKind::Vibration: return "vibration";
    case SceneKind::Moving: return "moving";
  }
  return "static";
}

inline std::string to_string(Texture t) {
  switch (t) {
    case Texture::ValueNoise: return "value_noise";
    case Texture::Checker: return "checker";
    case Texture::LowTexture: return "low_texture";
  }
  return "value_noise";
}

inline nlohmann::json spec_to_json(const SceneSpec& s) {
  nlohmann::json j = {{"kind", to_string(s.kind)},
                      {"width", s.width},
                      {"height", s.height},
                      {"n_frames", s.n_frames},
                      {"texture", to_string(s.texture)},
                      {"texture_density", s.texture_density},
                      {"pixel_noise_sigma", s.pixel_noise_sigma},
                      {"translation", {s.translation.x, s.translation.y}},
                      {"oscillation_amplitude", s.oscillation_amplitude},
                      {"jitter_amplitude", s.jitter_amplitude},
                      {"jitter_spacing", s.jitter_spacing},
                      {"illumination_ramp", s.illumination_ramp},
                      {"seed", s.seed}};
  if (s.intruder) {
    j["intruder"] = {{"width", s.intruder->width}, {"height", s.intruder->height}, {"x", s.intruder->x},
                     {"y", s.intruder->y},         {"vx", s.intruder->vx},         {"vy", s.intruder->vy}};
  } else {
    j["intruder"] = nullptr;
  }
  return j;
}

inline SceneSpec spec_from_json(const nlohmann::json& j) {
  SceneSpec s;
  try {
    if (!j.is_object()) throw ConfigError("scene spec must be a JSON object");
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "static") s.kind = SceneKind::Static;
    else if (kind == "vibration") s.kind = SceneKind::Vibration;
    else if (kind == "moving") s.kind = SceneKind::Moving;
    else throw ConfigError("scene kind must be static|vibration|moving");
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    s.n_frames = j.value("n_frames", s.n_frames);
    const auto tex = j.value("texture", std::string("value_noise"));
    if (tex == "value_noise") s.texture = Texture::ValueNoise;
    else if (tex == "checker") s.texture = Texture::Checker;
    else if (tex == "low_texture") s.texture = Texture::LowTexture;
    else throw ConfigError("texture must be value_noise|checker|low_texture");
    s.texture_density = j.value("texture_density", s.texture_density);
    s.pixel_noise_sigma = j.value("pixel_noise_sigma", s.pixel_noise_sigma);
    if (j.contains("translation")) {
      const auto& t = j.at("translation");
      if (!t.is_array() || t.size() != 2) throw ConfigError("translation must be [dx, dy]");
      s.translation = {t[0].get<double>(), t[1].get<double>()};
    }
    s.oscillation_amplitude = j.value("oscillation_amplitude", s.oscillation_amplitude);
    s.jitter_amplitude = j.value("jitter_amplitude", s.jitter_amplitude);
    s.jitter_spacing = j.value("jitter_spacing", s.jitter_spacing);
    s.illumination_ramp = j.value("illumination_ramp", s.illumination_ramp);
    s.seed = j.value("seed", s.seed);
    if (j.contains("intruder") && !j.at("intruder").is_null()) {
      const auto& in = j.at("intruder");
      Intruder it;
      it.width = in.value("width", it.width);
      it.height = in.value("height", it.height);
      it.x = in.value("x", it.x);
      it.y = in.value("y", it.y);
      it.vx = in.value("vx", it.vx);
      it.vy = in.value("vy", it.vy);
      s.intruder = it;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed scene spec: ") + e.what());
  }
  s.validate();
  return s;
}

inline std::string truth_line(const GroundTruth& t) {
  return "{\"frame\":" + std::to_string(t.frame) + ",\"label\":\"" + std::string(decision::to_string(t.label)) + "\"}";
}

// frame_NNNNNN.pgm for every frame, truth.jsonl and spec.json.
inline void write_scene(const std::filesystem::path& dir, const SceneSpec& spec, const Scene& scene) {
  std::filesystem::create_directories(dir);
  char name[32];
  for (std::size_t k = 0; k < scene.frames.size(); ++k) {
    std::snprintf(name, sizeof name, "frame_%06zu.pgm", k);
    write_pgm(dir / name, scene.frames[k]);
  }
  std::ofstream truth(dir / "truth.jsonl");
  for (const auto& t : scene.truth) truth << truth_line(t) << '\n';
  std::ofstream js(dir / "spec.json");
  js << spec_to_json(spec).dump(2) << '\n';
  if (!truth || !js) throw InputError("cannot write scene files to " + dir.string());
}

}  // namespace zerospeed::synth

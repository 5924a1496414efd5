// Acceptance run: one PASS/FAIL line per criterion. Optional arguments pick
// a subset by number, e.g. `acceptance 1 2 5`.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <zerospeed/zerospeed.hpp>

#include "ransac_harness.hpp"
#include "sift_harness.hpp"
#include "tracker_properties.hpp"

using namespace zerospeed;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1. Window statistics against a direct evaluation in long double.
Outcome window_stats_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> disp(-10.0, 10.0), pos(0.0, 700.0);
  std::uniform_int_distribution<int> count(1, 50), len(2, 5);
  double worst = 0.0;
  for (int set = 0; set < 1000; ++set) {
    const int m = count(rng);
    std::vector<tracking::Trajectory> tracks(m);
    std::vector<long double> dx(m), dy(m);
    for (int j = 0; j < m; ++j) {
      const double x0 = pos(rng), y0 = pos(rng);
      const double ddx = disp(rng), ddy = disp(rng);
      const int n = len(rng);
      tracks[j].positions.push_back({x0, y0});
      for (int i = 1; i + 1 < n; ++i) tracks[j].positions.push_back({pos(rng), pos(rng)});
      tracks[j].positions.push_back({x0 + ddx, y0 + ddy});
      dx[j] = static_cast<long double>(tracks[j].positions.back().x) - x0;
      dy[j] = static_cast<long double>(tracks[j].positions.back().y) - y0;
    }
    long double S = 0, X = 0, Y = 0;
    for (int j = 0; j < m; ++j) {
      S += std::sqrt(dx[j] * dx[j] + dy[j] * dy[j]);
      X += dx[j];
      Y += dy[j];
    }
    S /= m;
    X /= m;
    Y /= m;
    long double VX = 0, VY = 0;
    for (int j = 0; j < m; ++j) {
      VX += (dx[j] - X) * (dx[j] - X);
      VY += (dy[j] - Y) * (dy[j] - Y);
    }
    const long double SX = std::sqrt(VX / m), SY = std::sqrt(VY / m);

    const auto st = decision::compute_window_stats(tracks);
    auto rel = [](double got, long double want) {
      const long double scale = std::max(std::fabs(want), 1e-12L);
      return static_cast<double>(std::fabs(static_cast<long double>(got) - want) / scale);
    };
    worst = std::max({worst, rel(st.mean_disp, S), rel(st.mean_dx, X), rel(st.mean_dy, Y), rel(st.sd_x, SX),
                      rel(st.sd_y, SY)});
    if (st.n_tracks != static_cast<std::size_t>(m)) worst = 1.0;
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-9 && secs < 1.0, fmt("1000 sets, max rel err %.3g (<= 1e-9), %.3f s (< 1 s)", worst, secs)};
}

// 2. classify over the threshold grid against a written-out table.
Outcome decision_grid() {
  const std::vector<double> deltas{0.0, 0.5, 1.0, 1.5, 2.0, 2.05, 2.5, 3.0, 3.5, 4.0};
  const std::vector<double> sigmas{0.0, 0.05, 0.1, 0.15, 0.2, 0.23, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5};
  // Rows follow `deltas`, columns follow `sigmas`.
  const std::vector<std::string> table{
      "SSSSSSVVVVVV",  // 0.0
      "SSSSSSVVVVVV",  // 0.5
      "SSSSSSVVVVVV",  // 1.0
      "SSSSSSVVVVVV",  // 1.5
      "SSSSSSVVVVVV",  // 2.0
      "SSSSSSVVVVVV",  // 2.05
      "MMMMMMMMMMMM",  // 2.5
      "MMMMMMMMMMMM",  // 3.0
      "MMMMMMMMMMMM",  // 3.5
      "MMMMMMMMMMMM",  // 4.0
  };
  auto letter = [](MotionState s) {
    switch (s) {
      case MotionState::Static: return 'S';
      case MotionState::Vibration: return 'V';
      case MotionState::Moving: return 'M';
      default: return '?';
    }
  };
  std::size_t cells = 0, agree = 0;
  for (std::size_t r = 0; r < deltas.size(); ++r) {
    for (std::size_t c = 0; c < sigmas.size(); ++c) {
      // The spread enters through either axis alone and through both.
      for (int axis = 0; axis < 3; ++axis) {
        decision::WindowStats st;
        st.n_tracks = 20;
        st.mean_disp = deltas[r];
        st.sd_x = axis != 1 ? sigmas[c] : 0.0;
        st.sd_y = axis != 0 ? sigmas[c] : 0.0;
        ++cells;
        agree += letter(decision::classify(st)) == table[r][c];
      }
    }
  }
  return {agree == cells, fmt("%zu/%zu grid cells agree", agree, cells)};
}

struct ClassTally {
  std::size_t windows = 0;
  std::size_t as_static = 0, as_vibration = 0, as_moving = 0, indeterminate = 0;
};

// 3. Full pipeline on generated sequences. A window is scored once it spans
// the full five frames; Indeterminate counts against the class.
Outcome synthetic_end_to_end() {
  const auto t0 = Clock::now();
  constexpr int kSeqs = 50, kFrames = 60;
  const std::size_t first_scored = tracking::kWindowSize - 1;
  std::array<ClassTally, 3> tally{};
  std::vector<FrameDecision> preds;
  std::vector<synth::GroundTruth> truth;
  for (int cls = 0; cls < 3; ++cls) {
    for (int i = 0; i < kSeqs; ++i) {
      const std::uint64_t seed = 1000u * (cls + 1) + i;
      synth::SceneSpec spec;
      if (cls == 1) {
        spec = synth::calibrated_vibration(seed, 704, 576, kFrames);
      } else {
        spec.kind = cls == 0 ? synth::SceneKind::Static : synth::SceneKind::Moving;
        spec.translation = {3.0, 0.0};
        spec.pixel_noise_sigma = 2.0;
        spec.n_frames = kFrames;
        spec.seed = seed;
      }
      const auto scene = synth::generate(spec);
      Pipeline pipe{PipelineConfig{}};
      for (int k = 0; k < kFrames; ++k) {
        const auto d = pipe.process_frame(scene.frames[k], k);
        if (static_cast<std::size_t>(k) < first_scored) continue;
        auto& t = tally[cls];
        ++t.windows;
        switch (d.state) {
          case MotionState::Static: ++t.as_static; break;
          case MotionState::Vibration: ++t.as_vibration; break;
          case MotionState::Moving: ++t.as_moving; break;
          case MotionState::Indeterminate: ++t.indeterminate; break;
        }
        FrameDecision p = d;
        p.frame = static_cast<std::int64_t>(preds.size());
        preds.push_back(p);
        truth.push_back({p.frame, scene.truth[k].label});
      }
    }
  }
  const double secs = seconds_since(t0);

  auto pct = [](std::size_t a, std::size_t n) { return n ? 100.0 * static_cast<double>(a) / n : 0.0; };
  const auto& st = tally[0];
  const auto& vb = tally[1];
  const auto& mv = tally[2];
  const double moving_ok = pct(mv.as_moving, mv.windows);
  const double static_ok = pct(st.as_static, st.windows);
  const double vib_ok = pct(vb.as_vibration, vb.windows);
  const double vib_not_moving = pct(vb.windows - vb.as_moving, vb.windows);
  const auto two = eval::merge_two_class(eval::score(preds, truth).matrix);
  const double f1 = two.metrics[1].f1;

  const bool pass = moving_ok >= 99.0 && static_ok >= 99.0 && vib_ok >= 90.0 && vib_not_moving >= 99.0 &&
                    f1 >= 0.97 && secs < 600.0;
  std::string detail = fmt(
      "moving %.2f%% (>= 99), static %.2f%% (>= 99), vibration %.2f%% (>= 90) non-moving %.2f%% (>= 99), "
      "F1(moving) %.5f (>= 0.97), indeterminate %zu/%zu/%zu, %.1f s (< 600)",
      moving_ok, static_ok, vib_ok, vib_not_moving, f1, st.indeterminate, vb.indeterminate, mv.indeterminate, secs);
  return {pass, detail};
}

// 4. Keypoints follow an integer shift.
Outcome sift_equivariance() {
  double worst = 1.0;
  std::size_t interior = 0, matched = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto r = testing_support::translation_equivariance(seed);
    worst = std::min(worst, r.fraction());
    interior += r.interior;
    matched += r.matched;
  }
  return {worst >= 0.70,
          fmt("worst seed %.1f%%, pooled %zu/%zu (%.1f%%), need >= 70%% per seed", 100.0 * worst, matched, interior,
              100.0 * matched / std::max<std::size_t>(interior, 1))};
}

// 5. Affine recovery under outliers and noise.
Outcome ransac_recovery() {
  int ok = 0;
  double worst_err = 0.0, worst_recall = 1.0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto t = testing_support::ransac_trial(seed);
    ok += t.success;
    worst_err = std::max(worst_err, t.model_error);
    worst_recall = std::min(worst_recall, t.recall);
  }
  return {ok >= 95, fmt("%d/100 seeds recovered (>= 95), worst model err %.3f px, worst recall %.3f", ok, worst_err,
                        worst_recall)};
}

// 6. Tracker invariants on random match streams.
Outcome tracker_lifecycle() {
  std::size_t violations = 0, frames = 0, evictions = 0, removals = 0, resets = 0;
  std::string first;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const auto r = testing_support::run_tracker_properties(seed, 500);
    violations += r.violations;
    frames += r.frames;
    evictions += r.evictions;
    removals += r.removals;
    resets += r.resets;
    if (first.empty()) first = r.first_violation;
  }
  std::string detail = fmt("%zu frames over 4 streams, %zu violations (evictions %zu, removals %zu, resets %zu)",
                           frames, violations, evictions, removals, resets);
  if (!first.empty()) detail += "; first: " + first;
  return {violations == 0 && evictions > 0 && removals > 0 && resets > 0, detail};
}

int shell(const std::string& cmd) {
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string strip_latency(const fs::path& p) {
  static const std::regex lat(R"(,"latency_ms":[^,}]*)");
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return std::regex_replace(ss.str(), lat, "");
}

// 7. Two CLI runs with one config and seed.
Outcome determinism() {
  const auto dir = fs::temp_directory_path() / "zs_acceptance_det";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream spec(dir / "spec.json");
    spec << R"({"kind":"vibration","n_frames":20,"seed":31})";
  }
  const std::string cli = ZS_CLI_PATH;
  const auto frames = dir / "frames";
  if (shell(cli + " generate --spec " + (dir / "spec.json").string() + " --out " + frames.string() + " 2>/dev/null") !=
      0) {
    return {false, "scene generation failed"};
  }
  for (const char* name : {"a.jsonl", "b.jsonl"}) {
    if (shell(cli + " detect --input " + frames.string() + " --seed 12345 --output " + (dir / name).string() +
              " 2>/dev/null") != 0) {
      return {false, "detect failed"};
    }
  }
  const auto a = strip_latency(dir / "a.jsonl"), b = strip_latency(dir / "b.jsonl");
  const auto lines = static_cast<std::size_t>(std::count(a.begin(), a.end(), '\n'));
  fs::remove_all(dir);
  return {a == b && lines == 20, fmt("%zu decision lines, outputs %s apart from latency_ms", lines,
                                     a == b ? "byte-identical" : "DIFFER")};
}

std::vector<GrayImage> bench_frames(int w, int h) {
  synth::SceneSpec s;
  s.kind = synth::SceneKind::Moving;
  s.width = w;
  s.height = h;
  s.n_frames = 42;
  s.seed = 77;
  return synth::generate(s).frames;
}

double mean_of_reports(const std::vector<eval::LatencyReport>& reps) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : reps) {
    sum += r.mean_ms * static_cast<double>(r.frames);
    n += r.frames;
  }
  return sum / static_cast<double>(n);
}

// 8. Per-frame latency.
Outcome latency_budget() {
  const double vga = mean_of_reports(eval::bench(bench_frames(704, 576), PipelineConfig{}, 3));
  const double hd = mean_of_reports(eval::bench(bench_frames(1280, 720), PipelineConfig{}, 3));
  return {vga <= 50.0 && hd > vga, fmt("704x576 mean %.2f ms (<= 50), 1280x720 mean %.2f ms (> 704x576)", vga, hd)};
}

// 9. Scenes too flat to track never read as Static.
Outcome low_texture_failsafe() {
  std::size_t affected = 0, indeterminate = 0, as_static = 0, frames = 0;
  const PipelineConfig cfg;
  for (double density : {0.1, 0.3, 0.5}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      synth::SceneSpec s;
      s.texture = synth::Texture::LowTexture;
      s.texture_density = density;
      s.n_frames = 30;
      s.seed = 500 + seed;
      const auto scene = synth::generate(s);
      Pipeline pipe{cfg};
      for (int k = 0; k < s.n_frames; ++k) {
        const auto d = pipe.process_frame(scene.frames[k], k);
        ++frames;
        if (d.active_tracks >= cfg.min_tracks) continue;
        ++affected;
        indeterminate += d.state == MotionState::Indeterminate;
        as_static += d.state == MotionState::Static;
      }
    }
  }
  return {affected > 0 && indeterminate == affected && as_static == 0,
          fmt("%zu/%zu frames below min_tracks, %zu Indeterminate, %zu Static", affected, frames, indeterminate,
              as_static)};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    Outcome (*run)();
  };
  const std::vector<Criterion> all{
      {1, "window statistics oracle", window_stats_oracle},
      {2, "decision grid", decision_grid},
      {3, "synthetic end-to-end", synthetic_end_to_end},
      {4, "SIFT translation equivariance", sift_equivariance},
      {5, "RANSAC recovery", ransac_recovery},
      {6, "tracker lifecycle", tracker_lifecycle},
      {7, "determinism", determinism},
      {8, "latency budget", latency_budget},
      {9, "low-texture fail-safe", low_texture_failsafe},
  };
  std::set<int> pick;
  for (int i = 1; i < argc; ++i) pick.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!pick.empty() && !pick.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s  %d %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}

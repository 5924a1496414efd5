#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "decision.hpp"
#include "error.hpp"
#include "pipeline.hpp"
#include "synth.hpp"

namespace zerospeed::eval {

using decision::MotionState;
using synth::GroundTruth;

// Counts indexed (truth, predicted). Indeterminate predictions are kept
// apart per truth class and never enter precision/recall.
template <std::size_t N>
struct ConfusionMatrix {
  std::array<std::array<std::size_t, N>, N> counts{};
  std::array<std::size_t, N> indeterminate{};

  std::size_t total() const {
    std::size_t t = 0;
    for (const auto& row : counts) {
      for (auto c : row) t += c;
    }
    return t;
  }
  std::size_t trace() const {
    std::size_t t = 0;
    for (std::size_t i = 0; i < N; ++i) t += counts[i][i];
    return t;
  }
  std::size_t row_total(std::size_t i) const {
    std::size_t t = 0;
    for (auto c : counts[i]) t += c;
    return t;
  }
  std::size_t col_total(std::size_t j) const {
    std::size_t t = 0;
    for (std::size_t i = 0; i < N; ++i) t += counts[i][j];
    return t;
  }
  double accuracy() const { return total() ? static_cast<double>(trace()) / static_cast<double>(total()) : 0.0; }
};

using Confusion3 = ConfusionMatrix<3>;
using Confusion2 = ConfusionMatrix<2>;

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

template <std::size_t N>
std::array<ClassMetrics, N> class_metrics(const ConfusionMatrix<N>& cm) {
  std::array<ClassMetrics, N> out{};
  for (std::size_t c = 0; c < N; ++c) {
    const auto tp = static_cast<double>(cm.counts[c][c]);
    const auto pred = static_cast<double>(cm.col_total(c));
    const auto actual = static_cast<double>(cm.row_total(c));
    auto& m = out[c];
    m.precision = pred > 0 ? tp / pred : 0.0;
    m.recall = actual > 0 ? tp / actual : 0.0;
    m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  }
  return out;
}

inline constexpr std::array<const char*, 3> kClassNames3{"static", "vibration", "moving"};
inline constexpr std::array<const char*, 2> kClassNames2{"unmoving", "moving"};

struct Score {
  Confusion3 matrix;
  std::array<ClassMetrics, 3> metrics{};
};

// Frame-aligned scoring. Predictions and truth must list the same frames in
// the same order.
inline Score score(std::span<const FrameDecision> decisions, std::span<const GroundTruth> truth) {
  if (decisions.size() != truth.size()) {
    throw AlignmentError("prediction has " + std::to_string(decisions.size()) + " frames, truth has " +
                         std::to_string(truth.size()));
  }
  Score s;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    if (decisions[i].frame != truth[i].frame) {
      throw AlignmentError("frame mismatch at row " + std::to_string(i) + ": prediction " +
                           std::to_string(decisions[i].frame) + ", truth " + std::to_string(truth[i].frame));
    }
    if (truth[i].label == MotionState::Indeterminate) {
      throw AlignmentError("truth label for frame " + std::to_string(truth[i].frame) + " is indeterminate");
    }
    const auto t = static_cast<std::size_t>(truth[i].label);
    if (decisions[i].state == MotionState::Indeterminate) {
      ++s.matrix.indeterminate[t];
    } else {
      ++s.matrix.counts[t][static_cast<std::size_t>(decisions[i].state)];
    }
  }
  s.metrics = class_metrics(s.matrix);
  return s;
}

struct TwoClassScore {
  Confusion2 matrix;
  std::array<ClassMetrics, 2> metrics{};
};

// Static and vibration pooled into "unmoving"; moving kept.
inline TwoClassScore merge_two_class(const Confusion3& cm) {
  auto group = [](std::size_t c) { return c == 2 ? std::size_t{1} : std::size_t{0}; };
  TwoClassScore s;
  for (std::size_t i = 0; i < 3; ++i) {
    s.matrix.indeterminate[group(i)] += cm.indeterminate[i];
    for (std::size_t j = 0; j < 3; ++j) s.matrix.counts[group(i)][group(j)] += cm.counts[i][j];
  }
  s.metrics = class_metrics(s.matrix);
  return s;
}

// ---------------------------------------------------------------------------
// Reports

template <std::size_t N>
nlohmann::json report_json(const ConfusionMatrix<N>& cm, const std::array<ClassMetrics, N>& metrics,
                           const std::array<const char*, N>& names) {
  nlohmann::json classes = nlohmann::json::object();
  nlohmann::json matrix = nlohmann::json::array();
  for (std::size_t i = 0; i < N; ++i) {
    classes[names[i]] = {{"precision", metrics[i].precision},
                         {"recall", metrics[i].recall},
                         {"f1", metrics[i].f1},
                         {"support", cm.row_total(i)},
                         {"indeterminate", cm.indeterminate[i]}};
    matrix.push_back(cm.counts[i]);
  }
  return {{"labels", names}, {"matrix", matrix}, {"classes", classes}, {"accuracy", cm.accuracy()},
          {"scored", cm.total()}};
}

inline nlohmann::json evaluation_json(const Score& s) {
  const auto two = merge_two_class(s.matrix);
  return {{"three_class", report_json(s.matrix, s.metrics, kClassNames3)},
          {"two_class", report_json(two.matrix, two.metrics, kClassNames2)}};
}

template <std::size_t N>
std::string report_table(const ConfusionMatrix<N>& cm, const std::array<ClassMetrics, N>& metrics,
                         const std::array<const char*, N>& names) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(5);
  os << std::left << std::setw(12) << "state" << std::right << std::setw(11) << "precision" << std::setw(11)
     << "recall" << std::setw(11) << "f1" << std::setw(9) << "support" << std::setw(9) << "indet" << '\n';
  for (std::size_t i = 0; i < N; ++i) {
    os << std::left << std::setw(12) << names[i] << std::right << std::setw(11) << metrics[i].precision
       << std::setw(11) << metrics[i].recall << std::setw(11) << metrics[i].f1 << std::setw(9) << cm.row_total(i)
       << std::setw(9) << cm.indeterminate[i] << '\n';
  }
  os << "accuracy " << cm.accuracy() << " over " << cm.total() << " scored frames\n";
  os << "confusion (rows truth, cols predicted):\n";
  for (std::size_t i = 0; i < N; ++i) {
    os << "  " << std::left << std::setw(10) << names[i] << std::right;
    for (std::size_t j = 0; j < N; ++j) os << std::setw(9) << cm.counts[i][j];
    os << '\n';
  }
  return os.str();
}

inline std::string evaluation_table(const Score& s) {
  const auto two = merge_two_class(s.matrix);
  return "three-class\n" + report_table(s.matrix, s.metrics, kClassNames3) + "\ntwo-class\n" +
         report_table(two.matrix, two.metrics, kClassNames2);
}

inline std::vector<FrameDecision> load_decisions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open predictions: " + path.string());
  std::vector<FrameDecision> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(decision_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ": " + e.what(), lineno);
    } catch (const InputError& e) {
      throw ParseError(path.string() + ": " + e.what(), lineno);
    }
  }
  return out;
}

inline std::vector<GroundTruth> load_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open truth: " + path.string());
  std::vector<GroundTruth> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto label = decision::parse_state(j.at("label").get<std::string>());
      if (!label || *label == MotionState::Indeterminate) throw ParseError(path.string() + ": bad label", lineno);
      out.push_back({j.at("frame").get<std::int64_t>(), *label});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ": " + e.what(), lineno);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Latency

inline constexpr std::size_t kBenchWarmupFrames = 2;
inline constexpr std::size_t kBenchMinFrames = 30;

struct LatencyReport {
  int width = 0;
  int height = 0;
  std::size_t frames = 0;  // timed frames, warm-up excluded
  double mean_ms = 0.0;
  double sd_ms = 0.0;
  double p99_ms = 0.0;
  double cpu_ms_per_frame = 0.0;

  nlohmann::json to_json() const {
    return {{"resolution", std::to_string(width) + "x" + std::to_string(height)},
            {"frames", frames},
            {"mean_ms", mean_ms},
            {"sd_ms", sd_ms},
            {"p99_ms", p99_ms},
            {"cpu_ms_per_frame", cpu_ms_per_frame}};
  }
};

// Times the full per-frame chain over already-decoded frames. Each
// repetition runs a fresh pipeline and yields one report.
inline std::vector<LatencyReport> bench(const std::vector<GrayImage>& frames, const PipelineConfig& cfg,
                                        int repetitions = 1, std::size_t min_frames = kBenchMinFrames) {
  if (frames.size() < std::max(min_frames, kBenchWarmupFrames + 1)) {
    throw InputError("bench needs at least " + std::to_string(std::max(min_frames, kBenchWarmupFrames + 1)) +
                     " frames, got " + std::to_string(frames.size()));
  }
  if (repetitions < 1) throw ConfigError("bench repetitions must be >= 1");
  std::vector<LatencyReport> reports;
  for (int rep = 0; rep < repetitions; ++rep) {
    Pipeline pipe(cfg);
    std::vector<double> lat;
    double cpu_ms = 0.0;
    for (std::size_t k = 0; k < frames.size(); ++k) {
      const std::clock_t c0 = std::clock();
      const auto d = pipe.process_frame(frames[k], static_cast<std::int64_t>(k));
      const std::clock_t c1 = std::clock();
      if (k < kBenchWarmupFrames) continue;
      lat.push_back(d.latency_ms);
      cpu_ms += 1000.0 * static_cast<double>(c1 - c0) / CLOCKS_PER_SEC;
    }
    LatencyReport r;
    r.width = frames.front().width();
    r.height = frames.front().height();
    r.frames = lat.size();
    double sum = 0.0;
    for (double v : lat) sum += v;
    r.mean_ms = sum / static_cast<double>(lat.size());
    double ss = 0.0;
    for (double v : lat) ss += (v - r.mean_ms) * (v - r.mean_ms);
    r.sd_ms = std::sqrt(ss / static_cast<double>(lat.size()));
    auto sorted = lat;
    std::sort(sorted.begin(), sorted.end());
    const auto rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(sorted.size())));
    r.p99_ms = sorted[std::min(sorted.size(), std::max<std::size_t>(rank, 1)) - 1];
    r.cpu_ms_per_frame = cpu_ms / static_cast<double>(lat.size());
    reports.push_back(r);
  }
  return reports;
}

}  // namespace zerospeed::eval

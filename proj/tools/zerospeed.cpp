#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include <zerospeed/zerospeed.hpp>

namespace fs = std::filesystem;
using namespace zerospeed;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitInput = 2;
constexpr int kExitConfig = 3;

PipelineConfig config_or_default(const std::string& path) {
  return path.empty() ? PipelineConfig{} : load_config(path);
}

int cmd_detect(const std::string& input, const std::string& config, const std::string& signal,
               const std::string& output, bool strict, std::optional<std::uint64_t> seed) {
  auto cfg = config_or_default(config);
  if (seed) cfg.ransac.rng_seed = *seed;
  const auto frames = list_frames(input);

  std::optional<SpeedSignal> sig;
  if (!signal.empty()) sig = load_speed_signal(signal);

  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!output.empty() && output != "-") {
    file.open(output, std::ios::binary | std::ios::trunc);
    if (!file) throw InputError("cannot open output: " + output);
    out = &file;
  }

  RunOptions opts;
  opts.strict = strict;
  opts.signal = sig ? &*sig : nullptr;
  const auto summary = run(frames, cfg, [&](const FrameDecision& d) { *out << to_json_line(d) << '\n'; }, opts);
  out->flush();
  if (!*out) throw InputError("failed writing decisions");
  std::cerr << summary.to_json().dump() << '\n';
  return kExitOk;
}

int cmd_generate(const std::string& spec_path, const std::string& out_dir) {
  std::ifstream in(spec_path);
  if (!in) throw ConfigError("cannot open scene spec: " + spec_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("malformed scene spec " + spec_path + ": " + e.what());
  }
  const auto spec = synth::spec_from_json(j);
  const auto scene = synth::generate(spec);
  synth::write_scene(out_dir, spec, scene);
  std::cerr << "wrote " << scene.frames.size() << " frames to " << out_dir << '\n';
  return kExitOk;
}

int cmd_evaluate(const std::string& pred, const std::string& truth, bool table) {
  const auto decisions = eval::load_decisions(pred);
  const auto gt = eval::load_truth(truth);
  const auto s = eval::score(decisions, gt);
  if (table) {
    std::cout << eval::evaluation_table(s);
  } else {
    std::cout << eval::evaluation_json(s).dump(2) << '\n';
  }
  return kExitOk;
}

int cmd_bench(const std::string& input, const std::string& config, int reps) {
  const auto cfg = config_or_default(config);
  const auto files = list_frames(input);
  std::vector<GrayImage> frames;
  frames.reserve(files.size());
  for (const auto& f : files) {
    frames.push_back(read_frame(f.path));
    if (frames.back().width() != frames.front().width() || frames.back().height() != frames.front().height()) {
      throw InputError("bench frames must share one resolution: " + f.path.string());
    }
  }
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : eval::bench(frames, cfg, reps)) out.push_back(r.to_json());
  std::cout << out.dump(2) << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vehicle motion-state detection from camera frame sequences"};
  app.require_subcommand(1);

  std::string input, config, signal, output, spec, out_dir, pred, truth;
  bool strict = false, as_json = false, as_table = false;
  std::uint64_t seed_value = 0;
  int reps = 1;

  auto* detect = app.add_subcommand("detect", "Classify every frame of a sequence, one JSON line per frame");
  detect->add_option("--input", input, "Directory of frame_NNNNNN.pgm|png")->required();
  detect->add_option("--config", config, "Pipeline config (JSON, comments allowed)");
  detect->add_option("--signal", signal, "Speed signal CSV with header frame,speed_kmh");
  detect->add_option("--output", output, "Output JSON-lines file (default stdout)");
  detect->add_flag("--strict", strict, "Abort on the first unreadable frame");
  auto* seed_opt = detect->add_option("--seed", seed_value, "Override ransac.rng_seed");

  auto* generate = app.add_subcommand("generate", "Render a synthetic scene with ground truth");
  generate->add_option("--spec", spec, "Scene spec JSON")->required();
  generate->add_option("--out", out_dir, "Output directory")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against ground truth");
  evaluate->add_option("--pred", pred, "Decisions JSON-lines")->required();
  evaluate->add_option("--truth", truth, "Ground truth JSON-lines")->required();
  auto* json_flag = evaluate->add_flag("--json", as_json, "JSON report (default)");
  evaluate->add_flag("--table", as_table, "Plain-text report")->excludes(json_flag);

  auto* bench = app.add_subcommand("bench", "Per-frame latency over a frame directory");
  bench->add_option("--input", input, "Directory of frame_NNNNNN.pgm|png")->required();
  bench->add_option("--config", config, "Pipeline config");
  bench->add_option("--reps", reps, "Repetitions, one report each")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*detect) {
      std::optional<std::uint64_t> seed;
      if (*seed_opt) seed = seed_value;
      return cmd_detect(input, config, signal, output, strict, seed);
    }
    if (*generate) return cmd_generate(spec, out_dir);
    if (*evaluate) return cmd_evaluate(pred, truth, as_table);
    if (*bench) return cmd_bench(input, config, reps);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const DimensionError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const AlignmentError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const SequencingError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

// fofseg command line: run, synth, eval, library-dump.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fofseg/fofseg.hpp"

namespace fs = std::filesystem;
using namespace fofseg;

namespace {

struct RunArgs {
  std::string frames, flows, gt, out, config, mode = "fused", name;
  std::optional<std::uint64_t> seed;
  std::optional<int> max_dim;
  std::vector<std::string> overrides;
  bool raw_posterior = false;
};

int cmd_run(const RunArgs& a) {
  PipelineConfig config = a.config.empty() ? PipelineConfig{} : load_pipeline_config(a.config);
  for (const auto& text : a.overrides) apply_config_entry(config, split_assignment(text));
  if (a.seed) config.sampler.rng_seed = *a.seed;
  config.validate();

  std::optional<fs::path> gt;
  if (!a.gt.empty()) gt = a.gt;
  VideoInput video = load_video(a.frames, a.flows, gt);
  if (a.max_dim) video = downscale(video, *a.max_dim);

  RunOptions options;
  options.mode = parse_mode(a.mode);
  options.raw_posterior = a.raw_posterior;
  options.video_name = a.name;
  if (options.video_name.empty()) {
    fs::path frames_dir = fs::absolute(a.frames).lexically_normal();
    if (frames_dir.filename().empty()) frames_dir = frames_dir.parent_path();
    options.video_name = frames_dir.parent_path().filename().string();
  }
  if (options.video_name.empty()) options.video_name = "video";

  const VideoResult result = run_video(video, config, options, fs::path(a.out));
  std::cout << "processed " << result.frames.size() << " frames (" << mode_name(options.mode)
            << ") -> " << a.out << '\n';
  if (result.mean_f) {
    const std::vector<std::string> columns{mode_title(options.mode)};
    const std::vector<VideoRow> rows{{options.video_name, {*result.mean_f}}};
    write_video_table(std::cout, columns, rows);
  }
  return 0;
}

int cmd_synth(const std::string& spec_path, const std::string& out) {
  const SceneSpec spec = load_scene_spec(spec_path);
  const fs::path root(out);
  fs::create_directories(root / "frames");
  fs::create_directories(root / "flows");
  fs::create_directories(root / "gt");
  const auto frames = render_frames(spec);
  for (int i = 0; i < spec.frames; ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "frame_%04d", i);
    const SceneFrame f = flow_from_scene(spec, i);
    write_image(frames[static_cast<std::size_t>(i)], root / "frames" / (std::string(stem) + ".ppm"));
    write_flo(f.flow, root / "flows" / (std::string(stem) + ".flo"));
    LabelMask gt(spec.width, spec.height);
    for (std::size_t p = 0; p < gt.size(); ++p) gt[p] = f.ground_truth[p] ? 255 : 0;
    write_mask(gt, root / "gt" / (std::string(stem) + ".pgm"));
  }
  std::cout << "wrote " << spec.frames << " frames to " << out << '\n';
  return 0;
}

int cmd_library_dump(int width, int height, std::optional<double> focal, const std::string& out) {
  const auto k = focal ? CameraIntrinsics::centered(width, height, *focal)
                       : CameraIntrinsics::centered(width, height);
  const MotionLibrary library = build_library(k, width, height);
  const fs::path root(out);
  fs::create_directories(root);
  std::ofstream list(root / "hypotheses.txt");
  list << "# index tx ty tz; fof_<index>.pgm maps (-pi, pi] to 1..255, 0 = undefined\n";
  list << std::setprecision(9);
  for (std::size_t i = 0; i < library.size(); ++i) {
    const auto& h = library.hypothesis(i);
    list << i << ' ' << h.x() << ' ' << h.y() << ' ' << h.z() << '\n';
    const auto& field = library.field(i);
    LabelMask img(width, height);
    for (std::size_t p = 0; p < img.size(); ++p) {
      img[p] = field.valid[p]
                   ? static_cast<std::uint8_t>(1 + std::lround((field.angle[p] + kPi) / kTwoPi * 254.0))
                   : 0;
    }
    char name[32];
    std::snprintf(name, sizeof name, "fof_%02zu.pgm", i);
    write_mask(img, root / name);
  }
  std::cout << library.size() << " hypotheses -> " << out << '\n';
  return 0;
}

std::map<std::string, std::string> read_run_info(const fs::path& dir) {
  std::map<std::string, std::string> out;
  if (!fs::exists(dir / "run_info.txt")) return out;
  for (const auto& kv : load_key_values(dir / "run_info.txt")) out[kv.key] = kv.value;
  return out;
}

int cmd_eval(const std::vector<std::string>& preds, const std::string& gt_dir, std::string name) {
  std::vector<std::string> columns;
  VideoRow row;
  for (const auto& pred : preds) {
    const fs::path root(pred);
    const fs::path masks = fs::is_directory(root / "masks") ? root / "masks" : root;
    const auto info = read_run_info(root);
    if (name.empty() && info.count("video")) name = info.at("video");
    if (info.count("mode")) columns.emplace_back(mode_title(parse_mode(info.at("mode"))));
    else columns.push_back(root.filename().string());

    std::vector<ScoredFrame> scored;
    for (const auto& entry : fs::directory_iterator(gt_dir)) {
      if (entry.path().extension() != ".pgm") continue;
      const fs::path p = masks / entry.path().filename();
      if (!fs::exists(p)) continue;
      scored.push_back({entry.path().stem().string(),
                        score_frame(background_from_labels(read_mask(p)),
                                    background_from_labels(read_mask(entry.path())))});
    }
    std::sort(scored.begin(), scored.end(),
              [](const ScoredFrame& x, const ScoredFrame& y) { return x.name < y.name; });
    if (scored.empty()) throw Error(Errc::empty_input, "no predicted masks match " + gt_dir);
    std::cout << "# " << pred << '\n';
    write_frame_table(std::cout, scored);
    std::cout << '\n';
    std::vector<FrameScore> scores;
    for (const auto& s : scored) scores.push_back(s.score);
    row.mean_f.push_back(score_video(scores));
  }
  row.video = name.empty() ? "video" : name;
  const std::vector<VideoRow> rows{row};
  write_video_table(std::cout, columns, rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Motion segmentation from flow orientations"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Segment a video");
  run_cmd->add_option("--frames", run.frames, "Directory of *.ppm frames")->required();
  run_cmd->add_option("--flows", run.flows, "Directory of *.flo flows")->required();
  run_cmd->add_option("--gt", run.gt, "Directory of ground-truth *.pgm masks");
  run_cmd->add_option("--out", run.out, "Output directory")->required();
  run_cmd->add_option("--config", run.config, "key = value configuration file");
  run_cmd->add_option("--mode", run.mode, "fof or fused")->check(CLI::IsMember({"fof", "fused"}));
  run_cmd->add_option("--seed", run.seed, "Overrides rng_seed");
  run_cmd->add_option("--max-dim", run.max_dim, "Downscale so max(width, height) <= N");
  run_cmd->add_option("--set", run.overrides, "Config override key=value (repeatable)");
  run_cmd->add_option("--name", run.name, "Video name for the metrics table");
  run_cmd->add_flag("--raw-posterior", run.raw_posterior, "Also write float32 posteriors");

  std::string spec_path, synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Render a synthetic scene");
  synth_cmd->add_option("--spec", spec_path, "Scene file")->required();
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();

  std::vector<std::string> preds;
  std::string gt_dir, video_name;
  auto* eval_cmd = app.add_subcommand("eval", "Score predicted masks");
  eval_cmd->add_option("--pred", preds, "Run output or mask directory (repeatable)")->required();
  eval_cmd->add_option("--gt", gt_dir, "Ground-truth mask directory")->required();
  eval_cmd->add_option("--name", video_name, "Video name");

  int width = 0, height = 0;
  std::optional<double> focal;
  std::string dump_out;
  auto* dump_cmd = app.add_subcommand("library-dump", "Write the motion library");
  dump_cmd->add_option("--width", width)->required()->check(CLI::PositiveNumber);
  dump_cmd->add_option("--height", height)->required()->check(CLI::PositiveNumber);
  dump_cmd->add_option("--focal-length", focal);
  dump_cmd->add_option("--out", dump_out)->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run_cmd) return cmd_run(run);
    if (*synth_cmd) return cmd_synth(spec_path, synth_out);
    if (*eval_cmd) return cmd_eval(preds, gt_dir, video_name);
    if (*dump_cmd) return cmd_library_dump(width, height, focal, dump_out);
  } catch (const Error& e) {
    std::cerr << "error [" << errc_name(e.code()) << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

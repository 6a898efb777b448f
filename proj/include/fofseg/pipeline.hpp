#ifndef FOFSEG_PIPELINE_HPP
#define FOFSEG_PIPELINE_HPP

// Online frame-by-frame segmentation. Flow i maps frame i to frame i + 1 and
// drives the orientation-based segmentation of frame i; the appearance
// history and the prior are carried to frame i + 1 with the same flow.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fofseg/appearance.hpp"
#include "fofseg/config.hpp"
#include "fofseg/error.hpp"
#include "fofseg/eval.hpp"
#include "fofseg/flowio.hpp"
#include "fofseg/fof.hpp"
#include "fofseg/sampler.hpp"

namespace fofseg {

enum class Mode { fof, fused };

inline const char* mode_name(Mode mode) { return mode == Mode::fof ? "fof" : "fused"; }

inline Mode parse_mode(const std::string& text) {
  if (text == "fof") return Mode::fof;
  if (text == "fused") return Mode::fused;
  throw Error(Errc::invalid_config, "mode must be fof or fused, got '" + text + "'");
}

/// Column heading used in video tables for each mode.
inline const char* mode_title(Mode mode) {
  return mode == Mode::fof ? "FOF only" : "FOF+color+prior";
}

struct PipelineConfig {
  SamplerConfig sampler;
  AppearanceConfig appearance;
  std::optional<double> focal_length;
  double flow_threshold = 0.5;  // T_f, pixels/frame

  void validate() const {
    sampler.validate();
    appearance.validate();
    if (!(flow_threshold >= 0.0)) throw Error(Errc::invalid_config, "T_f must be >= 0");
    if (focal_length && !(*focal_length > 0.0)) {
      throw Error(Errc::invalid_config, "focal_length must be > 0");
    }
  }
};

inline void apply_config_entry(PipelineConfig& config, const KeyValue& kv) {
  const std::string& k = kv.key;
  if (k == "alpha_candidates") config.sampler.alpha_candidates = parse_double_list(kv);
  else if (k == "n_sweeps") config.sampler.n_sweeps = static_cast<int>(parse_int(kv));
  else if (k == "aux_per_sweep") config.sampler.aux_per_sweep = static_cast<int>(parse_int(kv));
  else if (k == "rng_seed") config.sampler.rng_seed = static_cast<std::uint64_t>(parse_int(kv));
  else if (k == "variance_floor") config.sampler.variance_floor = parse_double(kv);
  else if (k == "refine_after_fraction") config.sampler.refine_after_fraction = parse_double(kv);
  else if (k == "T_f") config.flow_threshold = parse_double(kv);
  else if (k == "focal_length") config.focal_length = parse_double(kv);
  else if (k == "sigma_color") config.appearance.sigma_color = parse_double(kv);
  else if (k == "sigma_spatial") config.appearance.sigma_spatial = parse_double(kv);
  else if (k == "history_length") config.appearance.history_length = static_cast<int>(parse_int(kv));
  else if (k == "neighborhood_radius") {
    config.appearance.neighborhood_radius = static_cast<int>(parse_int(kv));
  } else if (k == "uniform_density") config.appearance.uniform_density = parse_double(kv);
  else throw Error(Errc::invalid_config, "unknown key '" + k + "'");
}

inline PipelineConfig parse_pipeline_config(std::istream& in) {
  PipelineConfig config;
  for (const auto& kv : parse_key_values(in)) apply_config_entry(config, kv);
  config.validate();
  return config;
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_failure, "cannot open " + path.string());
  return parse_pipeline_config(in);
}

struct FrameDiagnostics {
  std::size_t frame_index = 0;
  double chosen_alpha = 0.0;
  std::size_t chosen_candidate = 0;
  std::size_t num_components = 0;
  bool no_valid_pixels = false;
  std::vector<std::size_t> candidate_components;
  std::vector<ComponentSummary> components;
};

struct FrameOutput {
  /// 0 background, 255 foreground.
  LabelMask mask;
  /// Fused background posterior; P(l | bg) in FOF-only mode.
  ProbabilityMap posterior;
  /// Background mask of the selected orientation segmentation.
  BackgroundMask fof_background;
  FrameDiagnostics diagnostics;
};

struct PipelineState {
  PipelineConfig config;
  Mode mode = Mode::fused;
  int width = 0;
  int height = 0;
  CameraIntrinsics intrinsics;
  MotionLibrary library;
  AppearanceHistory history;
  ProbabilityMap previous_posterior;
  std::optional<FlowField> previous_flow;
  std::size_t frame_index = 0;

  static PipelineState create(int width, int height, const PipelineConfig& config, Mode mode) {
    config.validate();
    PipelineState s;
    s.config = config;
    s.mode = mode;
    s.width = width;
    s.height = height;
    s.intrinsics = config.focal_length ? CameraIntrinsics::centered(width, height, *config.focal_length)
                                       : CameraIntrinsics::centered(width, height);
    s.library = build_library(s.intrinsics, width, height);
    s.history = AppearanceHistory(width, height, config.appearance.history_length);
    return s;
  }
};

inline LabelMask mask_from_background(const BackgroundMask& background) {
  LabelMask out(background.width(), background.height());
  for (std::size_t i = 0; i < background.size(); ++i) out[i] = background[i] ? 0 : 255;
  return out;
}

inline FrameOutput process_frame(PipelineState& state, const ColorFrame& frame,
                                 const FlowField& flow) {
  const std::string where = "frame " + std::to_string(state.frame_index);
  if (frame.width() != state.width || frame.height() != state.height) {
    throw Error(Errc::dimension_mismatch, where + ": color frame size");
  }
  if (flow.width() != state.width || flow.height() != state.height) {
    throw Error(Errc::dimension_mismatch, where + ": flow size");
  }

  const OrientationField obs = flow_to_orientation(flow, state.config.flow_threshold);
  const auto candidates = run_alpha_candidates(obs, state.library, state.config.sampler);
  std::vector<BackgroundMask> votes;
  for (const auto& c : candidates) votes.push_back(c.background_mask());
  const std::size_t chosen_index = select_alpha_index(votes);
  const SegmentationResult& chosen = candidates[chosen_index];

  FrameOutput out;
  out.fof_background = votes[chosen_index];
  auto& d = out.diagnostics;
  d.frame_index = state.frame_index;
  d.chosen_alpha = chosen.chosen_alpha;
  d.chosen_candidate = chosen_index;
  d.num_components = chosen.num_components;
  d.no_valid_pixels = chosen.no_valid_pixels;
  d.components = chosen.components;
  for (const auto& c : candidates) d.candidate_components.push_back(c.num_components);

  if (state.mode == Mode::fof) {
    out.mask = mask_from_background(out.fof_background);
    out.posterior = chosen.label_likelihoods;
    ++state.frame_index;
    return out;
  }

  ProbabilityMap prior(state.width, state.height, 0.5);
  if (state.previous_flow) {
    state.history = warp_history(state.history, *state.previous_flow);
    prior = propagate_prior(state.previous_posterior, *state.previous_flow);
  }
  // Without any moving pixel the labels carry no evidence.
  const ProbabilityMap label_bg = chosen.no_valid_pixels
                                      ? ProbabilityMap(state.width, state.height, 0.5)
                                      : chosen.label_likelihoods;
  out.posterior = posterior_map(frame, label_bg, prior, state.history, state.config.appearance);

  BackgroundMask background(state.width, state.height);
  for (std::size_t i = 0; i < background.size(); ++i) background[i] = out.posterior[i] >= 0.5;
  out.mask = mask_from_background(background);

  state.history.push(frame, out.posterior);
  state.previous_posterior = out.posterior;
  state.previous_flow = flow;
  ++state.frame_index;
  return out;
}

inline void write_diagnostics(std::ostream& out, const FrameDiagnostics& d) {
  out << "# frame=" << d.frame_index << " alpha=" << d.chosen_alpha
      << " candidate=" << d.chosen_candidate << " components=" << d.num_components
      << " no_valid_pixels=" << (d.no_valid_pixels ? 1 : 0) << " candidate_components=";
  for (std::size_t i = 0; i < d.candidate_components.size(); ++i) {
    out << (i ? "," : "") << d.candidate_components[i];
  }
  out << "\nlabel,kind,tx,ty,tz,variance,pixel_count\n";
  out << std::setprecision(9);
  for (std::size_t i = 0; i < d.components.size(); ++i) {
    const auto& c = d.components[i];
    if (c.zero_motion) {
      out << i << ",zero_motion,,,,," << c.pixel_count << '\n';
    } else {
      out << i << "," << (i == 0 ? "background" : "motion") << "," << c.hypothesis.x() << ","
          << c.hypothesis.y() << "," << c.hypothesis.z() << "," << c.variance << ","
          << c.pixel_count << '\n';
    }
  }
}

// ---- video runs -----------------------------------------------------------

struct VideoInput {
  std::vector<std::string> names;
  std::vector<ColorFrame> frames;
  std::vector<FlowField> flows;
  std::vector<std::optional<LabelMask>> ground_truth;
};

namespace detail {

inline std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir,
                                                     const std::string& extension) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error(Errc::io_failure, "not a directory: " + dir.string());
  }
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == extension) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

/// Frames are the *.ppm files of `frames_dir` in name order, flows the *.flo
/// files of `flows_dir`. Ground truth, when given, is matched by file stem.
inline VideoInput load_video(const std::filesystem::path& frames_dir,
                             const std::filesystem::path& flows_dir,
                             const std::optional<std::filesystem::path>& gt_dir = std::nullopt) {
  VideoInput video;
  for (const auto& path : detail::list_files(frames_dir, ".ppm")) {
    video.names.push_back(path.stem().string());
    video.frames.push_back(read_image(path));
    std::optional<LabelMask> gt;
    if (gt_dir) {
      const auto gt_path = *gt_dir / (path.stem().string() + ".pgm");
      if (std::filesystem::exists(gt_path)) gt = read_mask(gt_path);
    }
    video.ground_truth.push_back(std::move(gt));
  }
  for (const auto& path : detail::list_files(flows_dir, ".flo")) {
    video.flows.push_back(read_flo(path));
  }
  return video;
}

/// Integer-factor downscale so that max(width, height) <= max_dim: block
/// averages for color, nearest samples for flow (divided by the factor) and
/// ground truth.
inline VideoInput downscale(const VideoInput& video, int max_dim) {
  if (max_dim < 1) throw Error(Errc::invalid_argument, "max-dim must be >= 1");
  if (video.frames.empty()) return video;
  const int w = video.frames.front().width();
  const int h = video.frames.front().height();
  const int factor = (std::max(w, h) + max_dim - 1) / max_dim;
  if (factor <= 1) return video;
  const int nw = std::max(1, w / factor);
  const int nh = std::max(1, h / factor);
  const int c = factor / 2;

  VideoInput out;
  out.names = video.names;
  for (const auto& frame : video.frames) {
    ColorFrame small(nw, nh);
    for (int y = 0; y < nh; ++y) {
      for (int x = 0; x < nw; ++x) {
        int sr = 0, sg = 0, sb = 0, n = 0;
        for (int j = 0; j < factor; ++j) {
          for (int i = 0; i < factor; ++i) {
            if (!frame.contains(x * factor + i, y * factor + j)) continue;
            const Rgb& p = frame(x * factor + i, y * factor + j);
            sr += p.r;
            sg += p.g;
            sb += p.b;
            ++n;
          }
        }
        small(x, y) = {static_cast<std::uint8_t>((sr + n / 2) / n),
                       static_cast<std::uint8_t>((sg + n / 2) / n),
                       static_cast<std::uint8_t>((sb + n / 2) / n)};
      }
    }
    out.frames.push_back(std::move(small));
  }
  for (const auto& flow : video.flows) {
    FlowField small(nw, nh);
    for (int y = 0; y < nh; ++y) {
      for (int x = 0; x < nw; ++x) {
        const int sx = std::min(flow.width() - 1, x * factor + c);
        const int sy = std::min(flow.height() - 1, y * factor + c);
        small.u(x, y) = flow.u(sx, sy) / static_cast<float>(factor);
        small.v(x, y) = flow.v(sx, sy) / static_cast<float>(factor);
      }
    }
    out.flows.push_back(std::move(small));
  }
  for (const auto& gt : video.ground_truth) {
    if (!gt) {
      out.ground_truth.emplace_back();
      continue;
    }
    LabelMask small(nw, nh);
    for (int y = 0; y < nh; ++y) {
      for (int x = 0; x < nw; ++x) {
        small(x, y) = (*gt)(std::min(gt->width() - 1, x * factor + c),
                            std::min(gt->height() - 1, y * factor + c));
      }
    }
    out.ground_truth.push_back(std::move(small));
  }
  return out;
}

struct VideoResult {
  std::vector<FrameOutput> frames;
  std::vector<ScoredFrame> scores;
  std::optional<double> mean_f;
};

struct RunOptions {
  Mode mode = Mode::fused;
  bool raw_posterior = false;
  std::string video_name = "video";
};

/// Processes every frame in order. When `out_dir` is given, writes
/// masks/<name>.pgm, posterior/<name>.pgm (and .f32 with raw_posterior),
/// diagnostics/<name>.csv, run_info.txt and, with ground truth, metrics.tsv.
inline VideoResult run_video(const VideoInput& video, const PipelineConfig& config,
                             const RunOptions& options,
                             const std::optional<std::filesystem::path>& out_dir = std::nullopt) {
  namespace fs = std::filesystem;
  if (video.frames.empty()) throw Error(Errc::empty_input, "no frames");
  const std::size_t n = video.frames.size();
  if (!(video.flows.size() == n || video.flows.size() + 1 == n) || video.flows.empty()) {
    throw Error(Errc::dimension_mismatch, std::to_string(n) + " frames but " +
                                              std::to_string(video.flows.size()) + " flows");
  }
  const int w = video.frames.front().width();
  const int h = video.frames.front().height();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& flow = video.flows[std::min(i, video.flows.size() - 1)];
    if (video.frames[i].width() != w || video.frames[i].height() != h || flow.width() != w ||
        flow.height() != h) {
      throw Error(Errc::dimension_mismatch, "frame " + std::to_string(i) + " (" + video.names[i] +
                                                "): frame or flow size differs from frame 0");
    }
    if (i < video.ground_truth.size() && video.ground_truth[i] &&
        !video.ground_truth[i]->same_shape(video.frames[i])) {
      throw Error(Errc::dimension_mismatch,
                  "frame " + std::to_string(i) + " (" + video.names[i] + "): ground truth size");
    }
  }

  if (out_dir) {
    fs::create_directories(*out_dir / "masks");
    fs::create_directories(*out_dir / "posterior");
    fs::create_directories(*out_dir / "diagnostics");
    std::ofstream info(*out_dir / "run_info.txt");
    info << "mode=" << mode_name(options.mode) << "\nvideo=" << options.video_name
         << "\nframes=" << n << "\nrng_seed=" << config.sampler.rng_seed << "\n";
  }

  VideoResult result;
  PipelineState state = PipelineState::create(w, h, config, options.mode);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& flow = video.flows[std::min(i, video.flows.size() - 1)];
    FrameOutput frame = process_frame(state, video.frames[i], flow);
    if (i < video.ground_truth.size() && video.ground_truth[i]) {
      result.scores.push_back({video.names[i], score_frame(background_from_labels(frame.mask),
                                                           background_from_labels(*video.ground_truth[i]))});
    }
    if (out_dir) {
      const std::string& name = video.names[i];
      write_mask(frame.mask, *out_dir / "masks" / (name + ".pgm"));
      write_probability_map(frame.posterior, *out_dir / "posterior" / (name + ".pgm"));
      if (options.raw_posterior) {
        write_float_grid(frame.posterior, *out_dir / "posterior" / (name + ".f32"));
      }
      std::ofstream diag(*out_dir / "diagnostics" / (name + ".csv"));
      write_diagnostics(diag, frame.diagnostics);
    }
    result.frames.push_back(std::move(frame));
  }

  if (!result.scores.empty()) {
    std::vector<FrameScore> scores;
    for (const auto& s : result.scores) scores.push_back(s.score);
    result.mean_f = score_video(scores);
    if (out_dir) {
      std::ofstream metrics(*out_dir / "metrics.tsv");
      write_frame_table(metrics, result.scores);
      metrics << '\n';
      const std::vector<std::string> columns{mode_title(options.mode)};
      const std::vector<VideoRow> rows{{options.video_name, {*result.mean_f}}};
      write_video_table(metrics, columns, rows);
    }
  }
  return result;
}

}  // namespace fofseg

#endif  // FOFSEG_PIPELINE_HPP

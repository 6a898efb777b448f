#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "fofseg/pipeline.hpp"
#include "support/scene_video.hpp"

namespace fofseg {
namespace {

namespace fs = std::filesystem;
using testing::iou_foreground;
using testing::two_layer_scene;
using testing::video_from_scene;

PipelineConfig fast_config(int sweeps = 20) {
  PipelineConfig c;
  c.sampler.n_sweeps = sweeps;
  return c;
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("fofseg_" + name);
  fs::remove_all(dir);
  return dir;
}

TEST(PipelineConfig, ParsesKeysAndRejectsUnknown) {
  std::istringstream in(R"(alpha_candidates = 0.5, 2
n_sweeps = 30
rng_seed = 99
T_f = 0.25
focal_length = 80
sigma_color = 4
history_length = 3
)");
  const auto c = parse_pipeline_config(in);
  EXPECT_EQ(c.sampler.alpha_candidates, (std::vector<double>{0.5, 2.0}));
  EXPECT_EQ(c.sampler.n_sweeps, 30);
  EXPECT_EQ(c.sampler.rng_seed, 99u);
  EXPECT_EQ(c.flow_threshold, 0.25);
  EXPECT_EQ(c.focal_length, 80.0);
  EXPECT_EQ(c.appearance.sigma_color, 4.0);
  EXPECT_EQ(c.appearance.history_length, 3);

  auto code = [](const std::string& text) {
    std::istringstream s(text);
    try {
      parse_pipeline_config(s);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::invalid_argument;
  };
  EXPECT_EQ(code("gamma = 3\n"), Errc::invalid_config);
  EXPECT_EQ(code("n_sweeps = 0\n"), Errc::invalid_config);
  EXPECT_EQ(code("T_f = -1\n"), Errc::invalid_config);
  EXPECT_EQ(code("n_sweeps = ten\n"), Errc::invalid_config);
  EXPECT_THROW(parse_mode("both"), Error);
}

TEST(Pipeline, StaticSceneIsAllBackground) {
  VideoInput video;
  for (int i = 0; i < 3; ++i) {
    video.names.push_back("f" + std::to_string(i));
    video.frames.emplace_back(16, 12, Rgb{40, 90, 160});
    video.flows.emplace_back(16, 12);
  }
  for (Mode mode : {Mode::fof, Mode::fused}) {
    RunOptions options;
    options.mode = mode;
    const auto result = run_video(video, fast_config(), options);
    for (const auto& f : result.frames) {
      EXPECT_TRUE(f.diagnostics.no_valid_pixels);
      for (auto v : f.mask) EXPECT_EQ(v, 0);
    }
  }
}

TEST(Pipeline, FofModeMaskIsTheVotedSegmentation) {
  const auto spec = two_layer_scene(1);
  const auto video = video_from_scene(spec);
  const auto config = fast_config();
  auto state = PipelineState::create(spec.width, spec.height, config, Mode::fof);
  const auto out = process_frame(state, video.frames[0], video.flows[0]);

  const auto obs = flow_to_orientation(video.flows[0], config.flow_threshold);
  const auto candidates =
      run_alpha_candidates(obs, build_library(spec.intrinsics, spec.width, spec.height), config.sampler);
  const auto& chosen = select_alpha(candidates);
  EXPECT_EQ(out.fof_background, chosen.background_mask());
  EXPECT_EQ(out.mask, mask_from_background(chosen.background_mask()));
  EXPECT_EQ(out.posterior, chosen.label_likelihoods);
}

TEST(Pipeline, FirstFusedFrameFollowsTheLabels) {
  // Without history or prior the color terms cancel and the posterior is
  // the label likelihood itself.
  const auto spec = two_layer_scene(1);
  const auto video = video_from_scene(spec);
  auto fof = PipelineState::create(spec.width, spec.height, fast_config(), Mode::fof);
  auto fused = PipelineState::create(spec.width, spec.height, fast_config(), Mode::fused);
  const auto a = process_frame(fof, video.frames[0], video.flows[0]);
  const auto b = process_frame(fused, video.frames[0], video.flows[0]);
  EXPECT_EQ(a.fof_background, b.fof_background);
  for (std::size_t i = 0; i < a.posterior.size(); ++i) EXPECT_NEAR(a.posterior[i], b.posterior[i], 1e-12);
}

TEST(Pipeline, OnlineOutputsDoNotDependOnLaterFrames) {
  const auto video = video_from_scene(two_layer_scene(4));
  VideoInput prefix = video;
  prefix.frames.resize(2);
  prefix.flows.resize(2);
  prefix.names.resize(2);
  prefix.ground_truth.resize(2);
  const auto full = run_video(video, fast_config(), {});
  const auto part = run_video(prefix, fast_config(), {});
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(full.frames[i].mask, part.frames[i].mask);
    EXPECT_EQ(full.frames[i].posterior, part.frames[i].posterior);
  }
}

TEST(Pipeline, DeterministicForFixedSeed) {
  const auto video = video_from_scene(two_layer_scene(3));
  const auto a = run_video(video, fast_config(), {});
  const auto b = run_video(video, fast_config(), {});
  for (std::size_t i = 0; i < a.frames.size(); ++i) {
    EXPECT_EQ(a.frames[i].mask, b.frames[i].mask);
    EXPECT_EQ(a.frames[i].posterior, b.frames[i].posterior);
  }
}

TEST(Pipeline, TracksMovingObject) {
  const auto spec = two_layer_scene(6);
  const auto video = video_from_scene(spec);
  const auto result = run_video(video, fast_config(40), {});
  ASSERT_TRUE(result.mean_f);
  EXPECT_GE(*result.mean_f, 0.95);
  for (std::size_t i = 1; i < result.frames.size(); ++i) {
    EXPECT_GE(iou_foreground(result.frames[i].mask, *video.ground_truth[i]), 0.8) << "frame " << i;
  }
}

TEST(Pipeline, ColorAndPriorCarryObjectThroughAmbiguousFlow) {
  auto spec = two_layer_scene(6);
  spec.noise_sigma = 0.0;
  auto video = video_from_scene(spec);
  // In the last frame the object moves with the camera, so its flow
  // orientation matches the background.
  SceneSpec still = spec;
  still.objects[0].translation = {0.0, 0.0, 0.0};
  const int last = spec.frames - 1;
  video.flows[static_cast<std::size_t>(last)] = flow_from_scene(still, last).flow;
  // Keep the object where the moving scene would have put it.
  const auto& gt = *video.ground_truth[static_cast<std::size_t>(last)];

  RunOptions fof_only;
  fof_only.mode = Mode::fof;
  const auto a = run_video(video, fast_config(), fof_only);
  const auto b = run_video(video, fast_config(), {});
  std::size_t object = 0, fof_hits = 0, fused_hits = 0;
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      if (!gt(x, y)) continue;
      // Interior pixels only; edges lack a full color neighborhood.
      if (!gt.contains(x - 2, y) || !gt(x - 2, y) || !gt.contains(x + 2, y) || !gt(x + 2, y)) continue;
      ++object;
      fof_hits += a.frames.back().mask(x, y) != 0;
      fused_hits += b.frames.back().mask(x, y) != 0;
    }
  }
  ASSERT_GT(object, 50u);
  EXPECT_LT(fof_hits, object / 10);
  EXPECT_GT(fused_hits, object * 8 / 10);
}

TEST(Pipeline, FrameDimensionErrorsNameTheFrame) {
  auto video = video_from_scene(two_layer_scene(3));
  video.frames[2] = ColorFrame(10, 10);
  try {
    run_video(video, fast_config(), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::dimension_mismatch);
    EXPECT_NE(std::string(e.what()).find("frame 2"), std::string::npos);
  }
}

TEST(Pipeline, FlowCountMustMatchFrames) {
  auto video = video_from_scene(two_layer_scene(3));
  video.flows.resize(1);
  EXPECT_THROW(run_video(video, fast_config(), {}), Error);
  video.flows.clear();
  EXPECT_THROW(run_video(video, fast_config(), {}), Error);
  video = video_from_scene(two_layer_scene(3));
  video.flows.pop_back();  // the last frame reuses the previous flow
  EXPECT_EQ(run_video(video, fast_config(), {}).frames.size(), 3u);
}

TEST(RunVideo, WritesOutputsAndMetrics) {
  const auto video = video_from_scene(two_layer_scene(2));
  const auto dir = scratch_dir("run_outputs");
  RunOptions options;
  options.raw_posterior = true;
  options.video_name = "two_layer";
  const auto result = run_video(video, fast_config(), options, dir);
  for (const auto& name : video.names) {
    EXPECT_TRUE(fs::exists(dir / "masks" / (name + ".pgm")));
    EXPECT_TRUE(fs::exists(dir / "posterior" / (name + ".pgm")));
    EXPECT_TRUE(fs::exists(dir / "diagnostics" / (name + ".csv")));
    const auto raw = read_float_grid(dir / "posterior" / (name + ".f32"));
    EXPECT_EQ(raw.width(), 48);
  }
  EXPECT_EQ(read_mask(dir / "masks" / "frame_0000.pgm"), result.frames[0].mask);
  std::ifstream metrics(dir / "metrics.tsv");
  std::stringstream text;
  text << metrics.rdbuf();
  EXPECT_NE(text.str().find("Videoname\tFOF+color+prior\ntwo_layer\t"), std::string::npos);
  std::ifstream diag(dir / "diagnostics" / "frame_0000.csv");
  std::string header, columns;
  std::getline(diag, header);
  std::getline(diag, columns);
  EXPECT_EQ(header.rfind("# frame=0 alpha=", 0), 0u);
  EXPECT_EQ(columns, "label,kind,tx,ty,tz,variance,pixel_count");
  fs::remove_all(dir);
}

TEST(RunVideo, NoMetricsWithoutGroundTruth) {
  auto video = video_from_scene(two_layer_scene(2));
  for (auto& gt : video.ground_truth) gt.reset();
  const auto dir = scratch_dir("run_no_gt");
  const auto result = run_video(video, fast_config(), {}, dir);
  EXPECT_FALSE(result.mean_f);
  EXPECT_FALSE(fs::exists(dir / "metrics.tsv"));
  EXPECT_TRUE(fs::exists(dir / "run_info.txt"));
  fs::remove_all(dir);
}

TEST(LoadVideo, ReadsDirectoriesInNameOrder) {
  const auto spec = two_layer_scene(2);
  const auto video = video_from_scene(spec);
  const auto dir = scratch_dir("load_video");
  fs::create_directories(dir / "frames");
  fs::create_directories(dir / "flows");
  fs::create_directories(dir / "gt");
  for (std::size_t i = 0; i < 2; ++i) {
    write_image(video.frames[i], dir / "frames" / (video.names[i] + ".ppm"));
    write_flo(video.flows[i], dir / "flows" / (video.names[i] + ".flo"));
  }
  write_mask(*video.ground_truth[1], dir / "gt" / (video.names[1] + ".pgm"));
  const auto loaded = load_video(dir / "frames", dir / "flows", dir / "gt");
  EXPECT_EQ(loaded.names, video.names);
  EXPECT_EQ(loaded.frames, video.frames);
  EXPECT_EQ(loaded.flows, video.flows);
  EXPECT_FALSE(loaded.ground_truth[0]);
  EXPECT_EQ(loaded.ground_truth[1], video.ground_truth[1]);
  EXPECT_THROW(load_video(dir / "missing", dir / "flows"), Error);
  fs::remove_all(dir);
}

TEST(Downscale, IntegerFactor) {
  VideoInput video;
  video.names = {"a"};
  ColorFrame frame(8, 4);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 8; ++x) frame(x, y) = {static_cast<std::uint8_t>(10 * x), 0, 0};
  }
  video.frames.push_back(frame);
  FlowField flow(8, 4);
  for (auto& u : flow.u) u = 4.0f;
  video.flows.push_back(flow);
  video.ground_truth.emplace_back(LabelMask(8, 4, 255));
  const auto small = downscale(video, 4);
  ASSERT_EQ(small.frames[0].width(), 4);
  ASSERT_EQ(small.frames[0].height(), 2);
  EXPECT_EQ(small.frames[0](0, 0).r, 5);  // mean of 0 and 10
  EXPECT_EQ(small.flows[0].u(1, 1), 2.0f);
  EXPECT_EQ((*small.ground_truth[0])(3, 1), 255);
  EXPECT_EQ(downscale(video, 8).frames[0], frame);
  EXPECT_THROW(downscale(video, 0), Error);
}

}  // namespace
}  // namespace fofseg

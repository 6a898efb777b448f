#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "fofseg/synth.hpp"

namespace fofseg {
namespace {

SceneSpec parse(const std::string& text) {
  std::istringstream in(text);
  return parse_scene_spec(in);
}

TEST(TranslationalFlow, ForwardMotionExamples) {
  const CameraIntrinsics k{100.0, 0.0, 0.0};
  auto v = translational_flow({0, 0, 1}, k, 5, 0, 10);
  EXPECT_DOUBLE_EQ(v[0], 0.5);
  EXPECT_DOUBLE_EQ(v[1], 0.0);
  v = translational_flow({0, 0, 1}, k, 5, 0, 20);
  EXPECT_DOUBLE_EQ(v[0], 0.25);
  v = translational_flow({1, 0, 0}, k, 7, 3, 10);
  EXPECT_DOUBLE_EQ(v[0], -10.0);
  EXPECT_DOUBLE_EQ(v[1], 0.0);
}

TEST(Scene, OrientationDoesNotDependOnDepth) {
  SceneSpec spec;
  spec.camera = {0.3, -0.2, 0.9};
  spec.background_depth = 25.0;
  spec.layers.push_back({Region::rect(5, 5, 30, 20), 4.0});
  spec.layers.push_back({Region::half(Region::Kind::bottom, 40), 11.0});
  const auto frame = flow_from_scene(spec, 0);
  const auto obs = flow_to_orientation(frame.flow, 0.5);
  const auto expected = orientation_field(MotionHypothesis(spec.camera), spec.intrinsics, spec.width,
                                          spec.height);
  std::size_t checked = 0;
  for (std::size_t i = 0; i < obs.angle.size(); ++i) {
    if (!obs.valid[i]) continue;
    ++checked;
    EXPECT_NEAR(angular_residual(obs.angle[i], expected.angle[i]), 0.0, 1e-5);
  }
  EXPECT_GT(checked, obs.angle.size() / 2);
  for (auto l : frame.ground_truth) EXPECT_EQ(l, 0);
}

TEST(Scene, ObjectShiftsByItsFlow) {
  SceneSpec spec;
  spec.camera = {0.0, 0.0, 0.0};
  spec.frames = 2;
  spec.objects.push_back({Region::rect(10, 10, 20, 18), 8.0, {3.0 * 8.0 / 64.0, 0.0, 0.0}});
  const auto frame0 = flow_from_scene(spec, 0);
  EXPECT_NEAR(frame0.flow.u(12, 12), 3.0, 1e-6);
  EXPECT_EQ(frame0.flow.u(0, 0), 0.0f);

  const auto frames = render_frames(spec);
  ASSERT_EQ(frames.size(), 2u);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 3; x < spec.width; ++x) {
      const bool inside0 = x - 3 >= 10 && x - 3 < 20 && y >= 10 && y < 18;
      if (inside0 || (x >= 10 && x < 20 && y >= 10 && y < 18)) {
        EXPECT_EQ(frames[1](x, y), frames[0](x - 3, y)) << x << "," << y;
      }
    }
  }
  const auto frame1 = flow_from_scene(spec, 1);
  EXPECT_EQ(frame1.ground_truth(22, 12), 1);
  EXPECT_EQ(frame1.ground_truth(12, 12), 0);
}

TEST(Scene, GroundTruthMatchesTopmostObject) {
  SceneSpec spec;
  spec.objects.push_back({Region::rect(0, 0, 20, 20), 5.0, {0.1, 0, 0}});
  spec.objects.push_back({Region::rect(10, 10, 30, 30), 5.0, {0, 0.1, 0}});
  const auto gt = flow_from_scene(spec, 0).ground_truth;
  EXPECT_EQ(gt(5, 5), 1);
  EXPECT_EQ(gt(15, 15), 2);
  EXPECT_EQ(gt(25, 25), 2);
  EXPECT_EQ(gt(40, 40), 0);
}

TEST(Scene, RenderingIsDeterministic) {
  SceneSpec spec;
  spec.frames = 3;
  spec.noise_sigma = 0.1;
  spec.seed = 4;
  spec.objects.push_back({Region::rect(8, 8, 16, 16), 6.0, {0.2, 0.1, 0.0}});
  EXPECT_EQ(render_frames(spec), render_frames(spec));
  EXPECT_EQ(flow_from_scene(spec, 1).flow, flow_from_scene(spec, 1).flow);
  spec.seed = 5;
  SceneSpec other = spec;
  other.seed = 6;
  EXPECT_NE(flow_from_scene(spec, 0).flow, flow_from_scene(other, 0).flow);
  EXPECT_NE(region_color(-1, 0), region_color(0, 0));
}

TEST(Scene, NoiseRotatesWithoutChangingMagnitude) {
  SceneSpec clean;
  clean.camera = {0.5, 0.5, 0.7};
  SceneSpec noisy = clean;
  noisy.noise_sigma = 0.2;
  noisy.seed = 3;
  const auto a = flow_from_scene(clean, 0).flow;
  const auto b = flow_from_scene(noisy, 0).flow;
  for (std::size_t i = 0; i < a.u.size(); ++i) {
    EXPECT_NEAR(std::hypot(a.u[i], a.v[i]), std::hypot(b.u[i], b.v[i]), 1e-4);
  }
}

TEST(SceneSpecFile, ParsesAllKeys) {
  const auto spec = parse(R"(# two layers and an object
width = 40
height = 30
frames = 4
seed = 9
focal_length = 50
camera = 0 0 1
background_depth = 20
noise_sigma = 0.05
layer.1.region = left 10
layer.1.depth = 6
object.0.region = rect 5 5 15 12
object.0.depth = 8
object.0.motion = 0.1 0 0
)");
  EXPECT_EQ(spec.width, 40);
  EXPECT_EQ(spec.height, 30);
  EXPECT_EQ(spec.frames, 4);
  EXPECT_EQ(spec.seed, 9u);
  EXPECT_EQ(spec.intrinsics.focal_length, 50.0);
  EXPECT_EQ(spec.intrinsics.cx, 19.5);
  EXPECT_EQ(spec.noise_sigma, 0.05);
  ASSERT_EQ(spec.layers.size(), 1u);
  EXPECT_EQ(spec.layers[0].region.kind, Region::Kind::left);
  EXPECT_EQ(spec.layers[0].region.boundary, 10);
  ASSERT_EQ(spec.objects.size(), 1u);
  EXPECT_EQ(spec.objects[0].region.x1, 15);
  EXPECT_EQ(spec.objects[0].translation[0], 0.1);
}

TEST(SceneSpecFile, Errors) {
  auto code = [](const std::string& text) {
    try {
      parse(text);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::invalid_argument;
  };
  EXPECT_EQ(code("colour = red\n"), Errc::invalid_spec);
  EXPECT_EQ(code("object.0.region = rect 1 1 5 5\n"), Errc::invalid_spec);
  EXPECT_EQ(code("object.0.region = circle 3\nobject.0.depth = 2\n"), Errc::invalid_spec);
  EXPECT_EQ(code("width = 10\nobject.0.region = rect 1 1 50 5\nobject.0.depth = 2\n"),
            Errc::invalid_spec);
  EXPECT_EQ(code("camera = 1 2\n"), Errc::invalid_spec);
  EXPECT_EQ(code("frames = 0\n"), Errc::invalid_spec);
  EXPECT_EQ(code("layer.0.motion = 1 0 0\n"), Errc::invalid_spec);
  EXPECT_THROW(load_scene_spec("/nonexistent/scene.txt"), Error);
}

}  // namespace
}  // namespace fofseg

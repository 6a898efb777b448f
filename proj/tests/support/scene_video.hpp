#ifndef FOFSEG_TESTS_SCENE_VIDEO_HPP
#define FOFSEG_TESTS_SCENE_VIDEO_HPP

#include <cstdio>

#include "fofseg/pipeline.hpp"
#include "fofseg/synth.hpp"

namespace fofseg::testing {

/// Renders a scene into pipeline input with one flow per frame.
inline VideoInput video_from_scene(const SceneSpec& spec) {
  VideoInput video;
  video.frames = render_frames(spec);
  for (int i = 0; i < spec.frames; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04d", i);
    video.names.emplace_back(name);
    SceneFrame f = flow_from_scene(spec, i);
    video.flows.push_back(std::move(f.flow));
    video.ground_truth.emplace_back(std::move(f.ground_truth));
  }
  return video;
}

/// Camera moving forward over a far background with one nearer object
/// translating sideways.
inline SceneSpec two_layer_scene(int frames, std::uint64_t seed = 1) {
  SceneSpec spec;
  spec.width = 48;
  spec.height = 36;
  spec.intrinsics = CameraIntrinsics::centered(spec.width, spec.height);
  spec.camera = {0.0, 0.0, 1.0};
  spec.background_depth = 12.0;
  spec.objects.push_back({Region::rect(14, 11, 28, 23), 6.0, {0.25, 0.0, 1.0}});
  spec.noise_sigma = 0.02;
  spec.frames = frames;
  spec.seed = seed;
  return spec;
}

inline double iou_foreground(const LabelMask& predicted, const LabelMask& truth) {
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool p = predicted[i] != 0;
    const bool t = truth[i] != 0;
    inter += p && t;
    uni += p || t;
  }
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
}

}  // namespace fofseg::testing

#endif  // FOFSEG_TESTS_SCENE_VIDEO_HPP

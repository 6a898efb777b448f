#ifndef FOFSEG_SYNTH_HPP
#define FOFSEG_SYNTH_HPP

// Layered synthetic scenes under a translating camera. Every region has a
// constant depth; independently moving objects translate relative to the
// camera by t_cam - t_obj. Flows follow the translational flow equations
// exactly, so their orientations are known in closed form.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fofseg/config.hpp"
#include "fofseg/error.hpp"
#include "fofseg/flowio.hpp"
#include "fofseg/fof.hpp"

namespace fofseg {

/// Rectangle [x0, x1) x [y0, y1), or a half-plane bounded by a column/row.
struct Region {
  enum class Kind { rect, left, right, top, bottom };

  Kind kind = Kind::rect;
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int boundary = 0;

  static Region rect(int x0, int y0, int x1, int y1) { return {Kind::rect, x0, y0, x1, y1, 0}; }
  static Region half(Kind kind, int boundary) { return {kind, 0, 0, 0, 0, boundary}; }

  bool contains(int px, int py, int dx, int dy) const {
    switch (kind) {
      case Kind::rect: return px >= x0 + dx && px < x1 + dx && py >= y0 + dy && py < y1 + dy;
      case Kind::left: return px < boundary + dx;
      case Kind::right: return px >= boundary + dx;
      case Kind::top: return py < boundary + dy;
      case Kind::bottom: return py >= boundary + dy;
    }
    return false;
  }

  /// Point whose flow displaces the region between frames.
  std::array<double, 2> anchor(int width, int height, int dx, int dy) const {
    switch (kind) {
      case Kind::rect: return {(x0 + x1 - 1) / 2.0 + dx, (y0 + y1 - 1) / 2.0 + dy};
      case Kind::left:
      case Kind::right: return {boundary + dx - 0.5, (height - 1) / 2.0};
      case Kind::top:
      case Kind::bottom: return {(width - 1) / 2.0, boundary + dy - 0.5};
    }
    return {0.0, 0.0};
  }
};

struct DepthLayer {
  Region region;
  double depth = 1.0;
};

struct SceneObject {
  Region region;
  double depth = 1.0;
  std::array<double, 3> translation{0.0, 0.0, 0.0};
};

struct SceneSpec {
  int width = 64;
  int height = 48;
  CameraIntrinsics intrinsics = CameraIntrinsics::centered(64, 48);
  std::array<double, 3> camera{0.0, 0.0, 1.0};
  /// Depth of the implicit full-frame layer under every listed region.
  double background_depth = 10.0;
  std::vector<DepthLayer> layers;
  std::vector<SceneObject> objects;
  double noise_sigma = 0.0;
  int frames = 1;
  std::uint64_t seed = 0;

  void validate() const {
    auto fail = [](const std::string& what) { throw Error(Errc::invalid_spec, what); };
    if (width < 1 || height < 1 || width > kMaxDimension || height > kMaxDimension) {
      fail("image dimensions");
    }
    if (!(intrinsics.focal_length > 0.0)) fail("focal_length must be positive");
    if (frames < 1) fail("frames must be >= 1");
    if (!(noise_sigma >= 0.0)) fail("noise_sigma must be >= 0");
    if (!(background_depth > 0.0)) fail("background_depth must be positive");
    auto check_region = [&](const Region& r) {
      switch (r.kind) {
        case Region::Kind::rect:
          if (r.x0 < 0 || r.y0 < 0 || r.x1 > width || r.y1 > height || r.x0 >= r.x1 ||
              r.y0 >= r.y1) {
            fail("rectangle outside the image or empty");
          }
          break;
        case Region::Kind::left:
        case Region::Kind::right:
          if (r.boundary < 0 || r.boundary > width) fail("half-plane column outside the image");
          break;
        case Region::Kind::top:
        case Region::Kind::bottom:
          if (r.boundary < 0 || r.boundary > height) fail("half-plane row outside the image");
          break;
      }
    };
    for (const auto& l : layers) {
      check_region(l.region);
      if (!(l.depth > 0.0)) fail("layer depth must be positive");
    }
    for (const auto& o : objects) {
      check_region(o.region);
      if (!(o.depth > 0.0)) fail("object depth must be positive");
      if (objects.size() > 254) fail("too many objects");
    }
  }
};

/// Translational flow at centered pixel coordinates for depth Z.
inline std::array<double, 2> translational_flow(const std::array<double, 3>& t,
                                                const CameraIntrinsics& k, double px, double py,
                                                double depth) {
  const double x = px - k.cx;
  const double y = py - k.cy;
  return {(t[2] * x - t[0] * k.focal_length) / depth, (t[2] * y - t[1] * k.focal_length) / depth};
}

struct SceneFrame {
  FlowField flow;
  LabelMask ground_truth;
};

namespace detail {

struct RegionOffsets {
  std::vector<std::array<int, 2>> layers;
  std::vector<std::array<int, 2>> objects;
};

inline std::array<double, 3> relative_translation(const SceneSpec& spec, const SceneObject& o) {
  return {spec.camera[0] - o.translation[0], spec.camera[1] - o.translation[1],
          spec.camera[2] - o.translation[2]};
}

/// Integer displacement of every region at frame `index`, accumulated from
/// the rounded flow at each region's anchor.
inline RegionOffsets offsets_at(const SceneSpec& spec, int index) {
  RegionOffsets off;
  off.layers.assign(spec.layers.size(), {0, 0});
  off.objects.assign(spec.objects.size(), {0, 0});
  for (int f = 0; f < index; ++f) {
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
      auto& o = off.layers[i];
      const auto a = spec.layers[i].region.anchor(spec.width, spec.height, o[0], o[1]);
      const auto v =
          translational_flow(spec.camera, spec.intrinsics, a[0], a[1], spec.layers[i].depth);
      o[0] += static_cast<int>(std::lround(v[0]));
      o[1] += static_cast<int>(std::lround(v[1]));
    }
    for (std::size_t i = 0; i < spec.objects.size(); ++i) {
      auto& o = off.objects[i];
      const auto& obj = spec.objects[i];
      const auto a = obj.region.anchor(spec.width, spec.height, o[0], o[1]);
      const auto v = translational_flow(relative_translation(spec, obj), spec.intrinsics, a[0],
                                        a[1], obj.depth);
      o[0] += static_cast<int>(std::lround(v[0]));
      o[1] += static_cast<int>(std::lround(v[1]));
    }
  }
  return off;
}

/// Topmost region id per pixel: -1 implicit background, 0..L-1 layers,
/// L..L+N-1 objects (later entries occlude earlier ones).
inline Grid<int> region_map(const SceneSpec& spec, const RegionOffsets& off) {
  Grid<int> ids(spec.width, spec.height, -1);
  const int n_layers = static_cast<int>(spec.layers.size());
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      int id = -1;
      for (int i = 0; i < n_layers; ++i) {
        const auto& o = off.layers[static_cast<std::size_t>(i)];
        if (spec.layers[static_cast<std::size_t>(i)].region.contains(x, y, o[0], o[1])) id = i;
      }
      for (std::size_t i = 0; i < spec.objects.size(); ++i) {
        const auto& o = off.objects[i];
        if (spec.objects[i].region.contains(x, y, o[0], o[1])) id = n_layers + static_cast<int>(i);
      }
      ids(x, y) = id;
    }
  }
  return ids;
}

}  // namespace detail

/// Flow from frame `index` to `index + 1` and the ground-truth labels at
/// frame `index` (0 background, 1..N objects).
inline SceneFrame flow_from_scene(const SceneSpec& spec, int index) {
  spec.validate();
  if (index < 0 || index >= spec.frames) throw Error(Errc::invalid_spec, "frame index out of range");
  const auto ids = detail::region_map(spec, detail::offsets_at(spec, index));
  const int n_layers = static_cast<int>(spec.layers.size());

  SceneFrame out{FlowField(spec.width, spec.height), LabelMask(spec.width, spec.height, 0)};
  std::mt19937_64 noise_rng(spec.seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(index) + 1);
  std::normal_distribution<double> noise(0.0, spec.noise_sigma > 0.0 ? spec.noise_sigma : 1.0);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const int id = ids(x, y);
      std::array<double, 3> t = spec.camera;
      double depth = spec.background_depth;
      if (id >= n_layers) {
        const auto& obj = spec.objects[static_cast<std::size_t>(id - n_layers)];
        t = detail::relative_translation(spec, obj);
        depth = obj.depth;
        out.ground_truth(x, y) = static_cast<std::uint8_t>(id - n_layers + 1);
      } else if (id >= 0) {
        depth = spec.layers[static_cast<std::size_t>(id)].depth;
      }
      auto v = translational_flow(t, spec.intrinsics, x, y, depth);
      if (spec.noise_sigma > 0.0) {
        const double theta = noise(noise_rng);
        const double c = std::cos(theta);
        const double s = std::sin(theta);
        v = {c * v[0] - s * v[1], s * v[0] + c * v[1]};
      }
      out.flow.u(x, y) = static_cast<float>(v[0]);
      out.flow.v(x, y) = static_cast<float>(v[1]);
    }
  }
  return out;
}

/// Flat color for a region id (see detail::region_map).
inline Rgb region_color(int id, int n_layers) {
  static constexpr std::array<Rgb, 8> background{{{70, 110, 60},
                                                  {130, 100, 70},
                                                  {90, 140, 170},
                                                  {160, 160, 120},
                                                  {50, 80, 110},
                                                  {120, 150, 90},
                                                  {100, 70, 50},
                                                  {180, 190, 200}}};
  static constexpr std::array<Rgb, 6> objects{
      {{220, 40, 40}, {240, 200, 30}, {200, 60, 200}, {250, 130, 20}, {30, 220, 200}, {255, 255, 255}}};
  if (id < n_layers) return background[static_cast<std::size_t>(id + 1) % background.size()];
  return objects[static_cast<std::size_t>(id - n_layers) % objects.size()];
}

inline std::vector<ColorFrame> render_frames(const SceneSpec& spec) {
  spec.validate();
  const int n_layers = static_cast<int>(spec.layers.size());
  std::vector<ColorFrame> frames;
  frames.reserve(static_cast<std::size_t>(spec.frames));
  for (int f = 0; f < spec.frames; ++f) {
    const auto ids = detail::region_map(spec, detail::offsets_at(spec, f));
    ColorFrame frame(spec.width, spec.height);
    for (std::size_t i = 0; i < ids.size(); ++i) frame[i] = region_color(ids[i], n_layers);
    frames.push_back(std::move(frame));
  }
  return frames;
}

// ---- scene spec files -----------------------------------------------------
//
//   width = 64            height = 48         frames = 3
//   focal_length = 64     cx = 31.5           cy = 23.5      (optional)
//   camera = tx ty tz     background_depth = 20
//   noise_sigma = 0.05    seed = 7
//   layer.<n>.region = rect x0 y0 x1 y1 | left X | right X | top Y | bottom Y
//   layer.<n>.depth = Z
//   object.<n>.region = ...   object.<n>.depth = Z   object.<n>.motion = tx ty tz
//
// Groups are ordered by <n>; later groups occlude earlier ones.

namespace detail {

inline Region parse_region(const KeyValue& kv) {
  std::istringstream in(kv.value);
  std::string kind;
  in >> kind;
  auto fail = [&] { throw Error(Errc::invalid_spec, kv.key + ": bad region '" + kv.value + "'"); };
  Region r;
  if (kind == "rect") {
    int x0, y0, x1, y1;
    if (!(in >> x0 >> y0 >> x1 >> y1)) fail();
    r = Region::rect(x0, y0, x1, y1);
  } else {
    int b;
    if (!(in >> b)) fail();
    if (kind == "left") r = Region::half(Region::Kind::left, b);
    else if (kind == "right") r = Region::half(Region::Kind::right, b);
    else if (kind == "top") r = Region::half(Region::Kind::top, b);
    else if (kind == "bottom") r = Region::half(Region::Kind::bottom, b);
    else fail();
  }
  std::string extra;
  if (in >> extra) fail();
  return r;
}

inline std::array<double, 3> parse_vec3(const KeyValue& kv) {
  const auto v = parse_double_list(kv, Errc::invalid_spec);
  if (v.size() != 3) throw Error(Errc::invalid_spec, kv.key + ": expected three numbers");
  return {v[0], v[1], v[2]};
}

}  // namespace detail

inline SceneSpec parse_scene_spec(std::istream& in) {
  const auto entries = parse_key_values(in, Errc::invalid_spec);
  SceneSpec spec;
  std::optional<double> focal, cx, cy;
  struct Group {
    std::optional<Region> region;
    std::optional<double> depth;
    std::array<double, 3> motion{0.0, 0.0, 0.0};
  };
  std::map<int, Group> layers, objects;
  constexpr Errc e = Errc::invalid_spec;
  for (const auto& kv : entries) {
    const std::string& key = kv.key;
    if (key == "width") spec.width = static_cast<int>(parse_int(kv, e));
    else if (key == "height") spec.height = static_cast<int>(parse_int(kv, e));
    else if (key == "frames") spec.frames = static_cast<int>(parse_int(kv, e));
    else if (key == "seed") spec.seed = static_cast<std::uint64_t>(parse_int(kv, e));
    else if (key == "focal_length") focal = parse_double(kv, e);
    else if (key == "cx") cx = parse_double(kv, e);
    else if (key == "cy") cy = parse_double(kv, e);
    else if (key == "camera") spec.camera = detail::parse_vec3(kv);
    else if (key == "background_depth") spec.background_depth = parse_double(kv, e);
    else if (key == "noise_sigma") spec.noise_sigma = parse_double(kv, e);
    else if (key.rfind("layer.", 0) == 0 || key.rfind("object.", 0) == 0) {
      const bool is_layer = key[0] == 'l';
      const auto rest = key.substr(is_layer ? 6 : 7);
      const auto dot = rest.find('.');
      if (dot == std::string::npos) throw Error(e, "malformed key " + key);
      const int n = static_cast<int>(parse_int({key, rest.substr(0, dot), kv.line}, e));
      const std::string field = rest.substr(dot + 1);
      Group& g = (is_layer ? layers : objects)[n];
      if (field == "region") g.region = detail::parse_region(kv);
      else if (field == "depth") g.depth = parse_double(kv, e);
      else if (field == "motion" && !is_layer) g.motion = detail::parse_vec3(kv);
      else throw Error(e, "unknown key " + key);
    } else {
      throw Error(e, "unknown key " + key);
    }
  }
  spec.intrinsics = CameraIntrinsics::centered(spec.width, spec.height);
  if (focal) spec.intrinsics.focal_length = *focal;
  if (cx) spec.intrinsics.cx = *cx;
  if (cy) spec.intrinsics.cy = *cy;
  for (const auto& [n, g] : layers) {
    if (!g.region || !g.depth) throw Error(e, "layer." + std::to_string(n) + " needs region and depth");
    spec.layers.push_back({*g.region, *g.depth});
  }
  for (const auto& [n, g] : objects) {
    if (!g.region || !g.depth) {
      throw Error(e, "object." + std::to_string(n) + " needs region and depth");
    }
    spec.objects.push_back({*g.region, *g.depth, g.motion});
  }
  spec.validate();
  return spec;
}

inline SceneSpec load_scene_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_failure, "cannot open " + path.string());
  return parse_scene_spec(in);
}

}  // namespace fofseg

#endif  // FOFSEG_SYNTH_HPP

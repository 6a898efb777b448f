#ifndef FOFSEG_FOF_HPP
#define FOFSEG_FOF_HPP

// Flow orientation fields: conversion of flow to orientations, predicted
// orientation fields for translational camera motion, the hemisphere library
// of motion hypotheses and gradient-descent refinement of a hypothesis.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "fofseg/error.hpp"
#include "fofseg/flowio.hpp"
#include "fofseg/grid.hpp"

namespace fofseg {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Pinhole intrinsics; pixel coordinates are centered on (cx, cy).
struct CameraIntrinsics {
  double focal_length = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  /// f = max(width, height), principal point at the image center.
  static CameraIntrinsics centered(int width, int height) {
    return {static_cast<double>(std::max(width, height)), (width - 1) / 2.0, (height - 1) / 2.0};
  }

  static CameraIntrinsics centered(int width, int height, double focal_length) {
    CameraIntrinsics k = centered(width, height);
    k.focal_length = focal_length;
    return k;
  }

  void validate() const {
    if (!(focal_length > 0.0) || !std::isfinite(focal_length)) {
      throw Error(Errc::invalid_argument, "focal length must be positive");
    }
  }
};

/// Unit-length translation direction.
class MotionHypothesis {
 public:
  MotionHypothesis() = default;
  MotionHypothesis(double tx, double ty, double tz) {
    const double norm = std::sqrt(tx * tx + ty * ty + tz * tz);
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw Error(Errc::invalid_argument, "translation direction must be non-zero and finite");
    }
    t_ = {tx / norm, ty / norm, tz / norm};
  }
  explicit MotionHypothesis(const std::array<double, 3>& t) : MotionHypothesis(t[0], t[1], t[2]) {}

  double x() const noexcept { return t_[0]; }
  double y() const noexcept { return t_[1]; }
  double z() const noexcept { return t_[2]; }
  const std::array<double, 3>& vec() const noexcept { return t_; }

  bool operator==(const MotionHypothesis&) const = default;

 private:
  std::array<double, 3> t_{0.0, 0.0, 1.0};
};

/// Great-circle distance between two directions.
inline double angular_distance(const MotionHypothesis& a, const MotionHypothesis& b) {
  const double dot = a.x() * b.x() + a.y() * b.y() + a.z() * b.z();
  return std::acos(std::clamp(dot, -1.0, 1.0));
}

struct OrientationField {
  Grid<double> angle;
  Grid<std::uint8_t> valid;

  OrientationField() = default;
  OrientationField(int width, int height) : angle(width, height, 0.0), valid(width, height, 1) {}
  OrientationField(Grid<double> angles, Grid<std::uint8_t> mask)
      : angle(std::move(angles)), valid(std::move(mask)) {
    require_same_shape(angle, valid, "orientation field");
  }

  int width() const noexcept { return angle.width(); }
  int height() const noexcept { return angle.height(); }
  std::size_t valid_count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
  }

  bool operator==(const OrientationField&) const = default;
};

/// Maps any finite angle into (-pi, pi].
inline double wrap_angle(double angle) {
  double r = std::remainder(angle, kTwoPi);
  if (r <= -kPi) r += kTwoPi;
  return r;
}

/// (a - b) wrapped into (-pi, pi].
inline double angular_residual(double a, double b) {
  double d = a - b;
  if (d > -kPi && d <= kPi) return d;
  if (d > kPi && d <= 3.0 * kPi) return d - kTwoPi;
  if (d <= -kPi && d > -3.0 * kPi) return d + kTwoPi;
  return wrap_angle(d);
}

/// Predicted orientation at pixel (px, py); atan2(0, 0) yields 0 at the focus of expansion.
inline double predicted_orientation(const MotionHypothesis& t, const CameraIntrinsics& k, double px,
                                    double py) {
  const double x = px - k.cx;
  const double y = py - k.cy;
  const double num = t.z() * y - t.y() * k.focal_length;
  const double den = t.z() * x - t.x() * k.focal_length;
  const double angle = std::atan2(num, den);
  // atan2 returns -pi for (-0, negative); fold onto the closed end of (-pi, pi].
  return angle <= -kPi ? kPi : angle;
}

inline OrientationField flow_to_orientation(const FlowField& flow, double threshold) {
  if (!(threshold >= 0.0)) throw Error(Errc::invalid_argument, "T_f must be non-negative");
  OrientationField out(flow.width(), flow.height());
  for (std::size_t i = 0; i < flow.u.size(); ++i) {
    const double u = flow.u[i];
    const double v = flow.v[i];
    if (std::abs(u) < threshold && std::abs(v) < threshold) {
      out.valid[i] = 0;
      out.angle[i] = 0.0;
      continue;
    }
    const double angle = std::atan2(v, u);
    out.angle[i] = angle <= -kPi ? kPi : angle;
  }
  return out;
}

inline OrientationField orientation_field(const MotionHypothesis& t, const CameraIntrinsics& k,
                                          int width, int height) {
  k.validate();
  OrientationField out(width, height);
  for (int py = 0; py < height; ++py) {
    for (int px = 0; px < width; ++px) {
      const double x = px - k.cx;
      const double y = py - k.cy;
      const double num = t.z() * y - t.y() * k.focal_length;
      const double den = t.z() * x - t.x() * k.focal_length;
      if (num == 0.0 && den == 0.0) {
        out.valid(px, py) = 0;
        out.angle(px, py) = 0.0;
      } else {
        out.angle(px, py) = predicted_orientation(t, k, px, py);
      }
    }
  }
  return out;
}

/// 46 directions on the front hemisphere, ring-major from the equator to the
/// pole, azimuth ascending within each ring.
inline std::vector<MotionHypothesis> hemisphere_directions() {
  struct Ring {
    double polar_deg;
    int samples;
  };
  constexpr std::array<Ring, 4> rings{{{90.0, 16}, {67.5, 16}, {45.0, 8}, {22.5, 5}}};
  std::vector<MotionHypothesis> out;
  out.reserve(46);
  for (const Ring& ring : rings) {
    const double polar = ring.polar_deg * kPi / 180.0;
    for (int s = 0; s < ring.samples; ++s) {
      const double azimuth = kTwoPi * s / ring.samples;
      double tx = std::sin(polar) * std::cos(azimuth);
      double ty = std::sin(polar) * std::sin(azimuth);
      double tz = std::cos(polar);
      // Exact zeros keep the axis directions (and their constant fields) exact.
      if (std::abs(tx) < 1e-15) tx = 0.0;
      if (std::abs(ty) < 1e-15) ty = 0.0;
      if (std::abs(tz) < 1e-15) tz = 0.0;
      out.emplace_back(tx, ty, tz);
    }
  }
  out.emplace_back(0.0, 0.0, 1.0);
  return out;
}

/// Motion hypotheses with their precomputed orientation fields. The
/// zero-motion pseudo-hypothesis has no field; it is represented by
/// `kZeroMotion` wherever a hypothesis index is expected.
class MotionLibrary {
 public:
  static constexpr std::size_t kZeroMotion = static_cast<std::size_t>(-1);

  MotionLibrary() = default;
  MotionLibrary(const CameraIntrinsics& intrinsics, int width, int height,
                std::span<const MotionHypothesis> hypotheses)
      : intrinsics_(intrinsics), width_(width), height_(height) {
    if (width < 1 || height < 1) throw Error(Errc::invalid_argument, "library dimensions");
    intrinsics.validate();
    for (const auto& h : hypotheses) append(h);
    base_size_ = hypotheses_.size();
  }

  std::size_t append(const MotionHypothesis& h) {
    hypotheses_.push_back(h);
    fields_.push_back(orientation_field(h, intrinsics_, width_, height_));
    return hypotheses_.size() - 1;
  }

  /// Drops hypotheses appended after construction.
  void reset() {
    hypotheses_.resize(base_size_);
    fields_.resize(base_size_);
  }

  std::size_t size() const noexcept { return hypotheses_.size(); }
  std::size_t base_size() const noexcept { return base_size_; }
  const MotionHypothesis& hypothesis(std::size_t i) const { return hypotheses_.at(i); }
  const OrientationField& field(std::size_t i) const { return fields_.at(i); }
  std::span<const MotionHypothesis> hypotheses() const noexcept { return hypotheses_; }
  const CameraIntrinsics& intrinsics() const noexcept { return intrinsics_; }
  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

 private:
  CameraIntrinsics intrinsics_;
  int width_ = 0;
  int height_ = 0;
  std::size_t base_size_ = 0;
  std::vector<MotionHypothesis> hypotheses_;
  std::vector<OrientationField> fields_;
};

inline MotionLibrary build_library(const CameraIntrinsics& intrinsics, int width, int height) {
  const auto directions = hemisphere_directions();
  return MotionLibrary(intrinsics, width, height, directions);
}

/// Raster indices of the valid pixels of `obs`.
inline std::vector<std::size_t> valid_pixels(const OrientationField& obs) {
  std::vector<std::size_t> out;
  out.reserve(obs.valid.size());
  for (std::size_t i = 0; i < obs.valid.size(); ++i) {
    if (obs.valid[i]) out.push_back(i);
  }
  return out;
}

/// Mean absolute wrapped residual between `obs` and the field predicted by `t`.
inline double fof_l1_objective(const MotionHypothesis& t, const CameraIntrinsics& k,
                               const OrientationField& obs, std::span<const std::size_t> pixels) {
  if (pixels.empty()) throw Error(Errc::empty_pixel_set, "L1 objective over no pixels");
  const int width = obs.width();
  double sum = 0.0;
  for (std::size_t p : pixels) {
    const int px = static_cast<int>(p % static_cast<std::size_t>(width));
    const int py = static_cast<int>(p / static_cast<std::size_t>(width));
    sum += std::abs(angular_residual(obs.angle[p], predicted_orientation(t, k, px, py)));
  }
  return sum / static_cast<double>(pixels.size());
}

struct RefineOptions {
  double gradient_step = 1e-4;
  double initial_step = 0.1;
  int max_halvings = 20;
  int max_iterations = 50;
  double min_improvement = 1e-6;
};

/// Projected gradient descent on the unit sphere. The descent direction is the
/// negated tangent-plane gradient (central differences), normalized so that a
/// step of length s moves roughly s radians; steps are halved until the
/// objective strictly decreases. Each line search starts from twice the last
/// accepted step, capped at initial_step. `trace`, when given, receives the objective
/// at the start and after every accepted step.
inline MotionHypothesis refine_motion(const MotionHypothesis& start, const CameraIntrinsics& k,
                                      const OrientationField& obs,
                                      std::span<const std::size_t> pixels,
                                      const RefineOptions& options = {},
                                      std::vector<double>* trace = nullptr) {
  if (pixels.empty()) throw Error(Errc::empty_pixel_set, "refinement over no pixels");
  auto objective = [&](const std::array<double, 3>& t) {
    return fof_l1_objective(MotionHypothesis(t), k, obs, pixels);
  };

  MotionHypothesis current = start;
  double value = objective(current.vec());
  if (trace) trace->push_back(value);
  double next_step = options.initial_step;

  for (int iter = 0; iter < options.max_iterations && value > 0.0; ++iter) {
    const auto& t = current.vec();
    std::array<double, 3> grad{};
    for (int j = 0; j < 3; ++j) {
      auto plus = t;
      auto minus = t;
      plus[j] += options.gradient_step;
      minus[j] -= options.gradient_step;
      grad[j] = (objective(plus) - objective(minus)) / (2.0 * options.gradient_step);
    }
    const double radial = grad[0] * t[0] + grad[1] * t[1] + grad[2] * t[2];
    for (int j = 0; j < 3; ++j) grad[j] -= radial * t[j];
    const double norm = std::sqrt(grad[0] * grad[0] + grad[1] * grad[1] + grad[2] * grad[2]);
    if (!(norm > 0.0)) break;

    bool accepted = false;
    double step = next_step;
    for (int halving = 0; halving <= options.max_halvings; ++halving, step *= 0.5) {
      std::array<double, 3> candidate{};
      for (int j = 0; j < 3; ++j) candidate[j] = t[j] - step * grad[j] / norm;
      const MotionHypothesis next(candidate);
      const double next_value = fof_l1_objective(next, k, obs, pixels);
      if (next_value < value) {
        const double improvement = value - next_value;
        current = next;
        value = next_value;
        accepted = true;
        next_step = std::min(options.initial_step, 2.0 * step);
        if (trace) trace->push_back(value);
        if (improvement < options.min_improvement) return current;
        break;
      }
    }
    if (!accepted) break;
  }
  return current;
}

}  // namespace fofseg

#endif  // FOFSEG_FOF_HPP

#ifndef FOFSEG_APPEARANCE_HPP
#define FOFSEG_APPEARANCE_HPP

// Pixelwise color appearance: a motion-compensated history of the last T
// frames, weighted kernel density estimates for the background and
// foreground processes over a spatial neighborhood, uniform mixing, prior
// propagation and the Bayes fusion with the orientation-based labels.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "fofseg/error.hpp"
#include "fofseg/flowio.hpp"
#include "fofseg/fof.hpp"
#include "fofseg/grid.hpp"

namespace fofseg {

struct AppearanceConfig {
  double sigma_color = 15.0 / 4.0;   // per-channel kernel variance, intensity^2
  double sigma_spatial = 5.0 / 4.0;  // per-axis kernel variance, pixels^2
  int history_length = 5;
  int neighborhood_radius = 2;
  double uniform_density = 1.0 / (256.0 * 256.0 * 256.0);

  void validate() const {
    if (!(sigma_color > 0.0) || !(sigma_spatial > 0.0) || !(uniform_density > 0.0)) {
      throw Error(Errc::invalid_config, "appearance variances and density must be positive");
    }
    if (history_length < 1) throw Error(Errc::invalid_config, "history_length must be >= 1");
    if (neighborhood_radius < 0) {
      throw Error(Errc::invalid_config, "neighborhood_radius must be >= 0");
    }
  }
};

enum class Model { background, foreground };

struct HistorySample {
  Rgb color;
  double weight = 0.0;  // P(bg) of the sample when it was observed
  bool valid = false;

  bool operator==(const HistorySample&) const = default;
};

using HistoryLayer = Grid<HistorySample>;

/// Ring of at most `capacity` layers, most recent first.
class AppearanceHistory {
 public:
  AppearanceHistory() = default;
  AppearanceHistory(int width, int height, int capacity)
      : width_(width), height_(height), capacity_(capacity) {
    if (capacity < 1) throw Error(Errc::invalid_argument, "history capacity must be >= 1");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int capacity() const noexcept { return capacity_; }
  std::size_t depth() const noexcept { return layers_.size(); }
  bool empty() const noexcept { return layers_.empty(); }

  const std::deque<HistoryLayer>& layers() const noexcept { return layers_; }
  std::deque<HistoryLayer>& layers() noexcept { return layers_; }

  /// Appends a frame with per-pixel background weights, evicting the oldest layer.
  void push(const ColorFrame& frame, const ProbabilityMap& weights) {
    require_same_shape(frame, weights, "history push");
    if (frame.width() != width_ || frame.height() != height_) {
      throw Error(Errc::dimension_mismatch, "history push: frame size");
    }
    HistoryLayer layer(width_, height_);
    for (std::size_t i = 0; i < layer.size(); ++i) {
      if (!(weights[i] >= 0.0 && weights[i] <= 1.0)) {
        throw Error(Errc::invalid_argument, "history weight outside [0,1]");
      }
      layer[i] = {frame[i], weights[i], true};
    }
    push_layer(std::move(layer));
  }

  void push_layer(HistoryLayer layer) {
    if (layer.width() != width_ || layer.height() != height_) {
      throw Error(Errc::dimension_mismatch, "history push: layer size");
    }
    layers_.push_front(std::move(layer));
    while (layers_.size() > static_cast<std::size_t>(capacity_)) layers_.pop_back();
  }

  bool operator==(const AppearanceHistory&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int capacity_ = 1;
  std::deque<HistoryLayer> layers_;
};

namespace detail {

inline void check_flow_shape(const FlowField& flow, int width, int height, const char* context) {
  if (flow.width() != width || flow.height() != height) {
    throw Error(Errc::dimension_mismatch, std::string(context) + ": flow size");
  }
}

/// Destination of pixel (x, y) under nearest-integer forward mapping.
inline std::pair<int, int> warp_target(const FlowField& flow, int x, int y) {
  return {x + static_cast<int>(std::lround(flow.u(x, y))),
          y + static_cast<int>(std::lround(flow.v(x, y)))};
}

}  // namespace detail

/// Forward-maps every sample by its rounded flow. Conflicts keep the higher
/// background weight (the first arrival in raster order on ties); vacated
/// pixels become holes; samples leaving the frame are dropped.
inline AppearanceHistory warp_history(const AppearanceHistory& history, const FlowField& flow) {
  detail::check_flow_shape(flow, history.width(), history.height(), "warp_history");
  AppearanceHistory out(history.width(), history.height(), history.capacity());
  for (auto it = history.layers().rbegin(); it != history.layers().rend(); ++it) {
    const HistoryLayer& layer = *it;
    HistoryLayer moved(layer.width(), layer.height());
    for (int y = 0; y < layer.height(); ++y) {
      for (int x = 0; x < layer.width(); ++x) {
        const HistorySample& s = layer(x, y);
        if (!s.valid) continue;
        const auto [tx, ty] = detail::warp_target(flow, x, y);
        if (!moved.contains(tx, ty)) continue;
        HistorySample& dst = moved(tx, ty);
        if (!dst.valid || s.weight > dst.weight) dst = s;
      }
    }
    out.push_layer(std::move(moved));
  }
  return out;
}

/// Per-channel color kernel values N(d; 0, sigma_color) for |d| in [0, 255].
class ColorKernel {
 public:
  explicit ColorKernel(double variance) {
    const double norm = 1.0 / std::sqrt(kTwoPi * variance);
    for (int d = 0; d < 256; ++d) table_[d] = norm * std::exp(-0.5 * d * d / variance);
  }

  double operator()(const Rgb& a, const Rgb& b) const {
    return table_[std::abs(a.r - b.r)] * table_[std::abs(a.g - b.g)] * table_[std::abs(a.b - b.b)];
  }

 private:
  std::array<double, 256> table_{};
};

inline double spatial_kernel(int dx, int dy, double variance) {
  return std::exp(-0.5 * (dx * dx + dy * dy) / variance) / (kTwoPi * variance);
}

struct KdeValue {
  double density = 0.0;
  bool no_support = true;
};

/// Weighted KDE over the valid samples in the (2r+1)^2 neighborhood of every
/// history layer. The density is per discrete 8-bit color triple.
inline KdeValue kde_likelihood(const Rgb& c, int x, int y, const AppearanceHistory& history,
                               const AppearanceConfig& config, Model model,
                               const ColorKernel* kernel = nullptr) {
  std::optional<ColorKernel> owned;
  if (!kernel) kernel = &owned.emplace(config.sigma_color);
  const int r = config.neighborhood_radius;
  double numerator = 0.0;
  double normalizer = 0.0;
  for (const HistoryLayer& layer : history.layers()) {
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        if (!layer.contains(x + dx, y + dy)) continue;
        const HistorySample& s = layer(x + dx, y + dy);
        if (!s.valid) continue;
        const double w = model == Model::background ? s.weight : 1.0 - s.weight;
        const double spatial = spatial_kernel(dx, dy, config.sigma_spatial) * w;
        if (spatial == 0.0) continue;
        numerator += spatial * (*kernel)(c, s.color);
        normalizer += spatial;
      }
    }
  }
  if (!(normalizer > 0.0)) return {0.0, true};
  return {numerator / normalizer, false};
}

/// Mean model weight over all neighborhood x history slots. Holes and
/// out-of-frame slots count in the denominator only.
inline double gamma_weight(const AppearanceHistory& history, int x, int y,
                           const AppearanceConfig& config, Model model) {
  const int r = config.neighborhood_radius;
  double numerator = 0.0;
  double slots = 0.0;
  for (const HistoryLayer& layer : history.layers()) {
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        slots += 1.0;
        if (!layer.contains(x + dx, y + dy)) continue;
        const HistorySample& s = layer(x + dx, y + dy);
        if (!s.valid) continue;
        numerator += model == Model::background ? s.weight : 1.0 - s.weight;
      }
    }
  }
  return slots > 0.0 ? numerator / slots : 0.0;
}

inline double mix_uniform(double density, double gamma, double uniform_density) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error(Errc::invalid_argument, "gamma outside [0,1]");
  return gamma * density + (1.0 - gamma) * uniform_density;
}

inline double mix_uniform(const KdeValue& kde, double gamma, double uniform_density) {
  return kde.no_support ? uniform_density : mix_uniform(kde.density, gamma, uniform_density);
}

/// Color likelihood after uniform mixing, P^(c | model).
inline double color_likelihood(const Rgb& c, int x, int y, const AppearanceHistory& history,
                               const AppearanceConfig& config, Model model,
                               const ColorKernel* kernel = nullptr) {
  const KdeValue kde = kde_likelihood(c, x, y, history, config, model, kernel);
  return mix_uniform(kde, gamma_weight(history, x, y, config, model), config.uniform_density);
}

/// Normalized 7x7 Gaussian taps with standard deviation 1.75, row-major.
inline std::array<double, 49> prior_smoothing_kernel() {
  constexpr double sigma = 1.75;
  std::array<double, 49> taps{};
  double total = 0.0;
  for (int j = -3; j <= 3; ++j) {
    for (int i = -3; i <= 3; ++i) {
      const double w = std::exp(-(i * i + j * j) / (2.0 * sigma * sigma));
      taps[static_cast<std::size_t>((j + 3) * 7 + (i + 3))] = w;
      total += w;
    }
  }
  for (double& t : taps) t /= total;
  return taps;
}

/// Previous posterior warped by the flow (holes 0.5, conflicts keep the
/// larger value), then smoothed; taps that fall outside the frame are
/// dropped and the remaining ones renormalized.
inline ProbabilityMap propagate_prior(const ProbabilityMap& previous, const FlowField& flow) {
  detail::check_flow_shape(flow, previous.width(), previous.height(), "propagate_prior");
  const int w = previous.width();
  const int h = previous.height();
  ProbabilityMap warped(w, h, -1.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto [tx, ty] = detail::warp_target(flow, x, y);
      if (!warped.contains(tx, ty)) continue;
      double& dst = warped(tx, ty);
      if (previous(x, y) > dst) dst = previous(x, y);
    }
  }
  for (double& value : warped) {
    if (value < 0.0) value = 0.5;
  }

  static const std::array<double, 49> taps = prior_smoothing_kernel();
  ProbabilityMap out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double sum = 0.0;
      double weight = 0.0;
      for (int j = -3; j <= 3; ++j) {
        for (int i = -3; i <= 3; ++i) {
          if (!warped.contains(x + i, y + j)) continue;
          const double t = taps[static_cast<std::size_t>((j + 3) * 7 + (i + 3))];
          sum += t * warped(x + i, y + j);
          weight += t;
        }
      }
      out(x, y) = std::clamp(sum / weight, 0.0, 1.0);
    }
  }
  return out;
}

/// Bayes fusion of color likelihoods, label likelihood P(l|bg) (with
/// P(l|fg) = 1 - P(l|bg)) and the background prior. A zero denominator
/// returns the prior.
inline double fuse_posterior(double color_bg, double color_fg, double label_bg, double prior_bg) {
  const double bg = color_bg * label_bg * prior_bg;
  const double fg = color_fg * (1.0 - label_bg) * (1.0 - prior_bg);
  const double total = bg + fg;
  if (!(total > 0.0) || !std::isfinite(total)) return prior_bg;
  return std::clamp(bg / total, 0.0, 1.0);
}

struct PixelPosterior {
  double background = 0.5;
  double foreground = 0.5;
};

inline PixelPosterior posterior(const Rgb& c, int x, int y, double label_bg, double prior_bg,
                                const AppearanceHistory& history, const AppearanceConfig& config,
                                const ColorKernel* kernel = nullptr) {
  const double cb = color_likelihood(c, x, y, history, config, Model::background, kernel);
  const double cf = color_likelihood(c, x, y, history, config, Model::foreground, kernel);
  const double bg = fuse_posterior(cb, cf, label_bg, prior_bg);
  return {bg, 1.0 - bg};
}

inline ProbabilityMap posterior_map(const ColorFrame& frame, const ProbabilityMap& label_bg,
                                    const ProbabilityMap& prior, const AppearanceHistory& history,
                                    const AppearanceConfig& config) {
  require_same_shape(frame, label_bg, "posterior_map labels");
  require_same_shape(frame, prior, "posterior_map prior");
  if (!history.empty() && (history.width() != frame.width() || history.height() != frame.height())) {
    throw Error(Errc::dimension_mismatch, "posterior_map history");
  }
  const ColorKernel kernel(config.sigma_color);
  ProbabilityMap out(frame.width(), frame.height());
  for (int y = 0; y < frame.height(); ++y) {
    for (int x = 0; x < frame.width(); ++x) {
      out(x, y) = posterior(frame(x, y), x, y, label_bg(x, y), prior(x, y), history, config, &kernel)
                      .background;
    }
  }
  return out;
}

}  // namespace fofseg

#endif  // FOFSEG_APPEARANCE_HPP

#ifndef FOFSEG_SAMPLER_HPP
#define FOFSEG_SAMPLER_HPP

// Mixture inference over flow orientations. Pixel labels follow a Chinese
// restaurant process with concentration alpha (the mixing weights are
// integrated out); each component carries a hypothesis index into the
// motion library and a Gaussian variance on wrapped residuals. Labels are
// resampled with Neal's auxiliary-component scheme (algorithm 8), then every
// component's hypothesis is resampled from the library given its members.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "fofseg/error.hpp"
#include "fofseg/fof.hpp"
#include "fofseg/grid.hpp"

namespace fofseg {

using Rng = std::mt19937_64;

/// Uniform draw in [0, 1) from the top 53 bits, identical on every platform.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
}

/// Draws an index with probability proportional to exp(log_weights[i]).
inline std::size_t sample_log_weights(std::span<const double> log_weights, Rng& rng) {
  const double top = *std::max_element(log_weights.begin(), log_weights.end());
  if (!std::isfinite(top)) return uniform_index(rng, log_weights.size());
  thread_local std::vector<double> weights;
  weights.resize(log_weights.size());
  double total = 0.0;
  for (std::size_t i = 0; i < log_weights.size(); ++i) {
    weights[i] = std::exp(log_weights[i] - top);
    total += weights[i];
  }
  double u = uniform01(rng) * total;
  for (std::size_t i = 0; i < log_weights.size(); ++i) {
    u -= weights[i];
    if (u < 0.0) return i;
  }
  // Rounding can leave u marginally positive; fall back to the last finite weight.
  for (std::size_t i = log_weights.size(); i-- > 0;) {
    if (std::isfinite(log_weights[i])) return i;
  }
  return log_weights.size() - 1;
}

struct SamplerConfig {
  std::vector<double> alpha_candidates{1e-4, 1e-2, 10.0};
  int n_sweeps = 20;
  int aux_per_sweep = 1;
  std::uint64_t rng_seed = 0;
  double variance_floor = (kPi / 180.0) * (kPi / 180.0);
  double refine_after_fraction = 0.5;
  bool refine = true;
  /// When set, every component uses this variance instead of the empirical
  /// one, which makes the sampler an exact MCMC for a fixed-variance model.
  std::optional<double> fixed_variance;
  RefineOptions refine_options;

  void validate() const {
    if (alpha_candidates.empty()) throw Error(Errc::invalid_config, "alpha_candidates is empty");
    for (double a : alpha_candidates) {
      if (!(a > 0.0) || !std::isfinite(a)) throw Error(Errc::invalid_config, "alpha must be > 0");
    }
    if (n_sweeps < 2) throw Error(Errc::invalid_config, "n_sweeps must be >= 2");
    if (aux_per_sweep < 1) throw Error(Errc::invalid_config, "aux_per_sweep must be >= 1");
    if (!(variance_floor > 0.0)) throw Error(Errc::invalid_config, "variance_floor must be > 0");
    if (!(refine_after_fraction >= 0.0)) {
      throw Error(Errc::invalid_config, "refine_after_fraction must be >= 0");
    }
    if (fixed_variance && !(*fixed_variance > 0.0)) {
      throw Error(Errc::invalid_config, "fixed_variance must be > 0");
    }
  }
};

struct Component {
  std::size_t hypothesis = 0;
  /// Empty while the component had no members in the previous sweep; the
  /// per-pixel fallback (a - F)^2 is used instead.
  std::optional<double> variance;
  std::size_t pixel_count = 0;
  std::uint32_t id = 0;
};

inline constexpr std::int32_t kZeroMotionLabel = -1;

struct SegmentationState {
  int width = 0;
  int height = 0;
  /// Index into `components` per pixel, kZeroMotionLabel for zero-motion pixels.
  std::vector<std::int32_t> labels;
  std::vector<Component> components;
  std::uint32_t next_id = 0;

  std::size_t live_components() const {
    return static_cast<std::size_t>(std::count_if(components.begin(), components.end(),
                                                  [](const Component& c) { return c.pixel_count; }));
  }

  /// Index of the component with the most pixels; ties go to the lower index.
  std::size_t largest_component() const {
    std::size_t best = 0;
    for (std::size_t k = 1; k < components.size(); ++k) {
      if (components[k].pixel_count > components[best].pixel_count) best = k;
    }
    return best;
  }
};

inline double log_gaussian(double residual, double variance) {
  return -0.5 * (residual * residual / variance + std::log(kTwoPi * variance));
}

/// Empirical variance of wrapped residuals about the Gaussian mean (zero).
/// Returns nullopt for an empty list: the caller then uses the per-pixel
/// fallback (a - F)^2.
inline std::optional<double> variance_update(std::span<const double> residuals,
                                             double variance_floor) {
  if (residuals.empty()) return std::nullopt;
  double sum = 0.0;
  for (double r : residuals) sum += r * r;
  return std::max(sum / static_cast<double>(residuals.size()), variance_floor);
}

namespace detail {

inline double pixel_log_likelihood(const OrientationField& field, std::size_t pixel, double angle,
                                   const std::optional<double>& variance, double floor) {
  // Orientation is undefined at a hypothesis' focus of expansion.
  if (!field.valid[pixel]) return -std::log(kTwoPi);
  const double r = angular_residual(angle, field.angle[pixel]);
  const double v = variance ? *variance : std::max(r * r, floor);
  return log_gaussian(r, v);
}

inline std::optional<double> member_variance(const OrientationField& obs,
                                             const OrientationField& field,
                                             std::span<const std::size_t> members, double floor) {
  std::vector<double> residuals;
  residuals.reserve(members.size());
  for (std::size_t p : members) {
    if (field.valid[p]) residuals.push_back(angular_residual(obs.angle[p], field.angle[p]));
  }
  return variance_update(residuals, floor);
}

inline void check_state(const SegmentationState& state, const OrientationField& obs,
                        const MotionLibrary& library) {
  if (state.width != obs.width() || state.height != obs.height() ||
      state.labels.size() != obs.angle.size()) {
    throw Error(Errc::dimension_mismatch, "segmentation state does not match observation");
  }
  if (library.width() != obs.width() || library.height() != obs.height()) {
    throw Error(Errc::dimension_mismatch, "motion library does not match observation");
  }
}

}  // namespace detail

/// Per-component member lists, in raster order.
inline std::vector<std::vector<std::size_t>> component_members(const SegmentationState& state) {
  std::vector<std::vector<std::size_t>> members(state.components.size());
  for (std::size_t p = 0; p < state.labels.size(); ++p) {
    if (state.labels[p] >= 0) members[static_cast<std::size_t>(state.labels[p])].push_back(p);
  }
  return members;
}

/// One component holding every valid pixel, with the library hypothesis of
/// minimal L1 objective (ties: lowest index).
inline SegmentationState initial_state(const OrientationField& obs, const MotionLibrary& library,
                                       const SamplerConfig& config) {
  SegmentationState state;
  state.width = obs.width();
  state.height = obs.height();
  state.labels.assign(obs.angle.size(), kZeroMotionLabel);
  const auto valid = valid_pixels(obs);
  if (valid.empty()) return state;
  if (library.size() == 0) throw Error(Errc::invalid_argument, "empty motion library");

  std::size_t best = 0;
  double best_value = std::numeric_limits<double>::infinity();
  for (std::size_t h = 0; h < library.size(); ++h) {
    const double value = fof_l1_objective(library.hypothesis(h), library.intrinsics(), obs, valid);
    if (value < best_value) {
      best_value = value;
      best = h;
    }
  }
  for (std::size_t p : valid) state.labels[p] = 0;
  Component c;
  c.hypothesis = best;
  c.pixel_count = valid.size();
  c.id = state.next_id++;
  c.variance = config.fixed_variance
                   ? config.fixed_variance
                   : detail::member_variance(obs, library.field(best), valid, config.variance_floor);
  state.components.push_back(c);
  return state;
}

/// One Gibbs sweep over the pixels in `order` (raster order of valid pixels
/// when empty), followed by hypothesis and variance updates. Empty
/// components are removed; component indices are compacted.
inline void gibbs_sweep(SegmentationState& state, const OrientationField& obs,
                        const MotionLibrary& library, double alpha, const SamplerConfig& config,
                        Rng& rng, std::span<const std::size_t> order = {}) {
  detail::check_state(state, obs, library);
  const double floor = config.variance_floor;
  const auto& fixed = config.fixed_variance;
  const std::size_t m = static_cast<std::size_t>(config.aux_per_sweep);
  const double log_aux_weight = std::log(alpha / static_cast<double>(m));

  std::vector<std::size_t> raster;
  if (order.empty()) {
    raster = valid_pixels(obs);
    order = raster;
  }

  struct Aux {
    std::size_t hypothesis;
    std::optional<double> variance;
  };
  std::vector<double> log_weights;
  std::vector<std::size_t> candidates;
  std::vector<Aux> aux(m);

  // Normalizers for components whose variance is known; components created
  // during the sweep fall back to the per-pixel path.
  std::vector<double> log_norms;
  std::vector<std::optional<double>> variances;
  for (const Component& c : state.components) {
    const auto& var = fixed ? fixed : c.variance;
    if (!var) break;
    variances.push_back(var);
    log_norms.push_back(std::log(kTwoPi * *var));
  }

  for (std::size_t p : order) {
    if (state.labels[p] < 0) continue;
    const double a = obs.angle[p];
    const auto current = static_cast<std::size_t>(state.labels[p]);
    Component& own = state.components[current];
    --own.pixel_count;
    const bool singleton = own.pixel_count == 0;

    log_weights.clear();
    candidates.clear();
    for (std::size_t k = 0; k < state.components.size(); ++k) {
      const Component& c = state.components[k];
      if (c.pixel_count == 0) continue;
      const auto& field = library.field(c.hypothesis);
      double ll;
      if (k < log_norms.size() && field.valid[p]) {
        const double r = angular_residual(a, field.angle[p]);
        ll = -0.5 * (r * r / *variances[k] + log_norms[k]);
      } else {
        const auto& var = fixed ? fixed : c.variance;
        ll = detail::pixel_log_likelihood(field, p, a, var, floor);
      }
      log_weights.push_back(std::log(static_cast<double>(c.pixel_count)) + ll);
      candidates.push_back(k);
    }
    for (std::size_t e = 0; e < m; ++e) {
      if (singleton && e == 0) {
        aux[e] = {own.hypothesis, own.variance};
      } else {
        aux[e] = {uniform_index(rng, library.size()), std::nullopt};
      }
      const auto& var = fixed ? fixed : aux[e].variance;
      log_weights.push_back(log_aux_weight + detail::pixel_log_likelihood(
                                                 library.field(aux[e].hypothesis), p, a, var, floor));
    }

    const std::size_t pick = sample_log_weights(log_weights, rng);
    if (pick < candidates.size()) {
      const std::size_t k = candidates[pick];
      ++state.components[k].pixel_count;
      state.labels[p] = static_cast<std::int32_t>(k);
      continue;
    }
    const std::size_t e = pick - candidates.size();
    if (singleton && e == 0) {
      own.pixel_count = 1;
      continue;
    }
    Component fresh;
    fresh.hypothesis = aux[e].hypothesis;
    fresh.pixel_count = 1;
    fresh.id = state.next_id++;
    state.components.push_back(fresh);
    state.labels[p] = static_cast<std::int32_t>(state.components.size() - 1);
  }

  // Compact away emptied components.
  std::vector<std::int32_t> remap(state.components.size(), -1);
  std::vector<Component> live;
  for (std::size_t k = 0; k < state.components.size(); ++k) {
    if (state.components[k].pixel_count == 0) continue;
    remap[k] = static_cast<std::int32_t>(live.size());
    live.push_back(state.components[k]);
  }
  state.components = std::move(live);
  for (auto& label : state.labels) {
    if (label >= 0) label = remap[static_cast<std::size_t>(label)];
  }

  // Hypothesis resampling proportional to the members' joint likelihood,
  // then the empirical variance under the new hypothesis.
  const auto members = component_members(state);
  std::vector<double> scores(library.size());
  std::vector<double> observed;
  const double log_uniform = -std::log(kTwoPi);
  for (std::size_t k = 0; k < state.components.size(); ++k) {
    Component& c = state.components[k];
    std::optional<double> var = fixed ? fixed : c.variance;
    if (!var) var = detail::member_variance(obs, library.field(c.hypothesis), members[k], floor);
    if (!var) var = floor;
    const double v = *var;
    const double log_norm = -0.5 * std::log(kTwoPi * v);
    observed.clear();
    for (std::size_t p : members[k]) observed.push_back(obs.angle[p]);
    for (std::size_t h = 0; h < library.size(); ++h) {
      const auto& field = library.field(h);
      const double* angle = field.angle.values().data();
      const std::uint8_t* valid = field.valid.values().data();
      double squares = 0.0;
      std::size_t defined = 0;
      for (std::size_t i = 0; i < observed.size(); ++i) {
        const std::size_t p = members[k][i];
        if (!valid[p]) continue;
        const double r = angular_residual(observed[i], angle[p]);
        squares += r * r;
        ++defined;
      }
      scores[h] = -0.5 * squares / v + static_cast<double>(defined) * log_norm +
                  static_cast<double>(members[k].size() - defined) * log_uniform;
    }
    c.hypothesis = sample_log_weights(scores, rng);
    c.variance = fixed ? fixed
                       : detail::member_variance(obs, library.field(c.hypothesis), members[k], floor);
  }
}

struct ComponentSummary {
  MotionHypothesis hypothesis;
  bool zero_motion = false;
  double variance = 0.0;
  std::size_t pixel_count = 0;
};

struct SegmentationResult {
  /// 0 is the background (largest) component, then motion components by
  /// decreasing size; the zero-motion segment, when present, comes last.
  LabelMask map_labels;
  std::size_t background_component = 0;
  std::optional<std::uint8_t> zero_motion_label;
  /// Smoothed per-pixel frequency of background membership, P(l | bg).
  ProbabilityMap label_likelihoods;
  /// Motion components in the MAP labeling (1 when every pixel is zero-motion).
  std::size_t num_components = 0;
  double chosen_alpha = 0.0;
  bool no_valid_pixels = false;
  std::vector<ComponentSummary> components;
  std::size_t library_size = 0;

  /// 1 on the background component and on zero-motion pixels, else 0.
  Grid<std::uint8_t> background_mask() const {
    Grid<std::uint8_t> mask(map_labels.width(), map_labels.height(), 0);
    for (std::size_t i = 0; i < map_labels.size(); ++i) {
      const auto label = map_labels[i];
      const bool zero = zero_motion_label && label == *zero_motion_label;
      mask[i] = (label == background_component || zero) ? 1 : 0;
    }
    return mask;
  }
};

/// Laplace-smoothed membership frequency over `recorded` sweeps.
inline double smoothed_frequency(std::size_t hits, std::size_t recorded) {
  return (static_cast<double>(hits) + 1.0) / (static_cast<double>(recorded) + 2.0);
}

namespace detail {

inline SegmentationResult zero_motion_result(const OrientationField& obs, double alpha,
                                             std::size_t recorded) {
  SegmentationResult result;
  result.map_labels = LabelMask(obs.width(), obs.height(), 0);
  result.zero_motion_label = 0;
  result.label_likelihoods =
      ProbabilityMap(obs.width(), obs.height(), smoothed_frequency(recorded, recorded));
  result.num_components = 1;
  result.chosen_alpha = alpha;
  result.no_valid_pixels = true;
  ComponentSummary zero;
  zero.zero_motion = true;
  zero.pixel_count = obs.angle.size();
  result.components.push_back(zero);
  return result;
}

}  // namespace detail

/// Runs one chain for a single alpha, starting from one component.
inline SegmentationResult run_inference(const OrientationField& obs,
                                        const MotionLibrary& base_library,
                                        const SamplerConfig& config, double alpha,
                                        std::uint64_t seed) {
  config.validate();
  if (!(alpha > 0.0)) throw Error(Errc::invalid_config, "alpha must be > 0");
  const int n = config.n_sweeps;
  const int recorded = (n + 1) / 2;
  const auto valid = valid_pixels(obs);
  if (valid.empty()) return detail::zero_motion_result(obs, alpha, static_cast<std::size_t>(recorded));

  MotionLibrary library = base_library;
  Rng rng(seed);
  SegmentationState state = initial_state(obs, library, config);
  const int refine_start = static_cast<int>(std::ceil(n * config.refine_after_fraction));

  std::vector<std::vector<std::uint32_t>> history;
  history.reserve(static_cast<std::size_t>(recorded));
  struct Known {
    std::size_t hypothesis;
    double variance;
  };
  std::unordered_map<std::uint32_t, Known> known;

  for (int sweep = 1; sweep <= n; ++sweep) {
    gibbs_sweep(state, obs, library, alpha, config, rng);
    if (config.refine && sweep >= refine_start) {
      const std::size_t largest = state.largest_component();
      const auto members = component_members(state);
      Component& c = state.components[largest];
      const MotionHypothesis refined =
          refine_motion(library.hypothesis(c.hypothesis), library.intrinsics(), obs,
                        members[largest], config.refine_options);
      c.hypothesis = library.append(refined);
      c.variance = config.fixed_variance
                       ? config.fixed_variance
                       : detail::member_variance(obs, library.field(c.hypothesis),
                                                 members[largest], config.variance_floor);
    }
    for (const Component& c : state.components) {
      known[c.id] = {c.hypothesis, c.variance.value_or(config.variance_floor)};
    }
    if (sweep > n - recorded) {
      std::vector<std::uint32_t> ids(valid.size());
      for (std::size_t i = 0; i < valid.size(); ++i) {
        ids[i] = state.components[static_cast<std::size_t>(state.labels[valid[i]])].id;
      }
      history.push_back(std::move(ids));
    }
  }

  // Per-pixel most frequent component id over the recorded sweeps.
  std::vector<std::uint32_t> map_id(valid.size());
  {
    std::unordered_map<std::uint32_t, std::size_t> tally;
    for (std::size_t i = 0; i < valid.size(); ++i) {
      tally.clear();
      for (const auto& ids : history) ++tally[ids[i]];
      std::uint32_t best = 0;
      std::size_t best_count = 0;
      for (const auto& [id, count] : tally) {
        if (count > best_count || (count == best_count && id < best)) {
          best = id;
          best_count = count;
        }
      }
      map_id[i] = best;
    }
  }

  std::unordered_map<std::uint32_t, std::size_t> sizes;
  for (auto id : map_id) ++sizes[id];
  std::vector<std::pair<std::uint32_t, std::size_t>> order(sizes.begin(), sizes.end());
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  const bool has_zero = valid.size() < obs.angle.size();
  // Labels are one byte; the zero-motion segment keeps the last slot.
  const std::size_t max_motion = has_zero ? 254 : 255;
  std::unordered_map<std::uint32_t, std::uint8_t> label_of;
  for (std::size_t r = 0; r < order.size(); ++r) {
    label_of[order[r].first] = static_cast<std::uint8_t>(std::min(r, max_motion - 1));
  }

  SegmentationResult result;
  result.chosen_alpha = alpha;
  result.background_component = 0;
  result.num_components = std::min(order.size(), max_motion);
  result.library_size = library.size();
  result.map_labels = LabelMask(obs.width(), obs.height(), 0);
  result.label_likelihoods = ProbabilityMap(obs.width(), obs.height(), 0.0);
  const std::size_t rec = history.size();
  if (has_zero) {
    result.zero_motion_label = static_cast<std::uint8_t>(result.num_components);
    for (std::size_t p = 0; p < obs.angle.size(); ++p) {
      if (!obs.valid[p]) {
        result.map_labels[p] = *result.zero_motion_label;
        result.label_likelihoods[p] = smoothed_frequency(rec, rec);
      }
    }
  }
  const std::uint32_t background_id = order.front().first;
  for (std::size_t i = 0; i < valid.size(); ++i) {
    result.map_labels[valid[i]] = label_of[map_id[i]];
    std::size_t hits = 0;
    for (const auto& ids : history) hits += ids[i] == background_id;
    result.label_likelihoods[valid[i]] = smoothed_frequency(hits, rec);
  }

  result.components.resize(result.num_components);
  for (std::size_t r = 0; r < order.size(); ++r) {
    ComponentSummary& summary = result.components[label_of[order[r].first]];
    if (summary.pixel_count == 0) {
      const Known& k = known.at(order[r].first);
      summary.hypothesis = library.hypothesis(k.hypothesis);
      summary.variance = k.variance;
    }
    summary.pixel_count += order[r].second;
  }
  if (has_zero) {
    ComponentSummary zero;
    zero.zero_motion = true;
    zero.pixel_count = obs.angle.size() - valid.size();
    result.components.push_back(zero);
  }
  return result;
}

/// One independent chain per alpha candidate, seeded rng_seed + index.
inline std::vector<SegmentationResult> run_alpha_candidates(const OrientationField& obs,
                                                            const MotionLibrary& library,
                                                            const SamplerConfig& config) {
  config.validate();
  std::vector<std::future<SegmentationResult>> runs;
  for (std::size_t j = 0; j < config.alpha_candidates.size(); ++j) {
    runs.push_back(std::async(std::launch::async, [&, j] {
      return run_inference(obs, library, config, config.alpha_candidates[j], config.rng_seed + j);
    }));
  }
  std::vector<SegmentationResult> results;
  for (auto& run : runs) results.push_back(run.get());
  return results;
}

/// Consensus vote over binary background masks: the candidate maximizing
/// sum_x b_sum * b_j + f_sum * f_j, ties to the lowest index.
inline std::size_t select_alpha_index(std::span<const Grid<std::uint8_t>> background_masks) {
  if (background_masks.empty()) throw Error(Errc::empty_input, "no candidate segmentations");
  const auto& first = background_masks.front();
  Grid<int> b_sum(first.width(), first.height(), 0);
  for (const auto& mask : background_masks) {
    require_same_shape(first, mask, "select_alpha");
    for (std::size_t i = 0; i < mask.size(); ++i) b_sum[i] += mask[i] ? 1 : 0;
  }
  const int n = static_cast<int>(background_masks.size());
  std::size_t best = 0;
  long long best_score = -1;
  for (std::size_t j = 0; j < background_masks.size(); ++j) {
    long long score = 0;
    for (std::size_t i = 0; i < b_sum.size(); ++i) {
      score += background_masks[j][i] ? b_sum[i] : n - b_sum[i];
    }
    if (score > best_score) {
      best_score = score;
      best = j;
    }
  }
  return best;
}

inline const SegmentationResult& select_alpha(std::span<const SegmentationResult> results) {
  if (results.empty()) throw Error(Errc::empty_input, "no candidate segmentations");
  std::vector<Grid<std::uint8_t>> masks;
  masks.reserve(results.size());
  for (const auto& r : results) masks.push_back(r.background_mask());
  return results[select_alpha_index(masks)];
}

}  // namespace fofseg

#endif  // FOFSEG_SAMPLER_HPP

#ifndef FOFSEG_EVAL_HPP
#define FOFSEG_EVAL_HPP

// Background-label precision, recall and F-measure.

#include <cstdint>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fofseg/error.hpp"
#include "fofseg/flowio.hpp"
#include "fofseg/grid.hpp"

namespace fofseg {

/// Binary mask with 1 = background, 0 = foreground.
using BackgroundMask = Grid<std::uint8_t>;

struct FrameScore {
  double precision = 0.0;
  double recall = 0.0;
  double f_measure = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

/// Label masks store 0 for background; every other label is foreground.
inline BackgroundMask background_from_labels(const LabelMask& labels) {
  BackgroundMask out(labels.width(), labels.height());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = labels[i] == 0 ? 1 : 0;
  return out;
}

inline double f_measure(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

/// Background is the positive class. A ratio with a zero denominator is 1
/// when the opposite error count is also zero (nothing to find and nothing
/// wrongly found), else 0.
inline FrameScore score_frame(const BackgroundMask& predicted, const BackgroundMask& truth) {
  require_same_shape(predicted, truth, "score_frame");
  FrameScore s;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const auto p = predicted[i];
    const auto t = truth[i];
    if (p > 1 || t > 1) throw Error(Errc::non_binary_mask, "mask values must be 0 or 1");
    if (p && t) ++s.tp;
    else if (p && !t) ++s.fp;
    else if (!p && t) ++s.fn;
  }
  if (s.tp + s.fp > 0) s.precision = static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fp);
  else s.precision = s.fn == 0 ? 1.0 : 0.0;
  if (s.tp + s.fn > 0) s.recall = static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fn);
  else s.recall = s.fp == 0 ? 1.0 : 0.0;
  s.f_measure = f_measure(s.precision, s.recall);
  return s;
}

inline double score_video(std::span<const FrameScore> frames) {
  if (frames.empty()) throw Error(Errc::empty_input, "no scored frames");
  double sum = 0.0;
  for (const auto& f : frames) sum += f.f_measure;
  return sum / static_cast<double>(frames.size());
}

struct ScoredFrame {
  std::string name;
  FrameScore score;
};

/// Tab-separated per-frame table followed by the mean F-measure.
inline void write_frame_table(std::ostream& out, std::span<const ScoredFrame> frames) {
  out << "frame\tprecision\trecall\tf_measure\ttp\tfp\tfn\n";
  out << std::fixed << std::setprecision(4);
  std::vector<FrameScore> scores;
  for (const auto& f : frames) {
    out << f.name << '\t' << f.score.precision << '\t' << f.score.recall << '\t'
        << f.score.f_measure << '\t' << f.score.tp << '\t' << f.score.fp << '\t' << f.score.fn
        << '\n';
    scores.push_back(f.score);
  }
  if (!scores.empty()) out << "mean\t\t\t" << score_video(scores) << "\t\t\t\n";
  out << std::defaultfloat;
}

/// One row per video with mean F-measure (in percent) per method column.
struct VideoRow {
  std::string video;
  std::vector<double> mean_f;
};

inline void write_video_table(std::ostream& out, std::span<const std::string> columns,
                              std::span<const VideoRow> rows) {
  out << "Videoname";
  for (const auto& c : columns) out << '\t' << c;
  out << '\n';
  out << std::fixed << std::setprecision(2);
  for (const auto& row : rows) {
    out << row.video;
    for (double f : row.mean_f) out << '\t' << 100.0 * f;
    out << '\n';
  }
  out << std::defaultfloat;
}

}  // namespace fofseg

#endif  // FOFSEG_EVAL_HPP

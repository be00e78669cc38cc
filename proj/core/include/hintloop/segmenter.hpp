#pragma once

#include <limits>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hintloop/scoring.hpp"
#include "hintloop/synthdata.hpp"

namespace hintloop {

inline constexpr double kDefaultMinPrecision = 0.40;
inline constexpr double kDefaultGapFraction = 0.03;

struct CalibrationResult {
  std::string policy_id;
  bool feasible = false;
  // +inf when infeasible.
  double threshold = std::numeric_limits<double>::infinity();
  double achieved_precision = 0.0;
  double achieved_recall = 0.0;
  std::int64_t calibration_set_size = 0;
  std::int64_t positive_frames = 0;
  double min_precision = kDefaultMinPrecision;
};

/// Frame-level recall-maximizing threshold subject to precision >= min_precision.
/// Candidates are the distinct observed scores; among candidates reaching the
/// best recall the highest threshold wins. A frame is positive when it lies in
/// a truth segment of the series' policy. All series must share one policy.
CalibrationResult calibrate_threshold(std::span<const ScoreSeries> series,
                                      std::span<const TruthSegment> truth,
                                      double min_precision = kDefaultMinPrecision);

/// Per-frame 0/1 truth aligned with `series.scores`.
std::vector<int> frame_truth(const ScoreSeries& series, std::span<const TruthSegment> truth);

struct RawSegment {
  std::string video_id;
  std::string policy_id;
  FrameIndex start_frame = 0;
  FrameIndex end_frame = 1;
  double max_score = 0.0;

  FrameSpan span() const noexcept { return {start_frame, end_frame}; }
  friend bool operator==(const RawSegment&, const RawSegment&) = default;
};

/// Maximal runs of frames with score >= threshold, sorted by start.
std::vector<RawSegment> binarize(const ScoreSeries& series, double threshold);

/// Coalesces consecutive segments whose gap is < gap_fraction * video_frames.
/// Input must be sorted, non-overlapping and share one (video, policy).
std::vector<RawSegment> merge_segments(std::span<const RawSegment> segments,
                                       FrameIndex video_frames,
                                       double gap_fraction = kDefaultGapFraction);

nlohmann::json to_json(const CalibrationResult& c);
CalibrationResult calibration_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RawSegment& s);
RawSegment raw_segment_from_json(const nlohmann::json& j);

}  // namespace hintloop

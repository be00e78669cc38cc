#include "hintloop/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "hintloop/error.hpp"

namespace hintloop {

std::vector<int> frame_truth(const ScoreSeries& series, std::span<const TruthSegment> truth) {
  std::vector<int> labels(series.scores.size(), 0);
  const auto frames = static_cast<FrameIndex>(labels.size());
  for (const auto& t : truth) {
    if (t.video_id != series.video_id || t.policy_id != series.policy_id) continue;
    for (FrameIndex f = std::max<FrameIndex>(0, t.start_frame); f < std::min(t.end_frame, frames);
         ++f) {
      labels[static_cast<std::size_t>(f)] = 1;
    }
  }
  return labels;
}

CalibrationResult calibrate_threshold(std::span<const ScoreSeries> series,
                                      std::span<const TruthSegment> truth, double min_precision) {
  if (!(min_precision > 0.0 && min_precision < 1.0)) {
    throw Error(ErrorCode::kValidation,
                fmt::format("min_precision {} must lie in (0, 1)", min_precision));
  }
  CalibrationResult result;
  result.min_precision = min_precision;
  if (!series.empty()) result.policy_id = series.front().policy_id;

  std::vector<std::pair<double, int>> frames;
  for (const auto& s : series) {
    if (s.policy_id != result.policy_id) {
      throw Error(ErrorCode::kContract, fmt::format("calibration mixes policies {} and {}",
                                                    result.policy_id, s.policy_id));
    }
    const std::vector<int> labels = frame_truth(s, truth);
    for (std::size_t i = 0; i < labels.size(); ++i) frames.emplace_back(s.scores[i], labels[i]);
  }
  result.calibration_set_size = static_cast<std::int64_t>(frames.size());
  const auto total_pos = std::count_if(frames.begin(), frames.end(),
                                       [](const auto& f) { return f.second != 0; });
  result.positive_frames = total_pos;
  if (total_pos == 0) {
    throw Error(ErrorCode::kNoPositives,
                fmt::format("no positives for calibration of policy \"{}\"", result.policy_id));
  }

  std::sort(frames.begin(), frames.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  for (std::size_t i = 0; i < frames.size();) {
    const double candidate = frames[i].first;
    while (i < frames.size() && frames[i].first == candidate) {
      (frames[i].second != 0 ? tp : fp) += 1;
      ++i;
    }
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
    // Strictly greater: the sweep runs high to low, so ties keep the higher threshold.
    if (precision >= min_precision && (!result.feasible || recall > result.achieved_recall)) {
      result.feasible = true;
      result.threshold = candidate;
      result.achieved_precision = precision;
      result.achieved_recall = recall;
    }
  }
  return result;
}

std::vector<RawSegment> binarize(const ScoreSeries& series, double threshold) {
  if (!std::isfinite(threshold)) {
    throw Error(ErrorCode::kContract, "binarize: threshold must be finite");
  }
  std::vector<RawSegment> out;
  const auto n = static_cast<FrameIndex>(series.scores.size());
  FrameIndex i = 0;
  while (i < n) {
    if (series.scores[static_cast<std::size_t>(i)] < threshold) {
      ++i;
      continue;
    }
    RawSegment seg{series.video_id, series.policy_id, i, i, 0.0};
    while (i < n && series.scores[static_cast<std::size_t>(i)] >= threshold) {
      seg.max_score = std::max(seg.max_score, series.scores[static_cast<std::size_t>(i)]);
      ++i;
    }
    seg.end_frame = i;
    out.push_back(std::move(seg));
  }
  return out;
}

std::vector<RawSegment> merge_segments(std::span<const RawSegment> segments,
                                       FrameIndex video_frames, double gap_fraction) {
  if (video_frames < 1) throw Error(ErrorCode::kValidation, "merge: video_frames must be >= 1");
  if (!(gap_fraction >= 0.0)) throw Error(ErrorCode::kValidation, "merge: gap_fraction must be >= 0");
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    if (s.end_frame <= s.start_frame) {
      throw Error(ErrorCode::kContract, "merge: empty segment");
    }
    if (i > 0) {
      const auto& prev = segments[i - 1];
      if (s.video_id != prev.video_id || s.policy_id != prev.policy_id) {
        throw Error(ErrorCode::kContract, "merge: segments span several (video, policy) pairs");
      }
      if (s.start_frame < prev.end_frame) {
        throw Error(ErrorCode::kContract, "merge: input unsorted or overlapping");
      }
    }
  }
  const double cutoff = gap_fraction * static_cast<double>(video_frames);
  std::vector<RawSegment> out;
  for (const auto& s : segments) {
    if (!out.empty() && static_cast<double>(s.start_frame - out.back().end_frame) < cutoff) {
      out.back().end_frame = s.end_frame;
      out.back().max_score = std::max(out.back().max_score, s.max_score);
    } else {
      out.push_back(s);
    }
  }
  return out;
}

nlohmann::json to_json(const CalibrationResult& c) {
  nlohmann::json j = {{"policy_id", c.policy_id},
                      {"feasible", c.feasible},
                      {"achieved_precision", c.achieved_precision},
                      {"achieved_recall", c.achieved_recall},
                      {"calibration_set_size", c.calibration_set_size},
                      {"positive_frames", c.positive_frames},
                      {"min_precision", c.min_precision}};
  // JSON has no infinity; an infeasible threshold is written as null.
  j["threshold"] = c.feasible ? nlohmann::json(c.threshold) : nlohmann::json(nullptr);
  return j;
}

CalibrationResult calibration_from_json(const nlohmann::json& j) {
  CalibrationResult c;
  c.policy_id = j.at("policy_id").get<std::string>();
  c.feasible = j.at("feasible").get<bool>();
  c.threshold = j.at("threshold").is_null() ? std::numeric_limits<double>::infinity()
                                            : j.at("threshold").get<double>();
  c.achieved_precision = j.at("achieved_precision").get<double>();
  c.achieved_recall = j.at("achieved_recall").get<double>();
  c.calibration_set_size = j.at("calibration_set_size").get<std::int64_t>();
  c.positive_frames = j.value("positive_frames", std::int64_t{0});
  c.min_precision = j.at("min_precision").get<double>();
  return c;
}

nlohmann::json to_json(const RawSegment& s) {
  return {{"video_id", s.video_id},       {"policy_id", s.policy_id},
          {"start_frame", s.start_frame}, {"end_frame", s.end_frame},
          {"max_score", s.max_score}};
}

RawSegment raw_segment_from_json(const nlohmann::json& j) {
  return {j.at("video_id").get<std::string>(), j.at("policy_id").get<std::string>(),
          j.at("start_frame").get<FrameIndex>(), j.at("end_frame").get<FrameIndex>(),
          j.at("max_score").get<double>()};
}

}  // namespace hintloop

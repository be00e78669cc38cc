#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hintloop/scoring.hpp"
#include "hintloop/segmenter.hpp"
#include "hintloop/taxonomy.hpp"

namespace hintloop {

enum class RankCombiner {
  kLexicographic,  // tier desc, max_score desc, start asc, policy asc
  kWeightedSum,    // max_score + tier_weight * tier desc, then start, policy
};

struct RankerConfig {
  int top_n = 5;
  int max_points = 512;
  int v1_policy_limit = 7;
  RankCombiner combiner = RankCombiner::kLexicographic;
  double tier_weight = 0.25;
};

void validate(const RankerConfig& config);

struct HintSegment {
  std::string hint_id;
  std::string video_id;
  std::string policy_id;
  FrameIndex start_frame = 0;
  FrameIndex end_frame = 1;
  double max_score = 0.0;
  int rank = 1;

  FrameSpan span() const noexcept { return {start_frame, end_frame}; }
  friend bool operator==(const HintSegment&, const HintSegment&) = default;
};

struct LineGraphPoint {
  FrameIndex frame = 0;
  double score = 0.0;
  friend bool operator==(const LineGraphPoint&, const LineGraphPoint&) = default;
};

struct LineGraphHint {
  std::string video_id;
  std::string policy_id;
  std::vector<LineGraphPoint> points;
  friend bool operator==(const LineGraphHint&, const LineGraphHint&) = default;
};

struct HintPayload {
  std::string video_id;
  std::vector<LineGraphHint> v1;
  std::vector<HintSegment> v2;
  friend bool operator==(const HintPayload&, const HintPayload&) = default;
};

std::vector<RawSegment> rank_segments(std::span<const RawSegment> segments,
                                      const PolicyTaxonomy& taxonomy,
                                      const RankerConfig& config = {});

std::string make_hint_id(std::string_view video_id, std::string_view policy_id, FrameIndex start,
                         FrameIndex end);

std::vector<HintSegment> top_n(std::span<const RawSegment> ranked, int n);

/// Keeps every point when the series fits; otherwise one point per bucket at
/// the bucket's maximum.
std::vector<LineGraphPoint> downsample_bucket_max(std::span<const double> scores, int max_points);

std::map<std::string, int> policy_frequency(std::span<const TruthSegment> truth);

/// Hint-enabled policies ordered by frequency (desc, then id), truncated to `limit`.
std::vector<std::string> select_v1_policies(const PolicyTaxonomy& taxonomy,
                                            const std::map<std::string, int>& frequency,
                                            int limit);

/// Up to v1_policy_limit graphs: the most frequent policies that have a series.
std::vector<LineGraphHint> build_v1_hints(std::span<const ScoreSeries> series,
                                          const PolicyTaxonomy& taxonomy,
                                          const RankerConfig& config,
                                          const std::map<std::string, int>& frequency);

nlohmann::json to_json(const HintSegment& h);
HintSegment hint_segment_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LineGraphHint& h);
LineGraphHint line_graph_from_json(const nlohmann::json& j);
nlohmann::json to_json(const HintPayload& p);
HintPayload payload_from_json(const nlohmann::json& j);

}  // namespace hintloop

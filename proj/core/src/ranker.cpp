#include "hintloop/ranker.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "hintloop/error.hpp"
#include "hintloop/hash.hpp"

namespace hintloop {

void validate(const RankerConfig& config) {
  if (config.top_n < 1) throw Error(ErrorCode::kValidation, "ranker: top_n must be >= 1");
  if (config.max_points < 1) throw Error(ErrorCode::kValidation, "ranker: max_points must be >= 1");
  if (config.v1_policy_limit < 1) {
    throw Error(ErrorCode::kValidation, "ranker: v1_policy_limit must be >= 1");
  }
}

std::vector<RawSegment> rank_segments(std::span<const RawSegment> segments,
                                      const PolicyTaxonomy& taxonomy, const RankerConfig& config) {
  struct Keyed {
    int tier;
    const RawSegment* seg;
  };
  std::vector<Keyed> keyed;
  keyed.reserve(segments.size());
  for (const auto& s : segments) {
    if (s.video_id != segments.front().video_id) {
      throw Error(ErrorCode::kContract, "rank_segments: segments from more than one video");
    }
    keyed.push_back({egregiousness_tier(taxonomy, s.policy_id), &s});
  }
  auto tail = [](const Keyed& a, const Keyed& b) {
    if (a.seg->start_frame != b.seg->start_frame) return a.seg->start_frame < b.seg->start_frame;
    return a.seg->policy_id < b.seg->policy_id;
  };
  if (config.combiner == RankCombiner::kLexicographic) {
    std::stable_sort(keyed.begin(), keyed.end(), [&](const Keyed& a, const Keyed& b) {
      if (a.tier != b.tier) return a.tier > b.tier;
      if (a.seg->max_score != b.seg->max_score) return a.seg->max_score > b.seg->max_score;
      return tail(a, b);
    });
  } else {
    std::stable_sort(keyed.begin(), keyed.end(), [&](const Keyed& a, const Keyed& b) {
      const double ka = a.seg->max_score + config.tier_weight * a.tier;
      const double kb = b.seg->max_score + config.tier_weight * b.tier;
      if (ka != kb) return ka > kb;
      return tail(a, b);
    });
  }
  std::vector<RawSegment> out;
  out.reserve(keyed.size());
  for (const auto& k : keyed) out.push_back(*k.seg);
  return out;
}

std::string make_hint_id(std::string_view video_id, std::string_view policy_id, FrameIndex start,
                         FrameIndex end) {
  return "h-" + to_hex(fnv1a64(fmt::format("{}|{}|{}|{}", video_id, policy_id, start, end)));
}

std::vector<HintSegment> top_n(std::span<const RawSegment> ranked, int n) {
  if (n < 1) throw Error(ErrorCode::kValidation, "top_n: N must be >= 1");
  std::vector<HintSegment> out;
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(n), ranked.size());
  for (std::size_t i = 0; i < k; ++i) {
    const auto& s = ranked[i];
    out.push_back({make_hint_id(s.video_id, s.policy_id, s.start_frame, s.end_frame), s.video_id,
                   s.policy_id, s.start_frame, s.end_frame, s.max_score,
                   static_cast<int>(i) + 1});
  }
  return out;
}

std::vector<LineGraphPoint> downsample_bucket_max(std::span<const double> scores, int max_points) {
  if (max_points < 1) throw Error(ErrorCode::kValidation, "downsample: max_points must be >= 1");
  const auto n = static_cast<FrameIndex>(scores.size());
  std::vector<LineGraphPoint> out;
  if (n <= max_points) {
    for (FrameIndex f = 0; f < n; ++f) out.push_back({f, scores[static_cast<std::size_t>(f)]});
    return out;
  }
  for (FrameIndex b = 0; b < max_points; ++b) {
    const FrameIndex lo = b * n / max_points;
    const FrameIndex hi = (b + 1) * n / max_points;
    LineGraphPoint best{lo, scores[static_cast<std::size_t>(lo)]};
    for (FrameIndex f = lo + 1; f < hi; ++f) {
      if (scores[static_cast<std::size_t>(f)] > best.score) {
        best = {f, scores[static_cast<std::size_t>(f)]};
      }
    }
    out.push_back(best);
  }
  return out;
}

std::map<std::string, int> policy_frequency(std::span<const TruthSegment> truth) {
  std::map<std::string, int> freq;
  for (const auto& t : truth) ++freq[t.policy_id];
  return freq;
}

std::vector<std::string> select_v1_policies(const PolicyTaxonomy& taxonomy,
                                            const std::map<std::string, int>& frequency,
                                            int limit) {
  std::vector<std::pair<int, std::string>> ranked;
  for (const auto& id : taxonomy.hint_enabled_ids()) {
    auto it = frequency.find(id);
    ranked.emplace_back(it == frequency.end() ? 0 : it->second, id);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ranked.size() && i < static_cast<std::size_t>(limit); ++i) {
    out.push_back(ranked[i].second);
  }
  return out;
}

std::vector<LineGraphHint> build_v1_hints(std::span<const ScoreSeries> series,
                                          const PolicyTaxonomy& taxonomy,
                                          const RankerConfig& config,
                                          const std::map<std::string, int>& frequency) {
  validate(config);
  std::vector<LineGraphHint> out;
  const int all = static_cast<int>(taxonomy.size());
  for (const auto& policy : select_v1_policies(taxonomy, frequency, all)) {
    if (static_cast<int>(out.size()) >= config.v1_policy_limit) break;
    auto it = std::find_if(series.begin(), series.end(),
                           [&](const ScoreSeries& s) { return s.policy_id == policy; });
    if (it == series.end()) continue;
    out.push_back({it->video_id, policy, downsample_bucket_max(it->scores, config.max_points)});
  }
  return out;
}

nlohmann::json to_json(const HintSegment& h) {
  return {{"hint_id", h.hint_id},         {"video_id", h.video_id},
          {"policy_id", h.policy_id},     {"start_frame", h.start_frame},
          {"end_frame", h.end_frame},     {"max_score", h.max_score},
          {"rank", h.rank}};
}

HintSegment hint_segment_from_json(const nlohmann::json& j) {
  return {j.at("hint_id").get<std::string>(),   j.at("video_id").get<std::string>(),
          j.at("policy_id").get<std::string>(), j.at("start_frame").get<FrameIndex>(),
          j.at("end_frame").get<FrameIndex>(),  j.at("max_score").get<double>(),
          j.at("rank").get<int>()};
}

nlohmann::json to_json(const LineGraphHint& h) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : h.points) points.push_back({p.frame, p.score});
  return {{"video_id", h.video_id}, {"policy_id", h.policy_id}, {"points", points}};
}

LineGraphHint line_graph_from_json(const nlohmann::json& j) {
  LineGraphHint h{j.at("video_id").get<std::string>(), j.at("policy_id").get<std::string>(), {}};
  for (const auto& p : j.at("points")) {
    h.points.push_back({p.at(0).get<FrameIndex>(), p.at(1).get<double>()});
  }
  return h;
}

nlohmann::json to_json(const HintPayload& p) {
  nlohmann::json v1 = nlohmann::json::array();
  for (const auto& h : p.v1) v1.push_back(to_json(h));
  nlohmann::json v2 = nlohmann::json::array();
  for (const auto& h : p.v2) v2.push_back(to_json(h));
  return {{"video_id", p.video_id}, {"v1", v1}, {"v2", v2}};
}

HintPayload payload_from_json(const nlohmann::json& j) {
  HintPayload p{j.at("video_id").get<std::string>(), {}, {}};
  for (const auto& h : j.at("v1")) p.v1.push_back(line_graph_from_json(h));
  for (const auto& h : j.at("v2")) p.v2.push_back(hint_segment_from_json(h));
  return p;
}

}  // namespace hintloop

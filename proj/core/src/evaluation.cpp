#include "hintloop/evaluation.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "hintloop/error.hpp"

namespace hintloop {
namespace {

std::optional<double> ratio(int num, int den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::optional<double> mean_defined(std::initializer_list<std::optional<double>> values) {
  double sum = 0;
  int n = 0;
  for (const auto& v : values) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

nlohmann::json opt(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string fmt_opt(const std::optional<double>& v, double scale, int precision) {
  return v ? fmt::format("{:.{}f}", *v * scale, precision) : std::string("undef");
}

}  // namespace

Decisions decisions_of(std::span<const ReviewOutcome> outcomes) {
  Decisions d;
  for (const auto& o : outcomes) {
    if (!d.emplace(o.video_id, o.decision).second) {
      throw Error(ErrorCode::kDuplicate, fmt::format("two decisions for video {}", o.video_id));
    }
  }
  return d;
}

SetQuality set_quality(const Decisions& expert, const Decisions& generalist) {
  if (expert.size() != generalist.size()) {
    throw Error(ErrorCode::kValidation, "decision sets cover different videos");
  }
  SetQuality q;
  for (const auto& [id, truth] : expert) {
    auto it = generalist.find(id);
    if (it == generalist.end()) {
      throw Error(ErrorCode::kValidation, fmt::format("video {} missing from a decision set", id));
    }
    const bool said = it->second;
    if (truth && said) ++q.tp;
    if (!truth && said) ++q.fp;
    if (truth && !said) ++q.fn;
    if (!truth && !said) ++q.tn;
  }
  q.precision = ratio(q.tp, q.tp + q.fp);
  q.recall = ratio(q.tp, q.tp + q.fn);
  q.disagreement_rate = ratio(q.fp + q.fn, static_cast<int>(expert.size()));
  return q;
}

QualityReport quality_metrics(const Decisions& expert, const Decisions& set_a,
                              const Decisions& set_b) {
  QualityReport r;
  r.sets = {set_quality(expert, set_a), set_quality(expert, set_b)};
  r.n_videos = static_cast<int>(expert.size());
  r.precision = mean_defined({r.sets[0].precision, r.sets[1].precision});
  r.recall = mean_defined({r.sets[0].recall, r.sets[1].recall});
  r.disagreement_rate = mean_defined({r.sets[0].disagreement_rate, r.sets[1].disagreement_rate});
  return r;
}

EfficiencyReport efficiency_metrics(std::span<const ReviewOutcome> outcomes,
                                    const Decisions& expert) {
  if (outcomes.empty()) throw Error(ErrorCode::kValidation, "efficiency: empty corpus");
  EfficiencyReport r;
  std::set<std::string> with_segments;
  std::size_t segments = 0;
  double duration = 0;
  for (const auto& o : outcomes) {
    if (!expert.contains(o.video_id)) {
      throw Error(ErrorCode::kValidation,
                  fmt::format("efficiency: no expert decision for {}", o.video_id));
    }
    segments += o.annotations.size();
    duration += o.duration_units;
    if (!o.annotations.empty()) with_segments.insert(o.video_id);
  }
  int violating = 0;
  int covered = 0;
  for (const auto& [id, truth] : expert) {
    if (!truth) continue;
    ++violating;
    if (with_segments.contains(id)) ++covered;
  }
  r.reviews = static_cast<int>(outcomes.size());
  r.pct_violating_videos_with_segments = ratio(covered, violating);
  r.segments_per_video = static_cast<double>(segments) / static_cast<double>(outcomes.size());
  r.avg_review_duration = duration / static_cast<double>(outcomes.size());
  return r;
}

HintInteractionReport hint_interaction_metrics(std::span<const HintResponse> responses,
                                               std::span<const Annotation> annotations,
                                               std::span<const HintSegment> shown) {
  HintInteractionReport r;
  std::map<std::string, const HintSegment*> by_id;
  std::map<std::string, std::vector<const HintSegment*>> by_video;
  for (const auto& h : shown) {
    by_id[h.hint_id] = &h;
    by_video[h.video_id].push_back(&h);
  }
  r.shown = static_cast<int>(shown.size());
  for (const auto& resp : responses) {
    if (!by_id.contains(resp.hint_id)) {
      throw Error(ErrorCode::kReference, fmt::format("response to unknown hint {}", resp.hint_id));
    }
    (resp.verdict == Verdict::kAccepted ? r.accepted : r.rejected) += 1;
  }
  for (const auto& a : annotations) {
    ++r.annotations;
    bool overlaps = false;
    if (auto it = by_video.find(a.video_id); it != by_video.end()) {
      overlaps = std::any_of(it->second.begin(), it->second.end(),
                             [&](const HintSegment* h) { return h->span().overlaps(a.span()); });
    }
    if (!overlaps) ++r.organic;
  }
  r.acceptance_rate = ratio(r.accepted, r.accepted + r.rejected);
  r.rejection_rate = ratio(r.rejected, r.accepted + r.rejected);
  r.shown_acceptance_rate = ratio(r.accepted, r.shown);
  r.organic_fraction = ratio(r.organic, r.annotations);
  return r;
}

ArmReport evaluate_arm(const ExperimentResult& experiment, const ArmResult& arm,
                       const std::map<std::string, HintPayload>& payloads) {
  ArmReport r;
  r.arm = arm.arm;
  r.mode = arm.mode;
  const Decisions expert = decisions_of(experiment.expert);
  r.quality = quality_metrics(expert, decisions_of(arm.generalist_a), decisions_of(arm.generalist_b));

  std::vector<ReviewOutcome> all(arm.generalist_a.begin(), arm.generalist_a.end());
  all.insert(all.end(), arm.generalist_b.begin(), arm.generalist_b.end());
  r.efficiency = efficiency_metrics(all, expert);

  std::vector<HintSegment> shown;
  std::vector<HintResponse> responses;
  std::vector<Annotation> annotations;
  for (const auto& o : all) {
    auto it = payloads.find(o.video_id);
    for (const auto& id : o.shown_hint_ids) {
      if (it == payloads.end()) {
        throw Error(ErrorCode::kReference, fmt::format("no payload for {}", o.video_id));
      }
      auto h = std::find_if(it->second.v2.begin(), it->second.v2.end(),
                            [&](const HintSegment& s) { return s.hint_id == id; });
      if (h == it->second.v2.end()) {
        throw Error(ErrorCode::kReference, fmt::format("shown hint {} not in payload", id));
      }
      shown.push_back(*h);
    }
    responses.insert(responses.end(), o.hint_responses.begin(), o.hint_responses.end());
    annotations.insert(annotations.end(), o.annotations.begin(), o.annotations.end());
  }
  r.hints = hint_interaction_metrics(responses, annotations, shown);
  return r;
}

std::string comparison_table(std::span<const ArmReport> reports, std::string_view baseline) {
  std::string out;
  out += fmt::format("{:<12} {:>10} {:>10} {:>15} {:>10}\n", "Treatment", "Precision", "Recall",
                     "Disagreement%", "# Videos");
  for (const auto& r : reports) {
    out += fmt::format("{:<12} {:>10} {:>10} {:>15} {:>10}\n", r.arm,
                       fmt_opt(r.quality.precision, 1.0, 4), fmt_opt(r.quality.recall, 1.0, 4),
                       fmt_opt(r.quality.disagreement_rate, 100.0, 2), r.quality.n_videos);
  }
  auto base = std::find_if(reports.begin(), reports.end(),
                           [&](const ArmReport& r) { return r.arm == baseline; });
  if (base == reports.end()) return out;

  auto delta = [](const std::optional<double>& v, const std::optional<double>& b) {
    if (!v || !b) return std::string("undef / undef");
    std::string rel = *b == 0 ? std::string("undef") : fmt::format("{:+.2f}%", (*v - *b) / *b * 100.0);
    return fmt::format("{} / {:+.2f}pt", rel, (*v - *b) * 100.0);
  };
  out += fmt::format("\nImpact vs {} (relative % / absolute points)\n", baseline);
  out += fmt::format("{:<12} {:>24} {:>24} {:>24} {:>24}\n", "Treatment", "Precision", "Recall",
                     "Disagreement", "Segments/video");
  for (const auto& r : reports) {
    if (r.arm == base->arm) continue;
    const std::optional<double> seg = r.efficiency.segments_per_video;
    const std::optional<double> base_seg = base->efficiency.segments_per_video;
    out += fmt::format("{:<12} {:>24} {:>24} {:>24} {:>24}\n", r.arm,
                       delta(r.quality.precision, base->quality.precision),
                       delta(r.quality.recall, base->quality.recall),
                       delta(r.quality.disagreement_rate, base->quality.disagreement_rate),
                       delta(seg, base_seg));
  }

  out += "\nEfficiency and hint interaction\n";
  out += fmt::format("{:<12} {:>14} {:>14} {:>14} {:>12} {:>12}\n", "Treatment", "%viol w/ segs",
                     "segs/video", "avg duration", "accept rate", "organic");
  for (const auto& r : reports) {
    out += fmt::format("{:<12} {:>14} {:>14.3f} {:>14.1f} {:>12} {:>12}\n", r.arm,
                       fmt_opt(r.efficiency.pct_violating_videos_with_segments, 100.0, 2),
                       r.efficiency.segments_per_video, r.efficiency.avg_review_duration,
                       fmt_opt(r.hints.acceptance_rate, 1.0, 3),
                       fmt_opt(r.hints.organic_fraction, 1.0, 3));
  }
  return out;
}

nlohmann::json to_json(const QualityReport& r) {
  nlohmann::json sets = nlohmann::json::array();
  for (const auto& s : r.sets) {
    sets.push_back({{"tp", s.tp},
                    {"fp", s.fp},
                    {"fn", s.fn},
                    {"tn", s.tn},
                    {"precision", opt(s.precision)},
                    {"recall", opt(s.recall)},
                    {"disagreement_rate", opt(s.disagreement_rate)}});
  }
  return {{"precision", opt(r.precision)},
          {"recall", opt(r.recall)},
          {"disagreement_rate", opt(r.disagreement_rate)},
          {"n_videos", r.n_videos},
          {"sets", sets}};
}

nlohmann::json to_json(const EfficiencyReport& r) {
  return {{"pct_violating_videos_with_segments", opt(r.pct_violating_videos_with_segments)},
          {"segments_per_video", r.segments_per_video},
          {"avg_review_duration", r.avg_review_duration},
          {"reviews", r.reviews}};
}

nlohmann::json to_json(const HintInteractionReport& r) {
  return {{"accepted", r.accepted},
          {"rejected", r.rejected},
          {"shown", r.shown},
          {"annotations", r.annotations},
          {"organic", r.organic},
          {"acceptance_rate", opt(r.acceptance_rate)},
          {"rejection_rate", opt(r.rejection_rate)},
          {"shown_acceptance_rate", opt(r.shown_acceptance_rate)},
          {"organic_fraction", opt(r.organic_fraction)}};
}

nlohmann::json to_json(const ArmReport& r) {
  return {{"arm", r.arm},
          {"mode", to_string(r.mode)},
          {"quality", to_json(r.quality)},
          {"efficiency", to_json(r.efficiency)},
          {"hints", to_json(r.hints)}};
}

}  // namespace hintloop

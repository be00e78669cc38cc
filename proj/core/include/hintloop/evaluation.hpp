#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hintloop/feedbackstore.hpp"
#include "hintloop/ranker.hpp"
#include "hintloop/ratersim.hpp"

namespace hintloop {

/// video_id -> binary moderation decision (true = violating).
using Decisions = std::map<std::string, bool>;

Decisions decisions_of(std::span<const ReviewOutcome> outcomes);

struct SetQuality {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  int tn = 0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> disagreement_rate;
};

SetQuality set_quality(const Decisions& expert, const Decisions& generalist);

struct QualityReport {
  // Averages over the generalist sets where each metric is defined.
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> disagreement_rate;
  int n_videos = 0;
  std::vector<SetQuality> sets;
};

/// Expert decisions are ground truth; all three maps must cover the same ids.
QualityReport quality_metrics(const Decisions& expert, const Decisions& set_a,
                              const Decisions& set_b);

struct EfficiencyReport {
  std::optional<double> pct_violating_videos_with_segments;
  double segments_per_video = 0.0;  // annotations per review
  double avg_review_duration = 0.0;
  int reviews = 0;
};

EfficiencyReport efficiency_metrics(std::span<const ReviewOutcome> outcomes,
                                    const Decisions& expert);

struct HintInteractionReport {
  int accepted = 0;
  int rejected = 0;
  int shown = 0;
  int annotations = 0;
  int organic = 0;
  std::optional<double> acceptance_rate;        // accepted / (accepted + rejected)
  std::optional<double> rejection_rate;
  std::optional<double> shown_acceptance_rate;  // accepted / shown
  std::optional<double> organic_fraction;
};

/// `shown` lists every displayed hint; an annotation is organic when it shares
/// no frame with a displayed hint of its video.
HintInteractionReport hint_interaction_metrics(std::span<const HintResponse> responses,
                                               std::span<const Annotation> annotations,
                                               std::span<const HintSegment> shown);

struct ArmReport {
  std::string arm;
  AssistMode mode = AssistMode::kNone;
  QualityReport quality;
  EfficiencyReport efficiency;
  HintInteractionReport hints;
};

ArmReport evaluate_arm(const ExperimentResult& experiment, const ArmResult& arm,
                       const std::map<std::string, HintPayload>& payloads);

/// Quality, efficiency and hint tables plus relative and absolute deltas against `baseline`.
std::string comparison_table(std::span<const ArmReport> reports, std::string_view baseline);

nlohmann::json to_json(const QualityReport& r);
nlohmann::json to_json(const EfficiencyReport& r);
nlohmann::json to_json(const HintInteractionReport& r);
nlohmann::json to_json(const ArmReport& r);

}  // namespace hintloop

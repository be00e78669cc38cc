#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hintloop/feedbackstore.hpp"
#include "hintloop/ranker.hpp"
#include "hintloop/synthdata.hpp"

namespace hintloop {

enum class AssistMode { kNone, kV1, kV1V2 };

std::string_view to_string(AssistMode mode);
AssistMode parse_assist_mode(std::string_view text);

enum class RaterKind { kExpert, kGeneralist };

std::string_view to_string(RaterKind kind);
RaterKind parse_rater_kind(std::string_view text);

struct RaterProfile {
  RaterKind kind = RaterKind::kGeneralist;
  // Absolute per-video budget; when unset, budget_fraction of the video.
  // Experts always watch the whole video.
  std::optional<FrameIndex> budget_frames;
  double budget_fraction = 0.2;
  double detect_prob = 0.9;
  // Per block_fraction of watched clean footage.
  double false_flag_prob = 0.005;
  // Probability that a hint verdict is flipped.
  double verification_error = 0.0;
  // Length of a self-directed watch block, as a fraction of the video.
  double block_fraction = 0.05;
  // V1 local maxima below this score are ignored.
  double v1_peak_threshold = 0.0;
  double per_frame_cost = 1.0;
  double per_annotation_cost = 10.0;

  static RaterProfile expert();
  static RaterProfile generalist(double budget_fraction = 0.2, double detect_prob = 0.9);
};

void validate(const RaterProfile& profile);

FrameIndex budget_for(const RaterProfile& profile, FrameIndex frame_count);

struct ReviewOutcome {
  std::string video_id;
  std::string rater_id;
  AssistMode mode = AssistMode::kNone;
  bool decision = false;
  std::vector<Annotation> annotations;
  std::vector<HintResponse> hint_responses;
  std::vector<std::string> shown_hint_ids;
  FrameIndex watched_frames = 0;
  double duration_units = 0.0;

  friend bool operator==(const ReviewOutcome&, const ReviewOutcome&) = default;
};

struct ReviewRequest {
  const VideoMeta* video = nullptr;
  std::span<const TruthSegment> truth;  // truth of this video
  const HintPayload* hints = nullptr;   // may be null for AssistMode::kNone
  AssistMode mode = AssistMode::kNone;
  std::string rater_id;
  std::uint64_t seed = 0;
  // Policies a false flag can be filed under.
  std::span<const std::string> policies;
};

/// One simulated review. Watch plan: V2 hints in rank order, then V1 peaks,
/// then self-directed blocks until the budget is spent.
ReviewOutcome simulate_review(const RaterProfile& profile, const ReviewRequest& request);

struct ExperimentArm {
  std::string name;
  AssistMode mode = AssistMode::kNone;
};

struct ExperimentConfig {
  std::vector<ExperimentArm> arms;
  RaterProfile expert = RaterProfile::expert();
  RaterProfile generalist = RaterProfile::generalist();
  std::uint64_t seed = 11;
  std::vector<std::string> policies;
};

void validate(const ExperimentConfig& config);

struct ArmResult {
  std::string arm;
  AssistMode mode = AssistMode::kNone;
  std::vector<ReviewOutcome> generalist_a;
  std::vector<ReviewOutcome> generalist_b;
};

struct ExperimentResult {
  std::vector<ReviewOutcome> expert;  // unassisted, shared by all arms
  std::vector<ArmResult> arms;

  const ArmResult& arm(std::string_view name) const;
};

inline constexpr std::string_view kExpertRater = "expert";
inline constexpr std::string_view kGeneralistA = "generalist-a";
inline constexpr std::string_view kGeneralistB = "generalist-b";

/// 1 expert + 2 generalists per video and arm. Generalist seeds depend on
/// (seed, slot, video) only, so arms are paired.
ExperimentResult run_experiment(const Corpus& corpus,
                                const std::map<std::string, HintPayload>& hints,
                                const ExperimentConfig& config);

nlohmann::json to_json(const ReviewOutcome& o);
ReviewOutcome outcome_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RaterProfile& p);
RaterProfile profile_from_json(const nlohmann::json& j);

}  // namespace hintloop

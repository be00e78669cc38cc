#include "hintloop/ratersim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <tuple>

#include <fmt/format.h>

#include "hintloop/error.hpp"
#include "hintloop/hash.hpp"

namespace hintloop {
namespace {

// Per-review watch state; frames are counted against the budget once.
class WatchPlan {
 public:
  WatchPlan(FrameIndex frames, FrameIndex budget)
      : watched_(static_cast<std::size_t>(frames), 0), budget_(budget) {}

  bool exhausted() const noexcept { return used_ >= budget_; }
  FrameIndex used() const noexcept { return used_; }
  FrameIndex frames() const noexcept { return static_cast<FrameIndex>(watched_.size()); }
  bool watched(FrameIndex f) const { return watched_[static_cast<std::size_t>(f)] != 0; }

  // Watches [lo, hi) left to right until the budget runs out.
  void watch(FrameIndex lo, FrameIndex hi) {
    lo = std::max<FrameIndex>(lo, 0);
    hi = std::min(hi, frames());
    for (FrameIndex f = lo; f < hi && !exhausted(); ++f) {
      auto& w = watched_[static_cast<std::size_t>(f)];
      if (w == 0) {
        w = 1;
        ++used_;
      }
    }
  }

  bool any_watched(FrameSpan span) const {
    for (FrameIndex f = std::max<FrameIndex>(span.start, 0); f < std::min(span.end, frames()); ++f) {
      if (watched(f)) return true;
    }
    return false;
  }

  std::optional<FrameSpan> watched_hull(FrameSpan span) const {
    std::optional<FrameSpan> hull;
    for (FrameIndex f = std::max<FrameIndex>(span.start, 0); f < std::min(span.end, frames()); ++f) {
      if (!watched(f)) continue;
      if (!hull) hull = FrameSpan{f, f + 1};
      hull->end = f + 1;
    }
    return hull;
  }

  std::optional<FrameIndex> random_unwatched(std::mt19937_64& rng) const {
    const FrameIndex remaining = frames() - used_;
    if (remaining <= 0) return std::nullopt;
    std::uniform_int_distribution<FrameIndex> pick(0, remaining - 1);
    FrameIndex k = pick(rng);
    for (FrameIndex f = 0; f < frames(); ++f) {
      if (!watched(f) && k-- == 0) return f;
    }
    return std::nullopt;
  }

  std::vector<FrameSpan> runs() const {
    std::vector<FrameSpan> out;
    for (FrameIndex f = 0; f < frames(); ++f) {
      if (!watched(f)) continue;
      if (!out.empty() && out.back().end == f) {
        out.back().end = f + 1;
      } else {
        out.push_back({f, f + 1});
      }
    }
    return out;
  }

 private:
  std::vector<char> watched_;
  FrameIndex budget_;
  FrameIndex used_ = 0;
};

bool overlaps_truth(std::span<const TruthSegment> truth, const std::string& policy, FrameSpan span) {
  return std::any_of(truth.begin(), truth.end(), [&](const TruthSegment& t) {
    return (policy.empty() || t.policy_id == policy) && t.span().overlaps(span);
  });
}

}  // namespace

std::string_view to_string(AssistMode mode) {
  switch (mode) {
    case AssistMode::kNone: return "none";
    case AssistMode::kV1: return "v1";
    case AssistMode::kV1V2: return "v1_v2";
  }
  return "none";
}

AssistMode parse_assist_mode(std::string_view text) {
  if (text == "none" || text == "baseline") return AssistMode::kNone;
  if (text == "v1") return AssistMode::kV1;
  if (text == "v1_v2" || text == "v1+v2") return AssistMode::kV1V2;
  throw Error(ErrorCode::kValidation, fmt::format("unknown assist mode \"{}\"", text));
}

std::string_view to_string(RaterKind kind) {
  return kind == RaterKind::kExpert ? "expert" : "generalist";
}

RaterKind parse_rater_kind(std::string_view text) {
  if (text == "expert") return RaterKind::kExpert;
  if (text == "generalist") return RaterKind::kGeneralist;
  throw Error(ErrorCode::kValidation, fmt::format("unknown rater pool \"{}\"", text));
}

RaterProfile RaterProfile::expert() {
  RaterProfile p;
  p.kind = RaterKind::kExpert;
  p.budget_fraction = 1.0;
  p.detect_prob = 1.0;
  p.false_flag_prob = 0.0;
  p.verification_error = 0.0;
  return p;
}

RaterProfile RaterProfile::generalist(double budget_fraction, double detect_prob) {
  RaterProfile p;
  p.kind = RaterKind::kGeneralist;
  p.budget_fraction = budget_fraction;
  p.detect_prob = detect_prob;
  return p;
}

void validate(const RaterProfile& p) {
  auto prob = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw Error(ErrorCode::kValidation, fmt::format("rater profile: {} must be in [0, 1]", name));
    }
  };
  prob(p.detect_prob, "detect_prob");
  prob(p.false_flag_prob, "false_flag_prob");
  prob(p.verification_error, "verification_error");
  if (p.budget_frames && *p.budget_frames < 0) {
    throw Error(ErrorCode::kValidation, "rater profile: budget_frames must be >= 0");
  }
  if (!(p.budget_fraction >= 0)) {
    throw Error(ErrorCode::kValidation, "rater profile: budget_fraction must be >= 0");
  }
  if (!(p.block_fraction > 0 && p.block_fraction <= 1)) {
    throw Error(ErrorCode::kValidation, "rater profile: block_fraction must be in (0, 1]");
  }
  if (p.per_frame_cost < 0 || p.per_annotation_cost < 0) {
    throw Error(ErrorCode::kValidation, "rater profile: costs must be >= 0");
  }
}

FrameIndex budget_for(const RaterProfile& profile, FrameIndex frame_count) {
  if (profile.kind == RaterKind::kExpert) return frame_count;
  FrameIndex b = profile.budget_frames
                     ? *profile.budget_frames
                     : static_cast<FrameIndex>(
                           std::floor(profile.budget_fraction * static_cast<double>(frame_count)));
  return std::clamp<FrameIndex>(b, 0, frame_count);
}

ReviewOutcome simulate_review(const RaterProfile& profile, const ReviewRequest& request) {
  validate(profile);
  if (request.video == nullptr) throw Error(ErrorCode::kValidation, "simulate_review: no video");
  const VideoMeta& video = *request.video;
  if (request.hints != nullptr && request.hints->video_id != video.video_id) {
    throw Error(ErrorCode::kReference, fmt::format("hints for {} passed with video {}",
                                                   request.hints->video_id, video.video_id));
  }
  for (const auto& t : request.truth) {
    if (t.video_id != video.video_id) {
      throw Error(ErrorCode::kReference,
                  fmt::format("truth for {} passed with video {}", t.video_id, video.video_id));
    }
  }

  std::mt19937_64 rng(request.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ReviewOutcome out;
  out.video_id = video.video_id;
  out.rater_id = request.rater_id;
  out.mode = request.mode;

  const FrameIndex frames = video.frame_count;
  WatchPlan plan(frames, budget_for(profile, frames));
  const FrameIndex block = std::max<FrameIndex>(
      1, static_cast<FrameIndex>(std::llround(profile.block_fraction * static_cast<double>(frames))));
  const bool show_v1 = request.mode != AssistMode::kNone && request.hints != nullptr;
  const bool show_v2 = request.mode == AssistMode::kV1V2 && request.hints != nullptr;

  std::vector<const HintSegment*> accepted;
  if (show_v2) {
    std::vector<const HintSegment*> ranked;
    for (const auto& h : request.hints->v2) ranked.push_back(&h);
    std::sort(ranked.begin(), ranked.end(),
              [](const HintSegment* a, const HintSegment* b) { return a->rank < b->rank; });
    for (const HintSegment* h : ranked) out.shown_hint_ids.push_back(h->hint_id);
    for (const HintSegment* h : ranked) {
      if (plan.exhausted() && !plan.any_watched(h->span())) continue;
      plan.watch(h->start_frame, h->end_frame);
      if (!plan.any_watched(h->span())) continue;
      const bool correct = overlaps_truth(request.truth, h->policy_id, h->span());
      const bool flip = unit(rng) < profile.verification_error;
      const bool accept = correct != flip;
      out.hint_responses.push_back(
          {h->hint_id, request.rater_id, accept ? Verdict::kAccepted : Verdict::kRejected, 0});
      if (accept) accepted.push_back(h);
    }
  }

  if (show_v1) {
    struct Peak {
      double score;
      FrameIndex frame;
      const std::string* policy;
    };
    std::vector<Peak> peaks;
    for (const auto& graph : request.hints->v1) {
      const auto& pts = graph.points;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const bool local_max = (i == 0 || pts[i].score >= pts[i - 1].score) &&
                               (i + 1 == pts.size() || pts[i].score >= pts[i + 1].score);
        if (local_max && pts[i].score >= profile.v1_peak_threshold) {
          peaks.push_back({pts[i].score, pts[i].frame, &graph.policy_id});
        }
      }
    }
    std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
      return std::tie(b.score, a.frame, *a.policy) < std::tie(a.score, b.frame, *b.policy);
    });
    for (const auto& p : peaks) {
      if (plan.exhausted()) break;
      if (p.frame < 0 || p.frame >= frames || plan.watched(p.frame)) continue;
      const FrameIndex lo = std::clamp<FrameIndex>(p.frame - block / 2, 0, std::max<FrameIndex>(0, frames - block));
      plan.watch(lo, lo + block);
    }
  }

  while (!plan.exhausted()) {
    auto f = plan.random_unwatched(rng);
    if (!f) break;
    plan.watch(*f, *f + block);
  }

  int next_annotation = 0;
  auto add_annotation = [&](const std::string& policy, FrameSpan span, AnnotationOrigin origin,
                            const std::string& hint_id) {
    out.annotations.push_back({fmt::format("{}/{}/{}", request.rater_id, video.video_id,
                                           next_annotation++),
                               video.video_id, request.rater_id, policy, span.start, span.end,
                               origin, hint_id, 0});
  };

  for (const HintSegment* h : accepted) {
    add_annotation(h->policy_id, h->span(), AnnotationOrigin::kFromAcceptedHint, h->hint_id);
  }

  for (const auto& t : request.truth) {
    auto hull = plan.watched_hull(t.span());
    if (!hull) continue;
    const bool covered = std::any_of(accepted.begin(), accepted.end(), [&](const HintSegment* h) {
      return h->policy_id == t.policy_id && h->span().overlaps(t.span());
    });
    if (covered) continue;
    if (unit(rng) < profile.detect_prob) {
      add_annotation(t.policy_id, *hull, AnnotationOrigin::kOrganic, "");
    }
  }

  if (profile.false_flag_prob > 0 && !request.policies.empty()) {
    for (const auto& run : plan.runs()) {
      if (overlaps_truth(request.truth, "", run)) continue;
      const bool in_accepted = std::any_of(accepted.begin(), accepted.end(),
                                           [&](const HintSegment* h) { return h->span().overlaps(run); });
      if (in_accepted) continue;
      // false_flag_prob is per block of clean footage, so fragments rarely trigger.
      const double blocks = static_cast<double>(run.length()) / static_cast<double>(block);
      if (unit(rng) < 1.0 - std::pow(1.0 - profile.false_flag_prob, blocks)) {
        std::uniform_int_distribution<std::size_t> pick(0, request.policies.size() - 1);
        add_annotation(request.policies[pick(rng)], run, AnnotationOrigin::kOrganic, "");
      }
    }
  }

  out.watched_frames = plan.used();
  out.decision = !out.annotations.empty();
  out.duration_units = static_cast<double>(out.watched_frames) * profile.per_frame_cost +
                       static_cast<double>(out.annotations.size()) * profile.per_annotation_cost;
  // Timestamps in simulated time units since the start of the review.
  const auto stamp = static_cast<std::int64_t>(std::llround(out.duration_units));
  for (auto& a : out.annotations) a.timestamp = stamp;
  for (auto& r : out.hint_responses) r.timestamp = stamp;
  return out;
}

void validate(const ExperimentConfig& config) {
  if (config.arms.empty()) throw Error(ErrorCode::kValidation, "experiment: no arms");
  for (std::size_t i = 0; i < config.arms.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (config.arms[i].name == config.arms[j].name) {
        throw Error(ErrorCode::kValidation,
                    fmt::format("experiment: duplicate arm \"{}\"", config.arms[i].name));
      }
    }
  }
  validate(config.expert);
  validate(config.generalist);
  if (config.expert.kind != RaterKind::kExpert) {
    throw Error(ErrorCode::kValidation, "experiment: expert profile must be of kind expert");
  }
}

const ArmResult& ExperimentResult::arm(std::string_view name) const {
  for (const auto& a : arms) {
    if (a.arm == name) return a;
  }
  throw Error(ErrorCode::kNotFound, fmt::format("no arm \"{}\"", name));
}

ExperimentResult run_experiment(const Corpus& corpus,
                                const std::map<std::string, HintPayload>& hints,
                                const ExperimentConfig& config) {
  validate(config);
  for (const auto& [video_id, payload] : hints) {
    if (!corpus.has_video(video_id) || payload.video_id != video_id) {
      throw Error(ErrorCode::kReference,
                  fmt::format("hint payload for {} does not match the corpus", video_id));
    }
  }
  std::map<std::string, std::vector<TruthSegment>> truth_by_video;
  for (const auto& t : corpus.truth) truth_by_video[t.video_id].push_back(t);
  const std::vector<TruthSegment> no_truth;
  auto truth_of = [&](const std::string& id) -> std::span<const TruthSegment> {
    auto it = truth_by_video.find(id);
    return it == truth_by_video.end() ? std::span<const TruthSegment>(no_truth) : it->second;
  };

  ExperimentResult result;
  for (const auto& video : corpus.videos) {
    ReviewRequest req{&video, truth_of(video.video_id), nullptr, AssistMode::kNone,
                      std::string(kExpertRater), mix_seed(config.seed, "expert|" + video.video_id),
                      config.policies};
    result.expert.push_back(simulate_review(config.expert, req));
  }

  for (const auto& arm : config.arms) {
    ArmResult ar{arm.name, arm.mode, {}, {}};
    for (const auto& video : corpus.videos) {
      const HintPayload* payload = nullptr;
      if (arm.mode != AssistMode::kNone) {
        auto it = hints.find(video.video_id);
        if (it == hints.end()) {
          throw Error(ErrorCode::kReference,
                      fmt::format("arm {}: no hint payload for {}", arm.name, video.video_id));
        }
        payload = &it->second;
      }
      for (int slot = 0; slot < 2; ++slot) {
        const std::string rater(slot == 0 ? kGeneralistA : kGeneralistB);
        ReviewRequest req{&video, truth_of(video.video_id), payload, arm.mode, rater,
                          mix_seed(config.seed, fmt::format("generalist|{}|{}", slot, video.video_id)),
                          config.policies};
        (slot == 0 ? ar.generalist_a : ar.generalist_b).push_back(simulate_review(config.generalist, req));
      }
    }
    result.arms.push_back(std::move(ar));
  }
  return result;
}

nlohmann::json to_json(const ReviewOutcome& o) {
  nlohmann::json annotations = nlohmann::json::array();
  for (const auto& a : o.annotations) annotations.push_back(to_json(a));
  nlohmann::json responses = nlohmann::json::array();
  for (const auto& r : o.hint_responses) responses.push_back(to_json(r));
  return {{"video_id", o.video_id},
          {"rater_id", o.rater_id},
          {"mode", to_string(o.mode)},
          {"decision", o.decision},
          {"annotations", annotations},
          {"hint_responses", responses},
          {"shown_hint_ids", o.shown_hint_ids},
          {"watched_frames", o.watched_frames},
          {"duration_units", o.duration_units}};
}

ReviewOutcome outcome_from_json(const nlohmann::json& j) {
  ReviewOutcome o;
  o.video_id = j.at("video_id").get<std::string>();
  o.rater_id = j.at("rater_id").get<std::string>();
  o.mode = parse_assist_mode(j.at("mode").get<std::string>());
  o.decision = j.at("decision").get<bool>();
  for (const auto& a : j.at("annotations")) o.annotations.push_back(annotation_from_json(a));
  for (const auto& r : j.at("hint_responses")) o.hint_responses.push_back(hint_response_from_json(r));
  o.shown_hint_ids = j.at("shown_hint_ids").get<std::vector<std::string>>();
  o.watched_frames = j.at("watched_frames").get<FrameIndex>();
  o.duration_units = j.at("duration_units").get<double>();
  return o;
}

nlohmann::json to_json(const RaterProfile& p) {
  nlohmann::json j = {{"kind", to_string(p.kind)},
                      {"budget_fraction", p.budget_fraction},
                      {"detect_prob", p.detect_prob},
                      {"false_flag_prob", p.false_flag_prob},
                      {"verification_error", p.verification_error},
                      {"block_fraction", p.block_fraction},
                      {"v1_peak_threshold", p.v1_peak_threshold},
                      {"per_frame_cost", p.per_frame_cost},
                      {"per_annotation_cost", p.per_annotation_cost}};
  j["budget_frames"] = p.budget_frames ? nlohmann::json(*p.budget_frames) : nlohmann::json(nullptr);
  return j;
}

RaterProfile profile_from_json(const nlohmann::json& j) {
  RaterProfile p = parse_rater_kind(j.value("kind", "generalist")) == RaterKind::kExpert
                       ? RaterProfile::expert()
                       : RaterProfile::generalist();
  p.budget_fraction = j.value("budget_fraction", p.budget_fraction);
  if (j.contains("budget_frames") && !j.at("budget_frames").is_null()) {
    p.budget_frames = j.at("budget_frames").get<FrameIndex>();
  }
  p.detect_prob = j.value("detect_prob", p.detect_prob);
  p.false_flag_prob = j.value("false_flag_prob", p.false_flag_prob);
  p.verification_error = j.value("verification_error", p.verification_error);
  p.block_fraction = j.value("block_fraction", p.block_fraction);
  p.v1_peak_threshold = j.value("v1_peak_threshold", p.v1_peak_threshold);
  p.per_frame_cost = j.value("per_frame_cost", p.per_frame_cost);
  p.per_annotation_cost = j.value("per_annotation_cost", p.per_annotation_cost);
  validate(p);
  return p;
}

}  // namespace hintloop

#include "hintloop/reviewservice.hpp"

#include <algorithm>
#include <chrono>
#include <mutex>
#include <set>

#include <fmt/format.h>

#include "hintloop/error.hpp"
#include "hintloop/evaluation.hpp"
#include "hintloop/jsonl.hpp"

namespace hintloop {

std::int64_t system_clock_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

void validate(const ServiceConfig& config) {
  if (config.lease_ms <= 0) throw Error(ErrorCode::kValidation, "service: lease_ms must be > 0");
  if (config.expert_quota < 0 || config.generalist_quota < 0) {
    throw Error(ErrorCode::kValidation, "service: quotas must be >= 0");
  }
  if (config.experiment.empty()) throw Error(ErrorCode::kValidation, "service: empty experiment");
}

nlohmann::json to_json(const ReviewTask& t) {
  return {{"task_id", t.task_id},
          {"video_id", t.video_id},
          {"rater_id", t.rater_id},
          {"pool", to_string(t.pool)},
          {"assist_mode", to_string(t.assist_mode)},
          {"lease_expiry", t.lease_expiry},
          {"submitted", t.submitted}};
}

nlohmann::json to_json(const Submission& s) {
  nlohmann::json annotations = nlohmann::json::array();
  for (const auto& a : s.annotations) annotations.push_back(to_json(a));
  nlohmann::json responses = nlohmann::json::array();
  for (const auto& r : s.hint_responses) responses.push_back(to_json(r));
  return {{"decision", s.decision}, {"annotations", annotations}, {"hint_responses", responses}};
}

Submission submission_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kParse, "submission must be a JSON object");
  Submission s;
  try {
    s.decision = j.at("decision").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, fmt::format("submission: {}", e.what()));
  }
  for (const auto& a : j.value("annotations", nlohmann::json::array())) {
    s.annotations.push_back(annotation_from_json(a));
  }
  for (const auto& r : j.value("hint_responses", nlohmann::json::array())) {
    s.hint_responses.push_back(hint_response_from_json(r));
  }
  return s;
}

struct ReviewService::Impl {
  std::vector<VideoMeta> videos;  // sorted by id
  std::map<std::string, HintPayload> hints;
  ServiceConfig config;
  FeedbackStore store;
  ServiceClock clock;

  mutable std::mutex mutex;
  std::map<std::string, ReviewTask> tasks;
  std::vector<std::string> task_order;
  std::map<std::string, std::string> active_by_rater;  // rater -> task id
  std::map<std::string, RaterKind> rater_pools;
  std::map<RaterKind, std::size_t> cursor;
  // video -> submitted decisions per rater
  std::map<std::string, std::map<std::string, std::pair<RaterKind, bool>>> decisions;
  std::vector<nlohmann::json> log;
  std::uint64_t next_id = 1;

  const VideoMeta& video(const std::string& id) const {
    auto it = std::lower_bound(videos.begin(), videos.end(), id,
                               [](const VideoMeta& v, const std::string& key) { return v.video_id < key; });
    if (it == videos.end() || it->video_id != id) {
      throw Error(ErrorCode::kNotFound, fmt::format("unknown video {}", id));
    }
    return *it;
  }

  bool lease_active(const ReviewTask& t, std::int64_t now) const {
    return !t.submitted && now < t.lease_expiry;
  }

  int quota(RaterKind pool) const {
    return pool == RaterKind::kExpert ? config.expert_quota : config.generalist_quota;
  }

  // Submitted plus actively leased slots of `pool` on `video_id`, and whether
  // `rater` already holds or held one.
  std::pair<int, bool> occupancy(const std::string& video_id, RaterKind pool,
                                 const std::string& rater, std::int64_t now) const {
    int used = 0;
    bool seen = false;
    for (const auto& [_, t] : tasks) {
      if (t.video_id != video_id) continue;
      const bool live = t.submitted || lease_active(t, now);
      if (t.pool == pool && live) ++used;
      if (t.rater_id == rater && live) seen = true;
    }
    return {used, seen};
  }

  std::optional<ReviewTask> next_task(const std::string& rater, RaterKind pool, std::int64_t now) {
    log.push_back({{"op", "next_task"}, {"rater", rater}, {"pool", to_string(pool)}, {"now", now}});
    if (rater.empty()) throw Error(ErrorCode::kValidation, "rater id required");
    auto [pit, inserted] = rater_pools.emplace(rater, pool);
    if (!inserted && pit->second != pool) {
      throw Error(ErrorCode::kValidation,
                  fmt::format("rater {} is registered in pool {}", rater, to_string(pit->second)));
    }
    if (auto it = active_by_rater.find(rater); it != active_by_rater.end()) {
      const ReviewTask& held = tasks.at(it->second);
      if (lease_active(held, now)) return held;
      active_by_rater.erase(it);
    }
    if (videos.empty()) return std::nullopt;
    std::size_t& start = cursor[pool];
    for (std::size_t k = 0; k < videos.size(); ++k) {
      const std::size_t idx = (start + k) % videos.size();
      const VideoMeta& v = videos[idx];
      auto [used, seen] = occupancy(v.video_id, pool, rater, now);
      if (seen || used >= quota(pool)) continue;
      ReviewTask t;
      t.task_id = fmt::format("task-{:06d}", next_id++);
      t.video_id = v.video_id;
      t.rater_id = rater;
      t.pool = pool;
      t.assist_mode = pool == RaterKind::kExpert ? AssistMode::kNone : config.generalist_mode;
      t.lease_expiry = now + config.lease_ms;
      tasks.emplace(t.task_id, t);
      task_order.push_back(t.task_id);
      active_by_rater[rater] = t.task_id;
      start = (idx + 1) % videos.size();
      return t;
    }
    return std::nullopt;
  }

  void submit(const std::string& task_id, const Submission& submission, std::int64_t now) {
    log.push_back({{"op", "submit"}, {"task_id", task_id}, {"now", now}, {"body", to_json(submission)}});
    auto it = tasks.find(task_id);
    if (it == tasks.end()) throw Error(ErrorCode::kNotFound, fmt::format("unknown task {}", task_id));
    ReviewTask& t = it->second;
    if (t.submitted) {
      throw Error(ErrorCode::kAlreadySubmitted, fmt::format("task {} already submitted", task_id));
    }
    if (now >= t.lease_expiry) {
      throw Error(ErrorCode::kLeaseExpired, fmt::format("lease on task {} expired", task_id));
    }
    if (!submission.annotations.empty() && !submission.decision) {
      throw Error(ErrorCode::kValidation, "annotations submitted with a non-violating decision");
    }
    std::vector<Annotation> annotations = submission.annotations;
    for (std::size_t i = 0; i < annotations.size(); ++i) {
      auto& a = annotations[i];
      if (a.annotation_id.empty()) a.annotation_id = fmt::format("{}/{}", task_id, i);
      if (a.rater_id.empty()) a.rater_id = t.rater_id;
      if (a.video_id.empty()) a.video_id = t.video_id;
      if (a.video_id != t.video_id || a.rater_id != t.rater_id) {
        throw Error(ErrorCode::kValidation,
                    fmt::format("annotation {} does not belong to task {}", a.annotation_id, task_id));
      }
      if (a.timestamp == 0) a.timestamp = now;
    }
    std::vector<HintResponse> responses = submission.hint_responses;
    const HintPayload* payload = nullptr;
    if (auto pit = hints.find(t.video_id); pit != hints.end()) payload = &pit->second;
    for (auto& r : responses) {
      if (r.rater_id.empty()) r.rater_id = t.rater_id;
      if (r.rater_id != t.rater_id) {
        throw Error(ErrorCode::kValidation, fmt::format("hint response from another rater"));
      }
      const bool shown = t.assist_mode == AssistMode::kV1V2 && payload != nullptr &&
                         std::any_of(payload->v2.begin(), payload->v2.end(),
                                     [&](const HintSegment& h) { return h.hint_id == r.hint_id; });
      if (!shown) {
        throw Error(ErrorCode::kReference,
                    fmt::format("hint {} was not shown for video {}", r.hint_id, t.video_id));
      }
      if (r.timestamp == 0) r.timestamp = now;
    }
    store.record_batch(annotations, responses);
    t.submitted = true;
    active_by_rater.erase(t.rater_id);
    decisions[t.video_id][t.rater_id] = {t.pool, submission.decision};
  }
};

ReviewService::ReviewService(std::vector<VideoMeta> videos, std::map<std::string, HintPayload> hints,
                             ServiceConfig config, FeedbackStore store, ServiceClock clock)
    : impl_(std::make_unique<Impl>()) {
  validate(config);
  std::sort(videos.begin(), videos.end(),
            [](const VideoMeta& a, const VideoMeta& b) { return a.video_id < b.video_id; });
  for (std::size_t i = 1; i < videos.size(); ++i) {
    if (videos[i].video_id == videos[i - 1].video_id) {
      throw Error(ErrorCode::kDuplicate, fmt::format("duplicate video {}", videos[i].video_id));
    }
  }
  impl_->videos = std::move(videos);
  impl_->config = std::move(config);
  impl_->store = std::move(store);
  impl_->clock = std::move(clock);
  for (const auto& v : impl_->videos) impl_->store.register_video(v);
  for (const auto& [video_id, payload] : hints) {
    impl_->video(video_id);
    for (const auto& h : payload.v2) impl_->store.register_hint(h);
  }
  impl_->hints = std::move(hints);
}

ReviewService::~ReviewService() = default;

std::optional<ReviewTask> ReviewService::next_task(const std::string& rater_id, RaterKind pool) {
  std::lock_guard lock(impl_->mutex);
  return impl_->next_task(rater_id, pool, impl_->clock());
}

nlohmann::json ReviewService::get_hints(const std::string& video_id, AssistMode mode) const {
  impl_->video(video_id);
  if (mode == AssistMode::kNone) return nlohmann::json::object();
  HintPayload payload{video_id, {}, {}};
  if (auto it = impl_->hints.find(video_id); it != impl_->hints.end()) payload = it->second;
  nlohmann::json j = to_json(payload);
  if (mode == AssistMode::kV1) j.erase("v2");
  return j;
}

void ReviewService::submit_review(const std::string& task_id, const Submission& submission) {
  std::lock_guard lock(impl_->mutex);
  impl_->submit(task_id, submission, impl_->clock());
}

nlohmann::json ReviewService::metrics(const std::string& experiment) const {
  if (experiment != impl_->config.experiment) {
    throw Error(ErrorCode::kNotFound, fmt::format("unknown experiment {}", experiment));
  }
  Decisions expert;
  Decisions set_a;
  Decisions set_b;
  int submissions = 0;
  std::set<std::string> generalists;
  {
    std::lock_guard lock(impl_->mutex);
    for (const auto& [video_id, by_rater] : impl_->decisions) {
      std::optional<bool> e;
      std::vector<bool> g;
      for (const auto& [rater, entry] : by_rater) {
        ++submissions;
        if (entry.first == RaterKind::kExpert) {
          e = entry.second;
        } else {
          g.push_back(entry.second);
          generalists.insert(rater);
        }
      }
      if (e && g.size() >= 2) {
        expert[video_id] = *e;
        set_a[video_id] = g[0];
        set_b[video_id] = g[1];
      }
    }
  }
  const StoreContents contents = impl_->store.snapshot();
  std::vector<HintResponse> responses;
  for (const auto& r : contents.responses) {
    if (generalists.contains(r.rater_id)) responses.push_back(r);
  }
  std::vector<Annotation> annotations;
  for (const auto& a : contents.annotations) {
    if (generalists.contains(a.rater_id)) annotations.push_back(a);
  }
  nlohmann::json out = {{"experiment", experiment},
                        {"generalist_mode", to_string(impl_->config.generalist_mode)},
                        {"submissions", submissions},
                        {"complete_videos", static_cast<int>(expert.size())}};
  out["quality"] = expert.empty() ? nlohmann::json(nullptr)
                                  : to_json(quality_metrics(expert, set_a, set_b));
  std::vector<HintSegment> shown;
  if (impl_->config.generalist_mode == AssistMode::kV1V2) shown = contents.hints;
  out["hints"] = to_json(hint_interaction_metrics(responses, annotations, shown));
  return out;
}

nlohmann::json ReviewService::media(const std::string& video_id, int max_frames) const {
  const VideoMeta& v = impl_->video(video_id);
  nlohmann::json strip = nlohmann::json::array();
  const FrameIndex n = std::min<FrameIndex>(std::max(1, max_frames), v.frame_count);
  for (FrameIndex k = 0; k < n; ++k) {
    const FrameIndex frame = k * v.frame_count / n;
    strip.push_back({{"frame", frame}, {"t_seconds", static_cast<double>(frame) / v.fps}});
  }
  return {{"video_id", v.video_id}, {"frame_count", v.frame_count}, {"fps", v.fps}, {"strip", strip}};
}

std::optional<ReviewTask> ReviewService::task(const std::string& task_id) const {
  std::lock_guard lock(impl_->mutex);
  auto it = impl_->tasks.find(task_id);
  if (it == impl_->tasks.end()) return std::nullopt;
  return it->second;
}

const ServiceConfig& ReviewService::config() const noexcept { return impl_->config; }
const FeedbackStore& ReviewService::store() const noexcept { return impl_->store; }

std::map<std::string, std::pair<int, int>> ReviewService::submission_counts() const {
  std::lock_guard lock(impl_->mutex);
  std::map<std::string, std::pair<int, int>> out;
  for (const auto& [_, t] : impl_->tasks) {
    if (!t.submitted) continue;
    auto& c = out[t.video_id];
    (t.pool == RaterKind::kExpert ? c.first : c.second) += 1;
  }
  return out;
}

std::vector<nlohmann::json> ReviewService::request_log() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->log;
}

void ReviewService::write_request_log(const std::filesystem::path& path) const {
  write_jsonl(path, request_log());
}

void ReviewService::replay(const std::vector<nlohmann::json>& log) {
  std::lock_guard lock(impl_->mutex);
  for (const auto& rec : log) {
    const std::string op = rec.at("op").get<std::string>();
    const auto now = rec.at("now").get<std::int64_t>();
    try {
      if (op == "next_task") {
        impl_->next_task(rec.at("rater").get<std::string>(),
                         parse_rater_kind(rec.at("pool").get<std::string>()), now);
      } else if (op == "submit") {
        impl_->submit(rec.at("task_id").get<std::string>(), submission_from_json(rec.at("body")),
                      now);
      } else {
        throw Error(ErrorCode::kParse, fmt::format("unknown request log op \"{}\"", op));
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kParse) throw;
    }
  }
}

}  // namespace hintloop
